// Copyright 2026 The hops-spectra Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "hops/observables.hpp"
#include "hops/persistence.hpp"

namespace hops {

struct EnsembleOptions {
  PropagationSpec spec;
  CVector initial;           // psi^(0) at t = 0
  int n_traj = 1;            // ignored for the noise-free equation (always one run)
  int first_id = 0;          // trajectories first_id .. first_id + n_traj - 1
  std::uint64_t master_seed = 0;
  int workers = 1;
  bool correlation = true;   // C(t) samples against psi_ex
  bool populations = false;
  bool keep_records = true;  // retain per-trajectory C(t) samples
  CVector psi_ex;
  Real mu_tot = 1.0;
  Real ground_energy = 0.0;
};

/// Ensemble means over the trajectories that completed. Sums are formed per
/// fixed-size chunk of trajectory ids and merged in chunk order, so results
/// are bitwise identical for any worker count.
struct EnsembleResult {
  RVector times;
  CVector mean_correlation;
  RMatrix mean_populations;  // N x n_records
  RVector mean_norm;         // M[|psi0|^2]
  int n_completed = 0;
  int n_aborted = 0;
  std::vector<std::string> abort_reasons;  // "trajectory <id>: <reason>", id order
  std::vector<TrajectoryRecord> records;   // id order, aborted ones included
};

inline constexpr int kEnsembleChunk = 32;

EnsembleResult run_ensemble(const HopsSystem& system, const ExponentialBCF& bcf, const EnsembleOptions& options);

}  // namespace hops
