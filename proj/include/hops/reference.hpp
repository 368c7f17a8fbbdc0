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

#include <string>

#include "hops/observables.hpp"

namespace hops {

/// Explicit matrix of the z = 0 linear hierarchy acting on the stacked
/// state (auxiliary-major: entry a * N + n holds psi^(a)_n).
struct DenseGenerator {
  CMatrix matrix;
  int n_sites = 0;
  int n_aux = 0;

  Eigen::Index dim() const { return matrix.rows(); }
};

inline constexpr Eigen::Index kExpmDimensionCap = 5000;

/// Assembled from the multi-index list alone (no precomputed ladder
/// tables), so it checks the propagator's kernel independently.
DenseGenerator assemble_dense_generator(const ExcitonModel& model, const ExponentialBCF& bcf,
                                        const HierarchyIndexSpace& space);

/// Stacks the auxiliary columns of a hierarchy state into one vector.
CVector stack(const CMatrix& amplitudes);
CMatrix unstack(const CVector& stacked, int n_sites);

/// exp(G t) psi via scaling and squaring with Pade approximants.
CVector expm_oracle(const DenseGenerator& generator, const CVector& stacked, Real t);

/// exp(G dt_record) applied repeatedly; column r is the stacked state at r * dt_record.
CMatrix expm_trajectory(const DenseGenerator& generator, const CVector& stacked, Real dt_record, int n_records);

/// Single noise-free linear trajectory started from psi_ex with all
/// auxiliaries zero; C(t) = mu_tot^2 <psi_ex|psi0(t)> e^{i eps_g t}.
CorrelationTrace noisefree_correlation(const ExcitonModel& model, const ExponentialBCF& bcf, int depth, Real dt,
                                       Real t_max, int record_stride = 1);

/// The same trace from the dense generator's exponential.
CorrelationTrace expm_correlation(const ExcitonModel& model, const ExponentialBCF& bcf, int depth, Real dt_record,
                                  Real t_max);

struct HeomResult {
  RVector times;
  RMatrix populations;  // N x n_records, diagonal of rho^(0)
  Real max_trace_drift = 0.0;
  Real max_hermiticity_error = 0.0;
  bool converged = true;
  std::string diagnostic;
};

/// Hierarchical equations of motion for the density matrix. Each bath mode
/// (p, w) enters twice: as a ket-side mode (p, w) and as a bra-side mode
/// (p*, w*), which makes the HEOM share alpha(tau) with the HOPS runs.
/// Triangular truncation on the combined 2M-mode index.
HeomResult heom_populations(const ExcitonModel& model, const ExponentialBCF& bcf, int depth, int initial_site,
                            Real dt, Real t_max, int record_stride = 1);

}  // namespace hops
