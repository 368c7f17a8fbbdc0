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
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "hops/model.hpp"
#include "hops/observables.hpp"
#include "hops/propagator.hpp"

namespace hops {

/// Invalid study configuration, reported as "<source>:<line>: <message>".
/// `line` is 1-based, 0 when the problem is not tied to a line.
class ConfigError : public Error {
 public:
  ConfigError(int line, const std::string& message, const std::string& source = "config");
  int line() const { return line_; }
  const std::string& message() const { return message_; }

 private:
  int line_;
  std::string message_;
};

struct SpectralDensityCheck {
  Real weight = 0.0;
  Real center = 0.0;
  Real width = 0.0;
  Real omega_cut = 0.0;
  Real beta = 0.0;
  Real t_max = 0.0;
  int points = 101;
  Real tolerance = 0.0;  // max |alpha_quadrature - alpha_modes| allowed
};

struct PopulationStudy {
  int initial_site = 0;  // 0-based
  int depth = 0;
  int heom_depth = 0;
  Real t_max = 0.0;
  int n_traj = 0;
};

enum class WindowMode { automatic, none, fixed };

struct BootstrapStudy {
  std::vector<int> n_traj;
  int resamples = 0;
  std::uint64_t seed = 0;
  int histogram_bins = 64;
};

struct StudyConfig {
  ExcitonModel model;
  ExponentialBCF bcf;
  std::optional<SpectralDensityCheck> spectral_density;

  std::vector<Equation> equations;
  int depth = 0;
  Real dt = 0.0;
  Real t_max = 0.0;
  int record_stride = 1;
  int n_traj = 0;
  std::uint64_t seed = 0;
  int workers = 0;  // 0: not set in the file

  std::optional<PopulationStudy> populations;

  Real omega_min = 0.0;
  Real omega_max = 0.0;
  int padding = 1;
  WindowMode window_mode = WindowMode::automatic;
  Real window_tau = 0.0;
  std::optional<BootstrapStudy> bootstrap;

  std::filesystem::path out_dir;
  bool write_store = false;
  bool gnuplot = false;

  /// Resolved configuration as JSON. Worker count and output directory do
  /// not change results and are left out.
  std::string canonical_json() const;
  /// Hash of the model and bath blocks; tags trajectory stores.
  std::string model_hash() const;
  Window resolve_window(const CorrelationTrace& reference) const;
};

StudyConfig parse_study_config(std::string_view text);
StudyConfig load_study_config(const std::filesystem::path& path);

struct StudyOverrides {
  std::optional<int> n_traj;
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
  std::optional<Equation> equation;
  std::optional<std::filesystem::path> out_dir;
};

/// Applies command-line overrides; --n-traj also sets the population
/// ensemble size.
void apply_overrides(StudyConfig& config, const StudyOverrides& overrides);

struct StudyReport {
  std::string manifest_hash;
  int n_aborted = 0;
  std::vector<std::string> files;  // relative to out_dir, sorted
};

/// Runs the full pipeline and writes CSVs, optional stores and gnuplot
/// script, and manifest.json into config.out_dir. Progress goes to `log`.
StudyReport run_study(const StudyConfig& config, std::ostream* log = nullptr);

}  // namespace hops
