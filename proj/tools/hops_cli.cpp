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

// hops: absorption spectra and population dynamics from HOPS ensembles.
//
// Exit status: 0 ok, 1 configuration or usage error, 2 runtime error.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "hops/noise.hpp"
#include "hops/observables.hpp"
#include "hops/persistence.hpp"
#include "hops/stats.hpp"
#include "hops/study.hpp"

namespace {

using namespace hops;

constexpr int kOk = 0;
constexpr int kConfigError = 1;
constexpr int kRuntimeError = 2;

int env_workers() {
  const char* env = std::getenv("HOPS_WORKERS");
  if (env == nullptr || *env == '\0') return 0;
  try {
    std::size_t used = 0;
    const int w = std::stoi(env, &used);
    if (used == std::string(env).size() && w > 0) return w;
  } catch (const std::exception&) {
  }
  throw ConfigError(0, "HOPS_WORKERS must be a positive integer", "environment");
}

Window parse_window(const std::string& text, const CorrelationTrace& trace) {
  if (text == "auto") return auto_window(trace);
  if (text == "none") return {};
  try {
    std::size_t used = 0;
    const double tau = std::stod(text, &used);
    if (used == text.size() && tau > 0.0) return {tau};
  } catch (const std::exception&) {
  }
  throw ConfigError(0, "--window must be 'auto', 'none' or a positive tau", "usage");
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// ---------------------------------------------------------------------------

struct RunArgs {
  std::string config;
  std::optional<int> n_traj;
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
  std::optional<std::string> equation;
  std::optional<std::string> out_dir;
};

int cmd_run(const RunArgs& a) {
  StudyConfig config = load_study_config(a.config);
  StudyOverrides o;
  o.n_traj = a.n_traj;
  o.seed = a.seed;
  o.workers = a.workers;
  if (a.equation) o.equation = equation_from_string(*a.equation);
  if (a.out_dir) o.out_dir = *a.out_dir;
  apply_overrides(config, o);
  if (config.workers == 0) config.workers = std::max(1, env_workers());

  const StudyReport report = run_study(config, &std::cerr);
  for (const auto& f : report.files) std::cout << (config.out_dir / f).string() << "\n";
  if (report.n_aborted > 0) std::cerr << "warning: " << report.n_aborted << " trajectories aborted (see manifest)\n";
  std::cout << "manifest " << report.manifest_hash << "\n";
  return kOk;
}

struct SpectrumArgs {
  std::string input;
  std::string output;
  double omega_min = 0.0;
  double omega_max = 0.0;
  int padding = 4;
  std::string window = "auto";
};

int cmd_spectrum(const SpectrumArgs& a) {
  Metadata meta;
  const CorrelationTrace trace = read_correlation_csv(a.input, &meta);
  const Window w = parse_window(a.window, trace);
  const Spectrum s = spectrum(trace, a.padding, w, a.omega_min, a.omega_max);
  meta["omega_min"] = fmt(a.omega_min);
  meta["omega_max"] = fmt(a.omega_max);
  meta["padding"] = std::to_string(a.padding);
  meta.erase("mu_tot_sq");
  write_spectrum_csv(a.output, s, meta);
  std::cout << a.output << " (" << s.frequencies.size() << " points, window " << w.describe() << ")\n";
  return kOk;
}

struct BootstrapArgs {
  std::string store;
  std::string reference;
  std::vector<int> n_traj;
  int resamples = 10000;
  std::uint64_t seed = 0;
  std::optional<double> omega_min;
  std::optional<double> omega_max;
  std::optional<int> padding;
  int bins = 64;
  std::optional<int> workers;
  std::string out_dir = ".";
};

int cmd_bootstrap(const BootstrapArgs& a) {
  Metadata meta;
  const Spectrum reference = read_spectrum_csv(a.reference, &meta);
  auto from_meta = [&](const char* key) -> double {
    auto it = meta.find(key);
    if (it == meta.end())
      throw ConfigError(0, std::string("reference has no '") + key + "' entry; pass it explicitly", "usage");
    return std::stod(it->second);
  };
  StoreReadResult read = read_store(a.store);
  if (read.corrupt) std::cerr << "warning: " << a.store << ": " << read.error << "; using the valid prefix\n";

  BootstrapOptions o;
  o.n_resamples = a.resamples;
  o.omega_min = a.omega_min ? *a.omega_min : from_meta("omega_min");
  o.omega_max = a.omega_max ? *a.omega_max : from_meta("omega_max");
  o.padding = a.padding ? *a.padding : static_cast<int>(from_meta("padding"));
  o.window = reference.window;
  o.histogram_bins = a.bins;
  o.workers = a.workers ? *a.workers : std::max(1, env_workers());
  RVector freqs;
  const RMatrix spectra = record_spectra(read.store, o, &freqs);

  std::filesystem::create_directories(a.out_dir);
  const std::string kind = read.store.metadata.equation;
  const auto table_path = std::filesystem::path(a.out_dir) / ("bootstrap_" + kind + ".csv");
  std::ofstream table(table_path);
  table << "# kind=" << kind << " store=" << spectra.cols() << " resamples=" << o.n_resamples << " seed=" << a.seed
        << "\nn_traj,mean_error,fwhm\n";
  std::vector<Real> means;
  std::cout << "n_traj,mean_error,fwhm\n";
  for (int n : a.n_traj) {
    o.n_traj = n;
    o.seed = trajectory_seed(a.seed, static_cast<std::uint64_t>(n));
    const ErrorDistribution d = bootstrap_errors(spectra, freqs, reference, o);
    const std::string row = std::to_string(n) + "," + fmt(d.mean) + "," + fmt(d.fwhm);
    table << row << "\n";
    std::cout << row << "\n";
    means.push_back(d.mean);
    std::ofstream hist(std::filesystem::path(a.out_dir) / ("histogram_" + kind + "_" + std::to_string(n) + ".csv"));
    hist << "# kind=" << kind << " n_traj=" << n << "\nerror,count\n";
    for (std::size_t b = 0; b < d.histogram.counts.size(); ++b)
      hist << fmt(d.histogram.center(static_cast<int>(b))) << "," << d.histogram.counts[b] << "\n";
  }
  if (!table) throw Error("cannot write " + table_path.string());
  if (means.size() >= 3) std::cout << "slope " << scaling_fit(means, a.n_traj) << "\n";
  return kOk;
}

struct NoiseArgs {
  std::string config;
  int realizations = 10000;
  int steps = 512;
  double dt = 0.1;
  std::uint64_t seed = 1;
  std::optional<std::string> dump;
};

int cmd_validate_noise(const NoiseArgs& a) {
  if (a.realizations < 2) throw ConfigError(0, "--realizations must be at least 2", "usage");
  const StudyConfig config = load_study_config(a.config);
  const NoiseGenerator gen(config.bcf, a.dt, a.steps);
  std::vector<NoiseTrajectory> ensemble;
  ensemble.reserve(a.realizations);
  for (int r = 0; r < a.realizations; ++r)
    ensemble.push_back(gen.generate(trajectory_seed(a.seed, static_cast<std::uint64_t>(r))));
  if (a.dump) write_noise_dump(*a.dump, ensemble.front());
  const NoiseStatsReport rep = validate_noise_statistics(ensemble, config.bcf);
  auto line = [](const char* name, double value, double bound, bool ok) {
    std::cout << (ok ? "ok   " : "FAIL ") << name << " " << value << " (bound " << bound << ")\n";
  };
  std::cout << "realizations " << rep.n_realizations << ", grid " << gen.grid_size() << ", clamped weight "
            << gen.clamped_weight() << "\n";
  line("mean", rep.max_mean_deviation, rep.mean_bound, rep.mean_ok());
  line("covariance", rep.max_covariance_deviation, rep.covariance_bound, rep.covariance_ok());
  line("pseudo-covariance", rep.max_pseudo_deviation, rep.covariance_bound, rep.pseudo_ok());
  line("cross-site", rep.max_cross_site, rep.covariance_bound, rep.cross_ok());
  std::cout << "rms covariance deviation " << rep.rms_covariance_deviation << ", rms pseudo deviation "
            << rep.rms_pseudo_deviation << "\n";
  if (!rep.passed()) {
    std::cerr << "error: noise statistics outside thresholds\n";
    return kRuntimeError;
  }
  return kOk;
}

struct CompareArgs {
  std::string a;
  std::string b;
  std::optional<double> omega_min;
  std::optional<double> omega_max;
};

int cmd_compare(const CompareArgs& a) {
  const Spectrum x = read_spectrum_csv(a.a);
  const Spectrum y = read_spectrum_csv(a.b);
  if (x.frequencies.size() != y.frequencies.size() || x.frequencies.size() < 2 ||
      (x.frequencies - y.frequencies).cwiseAbs().maxCoeff() > 1e-9)
    throw Error("compare: spectra are on different frequency grids");
  const Real lo = a.omega_min ? *a.omega_min : x.frequencies[0];
  const Real hi = a.omega_max ? *a.omega_max : x.frequencies[x.frequencies.size() - 1];
  std::cout << fmt(spectral_error(x.frequencies, x.absorbance, y.absorbance, lo, hi)) << "\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"HOPS absorption spectra and population dynamics"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "hops 1.0.0");

  RunArgs run;
  auto* run_cmd = app.add_subcommand("run", "run a study from a config file");
  run_cmd->add_option("-c,--config", run.config, "study config")->required()->check(CLI::ExistingFile);
  run_cmd->add_option("--n-traj", run.n_traj, "trajectories per ensemble (overrides config)");
  run_cmd->add_option("--seed", run.seed, "master seed (overrides config)");
  run_cmd->add_option("--workers", run.workers, "worker threads (default: config, then HOPS_WORKERS)");
  run_cmd->add_option("--equation", run.equation, "run a single equation kind")
      ->check(CLI::IsMember({"linear", "nonlinear", "noisefree"}));
  run_cmd->add_option("--out-dir", run.out_dir, "output directory (overrides config)");

  SpectrumArgs sp;
  auto* sp_cmd = app.add_subcommand("spectrum", "absorption spectrum of a stored correlation trace");
  sp_cmd->add_option("input", sp.input, "correlation CSV (t, Re C, Im C)")->required()->check(CLI::ExistingFile);
  sp_cmd->add_option("-o,--output", sp.output, "spectrum CSV to write")->required();
  sp_cmd->add_option("--omega-min", sp.omega_min)->required();
  sp_cmd->add_option("--omega-max", sp.omega_max)->required();
  sp_cmd->add_option("--padding", sp.padding, "zero-padding factor")->capture_default_str();
  sp_cmd->add_option("--window", sp.window, "auto | none | tau")->capture_default_str();

  BootstrapArgs bs;
  auto* bs_cmd = app.add_subcommand("bootstrap", "error distribution of resampled ensembles from a store");
  bs_cmd->add_option("--store", bs.store, "trajectory store")->required()->check(CLI::ExistingFile);
  bs_cmd->add_option("--reference", bs.reference, "reference spectrum CSV")->required()->check(CLI::ExistingFile);
  bs_cmd->add_option("--n-traj", bs.n_traj, "ensemble sizes, e.g. 100,1000,5000,10000")
      ->required()
      ->delimiter(',')
      ->check(CLI::PositiveNumber);
  bs_cmd->add_option("--resamples", bs.resamples)->capture_default_str()->check(CLI::PositiveNumber);
  bs_cmd->add_option("--seed", bs.seed, "bootstrap seed")->capture_default_str();
  bs_cmd->add_option("--omega-min", bs.omega_min, "default: from the reference header");
  bs_cmd->add_option("--omega-max", bs.omega_max, "default: from the reference header");
  bs_cmd->add_option("--padding", bs.padding, "default: from the reference header");
  bs_cmd->add_option("--bins", bs.bins, "histogram bins")->capture_default_str()->check(CLI::PositiveNumber);
  bs_cmd->add_option("--workers", bs.workers);
  bs_cmd->add_option("--out-dir", bs.out_dir)->capture_default_str();

  NoiseArgs nz;
  auto* nz_cmd = app.add_subcommand("validate-noise", "statistical self-test of the noise generator");
  nz_cmd->add_option("-c,--config", nz.config, "study config (bath block)")->required()->check(CLI::ExistingFile);
  nz_cmd->add_option("--realizations", nz.realizations)->capture_default_str();
  nz_cmd->add_option("--steps", nz.steps)->capture_default_str()->check(CLI::PositiveNumber);
  nz_cmd->add_option("--dt", nz.dt)->capture_default_str()->check(CLI::PositiveNumber);
  nz_cmd->add_option("--seed", nz.seed)->capture_default_str();
  nz_cmd->add_option("--dump", nz.dump, "write the first realization as a binary dump");

  CompareArgs cmp;
  auto* cmp_cmd = app.add_subcommand("compare", "mean absolute deviation between two spectra");
  cmp_cmd->add_option("a", cmp.a)->required()->check(CLI::ExistingFile);
  cmp_cmd->add_option("b", cmp.b)->required()->check(CLI::ExistingFile);
  cmp_cmd->add_option("--omega-min", cmp.omega_min);
  cmp_cmd->add_option("--omega-max", cmp.omega_max);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    if (*run_cmd) return cmd_run(run);
    if (*sp_cmd) return cmd_spectrum(sp);
    if (*bs_cmd) return cmd_bootstrap(bs);
    if (*nz_cmd) return cmd_validate_noise(nz);
    if (*cmp_cmd) return cmd_compare(cmp);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntimeError;
  }
  return kRuntimeError;
}
