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

// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits non-zero when any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hops/noise.hpp"
#include "hops/persistence.hpp"
#include "hops/reference.hpp"
#include "hops/study.hpp"

using namespace hops;
namespace fs = std::filesystem;
using Json = nlohmann::json;

namespace {

const fs::path kPresets = HOPS_PRESETS_DIR;
const fs::path kOut = HOPS_ACCEPTANCE_OUT;

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string num(Real v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

ExcitonModel homodimer(Real v = 1.0) {
  RMatrix c(2, 2);
  c << 0.0, v, v, 0.0;
  return {RVector::Zero(2), c, RVector::Ones(2), 0.0};
}

// ---------------------------------------------------------------------------
// Preset studies, run once and shared by several criteria.

struct PresetRun {
  Json manifest;
  fs::path dir;
  std::string error;
};

PresetRun run_preset(const std::string& name) {
  PresetRun r;
  try {
    StudyConfig c = load_study_config(kPresets / (name + ".cfg"));
    c.out_dir = kOut / name;
    fs::remove_all(c.out_dir);
    std::clog << "[" << name << "] running study" << std::endl;
    run_study(c, &std::clog);
    r.dir = c.out_dir;
    r.manifest = Json::parse(std::ifstream(c.out_dir / "manifest.json"));
  } catch (const std::exception& e) {
    r.error = e.what();
  }
  return r;
}

const PresetRun& preset(const std::string& name) {
  static std::map<std::string, PresetRun> cache;
  auto it = cache.find(name);
  if (it == cache.end()) it = cache.emplace(name, run_preset(name)).first;
  return it->second;
}

// ---------------------------------------------------------------------------

Verdict oracle_equivalence() {
  Real worst = 0.0;
  for (auto [p, k] : {std::pair{0.5, 6}, std::pair{2.0, 12}}) {
    const auto bcf = ExponentialBCF::single_mode(2, p, 0.25, 1.0);
    const auto rk = noisefree_correlation(homodimer(), bcf, k, 0.01, 30.0, 10);
    const auto ex = expm_correlation(homodimer(), bcf, k, 0.1, 30.0);
    if (rk.values.size() != ex.values.size()) return {false, "record grids differ"};
    worst = std::max(worst, (rk.values - ex.values).cwiseAbs().maxCoeff());
  }
  return {worst < 1e-8, "max |C_rk4 - C_expm| = " + num(worst) + " (p=0.5 K=6, p=2 K=12, dt=0.01, T=30)"};
}

Verdict trivial_limit() {
  const ExcitonModel m = homodimer();
  const auto bcf = ExponentialBCF::single_mode(2, 0.0, 0.25, 1.0);
  const auto c = noisefree_correlation(m, bcf, 6, 0.01, 30.0, 1);
  Real c_err = 0.0;
  for (Eigen::Index i = 0; i < c.times.size(); ++i)
    c_err = std::max(c_err, std::abs(c.values[i] - 2.0 * std::exp(Complex(0.0, -c.times[i]))));

  Real p_err = 0.0;
  const auto cos2 = [](Real t) { return std::pow(std::cos(t), 2); };
  const auto heom = heom_populations(m, bcf, 2, 0, 0.01, 30.0, 1);
  for (Eigen::Index i = 0; i < heom.times.size(); ++i) p_err = std::max(p_err, std::abs(heom.populations(0, i) - cos2(heom.times[i])));

  const HopsSystem sys(m, bcf, 6);
  PropagationSpec spec;
  spec.dt = 0.01;
  spec.n_steps = 3000;
  const CVector site1 = (CVector(2) << 1.0, 0.0).finished();
  for (Equation eq : {Equation::noisefree, Equation::linear, Equation::nonlinear}) {
    spec.equation = eq;
    const auto z = generate_noise(bcf, spec.noise_dt(), spec.noise_steps(), 1);
    const auto run = propagate(site1, spec, sys, eq == Equation::noisefree ? nullptr : &z);
    const RMatrix pop = populations(run, eq);
    for (int r = 0; r < run.n_records; ++r) p_err = std::max(p_err, std::abs(pop(0, r) - cos2(run.times[r])));
  }
  return {c_err < 1e-8 && p_err < 1e-6,
          "max |C - 2e^{-iVt}| = " + num(c_err) + ", max |P1 - cos^2(Vt)| = " + num(p_err) + " over t in [0, 30]"};
}

Verdict c0_identity() {
  Real worst = 0.0;
  long checked = 0;
  for (const char* name : {"dimer_p05", "dimer_p2"}) {
    const auto& run = preset(name);
    if (!run.error.empty()) return {false, std::string(name) + ": " + run.error};
    const auto ref = read_correlation_csv(run.dir / "correlation_reference.csv");
    worst = std::max(worst, std::abs(ref.values[0] - 2.0));
    ++checked;
    for (const char* kind : {"linear", "nonlinear"}) {
      const auto store = read_store(run.dir / (std::string("store_") + kind + ".hops"));
      if (store.corrupt) return {false, store.error};
      for (const auto& r : store.store.records) {
        if (r.samples.size() == 0) continue;
        worst = std::max(worst, std::abs(r.samples[0] - 2.0));
        ++checked;
      }
    }
  }
  return {worst < 1e-10 && checked > 1, "max |C(0) - 2| = " + num(worst) + " over " + std::to_string(checked) +
                                            " traces (reference and every stored trajectory)"};
}

Verdict scaling() {
  const auto& run = preset("dimer_p05");
  if (!run.error.empty()) return {false, run.error};
  const Real lin = run.manifest["results"]["linear"]["scaling_slope"];
  const Real nl = run.manifest["results"]["nonlinear"]["scaling_slope"];
  const auto in = [](Real s) { return s >= -0.6 && s <= -0.4; };
  return {in(lin) && in(nl), "p=0.5 slopes: linear " + num(lin) + ", nonlinear " + num(nl) +
                                 " (store 30000, 10000 resamples, n_traj 100..10000)"};
}

Verdict nonlinear_advantage() {
  bool ok = true;
  std::string detail;
  for (const char* name : {"dimer_p05", "dimer_p2"}) {
    const auto& run = preset(name);
    if (!run.error.empty()) return {false, std::string(name) + ": " + run.error};
    const Json& res = run.manifest["results"];
    for (int n : {1000, 10000}) {
      Real lin = -1.0, nl = -1.0;
      for (const auto& row : res["linear"]["bootstrap"])
        if (row["n_traj"] == n) lin = row["mean_error"];
      for (const auto& row : res["nonlinear"]["bootstrap"])
        if (row["n_traj"] == n) nl = row["mean_error"];
      if (lin <= 0.0 || nl < 0.0) return {false, std::string(name) + ": no bootstrap row for n_traj " + std::to_string(n)};
      const Real ratio = nl / lin;
      ok = ok && ratio >= 0.3 && ratio <= 0.8;
      detail += (detail.empty() ? "" : ", ") + std::string(name) + " n=" + std::to_string(n) + " ratio " + num(ratio);
    }
  }
  return {ok, detail};
}

Real population_deviation(const PresetRun& run, const char* kind) {
  return run.manifest["results"]["populations"][kind]["max_deviation_from_heom"];
}

Verdict populations_p05() {
  const auto& run = preset("dimer_p05");
  if (!run.error.empty()) return {false, run.error};
  const Real nl = population_deviation(run, "nonlinear");
  const int n = run.manifest["results"]["populations"]["nonlinear"]["n_completed"];
  return {nl < 0.05 && n == 10000,
          "p=0.5 nonlinear (K=6, " + std::to_string(n) + " traj) vs HEOM (K=7): max deviation " + num(nl)};
}

Verdict linear_failure_p2() {
  const auto& run = preset("dimer_p2");
  if (!run.error.empty()) return {false, run.error};
  const Real lin = population_deviation(run, "linear"), nl = population_deviation(run, "nonlinear");
  return {lin > 0.2 && nl < 0.1,
          "p=2 max deviation vs HEOM (K=18): linear " + num(lin) + ", nonlinear " + num(nl) + " (K=16, 10000 traj)"};
}

// Time-averaged empirical covariance M[z_{t+tau} z*_t] and pseudo-covariance
// M[z_{t+tau} z_t] of site n, lags 0 .. max_lag.
void empirical(const std::vector<NoiseTrajectory>& zs, int n, int max_lag, CVector& cov, CVector& pseudo) {
  cov = CVector::Zero(max_lag + 1);
  pseudo = CVector::Zero(max_lag + 1);
  const int len = zs.front().n_steps;
  for (const auto& z : zs) {
    const auto row = z.samples.row(n);
    for (int lag = 0; lag <= max_lag; ++lag) {
      Complex c = 0.0, p = 0.0;
      for (int t = 0; t + lag < len; ++t) {
        c += row[t + lag] * std::conj(row[t]);
        p += row[t + lag] * row[t];
      }
      cov[lag] += c / static_cast<Real>(len - lag);
      pseudo[lag] += p / static_cast<Real>(len - lag);
    }
  }
  cov /= static_cast<Real>(zs.size());
  pseudo /= static_cast<Real>(zs.size());
}

Verdict noise_statistics() {
  const int steps = 512, max_lag = 256;
  const Real dt = 0.1;
  std::string detail;
  bool ok = true;
  for (Real p : {0.5, 2.0}) {
    const auto bcf = ExponentialBCF::single_mode(2, p, 0.25, 1.0);
    const NoiseGenerator gen(bcf, dt, steps);
    std::vector<Real> rms_cov, counts;
    Real worst_pseudo_ratio = 0.0;
    for (int r : {100, 1000, 10000}) {
      std::vector<NoiseTrajectory> zs;
      zs.reserve(r);
      for (int i = 0; i < r; ++i) zs.push_back(gen.generate(trajectory_seed(1000 + r, i)));
      Real cov_sq = 0.0, pseudo_sq = 0.0;
      for (int n = 0; n < 2; ++n) {
        CVector cov, pseudo;
        empirical(zs, n, max_lag, cov, pseudo);
        for (int lag = 0; lag <= max_lag; ++lag) {
          cov_sq += std::norm(cov[lag] - bcf_eval(bcf, n, lag * dt));
          pseudo_sq += std::norm(pseudo[lag]);
        }
      }
      const Real rms = std::sqrt(cov_sq / (2 * (max_lag + 1)));
      const Real rms_pseudo = std::sqrt(pseudo_sq / (2 * (max_lag + 1)));
      rms_cov.push_back(std::log(rms));
      counts.push_back(std::log(static_cast<Real>(r)));
      worst_pseudo_ratio = std::max(worst_pseudo_ratio, rms_pseudo / (p / std::sqrt(static_cast<Real>(r))));
    }
    const Real mx = (counts[0] + counts[1] + counts[2]) / 3, my = (rms_cov[0] + rms_cov[1] + rms_cov[2]) / 3;
    Real sxy = 0.0, sxx = 0.0;
    for (int i = 0; i < 3; ++i) {
      sxy += (counts[i] - mx) * (rms_cov[i] - my);
      sxx += (counts[i] - mx) * (counts[i] - mx);
    }
    const Real slope = sxy / sxx;
    ok = ok && slope >= -0.6 && slope <= -0.4 && worst_pseudo_ratio <= 5.0;
    detail += (detail.empty() ? "" : "; ") + std::string("p=") + num(p) + ": covariance slope " + num(slope) +
              ", pseudo rms <= " + num(worst_pseudo_ratio) + " alpha(0)/sqrt(R)";
  }
  return {ok, detail + " (R = 1e2, 1e3, 1e4)"};
}

Verdict decomposition() {
  std::mt19937_64 rng(2026);
  std::normal_distribution<Real> g;
  std::uniform_int_distribution<int> sites(1, 8);
  Real worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const int n = sites(rng);
    RVector e(n);
    RMatrix v = RMatrix::Zero(n, n);
    Eigen::MatrixX3d mu(n, 3);
    for (int i = 0; i < n; ++i) {
      e[i] = g(rng);
      for (int j = 0; j < i; ++j) v(i, j) = v(j, i) = g(rng);
      for (int k = 0; k < 3; ++k) mu(i, k) = g(rng);
    }
    Eigen::Vector3d pol(g(rng), g(rng), g(rng));
    pol.normalize();
    const ExcitonModel m = ExcitonModel::from_dipole_vectors(e, v, mu, pol);
    CMatrix target = CMatrix::Zero(n + 1, n + 1);
    for (int i = 0; i < n; ++i) target(i, n) = mu.row(i).dot(pol);
    const auto dec = pure_state_decomposition(m);
    CMatrix sum = CMatrix::Zero(n + 1, n + 1);
    for (int k = 0; k < 4; ++k) sum += dec.etas[k] * dec.states[k] * dec.states[k].adjoint();
    worst = std::max(worst, (0.5 * dec.mu_tot * sum - target).cwiseAbs().maxCoeff());
  }
  return {worst < 1e-13, "max entrywise reconstruction error " + num(worst) + " over 100 random models"};
}

Verdict determinism() {
  const char* text = R"([model]
sites = 2
energies = 0 0.3
coupling = 1 2 1.0
dipoles = 1 0.5

[bath]
mode = all 0.5 0.25 1.0

[run]
equations = linear nonlinear
depth = 4
dt = 0.02
t_max = 10
record_stride = 5
n_traj = 200
seed = 99

[populations]
initial_site = 1
depth = 4
heom_depth = 5
t_max = 5
n_traj = 100

[analysis]
omega_min = -2
omega_max = 5
padding = 4
window = auto
bootstrap_n_traj = 10 50 100
bootstrap_resamples = 500
bootstrap_seed = 5

[output]
directory = unused
formats = csv store gnuplot
)";
  std::vector<std::string> hashes;
  for (auto [dir, workers] : {std::pair{"det_a", 1}, std::pair{"det_b", 1}, std::pair{"det_c", 8}}) {
    StudyConfig c = parse_study_config(text);
    c.out_dir = kOut / dir;
    c.workers = workers;
    fs::remove_all(c.out_dir);
    hashes.push_back(run_study(c).manifest_hash);
  }
  const bool ok = hashes[0] == hashes[1] && hashes[0] == hashes[2];
  return {ok, "manifest " + hashes[0].substr(0, 12) + " (rerun " + hashes[1].substr(0, 12) + ", 8 workers " +
                  hashes[2].substr(0, 12) + ")"};
}

}  // namespace

int main() {
  fs::create_directories(kOut);
  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria = {
      {"oracle equivalence", oracle_equivalence},
      {"trivial limit", trivial_limit},
      {"C(0) identity", c0_identity},
      {"stochastic convergence scaling", scaling},
      {"non-linear advantage", nonlinear_advantage},
      {"population cross-validation", populations_p05},
      {"linear-HOPS population failure", linear_failure_p2},
      {"noise generator statistics", noise_statistics},
      {"decomposition identity", decomposition},
      {"determinism and parallel invariance", determinism},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto start = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (!v.pass) ++failures;
    std::cout << (v.pass ? "PASS" : "FAIL") << " " << i + 1 << " " << criteria[i].first << ": " << v.detail << " ["
              << num(secs) << " s]" << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
