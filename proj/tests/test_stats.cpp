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

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "hops/stats.hpp"
#include "test_util.hpp"

using namespace hops;
using hops::test::contains;
using hops::test::error_of;

namespace {

// Midpoint quadrature of the piecewise-linear |A - B| on a very fine mesh.
Real brute_error(const RVector& w, const RVector& a, const RVector& b, Real lo, Real hi) {
  const int n = 400000;
  const Real h = (hi - lo) / n;
  Real sum = 0.0;
  Eigen::Index seg = 0;
  for (int i = 0; i < n; ++i) {
    const Real x = lo + (i + 0.5) * h;
    while (w[seg + 1] < x) ++seg;
    const Real f = (x - w[seg]) / (w[seg + 1] - w[seg]);
    sum += std::abs((1 - f) * (a[seg] - b[seg]) + f * (a[seg + 1] - b[seg + 1]));
  }
  return sum * h / (hi - lo);
}

// Records C_r(t) = e^{-t/2} (1 + a_r) + b_r e^{-0.3 t - i t}; their population
// mean is e^{-t/2}, which gives the reference.
EnsembleStore synthetic_store(int n, std::uint64_t seed, bool identical = false) {
  EnsembleStore store;
  store.metadata.equation = "linear";
  store.metadata.dt_record = 0.1;
  store.metadata.n_records = 301;
  std::mt19937_64 rng(seed);
  std::normal_distribution<Real> g(0.0, 0.3);
  for (int r = 0; r < n; ++r) {
    const Complex a(identical ? 0.1 : g(rng), identical ? 0.0 : g(rng)), b(identical ? 0.2 : g(rng), 0.0);
    TrajectoryRecord rec;
    rec.id = static_cast<std::uint64_t>(r);
    rec.dt_record = 0.1;
    rec.samples.resize(301);
    for (int i = 0; i < 301; ++i) {
      const Real t = 0.1 * i;
      rec.samples[i] = std::exp(-0.5 * t) * (1.0 + a) + b * std::exp(Complex(-0.3 * t, -t));
    }
    store.records.push_back(std::move(rec));
  }
  return store;
}

Spectrum reference_spectrum(const BootstrapOptions& o) {
  CorrelationTrace t;
  t.times = RVector::LinSpaced(301, 0.0, 30.0);
  t.values = (-0.5 * t.times.array()).exp().cast<Complex>();
  return spectrum(t, o.padding, o.window, o.omega_min, o.omega_max);
}

BootstrapOptions options(int n_traj, int resamples = 2000) {
  BootstrapOptions o;
  o.n_traj = n_traj;
  o.n_resamples = resamples;
  o.omega_min = -2.0;
  o.omega_max = 3.0;
  o.padding = 4;
  o.seed = 99;
  return o;
}

}  // namespace

TEST_CASE("spectral error") {
  const RVector w = RVector::LinSpaced(101, -2.5, 3.5);
  RVector a(101);
  for (int i = 0; i < 101; ++i) a[i] = 1.0 / (1.0 + w[i] * w[i]);

  CHECK(spectral_error(w, a, a, -2.0, 3.0) == 0.0);
  CHECK(spectral_error(w, (a.array() + 0.3).matrix(), a, -2.0, 3.0) == doctest::Approx(0.3).epsilon(1e-12));

  std::mt19937_64 rng(4);
  std::normal_distribution<Real> g;
  RVector b = a;
  for (auto& x : b) x += 0.2 * g(rng);
  const Real e = spectral_error(w, b, a, -2.0, 3.0);
  CHECK(e == doctest::Approx(brute_error(w, b, a, -2.0, 3.0)).epsilon(1e-6));
  CHECK(spectral_error(w, (2.5 * b).eval(), (2.5 * a).eval(), -2.0, 3.0) == doctest::Approx(2.5 * e).epsilon(1e-12));
  // Window edges between grid points.
  CHECK(spectral_error(w, b, a, -1.97, 2.91) == doctest::Approx(brute_error(w, b, a, -1.97, 2.91)).epsilon(1e-6));

  CHECK(contains(error_of([&] { spectral_error(w, a, a, 1.0, 1.0); }), "omega_max must exceed"));
  CHECK(contains(error_of([&] { spectral_error(w, a, a, -3.0, 1.0); }), "not covered"));
  CHECK(contains(error_of([&] { spectral_error(w, a, RVector(a.head(5)), -2.0, 1.0); }), "share a frequency grid"));
}

TEST_CASE("histogram and width") {
  Histogram h{0.0, 5.0, {0, 2, 4, 2, 0}};
  CHECK(full_width_half_maximum(h) == doctest::Approx(2.0));
  h.counts = {0, 1, 4, 1, 0};
  CHECK(full_width_half_maximum(h) == doctest::Approx(4.0 / 3.0));

  const std::vector<Real> same(10, 0.25);
  const Histogram flat = make_histogram(same, 8);
  CHECK(flat.counts[4] == 10);
  CHECK(full_width_half_maximum(flat) == 0.0);

  std::mt19937_64 rng(1);
  std::normal_distribution<Real> g(3.0, 0.5);
  std::vector<Real> v(200000);
  for (auto& x : v) x = g(rng);
  const Histogram gh = make_histogram(v, 64);
  int total = 0;
  for (int c : gh.counts) total += c;
  CHECK(total == 200000);
  CHECK(gh.lower == *std::min_element(v.begin(), v.end()));
  CHECK(full_width_half_maximum(gh) == doctest::Approx(2.0 * std::sqrt(2.0 * std::log(2.0)) * 0.5).epsilon(0.05));
  CHECK(contains(error_of([&] { make_histogram(v, 0); }), "at least one bin"));
}

TEST_CASE("scaling fit") {
  const std::vector<int> n{100, 1000, 5000, 10000};
  std::vector<Real> m;
  for (int k : n) m.push_back(0.7 / std::sqrt(static_cast<Real>(k)));
  CHECK(scaling_fit(m, n) == doctest::Approx(-0.5).epsilon(1e-12));
  const std::vector<Real> flat(4, 0.2);
  CHECK(std::abs(scaling_fit(flat, n)) < 1e-14);
  const std::vector<int> same{5, 5, 5};
  CHECK(contains(error_of([&] { scaling_fit(std::span(flat).first(3), same); }), "degenerate"));
  CHECK(contains(error_of([&] { scaling_fit(std::span(flat).first(2), std::span(n).first(2)); }), "three points"));
}

TEST_CASE("bootstrap") {
  const EnsembleStore store = synthetic_store(5000, 21);
  const BootstrapOptions o100 = options(100);
  const Spectrum ref = reference_spectrum(o100);
  RVector freq;
  const RMatrix spectra = record_spectra(store, o100, &freq);
  CHECK(spectra.cols() == 5000);
  CHECK((freq - ref.frequencies).cwiseAbs().maxCoeff() == 0.0);

  const ErrorDistribution d100 = bootstrap_errors(spectra, freq, ref, o100);
  CHECK(d100.errors.size() == 2000);
  CHECK(*std::min_element(d100.errors.begin(), d100.errors.end()) >= 0.0);
  CHECK(d100.fwhm > 0.0);

  SUBCASE("deterministic and worker independent") {
    BootstrapOptions o = o100;
    o.workers = 3;
    const auto again = bootstrap_errors(spectra, freq, ref, o);
    CHECK(again.errors == d100.errors);
    const auto from_store = bootstrap_errors(store, ref, o100);
    CHECK(from_store.errors == d100.errors);
    o.seed = 100;
    CHECK(bootstrap_errors(spectra, freq, ref, o).errors != d100.errors);
  }

  SUBCASE("error falls as one over root n") {
    const ErrorDistribution d400 = bootstrap_errors(spectra, freq, ref, options(400));
    CHECK(d400.mean / d100.mean == doctest::Approx(0.5).epsilon(0.2));
  }

  SUBCASE("store order does not matter for the mean") {
    EnsembleStore shuffled = store;
    std::shuffle(shuffled.records.begin(), shuffled.records.end(), std::mt19937_64(5));
    const auto d = bootstrap_errors(shuffled, ref, o100);
    CHECK(d.mean == doctest::Approx(d100.mean).epsilon(0.03));
  }

  SUBCASE("aborted and short records are skipped") {
    EnsembleStore s = synthetic_store(20, 3);
    s.records[4].aborted = true;
    s.records[7].samples.conservativeResize(100);
    CHECK(record_spectra(s, o100).cols() == 18);
  }
}

TEST_CASE("bootstrap of identical trajectories") {
  const EnsembleStore store = synthetic_store(50, 1, true);
  const BootstrapOptions o = options(10, 200);
  const auto d = bootstrap_errors(store, reference_spectrum(o), o);
  for (Real e : d.errors) CHECK(e == d.errors[0]);
  CHECK(d.errors[0] > 0.0);
  CHECK(d.fwhm == 0.0);
}

TEST_CASE("bootstrap errors") {
  const BootstrapOptions o = options(10, 10);
  const Spectrum ref = reference_spectrum(o);
  CHECK(contains(error_of([&] { bootstrap_errors(EnsembleStore{}, ref, o); }), "empty store"));
  EnsembleStore all_aborted = synthetic_store(3, 1);
  for (auto& r : all_aborted.records) r.aborted = true;
  CHECK(contains(error_of([&] { bootstrap_errors(all_aborted, ref, o); }), "no usable trajectories"));
  BootstrapOptions narrow = o;
  narrow.omega_max = 2.0;
  CHECK(contains(error_of([&] { bootstrap_errors(synthetic_store(3, 1), ref, narrow); }), "different frequency grid"));
  BootstrapOptions zero = o;
  zero.n_traj = 0;
  CHECK(contains(error_of([&] { bootstrap_errors(synthetic_store(3, 1), ref, zero); }), "must be positive"));
}
