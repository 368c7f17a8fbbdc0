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

#include "hops/stats.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <random>
#include <thread>

#include "hops/noise.hpp"

namespace hops {

Real spectral_error(const RVector& frequencies, const RVector& absorbance, const RVector& reference, Real omega_min,
                    Real omega_max) {
  if (!(omega_max > omega_min)) throw Error("spectral error: omega_max must exceed omega_min");
  if (absorbance.size() != frequencies.size() || reference.size() != frequencies.size())
    throw Error("spectral error: spectra must share a frequency grid");
  const Eigen::Index n = frequencies.size();
  if (n < 2 || frequencies[0] > omega_min + 1e-12 || frequencies[n - 1] < omega_max - 1e-12)
    throw Error("spectral error: window is not covered by the frequency grid");

  // |A - A_ref| is integrated as the piecewise-linear interpolant, clipped to the window.
  Real integral = 0.0;
  for (Eigen::Index i = 0; i + 1 < n; ++i) {
    const Real x0 = frequencies[i], x1 = frequencies[i + 1];
    const Real lo = std::max(x0, omega_min), hi = std::min(x1, omega_max);
    if (hi <= lo) continue;
    const Real d0 = absorbance[i] - reference[i], d1 = absorbance[i + 1] - reference[i + 1];
    const auto diff_at = [&](Real x) { return d0 + (d1 - d0) * (x - x0) / (x1 - x0); };
    const Real a = diff_at(lo), b = diff_at(hi);
    if (a * b >= 0.0) {
      integral += 0.5 * (std::abs(a) + std::abs(b)) * (hi - lo);
    } else {
      // Sign change inside the segment: split at the root.
      const Real root = lo + (hi - lo) * std::abs(a) / (std::abs(a) + std::abs(b));
      integral += 0.5 * std::abs(a) * (root - lo) + 0.5 * std::abs(b) * (hi - root);
    }
  }
  return integral / (omega_max - omega_min);
}

Real spectral_error(const Spectrum& a, const Spectrum& reference, Real omega_min, Real omega_max) {
  if (a.frequencies.size() != reference.frequencies.size() ||
      (a.frequencies - reference.frequencies).cwiseAbs().maxCoeff() > 1e-9)
    throw Error("spectral error: spectra must share a frequency grid");
  return spectral_error(a.frequencies, a.absorbance, reference.absorbance, omega_min, omega_max);
}

Histogram make_histogram(std::span<const Real> values, int bins) {
  if (bins < 1) throw Error("histogram: need at least one bin");
  Histogram h;
  h.counts.assign(bins, 0);
  if (values.empty()) return h;
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  h.lower = *lo;
  h.upper = *hi;
  if (h.upper == h.lower) {
    h.counts[bins / 2] = static_cast<int>(values.size());
    h.upper = h.lower;
    return h;
  }
  for (Real v : values) {
    int bin = static_cast<int>((v - h.lower) / (h.upper - h.lower) * bins);
    h.counts[std::clamp(bin, 0, bins - 1)] += 1;
  }
  return h;
}

Real full_width_half_maximum(const Histogram& h) {
  if (h.counts.empty() || h.bin_width() == 0.0) return 0.0;
  const int bins = static_cast<int>(h.counts.size());
  const int peak = static_cast<int>(std::max_element(h.counts.begin(), h.counts.end()) - h.counts.begin());
  const Real half = 0.5 * h.counts[peak];

  Real left = h.lower;
  for (int i = peak; i > 0; --i)
    if (h.counts[i - 1] < half) {
      const Real f = (h.counts[i] - half) / static_cast<Real>(h.counts[i] - h.counts[i - 1]);
      left = h.center(i) - f * h.bin_width();
      break;
    }
  Real right = h.upper;
  for (int i = peak; i + 1 < bins; ++i)
    if (h.counts[i + 1] < half) {
      const Real f = (h.counts[i] - half) / static_cast<Real>(h.counts[i] - h.counts[i + 1]);
      right = h.center(i) + f * h.bin_width();
      break;
    }
  return right - left;
}

RMatrix record_spectra(const EnsembleStore& store, const BootstrapOptions& options, RVector* frequencies) {
  const int n_records = store.metadata.n_records;
  std::vector<const TrajectoryRecord*> valid;
  for (const auto& r : store.records)
    if (!r.aborted && r.n_records() == n_records) valid.push_back(&r);
  if (valid.empty()) throw Error("bootstrap: store has no usable trajectories");

  CorrelationTrace trace;
  trace.times = RVector::LinSpaced(n_records, 0.0, (n_records - 1) * store.metadata.dt_record);
  RMatrix spectra;
  for (std::size_t i = 0; i < valid.size(); ++i) {
    trace.values = valid[i]->samples;
    const Spectrum s = spectrum(trace, options.padding, options.window, options.omega_min, options.omega_max);
    if (i == 0) {
      spectra.resize(s.absorbance.size(), static_cast<Eigen::Index>(valid.size()));
      if (frequencies) *frequencies = s.frequencies;
    }
    spectra.col(static_cast<Eigen::Index>(i)) = s.absorbance;
  }
  return spectra;
}

ErrorDistribution bootstrap_errors(const EnsembleStore& store, const Spectrum& reference,
                                   const BootstrapOptions& options) {
  if (store.records.empty()) throw Error("bootstrap: empty store");
  RVector frequencies;
  const RMatrix spectra = record_spectra(store, options, &frequencies);
  return bootstrap_errors(spectra, frequencies, reference, options);
}

ErrorDistribution bootstrap_errors(const RMatrix& spectra, const RVector& frequencies, const Spectrum& reference,
                                   const BootstrapOptions& options) {
  if (spectra.cols() == 0) throw Error("bootstrap: empty store");
  if (options.n_traj < 1 || options.n_resamples < 1) throw Error("bootstrap: n_traj and n_resamples must be positive");
  if (frequencies.size() != reference.frequencies.size() ||
      (frequencies - reference.frequencies).cwiseAbs().maxCoeff() > 1e-9)
    throw Error("bootstrap: reference spectrum is on a different frequency grid");

  ErrorDistribution out;
  out.n_traj = options.n_traj;
  out.errors.assign(options.n_resamples, 0.0);
  const auto pool = static_cast<std::uint64_t>(spectra.cols());

  std::atomic<int> next{0};
  auto worker = [&] {
    RVector sum(spectra.rows());
    for (int r = next++; r < options.n_resamples; r = next++) {
      std::mt19937_64 rng(trajectory_seed(options.seed, static_cast<std::uint64_t>(r)));
      std::uniform_int_distribution<std::uint64_t> pick(0, pool - 1);
      sum.setZero();
      for (int i = 0; i < options.n_traj; ++i) sum += spectra.col(static_cast<Eigen::Index>(pick(rng)));
      sum /= static_cast<Real>(options.n_traj);
      out.errors[r] = spectral_error(frequencies, sum, reference.absorbance, options.omega_min, options.omega_max);
    }
  };
  const int workers = std::max(1, options.workers);
  std::vector<std::thread> threads;
  for (int w = 1; w < workers; ++w) threads.emplace_back(worker);
  worker();
  for (auto& t : threads) t.join();

  out.mean = std::accumulate(out.errors.begin(), out.errors.end(), 0.0) / static_cast<Real>(out.errors.size());
  out.histogram = make_histogram(out.errors, options.histogram_bins);
  out.fwhm = full_width_half_maximum(out.histogram);
  return out;
}

Real scaling_fit(std::span<const Real> means, std::span<const int> n_traj) {
  if (means.size() != n_traj.size()) throw Error("scaling fit: means and n_traj differ in length");
  if (means.size() < 3) throw Error("scaling fit: at least three points are required");
  std::vector<Real> x, y;
  for (std::size_t i = 0; i < means.size(); ++i) {
    if (n_traj[i] <= 0 || !(means[i] > 0.0)) throw Error("scaling fit: values must be positive");
    x.push_back(std::log(static_cast<Real>(n_traj[i])));
    y.push_back(std::log(means[i]));
  }
  const Real mx = std::accumulate(x.begin(), x.end(), 0.0) / x.size();
  const Real my = std::accumulate(y.begin(), y.end(), 0.0) / y.size();
  Real sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (sxx == 0.0) throw Error("scaling fit: degenerate abscissae");
  return sxy / sxx;
}

}  // namespace hops
