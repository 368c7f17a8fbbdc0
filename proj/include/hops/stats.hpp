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
#include <span>
#include <vector>

#include "hops/observables.hpp"
#include "hops/persistence.hpp"

namespace hops {

/// (1 / (omega_max - omega_min)) * integral of |A - A_ref| over the window,
/// trapezoid rule on the common grid with linear interpolation at the window
/// edges.
Real spectral_error(const RVector& frequencies, const RVector& absorbance, const RVector& reference, Real omega_min,
                    Real omega_max);
Real spectral_error(const Spectrum& a, const Spectrum& reference, Real omega_min, Real omega_max);

struct Histogram {
  Real lower = 0.0;
  Real upper = 0.0;
  std::vector<int> counts;

  Real bin_width() const { return counts.empty() ? 0.0 : (upper - lower) / static_cast<Real>(counts.size()); }
  Real center(int bin) const { return lower + (bin + 0.5) * bin_width(); }
};

Histogram make_histogram(std::span<const Real> values, int bins);

/// Full width at half maximum of the histogram's tallest peak, with linear
/// interpolation between bin centres at the half-height crossings.
Real full_width_half_maximum(const Histogram& histogram);

struct ErrorDistribution {
  int n_traj = 0;
  std::vector<Real> errors;
  Real mean = 0.0;
  Real fwhm = 0.0;
  Histogram histogram;
};

struct BootstrapOptions {
  int n_traj = 100;
  int n_resamples = 10000;
  Real omega_min = 0.0;
  Real omega_max = 0.0;
  int padding = 4;
  Window window;
  std::uint64_t seed = 0;
  int histogram_bins = 64;
  int workers = 1;
};

/// Per-record spectra of the valid (non-aborted, full-length) records on the
/// analysis window, one column per record. Averaging columns equals the
/// spectrum of the averaged C(t) because the transform is linear.
RMatrix record_spectra(const EnsembleStore& store, const BootstrapOptions& options, RVector* frequencies = nullptr);

/// Ensembles of n_traj trajectories drawn with replacement from the store;
/// each is averaged, transformed and scored against the reference spectrum.
/// Deterministic in (store, options) and independent of options.workers.
ErrorDistribution bootstrap_errors(const EnsembleStore& store, const Spectrum& reference,
                                   const BootstrapOptions& options);

/// Same as above on precomputed record_spectra() columns.
ErrorDistribution bootstrap_errors(const RMatrix& spectra, const RVector& frequencies, const Spectrum& reference,
                                   const BootstrapOptions& options);

/// Least-squares slope of log(mean) against log(n_traj).
Real scaling_fit(std::span<const Real> means, std::span<const int> n_traj);

}  // namespace hops
