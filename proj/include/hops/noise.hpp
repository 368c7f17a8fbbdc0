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
#include <span>
#include <vector>

#include <Eigen/Core>
#include <unsupported/Eigen/FFT>

#include "hops/model.hpp"

namespace hops {

/// One realization of the complex Gaussian processes z_{t,n} on the grid
/// t_m = m * dt, m = 0 .. n_steps-1. samples(n, m) holds z at site n.
struct NoiseTrajectory {
  Real dt = 0.0;
  int n_steps = 0;
  std::uint64_t seed = 0;
  CMatrix samples;
};

/// Seed of trajectory `index` in an ensemble with `master_seed`. Pure
/// function of its arguments, so streams never depend on scheduling.
std::uint64_t trajectory_seed(std::uint64_t master_seed, std::uint64_t index);

/// SplitMix64 stream; satisfies UniformRandomBitGenerator.
class SplitMix64 {
 public:
  using result_type = std::uint64_t;
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}
  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return ~result_type{0}; }
  result_type operator()() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

 private:
  std::uint64_t state_;
};

/// Circulant-embedding synthesis of stationary noise with
/// M[z_t z*_s] = alpha(t - s) and M[z_t z_s] = 0.
///
/// The covariance alpha(m dt) is laid out on a periodic grid at least four
/// times longer than the requested trajectory; its DFT gives the spectral
/// weights, whose square roots filter i.i.d. complex Gaussians. Tiny
/// negative weights (from truncating alpha) are clamped to zero and their
/// magnitude is kept in clamped_weight().
class NoiseGenerator {
 public:
  NoiseGenerator(const ExponentialBCF& bcf, Real dt, int n_steps);

  NoiseTrajectory generate(std::uint64_t seed) const;

  Real dt() const { return dt_; }
  int n_steps() const { return n_steps_; }
  int n_sites() const { return static_cast<int>(filters_.size()); }
  int grid_size() const { return grid_size_; }
  /// Sum of |negative spectral weights| relative to the total weight, max over sites.
  Real clamped_weight() const { return clamped_; }

 private:
  Real dt_;
  int n_steps_;
  int grid_size_;
  Real clamped_ = 0.0;
  std::vector<RVector> filters_;  // sqrt(lambda_k / L) per site, empty when alpha == 0
};

NoiseTrajectory generate_noise(const ExponentialBCF& bcf, Real dt, int n_steps, std::uint64_t seed);

/// Smallest integer >= n whose only prime factors are 2, 3 and 5.
int next_smooth_size(int n);

struct NoiseStatsOptions {
  /// Largest lag compared; -1 selects n_steps / 2.
  int max_lag = -1;
  Real mean_sigmas = 4.0;
  Real covariance_sigmas = 5.0;
};

struct NoiseStatsReport {
  int n_realizations = 0;
  Real max_mean_deviation = 0.0;        // max_t |M[z_t]|
  Real max_covariance_deviation = 0.0;  // max_tau |M[z_{t+tau} z*_t] - alpha(tau)|
  Real rms_covariance_deviation = 0.0;
  Real max_pseudo_deviation = 0.0;      // max_tau |M[z_{t+tau} z_t]|
  Real rms_pseudo_deviation = 0.0;
  Real max_cross_site = 0.0;            // max_tau |M[z_{t+tau,n} z*_{t,m}]|, n != m
  Real mean_bound = 0.0;
  Real covariance_bound = 0.0;

  bool mean_ok() const { return max_mean_deviation <= mean_bound; }
  bool covariance_ok() const { return max_covariance_deviation <= covariance_bound; }
  bool pseudo_ok() const { return max_pseudo_deviation <= covariance_bound; }
  bool cross_ok() const { return max_cross_site <= covariance_bound; }
  bool passed() const { return mean_ok() && covariance_ok() && pseudo_ok() && cross_ok(); }
};

/// Compares stationary (time-averaged) ensemble estimators against bcf_eval.
/// Bounds are k-sigma standard errors built from alpha_n(0) and the number
/// of realizations.
NoiseStatsReport validate_noise_statistics(std::span<const NoiseTrajectory> ensemble, const ExponentialBCF& bcf,
                                           const NoiseStatsOptions& options = {});

/// Two-time estimator (1/R) sum_r z_t z*_s for one site.
Complex empirical_covariance(std::span<const NoiseTrajectory> ensemble, int site, int t, int s);

/// Little-endian dump: "HOPSNOIS", u32 version, u32 N, u64 n_steps, f64 dt,
/// u64 seed, then per site all steps as (re, im) float64 pairs.
void write_noise_dump(const std::filesystem::path& path, const NoiseTrajectory& noise);
NoiseTrajectory read_noise_dump(const std::filesystem::path& path);

}  // namespace hops
