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

#include "hops/noise.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <boost/random/normal_distribution.hpp>

#include "binary_io.hpp"

namespace hops {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr char kNoiseMagic[8] = {'H', 'O', 'P', 'S', 'N', 'O', 'I', 'S'};
constexpr std::uint32_t kNoiseVersion = 1;

}  // namespace

std::uint64_t trajectory_seed(std::uint64_t master_seed, std::uint64_t index) {
  return splitmix64(splitmix64(master_seed) ^ splitmix64(index + 0x632be59bd9b4e019ULL));
}

int next_smooth_size(int n) {
  for (int m = std::max(n, 1);; ++m) {
    int r = m;
    for (int p : {2, 3, 5})
      while (r % p == 0) r /= p;
    if (r == 1) return m;
  }
}

NoiseGenerator::NoiseGenerator(const ExponentialBCF& bcf, Real dt, int n_steps)
    : dt_(dt), n_steps_(n_steps) {
  if (!(dt > 0.0)) throw Error("noise: dt must be positive");
  if (n_steps < 1) throw Error("noise: n_steps must be at least 1");
  bcf.validate();
  grid_size_ = next_smooth_size(4 * n_steps);
  if (grid_size_ % 2 == 1) grid_size_ = next_smooth_size(grid_size_ + 1);
  const int len = grid_size_;

  filters_.resize(bcf.n_sites());
  for (int n = 0; n < bcf.n_sites(); ++n) {
    if (bcf.modes[n].empty()) continue;
    // Hermitian circulant: c_m = alpha(m dt), c_{L-m} = conj(alpha(m dt)).
    std::vector<Complex> c(len);
    for (int m = 0; m <= len / 2; ++m) {
      const Complex a = bcf_eval(bcf, n, m * dt);
      c[m] = a;
      if (m > 0 && m < len / 2) c[len - m] = std::conj(a);
    }
    c[len / 2] = Complex(c[len / 2].real(), 0.0);
    if (std::all_of(c.begin(), c.end(), [](Complex v) { return v == Complex{}; })) continue;

    std::vector<Complex> lambda;
    Eigen::FFT<Real> fft;
    fft.fwd(lambda, c);
    RVector filter(len);
    Real negative = 0.0, total = 0.0;
    for (int k = 0; k < len; ++k) {
      const Real w = lambda[k].real();
      total += std::abs(w);
      if (w < 0.0) negative += -w;
      filter[k] = std::sqrt(std::max(w, 0.0) / len);
    }
    if (total > 0.0) clamped_ = std::max(clamped_, negative / total);
    filters_[n] = std::move(filter);
  }
}

NoiseTrajectory NoiseGenerator::generate(std::uint64_t seed) const {
  NoiseTrajectory out{dt_, n_steps_, seed, CMatrix::Zero(n_sites(), n_steps_)};
  SplitMix64 rng(seed);
  boost::random::normal_distribution<Real> normal(0.0, std::sqrt(0.5));
  // FFT plans are cached per object and are not thread-safe to share.
  thread_local Eigen::FFT<Real> fft;
  std::vector<Complex> spectrum(grid_size_), signal;
  for (int n = 0; n < n_sites(); ++n) {
    const RVector& filter = filters_[n];
    if (filter.size() == 0) continue;
    for (int k = 0; k < grid_size_; ++k) {
      const Real re = normal(rng);
      const Real im = normal(rng);
      spectrum[k] = filter[k] * Complex(re, im);
    }
    fft.inv(signal, spectrum);
    // Eigen's inverse transform divides by L; undo it so z = sum_k f_k g_k e^{+2 pi i k m / L}.
    for (int m = 0; m < n_steps_; ++m) out.samples(n, m) = signal[m] * static_cast<Real>(grid_size_);
  }
  return out;
}

NoiseTrajectory generate_noise(const ExponentialBCF& bcf, Real dt, int n_steps, std::uint64_t seed) {
  return NoiseGenerator(bcf, dt, n_steps).generate(seed);
}

NoiseStatsReport validate_noise_statistics(std::span<const NoiseTrajectory> ensemble, const ExponentialBCF& bcf,
                                           const NoiseStatsOptions& options) {
  NoiseStatsReport report;
  report.n_realizations = static_cast<int>(ensemble.size());
  if (ensemble.empty()) return report;
  const int n_sites = static_cast<int>(ensemble.front().samples.rows());
  const int n_steps = ensemble.front().n_steps;
  const Real dt = ensemble.front().dt;
  if (n_sites != bcf.n_sites()) throw Error("validate-noise: site count differs from bcf");
  for (const auto& z : ensemble)
    if (z.n_steps != n_steps || z.dt != dt || z.samples.rows() != n_sites)
      throw Error("validate-noise: realizations must share a grid");

  const int max_lag = options.max_lag < 0 ? n_steps / 2 : std::min(options.max_lag, n_steps - 1);
  const int len = next_smooth_size(2 * n_steps);
  const Real count = static_cast<Real>(ensemble.size());

  Eigen::FFT<Real> fft;
  std::vector<Complex> padded(len), conj_padded(len), product(len), lagged;
  std::vector<std::vector<Complex>> transforms(n_sites);

  // Lag sums accumulated over realizations:
  //   auto_sum[n][tau]   = sum_t z_{t+tau,n} z*_{t,n}
  //   pseudo_sum[n][tau] = sum_t z_{t+tau,n} z_{t,n}
  //   cross_sum[tau]     = sum_t z_{t+tau,n} z*_{t,m} over all n != m
  std::vector<std::vector<Complex>> auto_sum(n_sites, std::vector<Complex>(max_lag + 1));
  std::vector<std::vector<Complex>> pseudo_sum(n_sites, std::vector<Complex>(max_lag + 1));
  std::vector<std::vector<Complex>> cross_sum;
  std::vector<std::pair<int, int>> pairs;
  for (int n = 0; n < n_sites; ++n)
    for (int m = 0; m < n_sites; ++m)
      if (n != m) pairs.emplace_back(n, m);
  cross_sum.assign(pairs.size(), std::vector<Complex>(max_lag + 1));
  CMatrix mean = CMatrix::Zero(n_sites, n_steps);

  for (const auto& z : ensemble) {
    mean += z.samples;
    for (int n = 0; n < n_sites; ++n) {
      std::fill(padded.begin(), padded.end(), Complex{});
      std::fill(conj_padded.begin(), conj_padded.end(), Complex{});
      for (int t = 0; t < n_steps; ++t) {
        padded[t] = z.samples(n, t);
        conj_padded[t] = std::conj(z.samples(n, t));
      }
      fft.fwd(transforms[n], padded);
      std::vector<Complex> conj_transform;
      fft.fwd(conj_transform, conj_padded);
      // sum_t a_{t+tau} conj(b_t) = IFFT(A conj(B))[tau]
      for (int k = 0; k < len; ++k) product[k] = transforms[n][k] * std::conj(transforms[n][k]);
      fft.inv(lagged, product);
      for (int tau = 0; tau <= max_lag; ++tau) auto_sum[n][tau] += lagged[tau];
      for (int k = 0; k < len; ++k) product[k] = transforms[n][k] * std::conj(conj_transform[k]);
      fft.inv(lagged, product);
      for (int tau = 0; tau <= max_lag; ++tau) pseudo_sum[n][tau] += lagged[tau];
    }
    for (std::size_t p = 0; p < pairs.size(); ++p) {
      const auto [n, m] = pairs[p];
      for (int k = 0; k < len; ++k) product[k] = transforms[n][k] * std::conj(transforms[m][k]);
      fft.inv(lagged, product);
      for (int tau = 0; tau <= max_lag; ++tau) cross_sum[p][tau] += lagged[tau];
    }
  }
  mean /= count;

  Real alpha0 = 0.0;
  for (int n = 0; n < n_sites; ++n)
    if (!bcf.modes[n].empty()) alpha0 = std::max(alpha0, std::abs(bcf_eval(bcf, n, 0.0)));
  report.mean_bound = options.mean_sigmas * std::sqrt(alpha0 / count);
  report.covariance_bound = options.covariance_sigmas * alpha0 / std::sqrt(count);
  report.max_mean_deviation = mean.cwiseAbs().maxCoeff();

  Real cov_sq = 0.0, pseudo_sq = 0.0;
  int terms = 0;
  for (int n = 0; n < n_sites; ++n)
    for (int tau = 0; tau <= max_lag; ++tau) {
      const Real pairs_per_realization = n_steps - tau;
      const Complex expected = bcf.modes[n].empty() ? Complex{} : bcf_eval(bcf, n, tau * dt);
      const Real cov_dev = std::abs(auto_sum[n][tau] / (count * pairs_per_realization) - expected);
      const Real pseudo_dev = std::abs(pseudo_sum[n][tau] / (count * pairs_per_realization));
      report.max_covariance_deviation = std::max(report.max_covariance_deviation, cov_dev);
      report.max_pseudo_deviation = std::max(report.max_pseudo_deviation, pseudo_dev);
      cov_sq += cov_dev * cov_dev;
      pseudo_sq += pseudo_dev * pseudo_dev;
      ++terms;
    }
  report.rms_covariance_deviation = std::sqrt(cov_sq / terms);
  report.rms_pseudo_deviation = std::sqrt(pseudo_sq / terms);
  for (const auto& sums : cross_sum)
    for (int tau = 0; tau <= max_lag; ++tau)
      report.max_cross_site =
          std::max(report.max_cross_site, std::abs(sums[tau] / (count * (n_steps - tau))));
  return report;
}

Complex empirical_covariance(std::span<const NoiseTrajectory> ensemble, int site, int t, int s) {
  if (ensemble.empty()) return {};
  Complex sum{};
  for (const auto& z : ensemble) sum += z.samples(site, t) * std::conj(z.samples(site, s));
  return sum / static_cast<Real>(ensemble.size());
}

void write_noise_dump(const std::filesystem::path& path, const NoiseTrajectory& noise) {
  std::string buf(kNoiseMagic, sizeof kNoiseMagic);
  detail::put_u32(buf, kNoiseVersion);
  detail::put_u32(buf, static_cast<std::uint32_t>(noise.samples.rows()));
  detail::put_u64(buf, static_cast<std::uint64_t>(noise.n_steps));
  detail::put_f64(buf, noise.dt);
  detail::put_u64(buf, noise.seed);
  for (Eigen::Index n = 0; n < noise.samples.rows(); ++n)
    for (Eigen::Index m = 0; m < noise.samples.cols(); ++m) {
      detail::put_f64(buf, noise.samples(n, m).real());
      detail::put_f64(buf, noise.samples(n, m).imag());
    }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw Error("short write to " + path.string());
}

NoiseTrajectory read_noise_dump(const std::filesystem::path& path) {
  const std::string data = detail::read_file(path.string());
  detail::Reader in(data);
  if (!in.has(sizeof kNoiseMagic) || in.bytes(sizeof kNoiseMagic) != std::string_view(kNoiseMagic, 8))
    throw Error(path.string() + ": not a noise dump");
  if (in.u32() != kNoiseVersion) throw Error(path.string() + ": unsupported noise dump version");
  const auto n_sites = static_cast<Eigen::Index>(in.u32());
  NoiseTrajectory noise;
  noise.n_steps = static_cast<int>(in.u64());
  noise.dt = in.f64();
  noise.seed = in.u64();
  if (in.remaining() != static_cast<std::size_t>(n_sites) * noise.n_steps * 16)
    throw Error(path.string() + ": sample block has the wrong length");
  noise.samples.resize(n_sites, noise.n_steps);
  for (Eigen::Index n = 0; n < n_sites; ++n)
    for (Eigen::Index m = 0; m < noise.n_steps; ++m) {
      const double re = in.f64();
      noise.samples(n, m) = Complex(re, in.f64());
    }
  return noise;
}

}  // namespace hops
