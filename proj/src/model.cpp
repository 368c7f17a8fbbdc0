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

#include "hops/model.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <queue>
#include <sstream>

namespace hops {

void ExcitonModel::validate() const {
  const int n = n_sites();
  if (n < 1) throw Error("model: at least one site is required");
  if (couplings.rows() != n || couplings.cols() != n)
    throw Error("model: coupling matrix must be " + std::to_string(n) + "x" + std::to_string(n));
  if (projected_dipoles.size() != n)
    throw Error("model: expected " + std::to_string(n) + " projected dipoles");
  for (int i = 0; i < n; ++i) {
    if (couplings(i, i) != 0.0) throw Error("model: coupling matrix must have zero diagonal");
    for (int j = 0; j < i; ++j)
      if (couplings(i, j) != couplings(j, i)) throw Error("model: coupling matrix must be symmetric");
  }
  if (!site_energies.allFinite() || !couplings.allFinite() || !projected_dipoles.allFinite())
    throw Error("model: non-finite parameter");
  if (projected_dipoles.squaredNorm() == 0.0) throw Error("model: zero total transition strength");
}

ExcitonModel ExcitonModel::from_dipole_vectors(const RVector& site_energies, const RMatrix& couplings,
                                               const Eigen::MatrixX3d& dipoles,
                                               const Eigen::Vector3d& polarization,
                                               Real ground_energy) {
  if (dipoles.rows() != site_energies.size())
    throw Error("model: one dipole vector per site is required");
  ExcitonModel model{site_energies, couplings, dipoles * polarization, ground_energy};
  model.validate();
  return model;
}

int ExponentialBCF::total_modes() const {
  int total = 0;
  for (const auto& site : modes) total += static_cast<int>(site.size());
  return total;
}

void ExponentialBCF::validate() const {
  for (std::size_t n = 0; n < modes.size(); ++n)
    for (const auto& mode : modes[n]) {
      if (!(mode.rate.real() > 0.0))
        throw Error("bcf: site " + std::to_string(n + 1) + " has a mode with Re(w) <= 0");
      if (!std::isfinite(std::abs(mode.prefactor)) || !std::isfinite(std::abs(mode.rate)))
        throw Error("bcf: non-finite mode parameter");
    }
}

ExponentialBCF ExponentialBCF::uniform(int n_sites, std::vector<BathMode> site_modes) {
  ExponentialBCF bcf;
  bcf.modes.assign(n_sites, std::move(site_modes));
  return bcf;
}

ExponentialBCF ExponentialBCF::single_mode(int n_sites, Complex p, Real gamma, Real omega) {
  return uniform(n_sites, {BathMode{p, Complex(gamma, omega)}});
}

Complex bcf_eval(const ExponentialBCF& bcf, int site, Real tau) {
  if (tau < 0.0) throw Error("bcf_eval: negative tau; use conj(alpha(-tau)) explicitly");
  if (site < 0 || site >= bcf.n_sites()) throw Error("bcf_eval: site out of range");
  Complex sum{0.0, 0.0};
  for (const auto& mode : bcf.modes[site]) sum += mode.prefactor * std::exp(-mode.rate * tau);
  return sum;
}

SpectralDensity SpectralDensity::tabulated(std::vector<Real> omegas, std::vector<Real> values, Real beta) {
  if (omegas.size() != values.size() || omegas.size() < 2)
    throw Error("spectral density: need at least two (omega, J) samples");
  if (!std::is_sorted(omegas.begin(), omegas.end()))
    throw Error("spectral density: omegas must be increasing");
  for (Real v : values)
    if (v < 0.0) throw Error("spectral density: J(omega) must be non-negative");
  SpectralDensity sd;
  sd.omega_cut = omegas.back();
  sd.beta = beta;
  sd.density = [w = std::move(omegas), j = std::move(values)](Real omega) {
    if (omega <= w.front() || omega >= w.back()) return 0.0;
    const auto hi = std::upper_bound(w.begin(), w.end(), omega);
    const auto i = static_cast<std::size_t>(hi - w.begin());
    const Real s = (omega - w[i - 1]) / (w[i] - w[i - 1]);
    return (1.0 - s) * j[i - 1] + s * j[i];
  };
  return sd;
}

SpectralDensity SpectralDensity::lorentzian(Real weight, Real center, Real width, Real omega_cut, Real beta) {
  if (weight < 0.0 || width <= 0.0) throw Error("spectral density: invalid Lorentzian parameters");
  SpectralDensity sd;
  sd.omega_cut = omega_cut;
  sd.beta = beta;
  sd.density = [=](Real omega) {
    const Real d = omega - center;
    return weight / std::numbers::pi * width / (d * d + width * width);
  };
  return sd;
}

namespace {

// 7-point Gauss / 15-point Kronrod pair.
constexpr std::array<Real, 8> kKronrodNodes = {
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.000000000000000000000000000000000};
constexpr std::array<Real, 8> kKronrodWeights = {
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
constexpr std::array<Real, 4> kGaussWeights = {
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327};

struct Segment {
  Real a, b;
  Complex value;
  Real error;
  bool operator<(const Segment& other) const { return error < other.error; }
};

template <class F>
Segment gauss_kronrod(const F& f, Real a, Real b) {
  const Real center = 0.5 * (a + b);
  const Real half = 0.5 * (b - a);
  const Complex fc = f(center);
  Complex kronrod = fc * kKronrodWeights[7];
  Complex gauss = fc * kGaussWeights[3];
  for (int i = 0; i < 7; ++i) {
    const Real dx = half * kKronrodNodes[i];
    const Complex pair = f(center - dx) + f(center + dx);
    kronrod += pair * kKronrodWeights[i];
    if (i % 2 == 1) gauss += pair * kGaussWeights[i / 2];
  }
  return {a, b, kronrod * half, std::abs((kronrod - gauss) * half)};
}

// Global adaptive Gauss-Kronrod over [a, b] with initial breakpoints.
template <class F>
Complex integrate(const F& f, std::vector<Real> breaks, const QuadratureOptions& options) {
  std::priority_queue<Segment> heap;
  Complex total{0.0, 0.0};
  Real error = 0.0;
  for (std::size_t i = 0; i + 1 < breaks.size(); ++i) {
    if (breaks[i + 1] <= breaks[i]) continue;
    Segment s = gauss_kronrod(f, breaks[i], breaks[i + 1]);
    total += s.value;
    error += s.error;
    heap.push(s);
  }
  const std::size_t max_segments = std::size_t{1} << std::min(options.max_depth, 20);
  while (!heap.empty() && error > std::max(options.abs_tolerance, options.rel_tolerance * std::abs(total))) {
    if (heap.size() >= max_segments) {
      std::ostringstream msg;
      msg << "spectral density quadrature did not converge (estimated error " << error << ")";
      throw Error(msg.str());
    }
    const Segment worst = heap.top();
    heap.pop();
    const Real mid = 0.5 * (worst.a + worst.b);
    const Segment left = gauss_kronrod(f, worst.a, mid);
    const Segment right = gauss_kronrod(f, mid, worst.b);
    total += left.value + right.value - worst.value;
    error += left.error + right.error - worst.error;
    heap.push(left);
    heap.push(right);
  }
  return total;
}

}  // namespace

CVector bcf_from_spectral_density(const SpectralDensity& sd, std::span<const Real> taus,
                                  const QuadratureOptions& options) {
  if (!sd.density) throw Error("spectral density: no density function");
  if (!(sd.omega_cut > 0.0)) throw Error("spectral density: omega_cut must be positive");
  if (!(sd.beta > 0.0)) throw Error("spectral density: beta must be positive");

  // Initial partition fine enough that narrow features are sampled.
  std::vector<Real> breaks;
  constexpr int kInitialSegments = 256;
  for (int i = 0; i <= kInitialSegments; ++i) breaks.push_back(sd.omega_cut * i / kInitialSegments);

  const auto weight_integrand = [&](Real w) { return Complex(sd.density(w), 0.0); };
  const Real weight = integrate(weight_integrand, breaks, options).real();
  CVector alpha = CVector::Zero(static_cast<Eigen::Index>(taus.size()));
  if (weight == 0.0) return alpha;

  const Real tail = sd.density(sd.omega_cut) * sd.omega_cut;
  if (tail > options.tail_tolerance * weight) {
    std::ostringstream msg;
    msg << "spectral density not decayed at omega_cut=" << sd.omega_cut << ": J(omega_cut)*omega_cut = " << tail
        << " exceeds " << options.tail_tolerance << " of the integrated weight " << weight;
    throw Error(msg.str());
  }

  const bool zero_temperature = std::isinf(sd.beta);
  for (std::size_t i = 0; i < taus.size(); ++i) {
    const Real tau = taus[i];
    const auto integrand = [&](Real w) {
      const Real j = sd.density(w);
      const Real thermal = zero_temperature ? 1.0 : 1.0 / std::tanh(0.5 * sd.beta * w);
      return Complex(j * thermal * std::cos(w * tau), -j * std::sin(w * tau));
    };
    alpha[static_cast<Eigen::Index>(i)] = integrate(integrand, breaks, options);
  }
  return alpha;
}

CMatrix build_excited_hamiltonian(const ExcitonModel& model) {
  model.validate();
  CMatrix h = model.couplings.cast<Complex>();
  h.diagonal() = model.site_energies.cast<Complex>();
  return h;
}

ExcitedState build_initial_excited_state(const ExcitonModel& model) {
  const Real mu_tot = model.projected_dipoles.norm();
  if (mu_tot == 0.0) throw Error("zero total transition strength");
  return {(model.projected_dipoles / mu_tot).cast<Complex>(), mu_tot};
}

CMatrix PureStateDecomposition::reconstruct() const {
  const Eigen::Index dim = states[0].size();
  CMatrix sum = CMatrix::Zero(dim, dim);
  for (int i = 0; i < 4; ++i) sum += etas[i] * states[i] * states[i].adjoint();
  return 0.5 * mu_tot * sum;
}

PureStateDecomposition pure_state_decomposition(const ExcitonModel& model) {
  const auto [psi_ex, mu_tot] = build_initial_excited_state(model);
  const Eigen::Index n = psi_ex.size();
  PureStateDecomposition out;
  out.mu_tot = mu_tot;
  out.etas = {Complex(1, 0), Complex(-1, 0), Complex(0, 1), Complex(0, -1)};
  for (int i = 0; i < 4; ++i) {
    CVector v(n + 1);
    v.head(n) = psi_ex;
    v[n] = out.etas[i];
    out.states[i] = v / std::numbers::sqrt2;
  }
  return out;
}

CMatrix dipole_ground_dyad(const ExcitonModel& model) {
  const Eigen::Index n = model.n_sites();
  CMatrix m = CMatrix::Zero(n + 1, n + 1);
  m.col(n).head(n) = model.projected_dipoles.cast<Complex>();
  return m;
}

CMatrix dipole_anticommutator(const ExcitonModel& model) {
  const CMatrix m = dipole_ground_dyad(model);
  return m + m.adjoint();
}

CMatrix dipole_commutator(const ExcitonModel& model) {
  const CMatrix m = dipole_ground_dyad(model);
  return m - m.adjoint();
}

}  // namespace hops
