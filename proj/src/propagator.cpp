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

#include "hops/propagator.hpp"

#include <cmath>
#include <sstream>

namespace hops {

const char* to_string(Equation eq) {
  switch (eq) {
    case Equation::linear: return "linear";
    case Equation::nonlinear: return "nonlinear";
    case Equation::noisefree: return "noisefree";
  }
  return "?";
}

Equation equation_from_string(const std::string& name) {
  if (name == "linear") return Equation::linear;
  if (name == "nonlinear") return Equation::nonlinear;
  if (name == "noisefree") return Equation::noisefree;
  throw Error("unknown equation kind '" + name + "' (expected linear, nonlinear or noisefree)");
}

HopsSystem::HopsSystem(const ExcitonModel& model, const ExponentialBCF& bcf, int depth)
    : HopsSystem(model, bcf, HierarchyIndexSpace(std::max(bcf.total_modes(), 1), depth)) {}

HopsSystem::HopsSystem(const ExcitonModel& model, const ExponentialBCF& bcf, HierarchyIndexSpace space)
    : n_sites_(model.n_sites()), space_(std::move(space)) {
  model.validate();
  bcf.validate();
  if (bcf.n_sites() != n_sites_) throw Error("bcf has " + std::to_string(bcf.n_sites()) + " sites, model has " +
                                             std::to_string(n_sites_));
  hamiltonian_ = build_excited_hamiltonian(model);
  minus_i_h_ = -kI * hamiltonian_;
  for (int n = 0; n < n_sites_; ++n)
    for (const auto& mode : bcf.modes[n]) {
      mode_site_.push_back(n);
      mode_prefactor_.push_back(mode.prefactor);
      mode_rate_.push_back(mode.rate);
    }
  if (mode_site_.empty()) {
    // Bath-free model: one inert mode keeps the index space well formed.
    mode_site_.push_back(0);
    mode_prefactor_.push_back(0.0);
    mode_rate_.push_back(1.0);
  }
  if (space_.n_modes() != n_modes())
    throw Error("index space has " + std::to_string(space_.n_modes()) + " modes, bath has " +
                std::to_string(n_modes()));

  const int n_aux = space_.size();
  kdotw_.resize(n_aux);
  down_offset_.assign(1, 0);
  up_offset_.assign(1, 0);
  for (int id = 0; id < n_aux; ++id) {
    kdotw_[id] = space_.kdotw(id, mode_rate_);
    const auto k = space_.index(id);
    for (int m = 0; m < n_modes(); ++m) {
      const int below = space_.down(id, m);
      if (below >= 0 && mode_prefactor_[m] != Complex{})
        down_.push_back({mode_site_[m], below, static_cast<Real>(k[m]) * mode_prefactor_[m]});
      const int above = space_.up(id, m);
      if (above >= 0) up_.push_back({mode_site_[m], above});
    }
    down_offset_.push_back(down_.size());
    up_offset_.push_back(up_.size());
  }
}

HopsState HopsState::initial(const HopsSystem& system, const CVector& psi0) {
  if (psi0.size() != system.n_sites()) throw Error("initial state has the wrong dimension");
  HopsState state;
  state.amplitudes = CMatrix::Zero(system.n_sites(), system.n_aux());
  state.amplitudes.col(0) = psi0;
  state.memory = CVector::Zero(system.n_modes());
  return state;
}

void hierarchy_rhs(const HopsSystem& system, const CMatrix& amplitudes, std::span<const Complex> diag,
                   std::span<const Real> expectations, CMatrix& out) {
  const int n = system.n_sites();
  const int n_aux = system.n_aux();
  if (amplitudes.rows() != n || amplitudes.cols() != n_aux)
    throw Error("hierarchy state dimension does not match the system");
  if (static_cast<int>(diag.size()) != n) throw Error("noise vector dimension does not match the system");
  out.resize(n, n_aux);

  const Complex* h = system.minus_i_hamiltonian().data();
  const Complex* psi_all = amplitudes.data();
  Complex* out_all = out.data();
  const bool shifted = !expectations.empty();

  for (int a = 0; a < n_aux; ++a) {
    const Complex* psi = psi_all + static_cast<std::ptrdiff_t>(a) * n;
    Complex* o = out_all + static_cast<std::ptrdiff_t>(a) * n;
    const Complex kw = system.kdotw(a);
    for (int i = 0; i < n; ++i) {
      Complex acc = (diag[i] - kw) * psi[i];
      for (int j = 0; j < n; ++j) acc += h[i + j * n] * psi[j];
      o[i] = acc;
    }
    for (const auto& link : system.down_links(a))
      o[link.site] += link.coefficient * psi_all[static_cast<std::ptrdiff_t>(link.id) * n + link.site];
    for (const auto& link : system.up_links(a)) {
      const Complex* above = psi_all + static_cast<std::ptrdiff_t>(link.id) * n;
      o[link.site] -= above[link.site];
      if (shifted) {
        const Real shift = expectations[link.site];
        for (int i = 0; i < n; ++i) o[i] += shift * above[i];
      }
    }
  }
}

void linear_rhs(const HopsSystem& system, const HopsState& state, std::span<const Complex> z, HopsState& out) {
  std::vector<Complex> diag(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) diag[i] = std::conj(z[i]);
  hierarchy_rhs(system, state.amplitudes, diag, {}, out.amplitudes);
  out.memory.setZero(system.n_modes());
}

void noisefree_rhs(const HopsSystem& system, const HopsState& state, HopsState& out) {
  const std::vector<Complex> zero(system.n_sites());
  hierarchy_rhs(system, state.amplitudes, zero, {}, out.amplitudes);
  out.memory.setZero(system.n_modes());
}

Real normalization_denominator(const CVector& psi0, Normalization norm) {
  const Real z = psi0.squaredNorm();
  return norm == Normalization::dyadic ? z + 1.0 : z;
}

std::vector<Real> coupling_expectations(const CVector& psi0, Normalization norm) {
  const Real z = normalization_denominator(psi0, norm);
  if (!(z >= 1e-30)) throw Error("norm collapse");
  std::vector<Real> out(static_cast<std::size_t>(psi0.size()));
  for (Eigen::Index i = 0; i < psi0.size(); ++i) out[i] = std::norm(psi0[i]) / z;
  return out;
}

void memory_rhs(const HopsSystem& system, const CVector& memory, std::span<const Real> expectations, CVector& out) {
  out.resize(system.n_modes());
  for (int m = 0; m < system.n_modes(); ++m)
    out[m] = -std::conj(system.mode_rate(m)) * memory[m] +
             std::conj(system.mode_prefactor(m)) * expectations[system.mode_site(m)];
}

void nonlinear_rhs(const HopsSystem& system, const HopsState& state, std::span<const Complex> z, Normalization norm,
                   HopsState& out) {
  const std::vector<Real> expect = coupling_expectations(state.amplitudes.col(0), norm);
  std::vector<Complex> diag(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) diag[i] = std::conj(z[i]);
  for (int m = 0; m < system.n_modes(); ++m) diag[system.mode_site(m)] += state.memory[m];
  hierarchy_rhs(system, state.amplitudes, diag, expect, out.amplitudes);
  memory_rhs(system, state.memory, expect, out.memory);
}

void PropagationSpec::validate() const {
  if (!(dt > 0.0)) throw Error("propagation: dt must be positive");
  if (n_steps < 0) throw Error("propagation: n_steps must be non-negative");
  if (record_stride < 1) throw Error("propagation: record_stride must be positive");
  if (n_steps % record_stride != 0) throw Error("propagation: record_stride must divide n_steps");
}

namespace {

class Stepper {
 public:
  Stepper(const HopsSystem& system, const PropagationSpec& spec, const NoiseTrajectory* noise)
      : system_(system), spec_(spec), noise_(noise), z_(static_cast<std::size_t>(system.n_sites())) {}

  // Derivative at noise-grid index `sample` (2 * step + {0, 1, 2}).
  void derivative(const HopsState& y, int sample, HopsState& dy) {
    switch (spec_.equation) {
      case Equation::noisefree:
        noisefree_rhs(system_, y, dy);
        return;
      case Equation::linear:
        load_noise(sample);
        linear_rhs(system_, y, z_, dy);
        return;
      case Equation::nonlinear:
        load_noise(sample);
        nonlinear_rhs(system_, y, z_, spec_.normalization, dy);
        return;
    }
  }

  void step(HopsState& y, int step_index) {
    const Real dt = spec_.dt;
    derivative(y, 2 * step_index, k1_);
    stage_ = y;
    stage_.amplitudes += (0.5 * dt) * k1_.amplitudes;
    stage_.memory += (0.5 * dt) * k1_.memory;
    derivative(stage_, 2 * step_index + 1, k2_);
    stage_.amplitudes = y.amplitudes + (0.5 * dt) * k2_.amplitudes;
    stage_.memory = y.memory + (0.5 * dt) * k2_.memory;
    derivative(stage_, 2 * step_index + 1, k3_);
    stage_.amplitudes = y.amplitudes + dt * k3_.amplitudes;
    stage_.memory = y.memory + dt * k3_.memory;
    derivative(stage_, 2 * step_index + 2, k4_);
    y.amplitudes += (dt / 6.0) * (k1_.amplitudes + 2.0 * k2_.amplitudes + 2.0 * k3_.amplitudes + k4_.amplitudes);
    y.memory += (dt / 6.0) * (k1_.memory + 2.0 * k2_.memory + 2.0 * k3_.memory + k4_.memory);
    y.time = (step_index + 1) * dt;
  }

 private:
  void load_noise(int sample) {
    if (noise_ == nullptr) {
      std::fill(z_.begin(), z_.end(), Complex{});
      return;
    }
    for (int n = 0; n < system_.n_sites(); ++n) z_[n] = noise_->samples(n, sample);
  }

  const HopsSystem& system_;
  const PropagationSpec& spec_;
  const NoiseTrajectory* noise_;
  std::vector<Complex> z_;
  HopsState k1_, k2_, k3_, k4_, stage_;
};

}  // namespace

PropagationResult propagate(const CVector& psi0, const PropagationSpec& spec, const HopsSystem& system,
                            const NoiseTrajectory* noise) {
  spec.validate();
  if (spec.equation != Equation::noisefree) {
    if (noise == nullptr) throw Error("propagation: stochastic equations need a noise trajectory");
    if (noise->samples.rows() != system.n_sites()) throw Error("propagation: noise has the wrong number of sites");
    if (std::abs(noise->dt - spec.noise_dt()) > 1e-12 * spec.dt || noise->n_steps < spec.noise_steps())
      throw Error("propagation: noise grid must have spacing dt/2 and at least 2*n_steps+1 samples");
  }

  const int n_records = spec.n_records();
  PropagationResult result;
  result.times = RVector::Zero(n_records);
  result.physical = CMatrix::Zero(system.n_sites(), n_records);
  result.denominator = RVector::Zero(n_records);

  HopsState state = HopsState::initial(system, psi0);
  auto record = [&](int r) {
    result.times[r] = state.time;
    result.physical.col(r) = state.amplitudes.col(0);
    result.denominator[r] = normalization_denominator(state.amplitudes.col(0), spec.normalization);
    result.n_records = r + 1;
  };
  record(0);

  Stepper stepper(system, spec, noise);
  for (int i = 0; i < spec.n_steps; ++i) {
    try {
      stepper.step(state, i);
    } catch (const Error& e) {
      result.aborted = true;
      result.abort_step = i;
      result.abort_reason = e.what();
      return result;
    }
    if (!state.all_finite()) {
      result.aborted = true;
      result.abort_step = i;
      std::ostringstream msg;
      msg << "non-finite amplitudes at t=" << state.time;
      result.abort_reason = msg.str();
      return result;
    }
    if ((i + 1) % spec.record_stride == 0) record((i + 1) / spec.record_stride);
  }
  return result;
}

}  // namespace hops
