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

#include "hops/reference.hpp"

#include <cmath>

#include <unsupported/Eigen/MatrixFunctions>

namespace hops {

namespace {

int steps_for(Real t_max, Real dt) {
  if (!(dt > 0.0) || !(t_max >= 0.0)) throw Error("reference: need dt > 0 and t_max >= 0");
  const Real ratio = t_max / dt;
  const int n = static_cast<int>(std::llround(ratio));
  if (std::abs(ratio - n) > 1e-9 * std::max(1.0, ratio)) throw Error("reference: t_max must be a multiple of dt");
  return n;
}

struct FlatMode {
  int site;
  Complex p;
  Complex w;
};

std::vector<FlatMode> flatten(const ExponentialBCF& bcf) {
  std::vector<FlatMode> modes;
  for (int n = 0; n < bcf.n_sites(); ++n)
    for (const auto& m : bcf.modes[n]) modes.push_back({n, m.prefactor, m.rate});
  if (modes.empty()) modes.push_back({0, 0.0, 1.0});
  return modes;
}

}  // namespace

DenseGenerator assemble_dense_generator(const ExcitonModel& model, const ExponentialBCF& bcf,
                                        const HierarchyIndexSpace& space) {
  const auto modes = flatten(bcf);
  const int n = model.n_sites();
  if (space.n_modes() != static_cast<int>(modes.size())) throw Error("generator: index space/bath mismatch");
  const Eigen::Index dim = static_cast<Eigen::Index>(space.size()) * n;
  if (dim > kExpmDimensionCap)
    throw Error("generator: dimension " + std::to_string(dim) + " exceeds the cap of " +
                std::to_string(kExpmDimensionCap));

  const CMatrix h = build_excited_hamiltonian(model);
  DenseGenerator g{CMatrix::Zero(dim, dim), n, space.size()};
  std::vector<int> k(modes.size());
  for (int a = 0; a < space.size(); ++a) {
    const auto idx = space.index(a);
    Complex kw{};
    for (std::size_t m = 0; m < modes.size(); ++m) kw += static_cast<Real>(idx[m]) * modes[m].w;
    g.matrix.block(static_cast<Eigen::Index>(a) * n, static_cast<Eigen::Index>(a) * n, n, n) =
        -kI * h - kw * CMatrix::Identity(n, n);
    for (std::size_t m = 0; m < modes.size(); ++m) {
      const Eigen::Index row = static_cast<Eigen::Index>(a) * n + modes[m].site;
      k.assign(idx.begin(), idx.end());
      if (k[m] > 0) {
        --k[m];
        const int b = *space.find(k);
        g.matrix(row, static_cast<Eigen::Index>(b) * n + modes[m].site) += static_cast<Real>(idx[m]) * modes[m].p;
        ++k[m];
      }
      ++k[m];
      if (auto c = space.find(k)) g.matrix(row, static_cast<Eigen::Index>(*c) * n + modes[m].site) -= 1.0;
    }
  }
  return g;
}

CVector stack(const CMatrix& amplitudes) {
  return Eigen::Map<const CVector>(amplitudes.data(), amplitudes.size());
}

CMatrix unstack(const CVector& stacked, int n_sites) {
  return Eigen::Map<const CMatrix>(stacked.data(), n_sites, stacked.size() / n_sites);
}

CVector expm_oracle(const DenseGenerator& generator, const CVector& stacked, Real t) {
  if (generator.dim() > kExpmDimensionCap) throw Error("expm: dimension cap exceeded");
  if (stacked.size() != generator.dim()) throw Error("expm: state dimension mismatch");
  const CMatrix scaled = generator.matrix * t;
  const CMatrix e = scaled.exp();
  return e * stacked;
}

CMatrix expm_trajectory(const DenseGenerator& generator, const CVector& stacked, Real dt_record, int n_records) {
  if (generator.dim() > kExpmDimensionCap) throw Error("expm: dimension cap exceeded");
  if (stacked.size() != generator.dim()) throw Error("expm: state dimension mismatch");
  const CMatrix scaled = generator.matrix * dt_record;
  const CMatrix step = scaled.exp();
  CMatrix out(generator.dim(), n_records);
  CVector current = stacked;
  for (int r = 0; r < n_records; ++r) {
    out.col(r) = current;
    current = step * current;
  }
  return out;
}

CorrelationTrace noisefree_correlation(const ExcitonModel& model, const ExponentialBCF& bcf, int depth, Real dt,
                                       Real t_max, int record_stride) {
  const auto [psi_ex, mu_tot] = build_initial_excited_state(model);
  const HopsSystem system(model, bcf, depth);
  PropagationSpec spec;
  spec.equation = Equation::noisefree;
  spec.dt = dt;
  spec.n_steps = steps_for(t_max, dt);
  spec.record_stride = record_stride;
  const PropagationResult run = propagate(psi_ex, spec, system);
  if (run.aborted) throw Error("noise-free reference aborted: " + run.abort_reason);
  return {run.times, correlation_samples(run, Equation::noisefree, psi_ex, mu_tot, model.ground_energy),
          mu_tot * mu_tot, "noisefree"};
}

CorrelationTrace expm_correlation(const ExcitonModel& model, const ExponentialBCF& bcf, int depth, Real dt_record,
                                  Real t_max) {
  const auto [psi_ex, mu_tot] = build_initial_excited_state(model);
  const auto modes = flatten(bcf);
  const HierarchyIndexSpace space(static_cast<int>(modes.size()), depth);
  const DenseGenerator g = assemble_dense_generator(model, bcf, space);
  const int n_records = steps_for(t_max, dt_record) + 1;
  CVector start = CVector::Zero(g.dim());
  start.head(model.n_sites()) = psi_ex;
  const CMatrix states = expm_trajectory(g, start, dt_record, n_records);
  CorrelationTrace trace{RVector(n_records), CVector(n_records), mu_tot * mu_tot, "reference"};
  for (int r = 0; r < n_records; ++r) {
    trace.times[r] = r * dt_record;
    trace.values[r] = correlation_linear(states.col(r).head(model.n_sites()), psi_ex, mu_tot, model.ground_energy,
                                         trace.times[r]);
  }
  return trace;
}

namespace {

// Precomputed HEOM couplings on the doubled (ket, bra) mode set.
class HeomSystem {
 public:
  HeomSystem(const ExcitonModel& model, const ExponentialBCF& bcf, int depth)
      : n_(model.n_sites()), space_(2 * static_cast<int>(flatten(bcf).size()), depth) {
    h_ = build_excited_hamiltonian(model);
    const auto fwd = flatten(bcf);
    for (const auto& m : fwd) modes_.push_back({m.site, m.p, m.w, false});
    for (const auto& m : fwd) modes_.push_back({m.site, std::conj(m.p), std::conj(m.w), true});
    std::vector<Complex> rates;
    for (const auto& m : modes_) rates.push_back(m.w);
    kw_.resize(space_.size());
    for (int a = 0; a < space_.size(); ++a) kw_[a] = space_.kdotw(a, rates);
  }

  int n_aux() const { return space_.size(); }
  int matrix_size() const { return n_ * n_; }

  // rho stored as n_aux consecutive column-major N x N blocks.
  void rhs(const CVector& rho, CVector& out) const {
    const int n = n_;
    const int nn = n * n;
    out.resize(rho.size());
    const Complex* in = rho.data();
    Complex* o_all = out.data();
    for (int a = 0; a < space_.size(); ++a) {
      const Complex* r = in + static_cast<std::ptrdiff_t>(a) * nn;
      Complex* o = o_all + static_cast<std::ptrdiff_t>(a) * nn;
      // -i [H, rho] - k.w rho
      for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i) {
          Complex acc = -kw_[a] * r[i + j * n];
          Complex comm{};
          for (int l = 0; l < n; ++l) comm += h_(i, l) * r[l + j * n] - r[i + l * n] * h_(l, j);
          o[i + j * n] = acc - kI * comm;
        }
      const auto k = space_.index(a);
      for (int m = 0; m < space_.n_modes(); ++m) {
        const Mode& mode = modes_[m];
        const int s = mode.site;
        if (const int b = space_.down(a, m); b >= 0) {
          const Complex c = static_cast<Real>(k[m]) * mode.p;
          const Complex* rb = in + static_cast<std::ptrdiff_t>(b) * nn;
          if (!mode.bra) {
            for (int j = 0; j < n; ++j) o[s + j * n] += c * rb[s + j * n];  // L_s rho
          } else {
            for (int i = 0; i < n; ++i) o[i + s * n] += c * rb[i + s * n];  // rho L_s
          }
        }
        if (const int c = space_.up(a, m); c >= 0) {
          const Complex* rc = in + static_cast<std::ptrdiff_t>(c) * nn;
          const Real sign = mode.bra ? 1.0 : -1.0;  // -[L, rho] ket side, +[L, rho] bra side
          for (int j = 0; j < n; ++j) o[s + j * n] += sign * rc[s + j * n];
          for (int i = 0; i < n; ++i) o[i + s * n] -= sign * rc[i + s * n];
        }
      }
    }
  }

 private:
  struct Mode {
    int site;
    Complex p;
    Complex w;
    bool bra;
  };
  int n_;
  HierarchyIndexSpace space_;
  CMatrix h_;
  std::vector<Mode> modes_;
  std::vector<Complex> kw_;
};

}  // namespace

HeomResult heom_populations(const ExcitonModel& model, const ExponentialBCF& bcf, int depth, int initial_site,
                            Real dt, Real t_max, int record_stride) {
  model.validate();
  bcf.validate();
  const int n = model.n_sites();
  if (initial_site < 0 || initial_site >= n) throw Error("heom: initial site out of range");
  if (record_stride < 1) throw Error("heom: record_stride must be positive");
  const int n_steps = steps_for(t_max, dt);
  if (n_steps % record_stride != 0) throw Error("heom: record_stride must divide the step count");

  const HeomSystem system(model, bcf, depth);
  const int nn = system.matrix_size();
  CVector rho = CVector::Zero(static_cast<Eigen::Index>(system.n_aux()) * nn);
  rho[initial_site + initial_site * n] = 1.0;

  const int n_records = n_steps / record_stride + 1;
  HeomResult result;
  result.times.resize(n_records);
  result.populations.resize(n, n_records);
  auto record = [&](int r, Real t) {
    const Eigen::Map<const CMatrix> physical(rho.data(), n, n);
    result.times[r] = t;
    result.populations.col(r) = physical.diagonal().real();
    result.max_trace_drift = std::max(result.max_trace_drift, std::abs(physical.trace() - Complex(1.0)));
    result.max_hermiticity_error =
        std::max(result.max_hermiticity_error, (physical - physical.adjoint()).cwiseAbs().maxCoeff());
  };
  record(0, 0.0);

  CVector k1, k2, k3, k4, stage;
  for (int step = 0; step < n_steps; ++step) {
    system.rhs(rho, k1);
    stage = rho + (0.5 * dt) * k1;
    system.rhs(stage, k2);
    stage = rho + (0.5 * dt) * k2;
    system.rhs(stage, k3);
    stage = rho + dt * k3;
    system.rhs(stage, k4);
    rho += (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    if ((step + 1) % record_stride == 0) record((step + 1) / record_stride, (step + 1) * dt);
  }
  if (!rho.allFinite() || result.max_trace_drift > 1e-4) {
    result.converged = false;
    result.diagnostic = "unconverged depth";
  }
  return result;
}

}  // namespace hops
