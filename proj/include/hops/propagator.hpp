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

#include <span>
#include <string>
#include <vector>

#include "hops/hierarchy.hpp"
#include "hops/model.hpp"
#include "hops/noise.hpp"

namespace hops {

enum class Equation { linear, nonlinear, noisefree };

/// Denominator used for <L_n^dagger>_t in the non-linear equation:
/// excited_only uses |psi0|^2, dyadic uses |psi0|^2 + 1 (the ground-state
/// half of the ket/bra dyad).
enum class Normalization { excited_only, dyadic };

const char* to_string(Equation eq);
Equation equation_from_string(const std::string& name);

/// Immutable, precomputed coupling structure of the hierarchy for one
/// (model, bcf, depth). Shared read-only between trajectories.
class HopsSystem {
 public:
  HopsSystem(const ExcitonModel& model, const ExponentialBCF& bcf, int depth);
  HopsSystem(const ExcitonModel& model, const ExponentialBCF& bcf, HierarchyIndexSpace space);

  int n_sites() const { return n_sites_; }
  int n_modes() const { return static_cast<int>(mode_site_.size()); }
  int n_aux() const { return space_.size(); }
  const HierarchyIndexSpace& space() const { return space_; }
  const CMatrix& hamiltonian() const { return hamiltonian_; }
  const CMatrix& minus_i_hamiltonian() const { return minus_i_h_; }

  int mode_site(int m) const { return mode_site_[m]; }
  Complex mode_prefactor(int m) const { return mode_prefactor_[m]; }
  Complex mode_rate(int m) const { return mode_rate_[m]; }

  // Flattened ladder tables (CSR layout, one row per auxiliary id).
  struct Down {
    int site;
    int id;
    Complex coefficient;  // k_m p_m
  };
  struct Up {
    int site;
    int id;
  };
  std::span<const Down> down_links(int id) const {
    return {down_.data() + down_offset_[id], down_.data() + down_offset_[id + 1]};
  }
  std::span<const Up> up_links(int id) const {
    return {up_.data() + up_offset_[id], up_.data() + up_offset_[id + 1]};
  }
  Complex kdotw(int id) const { return kdotw_[id]; }

 private:
  int n_sites_;
  HierarchyIndexSpace space_;
  CMatrix hamiltonian_;
  CMatrix minus_i_h_;
  std::vector<int> mode_site_;
  std::vector<Complex> mode_prefactor_;
  std::vector<Complex> mode_rate_;
  std::vector<Complex> kdotw_;
  std::vector<Down> down_;
  std::vector<Up> up_;
  std::vector<std::size_t> down_offset_;
  std::vector<std::size_t> up_offset_;
};

/// All auxiliary vectors psi^(k) as columns (column 0 is the physical state)
/// plus the non-linear memory accumulators xi_m, one per bath mode.
struct HopsState {
  CMatrix amplitudes;
  CVector memory;
  Real time = 0.0;

  static HopsState initial(const HopsSystem& system, const CVector& psi0);
  bool all_finite() const { return amplitudes.allFinite() && memory.allFinite(); }
};

/// Shared kernel: d psi^(k)/dt for diagonal noise `diag` (one entry per site)
/// and, when `expectations` is non-empty, the non-linear shift of the
/// up-coupling operator L_n^dagger -> L_n^dagger - <L_n^dagger>.
void hierarchy_rhs(const HopsSystem& system, const CMatrix& amplitudes, std::span<const Complex> diag,
                   std::span<const Real> expectations, CMatrix& out);

/// Linear HOPS; z holds z_{t,n} (the conjugate enters the equation).
void linear_rhs(const HopsSystem& system, const HopsState& state, std::span<const Complex> z, HopsState& out);

/// Linear HOPS with every z_{t,n} = 0.
void noisefree_rhs(const HopsSystem& system, const HopsState& state, HopsState& out);

/// <L_n^dagger>_t = |psi0_n|^2 / Z with Z from the normalization context.
/// Throws hops::Error("norm collapse") when Z < 1e-30.
std::vector<Real> coupling_expectations(const CVector& psi0, Normalization norm);
Real normalization_denominator(const CVector& psi0, Normalization norm);

/// d xi_m / dt = -conj(w_m) xi_m + conj(p_m) <L_{site(m)}^dagger>_t
void memory_rhs(const HopsSystem& system, const CVector& memory, std::span<const Real> expectations, CVector& out);

/// Non-linear HOPS: noise shifted by the memory, z~_n = z*_n + sum_{j in n} xi_j.
void nonlinear_rhs(const HopsSystem& system, const HopsState& state, std::span<const Complex> z, Normalization norm,
                   HopsState& out);

struct PropagationSpec {
  Equation equation = Equation::noisefree;
  Real dt = 0.01;
  int n_steps = 0;
  int record_stride = 1;
  Normalization normalization = Normalization::excited_only;

  void validate() const;
  int n_records() const { return n_steps / record_stride + 1; }
  /// Noise grid the stochastic equations expect: spacing dt/2, 2*n_steps+1 samples.
  Real noise_dt() const { return 0.5 * dt; }
  int noise_steps() const { return 2 * n_steps + 1; }
};

struct PropagationResult {
  RVector times;
  CMatrix physical;  // psi^(0) at each record, one column per record
  RVector denominator;  // Z(t) in the spec's normalization context
  int n_records = 0;    // valid records (less than times.size() after an abort)
  bool aborted = false;
  int abort_step = -1;
  std::string abort_reason;
};

/// Classic RK4. The midpoint stages read the noise sample at t + dt/2.
/// Aborts (non-finite amplitudes, norm collapse) are reported in the result,
/// never thrown.
PropagationResult propagate(const CVector& psi0, const PropagationSpec& spec, const HopsSystem& system,
                            const NoiseTrajectory* noise = nullptr);

}  // namespace hops
