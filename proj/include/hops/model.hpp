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

#include <array>
#include <functional>
#include <limits>
#include <span>
#include <vector>

#include "hops/types.hpp"

namespace hops {

/// Frenkel-exciton aggregate: one two-level chromophore per site, a single
/// shared ground state and scalar transition dipoles already projected onto
/// the field polarization.
struct ExcitonModel {
  RVector site_energies;      // epsilon_n
  RMatrix couplings;          // V_nm, symmetric with zero diagonal
  RVector projected_dipoles;  // d_n = mu_n . polarization
  Real ground_energy = 0.0;   // epsilon_g

  int n_sites() const { return static_cast<int>(site_energies.size()); }

  /// Throws hops::Error when the record is inconsistent.
  void validate() const;

  /// Builds a model from full dipole vectors (one row per site) projected
  /// onto `polarization`.
  static ExcitonModel from_dipole_vectors(const RVector& site_energies, const RMatrix& couplings,
                                          const Eigen::MatrixX3d& dipoles,
                                          const Eigen::Vector3d& polarization,
                                          Real ground_energy = 0.0);
};

/// One exponential term p * exp(-w tau) of a bath correlation function.
struct BathMode {
  Complex prefactor;  // p
  Complex rate;       // w = gamma + i Omega, Re(w) > 0
};

/// Per-site bath correlation functions written as sums of exponentials.
struct ExponentialBCF {
  std::vector<std::vector<BathMode>> modes;  // modes[site][j]

  int n_sites() const { return static_cast<int>(modes.size()); }
  int total_modes() const;
  void validate() const;

  /// Same mode list on every site.
  static ExponentialBCF uniform(int n_sites, std::vector<BathMode> site_modes);
  /// The single-exponential alpha(tau) = p exp(-i Omega tau - gamma tau).
  static ExponentialBCF single_mode(int n_sites, Complex p, Real gamma, Real omega);
};

/// alpha_n(tau) = sum_j p_nj exp(-w_nj tau) for tau >= 0.
Complex bcf_eval(const ExponentialBCF& bcf, int site, Real tau);

/// Spectral density J(omega) on (0, omega_cut] at inverse temperature beta
/// (beta = infinity selects zero temperature).
struct SpectralDensity {
  std::function<Real(Real)> density;
  Real omega_cut = 0.0;
  Real beta = std::numeric_limits<Real>::infinity();

  /// Piecewise-linear interpolation of tabulated samples, zero outside.
  static SpectralDensity tabulated(std::vector<Real> omegas, std::vector<Real> values, Real beta);
  /// (p / pi) * gamma / ((omega - center)^2 + gamma^2) truncated at omega_cut.
  static SpectralDensity lorentzian(Real weight, Real center, Real width, Real omega_cut, Real beta);
};

struct QuadratureOptions {
  Real abs_tolerance = 1e-10;
  Real rel_tolerance = 1e-10;
  int max_depth = 40;
  /// Required decay of the tail: J(omega_cut) * omega_cut must stay below
  /// tail_tolerance times the integrated weight.
  Real tail_tolerance = 1e-2;
};

/// Numerical evaluation of
///   alpha(tau) = int_0^omega_cut J(w) [coth(beta w / 2) cos(w tau) - i sin(w tau)] dw
/// on each requested tau. Validation only; HOPS consumes ExponentialBCF.
CVector bcf_from_spectral_density(const SpectralDensity& sd, std::span<const Real> taus,
                                  const QuadratureOptions& options = {});

/// H_ex in the site basis.
CMatrix build_excited_hamiltonian(const ExcitonModel& model);

struct ExcitedState {
  CVector state;  // psi_ex = mu_eff |g> / mu_tot
  Real mu_tot = 0.0;
};

ExcitedState build_initial_excited_state(const ExcitonModel& model);

/// Pure states v_eta = (psi_ex + eta g) / sqrt(2), eta in {+1, -1, +i, -i},
/// in the (N+1)-dimensional space ordered as (|1>, ..., |N>, |g>).
struct PureStateDecomposition {
  std::array<Complex, 4> etas;
  std::array<CVector, 4> states;
  Real mu_tot = 0.0;

  /// (mu_tot / 2) sum_eta eta |v_eta><v_eta|
  CMatrix reconstruct() const;
};

PureStateDecomposition pure_state_decomposition(const ExcitonModel& model);

/// mu_eff |g><g| on the (N+1)-dimensional space.
CMatrix dipole_ground_dyad(const ExcitonModel& model);
/// {mu_eff, |g><g|} (Hermitian, eigenvalues +-mu_tot on v_{+-1}).
CMatrix dipole_anticommutator(const ExcitonModel& model);
/// [mu_eff, |g><g|] (anti-Hermitian, eigenvalues +-i mu_tot on v_{+-i}).
CMatrix dipole_commutator(const ExcitonModel& model);

}  // namespace hops
