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

#include <filesystem>
#include <map>
#include <string>

#include "hops/propagator.hpp"

namespace hops {

/// Sampled dipole-dipole correlation function C(t) on a uniform grid.
struct CorrelationTrace {
  RVector times;
  CVector values;
  Real mu_tot_sq = 0.0;
  std::string kind;  // linear | nonlinear | noisefree | reference
};

/// mu_tot^2 <psi_ex|psi0(t)> e^{i eps_g t}: one trajectory's contribution
/// to C(t) for the linear (and noise-free) equation.
Complex correlation_linear(const CVector& psi_t, const CVector& psi_ex, Real mu_tot, Real ground_energy, Real t);

/// mu_tot^2 <psi_ex|psi0(t)> / (Z/2) e^{i eps_g t} with Z = |psi0|^2 + 1.
Complex correlation_nonlinear(const CVector& psi_t, Real denominator, const CVector& psi_ex, Real mu_tot,
                              Real ground_energy, Real t);

/// Per-record C(t) samples of one propagated trajectory (valid records only).
CVector correlation_samples(const PropagationResult& run, Equation equation, const CVector& psi_ex, Real mu_tot,
                            Real ground_energy);

/// Per-record site populations of one trajectory, one column per record.
/// Linear and noise-free runs report |psi0_n|^2 unnormalized (their
/// ensemble mean is the density-matrix diagonal); non-linear runs report
/// the populations of the normalized state psi0 / |psi0|.
RMatrix populations(const PropagationResult& run, Equation equation);

/// Exponential apodization e^{-t / tau}; tau <= 0 means no window.
struct Window {
  Real tau = 0.0;
  bool active() const { return tau > 0.0; }
  std::string describe() const;
};

/// tau = T/3 when |C(T)| has not decayed below 1e-3 |C(0)|, otherwise none.
Window auto_window(const CorrelationTrace& trace);

struct Spectrum {
  RVector frequencies;
  RVector absorbance;
  Window window;
};

/// A(omega) = Re sum_i w_i e^{i omega t_i} C(t_i) dt with trapezoid end
/// weights and the optional window, evaluated on the FFT grid of the trace
/// zero-padded by `padding`, restricted to [omega_min, omega_max].
Spectrum spectrum(const CorrelationTrace& trace, int padding, const Window& window, Real omega_min, Real omega_max);

/// Uniform-grid check shared by spectrum consumers; returns dt.
Real uniform_spacing(const RVector& times);

using Metadata = std::map<std::string, std::string>;

/// "# key=value ..." metadata line, column header, then rows.
void write_correlation_csv(const std::filesystem::path& path, const CorrelationTrace& trace, const Metadata& meta);
CorrelationTrace read_correlation_csv(const std::filesystem::path& path, Metadata* meta = nullptr);
void write_spectrum_csv(const std::filesystem::path& path, const Spectrum& spectrum, const Metadata& meta);
Spectrum read_spectrum_csv(const std::filesystem::path& path, Metadata* meta = nullptr);
void write_populations_csv(const std::filesystem::path& path, const RVector& times, const RMatrix& populations,
                           const Metadata& meta);

}  // namespace hops
