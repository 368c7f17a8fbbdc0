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

#include "hops/observables.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>
#include <vector>

#include <unsupported/Eigen/FFT>

namespace hops {

Complex correlation_linear(const CVector& psi_t, const CVector& psi_ex, Real mu_tot, Real ground_energy, Real t) {
  return mu_tot * mu_tot * psi_ex.dot(psi_t) * std::exp(kI * (ground_energy * t));
}

Complex correlation_nonlinear(const CVector& psi_t, Real denominator, const CVector& psi_ex, Real mu_tot,
                              Real ground_energy, Real t) {
  const Real half = 0.5 * denominator;
  if (!(half >= 1e-30)) throw Error("non-linear correlation sample with collapsed normalization");
  return mu_tot * mu_tot * psi_ex.dot(psi_t) / half * std::exp(kI * (ground_energy * t));
}

CVector correlation_samples(const PropagationResult& run, Equation equation, const CVector& psi_ex, Real mu_tot,
                            Real ground_energy) {
  CVector out(run.n_records);
  for (int r = 0; r < run.n_records; ++r) {
    const CVector psi = run.physical.col(r);
    out[r] = equation == Equation::nonlinear
                 ? correlation_nonlinear(psi, run.denominator[r], psi_ex, mu_tot, ground_energy, run.times[r])
                 : correlation_linear(psi, psi_ex, mu_tot, ground_energy, run.times[r]);
  }
  return out;
}

RMatrix populations(const PropagationResult& run, Equation equation) {
  RMatrix out(run.physical.rows(), run.n_records);
  for (int r = 0; r < run.n_records; ++r) {
    out.col(r) = run.physical.col(r).cwiseAbs2();
    if (equation == Equation::nonlinear) out.col(r) /= run.physical.col(r).squaredNorm();
  }
  return out;
}

std::string Window::describe() const {
  if (!active()) return "none";
  std::ostringstream s;
  s.precision(17);
  s << "exponential(tau=" << tau << ")";
  return s.str();
}

Window auto_window(const CorrelationTrace& trace) {
  if (trace.values.size() < 2) return {};
  const Real c0 = std::abs(trace.values[0]);
  const Real tail = std::abs(trace.values[trace.values.size() - 1]);
  if (tail < 1e-3 * c0) return {};
  return {trace.times[trace.times.size() - 1] / 3.0};
}

Real uniform_spacing(const RVector& times) {
  if (times.size() < 2) throw Error("spectrum: at least two time samples are required");
  const Real dt = (times[times.size() - 1] - times[0]) / static_cast<Real>(times.size() - 1);
  if (!(dt > 0.0)) throw Error("spectrum: time grid must be increasing");
  for (Eigen::Index i = 1; i < times.size(); ++i)
    if (std::abs(times[i] - times[i - 1] - dt) > 1e-9 * std::max(dt, 1.0))
      throw Error("spectrum: time grid is not uniform");
  return dt;
}

Spectrum spectrum(const CorrelationTrace& trace, int padding, const Window& window, Real omega_min,
                  Real omega_max) {
  if (trace.values.size() != trace.times.size()) throw Error("spectrum: times and values differ in length");
  if (padding < 1) throw Error("spectrum: padding factor must be at least 1");
  if (!(omega_max > omega_min)) throw Error("spectrum: omega_max must exceed omega_min");
  const Real dt = uniform_spacing(trace.times);
  const auto n = static_cast<int>(trace.values.size());

  const int len = next_smooth_size(padding * n);

  std::vector<Complex> samples(len, Complex{}), transformed;
  for (int i = 0; i < n; ++i) {
    Real weight = (i == 0 || i == n - 1) ? 0.5 : 1.0;
    if (window.active()) weight *= std::exp(-(trace.times[i] - trace.times[0]) / window.tau);
    samples[i] = weight * dt * trace.values[i];
  }
  // sum_i c_i e^{+2 pi i k i / L}; Eigen's inverse carries a 1/L factor.
  Eigen::FFT<Real> fft;
  fft.inv(transformed, samples);

  const Real dw = 2.0 * std::numbers::pi / (len * dt);
  std::vector<std::pair<Real, Real>> points;
  for (int k = -((len - 1) / 2); k <= len / 2; ++k) {
    const Real omega = k * dw;
    // Keep one bracketing point on each side so the window is fully covered.
    if (omega <= omega_min - dw || omega >= omega_max + dw) continue;
    const int slot = k < 0 ? k + len : k;
    // Shift phase for traces that do not start at t = 0.
    const Complex phase = std::exp(kI * (omega * trace.times[0]));
    points.emplace_back(omega, (phase * transformed[slot]).real() * static_cast<Real>(len));
  }
  Spectrum out;
  out.window = window;
  out.frequencies.resize(static_cast<Eigen::Index>(points.size()));
  out.absorbance.resize(static_cast<Eigen::Index>(points.size()));
  for (std::size_t i = 0; i < points.size(); ++i) {
    out.frequencies[static_cast<Eigen::Index>(i)] = points[i].first;
    out.absorbance[static_cast<Eigen::Index>(i)] = points[i].second;
  }
  if (!out.absorbance.allFinite()) throw Error("spectrum: non-finite absorbance");
  return out;
}

namespace {

std::string metadata_line(const Metadata& meta) {
  std::string line = "#";
  for (const auto& [key, value] : meta) line += " " + key + "=" + value;
  return line;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  return out;
}

std::string fmt(Real v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// Returns numeric rows; collects metadata from '#' lines.
std::vector<std::vector<Real>> read_rows(const std::filesystem::path& path, std::size_t columns, Metadata* meta) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  std::vector<std::vector<Real>> rows;
  std::string line;
  int line_no = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (line[0] == '#') {
      if (meta) {
        std::istringstream fields(line.substr(1));
        std::string field;
        while (fields >> field)
          if (auto eq = field.find('='); eq != std::string::npos) (*meta)[field.substr(0, eq)] = field.substr(eq + 1);
      }
      continue;
    }
    if (!header_seen) {
      header_seen = true;
      continue;
    }
    std::vector<Real> row;
    std::istringstream cells(line);
    std::string cell;
    while (std::getline(cells, cell, ',')) {
      try {
        row.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw Error(path.string() + ":" + std::to_string(line_no) + ": not a number: '" + cell + "'");
      }
    }
    if (row.size() != columns)
      throw Error(path.string() + ":" + std::to_string(line_no) + ": expected " + std::to_string(columns) +
                  " columns");
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace

void write_correlation_csv(const std::filesystem::path& path, const CorrelationTrace& trace, const Metadata& meta) {
  Metadata full = meta;
  full["kind"] = trace.kind;
  full["mu_tot_sq"] = fmt(trace.mu_tot_sq);
  auto out = open_out(path);
  out << metadata_line(full) << "\n" << "t,Re C,Im C\n";
  for (Eigen::Index i = 0; i < trace.values.size(); ++i)
    out << fmt(trace.times[i]) << "," << fmt(trace.values[i].real()) << "," << fmt(trace.values[i].imag()) << "\n";
}

CorrelationTrace read_correlation_csv(const std::filesystem::path& path, Metadata* meta) {
  Metadata local;
  const auto rows = read_rows(path, 3, &local);
  CorrelationTrace trace;
  trace.times.resize(static_cast<Eigen::Index>(rows.size()));
  trace.values.resize(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    trace.times[static_cast<Eigen::Index>(i)] = rows[i][0];
    trace.values[static_cast<Eigen::Index>(i)] = Complex(rows[i][1], rows[i][2]);
  }
  if (auto it = local.find("kind"); it != local.end()) trace.kind = it->second;
  if (auto it = local.find("mu_tot_sq"); it != local.end()) trace.mu_tot_sq = std::stod(it->second);
  if (meta) *meta = std::move(local);
  return trace;
}

void write_spectrum_csv(const std::filesystem::path& path, const Spectrum& spec, const Metadata& meta) {
  Metadata full = meta;
  full["window"] = spec.window.describe();
  auto out = open_out(path);
  out << metadata_line(full) << "\n" << "omega,A\n";
  for (Eigen::Index i = 0; i < spec.frequencies.size(); ++i)
    out << fmt(spec.frequencies[i]) << "," << fmt(spec.absorbance[i]) << "\n";
}

Spectrum read_spectrum_csv(const std::filesystem::path& path, Metadata* meta) {
  Metadata local;
  const auto rows = read_rows(path, 2, &local);
  Spectrum spec;
  spec.frequencies.resize(static_cast<Eigen::Index>(rows.size()));
  spec.absorbance.resize(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    spec.frequencies[static_cast<Eigen::Index>(i)] = rows[i][0];
    spec.absorbance[static_cast<Eigen::Index>(i)] = rows[i][1];
  }
  if (auto it = local.find("window"); it != local.end() && it->second.rfind("exponential(tau=", 0) == 0)
    spec.window.tau = std::stod(it->second.substr(16));
  if (meta) *meta = std::move(local);
  return spec;
}

void write_populations_csv(const std::filesystem::path& path, const RVector& times, const RMatrix& pops,
                           const Metadata& meta) {
  auto out = open_out(path);
  out << metadata_line(meta) << "\n" << "t";
  for (Eigen::Index n = 0; n < pops.rows(); ++n) out << ",P" << (n + 1);
  out << "\n";
  for (Eigen::Index r = 0; r < pops.cols(); ++r) {
    out << fmt(times[r]);
    for (Eigen::Index n = 0; n < pops.rows(); ++n) out << "," << fmt(pops(n, r));
    out << "\n";
  }
}

}  // namespace hops
