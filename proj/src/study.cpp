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

#include "hops/study.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <memory>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "hops/ensemble.hpp"
#include "hops/noise.hpp"
#include "hops/persistence.hpp"
#include "hops/reference.hpp"
#include "hops/stats.hpp"

namespace hops {

using Json = nlohmann::ordered_json;

ConfigError::ConfigError(int line, const std::string& message, const std::string& source)
    : Error(source + (line > 0 ? ":" + std::to_string(line) : std::string()) + ": " + message),
      line_(line),
      message_(message) {}

namespace {

// ---------------------------------------------------------------------------
// Sectioned key/value text

struct Entry {
  std::string key;
  std::string value;
  int line = 0;
  mutable bool used = false;
};

struct Section {
  std::string name;
  int line = 0;
  std::vector<Entry> entries;
};

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::vector<std::string> split_words(std::string_view s) {
  std::vector<std::string> out;
  std::istringstream in{std::string(s)};
  std::string w;
  while (in >> w) out.push_back(w);
  return out;
}

std::map<std::string, Section> parse_sections(std::string_view text) {
  std::map<std::string, Section> sections;
  Section* current = nullptr;
  int line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto end = std::min(text.find('\n', pos), text.size());
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(line_no, "malformed section header");
      std::string name(trim(line.substr(1, line.size() - 2)));
      if (name.empty()) throw ConfigError(line_no, "empty section name");
      if (sections.count(name)) throw ConfigError(line_no, "duplicate section [" + name + "]");
      current = &sections[name];
      current->name = name;
      current->line = line_no;
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ConfigError(line_no, "expected 'key = value'");
    if (current == nullptr) throw ConfigError(line_no, "entry outside of any section");
    Entry e{std::string(trim(line.substr(0, eq))), std::string(trim(line.substr(eq + 1))), line_no};
    if (e.key.empty()) throw ConfigError(line_no, "missing key before '='");
    if (e.value.empty()) throw ConfigError(line_no, "missing value for '" + e.key + "'");
    current->entries.push_back(std::move(e));
  }
  return sections;
}

class Block {
 public:
  Block(const Section& section) : section_(section) {}

  int line() const { return section_.line; }

  const Entry* find(const std::string& key) const {
    const Entry* found = nullptr;
    for (const auto& e : section_.entries)
      if (e.key == key) {
        if (found) throw ConfigError(e.line, "duplicate key '" + key + "' in [" + section_.name + "]");
        found = &e;
        e.used = true;
      }
    return found;
  }

  std::vector<const Entry*> all(const std::string& key) const {
    std::vector<const Entry*> out;
    for (const auto& e : section_.entries)
      if (e.key == key) {
        e.used = true;
        out.push_back(&e);
      }
    return out;
  }

  const Entry& require(const std::string& key) const {
    const Entry* e = find(key);
    if (!e) throw ConfigError(section_.line, "missing key '" + key + "' in [" + section_.name + "]");
    return *e;
  }

  void finish() const {
    for (const auto& e : section_.entries)
      if (!e.used) throw ConfigError(e.line, "unknown key '" + e.key + "' in [" + section_.name + "]");
  }

 private:
  const Section& section_;
};

Real to_real(const std::string& word, const Entry& e) {
  Real v = 0.0;
  const char* first = word.data();
  const char* last = first + word.size();
  if (*first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last || std::isnan(v))
    throw ConfigError(e.line, "expected a number for '" + e.key + "', got '" + word + "'");
  return v;
}

long long to_integer(const std::string& word, const Entry& e) {
  long long v = 0;
  auto [ptr, ec] = std::from_chars(word.data(), word.data() + word.size(), v);
  if (ec != std::errc() || ptr != word.data() + word.size())
    throw ConfigError(e.line, "expected an integer for '" + e.key + "', got '" + word + "'");
  return v;
}

std::vector<std::string> words_of(const Entry& e, std::size_t expected = 0) {
  auto w = split_words(e.value);
  if (expected != 0 && w.size() != expected)
    throw ConfigError(e.line, "'" + e.key + "' expects " + std::to_string(expected) + " values, got " +
                                  std::to_string(w.size()));
  return w;
}

Real real_of(const Entry& e) { return to_real(words_of(e, 1)[0], e); }

Real positive_real(const Entry& e) {
  const Real v = real_of(e);
  if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError(e.line, "'" + e.key + "' must be positive and finite");
  return v;
}

int int_of(const Entry& e, long long lo, long long hi = 1LL << 31) {
  const long long v = to_integer(words_of(e, 1)[0], e);
  if (v < lo || v >= hi) throw ConfigError(e.line, "'" + e.key + "' is out of range");
  return static_cast<int>(v);
}

std::uint64_t u64_of(const Entry& e) {
  const auto w = words_of(e, 1)[0];
  std::uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(w.data(), w.data() + w.size(), v);
  if (ec != std::errc() || ptr != w.data() + w.size())
    throw ConfigError(e.line, "expected a non-negative integer for '" + e.key + "', got '" + w + "'");
  return v;
}

std::vector<Real> reals_of(const Entry& e, std::size_t expected) {
  std::vector<Real> out;
  for (const auto& w : words_of(e, expected)) out.push_back(to_real(w, e));
  return out;
}

// Number of steps t_max / dt, required to be an integer multiple of stride.
int step_count(Real t_max, Real dt, int stride, const Entry& e) {
  const Real ratio = t_max / dt;
  const auto steps = static_cast<long long>(std::llround(ratio));
  if (std::abs(ratio - static_cast<Real>(steps)) > 1e-9 * std::max(1.0, ratio))
    throw ConfigError(e.line, "t_max must be an integer multiple of dt");
  if (steps % stride != 0) throw ConfigError(e.line, "t_max / dt must be a multiple of record_stride");
  if (steps > 100000000) throw ConfigError(e.line, "too many time steps");
  return static_cast<int>(steps);
}

// ---------------------------------------------------------------------------
// Blocks

void parse_model(const Block& b, StudyConfig& c) {
  const int n = int_of(b.require("sites"), 1, 100000);
  const auto energies = reals_of(b.require("energies"), static_cast<std::size_t>(n));
  RVector eps = Eigen::Map<const RVector>(energies.data(), n);
  RMatrix v = RMatrix::Zero(n, n);
  for (const Entry* e : b.all("coupling")) {
    const auto w = words_of(*e, 3);
    const long long i = to_integer(w[0], *e), j = to_integer(w[1], *e);
    if (i < 1 || i > n || j < 1 || j > n) throw ConfigError(e->line, "coupling site index out of range");
    if (i == j) throw ConfigError(e->line, "coupling must connect two different sites");
    const Real value = to_real(w[2], *e);
    if (v(i - 1, j - 1) != 0.0) throw ConfigError(e->line, "coupling between these sites given twice");
    v(i - 1, j - 1) = v(j - 1, i - 1) = value;
  }
  Real eg = 0.0;
  if (const Entry* e = b.find("ground_energy")) eg = real_of(*e);

  const Entry* projected = b.find("dipoles");
  const auto vectors = b.all("dipole");
  const Entry* polarization = b.find("polarization");
  if (projected && (!vectors.empty() || polarization))
    throw ConfigError(projected->line, "give either 'dipoles' or 'dipole' vectors with 'polarization', not both");
  if (projected) {
    const auto d = reals_of(*projected, static_cast<std::size_t>(n));
    c.model = ExcitonModel{eps, v, Eigen::Map<const RVector>(d.data(), n), eg};
  } else {
    if (vectors.empty() || !polarization)
      throw ConfigError(b.line(), "[model] needs 'dipoles' or 'dipole' vectors with 'polarization'");
    Eigen::MatrixX3d mu = Eigen::MatrixX3d::Zero(n, 3);
    std::vector<bool> seen(n, false);
    for (const Entry* e : vectors) {
      const auto w = words_of(*e, 4);
      const long long i = to_integer(w[0], *e);
      if (i < 1 || i > n) throw ConfigError(e->line, "dipole site index out of range");
      if (seen[i - 1]) throw ConfigError(e->line, "dipole of this site given twice");
      seen[i - 1] = true;
      for (int k = 0; k < 3; ++k) mu(i - 1, k) = to_real(w[k + 1], *e);
    }
    const auto pol = reals_of(*polarization, 3);
    c.model = ExcitonModel::from_dipole_vectors(eps, v, mu, Eigen::Vector3d(pol[0], pol[1], pol[2]), eg);
  }
  try {
    c.model.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& err) {
    throw ConfigError(b.line(), err.what());
  }
}

void parse_bath(const Block& b, StudyConfig& c) {
  const int n = c.model.n_sites();
  c.bcf.modes.assign(n, {});
  // mode = <site|all> <p> <gamma> <Omega> [<Im p>]
  for (const Entry* e : b.all("mode")) {
    const auto w = words_of(*e);
    if (w.size() != 4 && w.size() != 5)
      throw ConfigError(e->line, "'mode' expects <site|all> <p> <gamma> <Omega> [<Im p>]");
    const Real p = to_real(w[1], *e), gamma = to_real(w[2], *e), omega = to_real(w[3], *e);
    const Real p_im = w.size() == 5 ? to_real(w[4], *e) : 0.0;
    if (!(gamma > 0.0)) throw ConfigError(e->line, "mode decay rate gamma must be positive");
    const BathMode mode{Complex(p, p_im), Complex(gamma, omega)};
    if (w[0] == "all") {
      for (auto& site : c.bcf.modes) site.push_back(mode);
    } else {
      const long long i = to_integer(w[0], *e);
      if (i < 1 || i > n) throw ConfigError(e->line, "mode site index out of range");
      c.bcf.modes[i - 1].push_back(mode);
    }
  }
}

void parse_spectral_density(const Block& b, StudyConfig& c) {
  SpectralDensityCheck sd;
  const Entry& lor = b.require("lorentzian");
  const auto w = reals_of(lor, 3);
  sd.weight = w[0];
  sd.center = w[1];
  sd.width = w[2];
  if (!(sd.width > 0.0)) throw ConfigError(lor.line, "lorentzian width must be positive");
  sd.omega_cut = positive_real(b.require("omega_cut"));
  sd.beta = std::numeric_limits<Real>::infinity();
  if (const Entry* e = b.find("beta")) {
    sd.beta = real_of(*e);
    if (!(sd.beta > 0.0)) throw ConfigError(e->line, "'beta' must be positive (or inf)");
  }
  sd.t_max = positive_real(b.require("t_max"));
  if (const Entry* e = b.find("points")) sd.points = int_of(*e, 2, 100001);
  sd.tolerance = positive_real(b.require("tolerance"));
  c.spectral_density = sd;
}

void parse_run(const Block& b, StudyConfig& c) {
  const Entry& eqs = b.require("equations");
  for (const auto& w : words_of(eqs)) {
    Equation eq;
    try {
      eq = equation_from_string(w);
    } catch (const Error&) {
      throw ConfigError(eqs.line, "unknown equation '" + w + "' (linear, nonlinear, noisefree)");
    }
    if (std::find(c.equations.begin(), c.equations.end(), eq) != c.equations.end())
      throw ConfigError(eqs.line, "equation '" + w + "' listed twice");
    c.equations.push_back(eq);
  }
  c.depth = int_of(b.require("depth"), 0, 1000);
  c.dt = positive_real(b.require("dt"));
  const Entry& tmax = b.require("t_max");
  c.t_max = positive_real(tmax);
  c.record_stride = int_of(b.require("record_stride"), 1);
  step_count(c.t_max, c.dt, c.record_stride, tmax);
  c.n_traj = int_of(b.require("n_traj"), 0);
  c.seed = u64_of(b.require("seed"));
  if (const Entry* e = b.find("workers")) c.workers = int_of(*e, 1, 4097);
}

void parse_populations(const Block& b, StudyConfig& c) {
  PopulationStudy p;
  p.initial_site = int_of(b.require("initial_site"), 1, c.model.n_sites() + 1) - 1;
  p.depth = int_of(b.require("depth"), 0, 1000);
  p.heom_depth = int_of(b.require("heom_depth"), 0, 1000);
  const Entry& tmax = b.require("t_max");
  p.t_max = positive_real(tmax);
  step_count(p.t_max, c.dt, c.record_stride, tmax);
  p.n_traj = int_of(b.require("n_traj"), 0);
  c.populations = p;
}

void parse_analysis(const Block& b, StudyConfig& c) {
  c.omega_min = real_of(b.require("omega_min"));
  const Entry& wmax = b.require("omega_max");
  c.omega_max = real_of(wmax);
  if (!(c.omega_max > c.omega_min)) throw ConfigError(wmax.line, "omega_max must exceed omega_min");
  c.padding = int_of(b.require("padding"), 1, 1025);
  const Entry& win = b.require("window");
  const auto w = words_of(win, 1)[0];
  if (w == "auto") {
    c.window_mode = WindowMode::automatic;
  } else if (w == "none") {
    c.window_mode = WindowMode::none;
  } else {
    c.window_mode = WindowMode::fixed;
    c.window_tau = to_real(w, win);
    if (!(c.window_tau > 0.0)) throw ConfigError(win.line, "window must be 'auto', 'none' or a positive tau");
  }

  const Entry* sizes = b.find("bootstrap_n_traj");
  const Entry* resamples = b.find("bootstrap_resamples");
  const Entry* seed = b.find("bootstrap_seed");
  const Entry* bins = b.find("histogram_bins");
  if (!sizes) {
    for (const Entry* e : {resamples, seed, bins})
      if (e) throw ConfigError(e->line, "'" + e->key + "' needs 'bootstrap_n_traj'");
    return;
  }
  BootstrapStudy bs;
  for (const auto& word : words_of(*sizes)) {
    const long long n = to_integer(word, *sizes);
    if (n < 1 || n > 100000000) throw ConfigError(sizes->line, "bootstrap ensemble sizes must be positive");
    bs.n_traj.push_back(static_cast<int>(n));
  }
  if (!resamples) throw ConfigError(b.line(), "missing key 'bootstrap_resamples' in [analysis]");
  if (!seed) throw ConfigError(b.line(), "missing key 'bootstrap_seed' in [analysis]");
  bs.resamples = int_of(*resamples, 1);
  bs.seed = u64_of(*seed);
  if (bins) bs.histogram_bins = int_of(*bins, 1, 100001);
  c.bootstrap = bs;
}

void parse_output(const Block& b, StudyConfig& c) {
  c.out_dir = std::string(trim(b.require("directory").value));
  const Entry& formats = b.require("formats");
  bool csv = false;
  for (const auto& w : words_of(formats)) {
    if (w == "csv") {
      csv = true;
    } else if (w == "store") {
      c.write_store = true;
    } else if (w == "gnuplot") {
      c.gnuplot = true;
    } else {
      throw ConfigError(formats.line, "unknown format '" + w + "' (csv, store, gnuplot)");
    }
  }
  if (!csv) throw ConfigError(formats.line, "formats must include csv");
}

// ---------------------------------------------------------------------------
// Canonical forms

Json model_json(const StudyConfig& c) {
  const int n = c.model.n_sites();
  Json couplings = Json::array();
  for (int i = 0; i < n; ++i) {
    Json row = Json::array();
    for (int j = 0; j < n; ++j) row.push_back(c.model.couplings(i, j));
    couplings.push_back(row);
  }
  Json energies = Json::array(), dipoles = Json::array();
  for (int i = 0; i < n; ++i) {
    energies.push_back(c.model.site_energies[i]);
    dipoles.push_back(c.model.projected_dipoles[i]);
  }
  Json bath = Json::array();
  for (const auto& site : c.bcf.modes) {
    Json modes = Json::array();
    for (const auto& m : site)
      modes.push_back({{"p", {m.prefactor.real(), m.prefactor.imag()}}, {"w", {m.rate.real(), m.rate.imag()}}});
    bath.push_back(modes);
  }
  return {{"model",
           {{"sites", n},
            {"energies", energies},
            {"couplings", couplings},
            {"dipoles", dipoles},
            {"ground_energy", c.model.ground_energy}}},
          {"bath", bath}};
}

std::string window_text(const StudyConfig& c) {
  switch (c.window_mode) {
    case WindowMode::automatic:
      return "auto";
    case WindowMode::none:
      return "none";
    case WindowMode::fixed:
      break;
  }
  std::ostringstream s;
  s.precision(17);
  s << c.window_tau;
  return s.str();
}

Json config_json(const StudyConfig& c) {
  Json j = model_json(c);
  if (c.spectral_density) {
    const auto& sd = *c.spectral_density;
    j["spectral_density"] = {{"lorentzian", {sd.weight, sd.center, sd.width}},
                             {"omega_cut", sd.omega_cut},
                             {"beta", std::isinf(sd.beta) ? Json("inf") : Json(sd.beta)},
                             {"t_max", sd.t_max},
                             {"points", sd.points},
                             {"tolerance", sd.tolerance}};
  }
  Json eqs = Json::array();
  for (auto e : c.equations) eqs.push_back(to_string(e));
  j["run"] = {{"equations", eqs},   {"depth", c.depth},   {"dt", c.dt},
              {"t_max", c.t_max},   {"record_stride", c.record_stride},
              {"n_traj", c.n_traj}, {"seed", c.seed}};
  if (c.populations) {
    const auto& p = *c.populations;
    j["populations"] = {{"initial_site", p.initial_site + 1},
                        {"depth", p.depth},
                        {"heom_depth", p.heom_depth},
                        {"t_max", p.t_max},
                        {"n_traj", p.n_traj}};
  }
  j["analysis"] = {{"omega_min", c.omega_min},
                   {"omega_max", c.omega_max},
                   {"padding", c.padding},
                   {"window", window_text(c)}};
  if (c.bootstrap) {
    j["analysis"]["bootstrap"] = {{"n_traj", c.bootstrap->n_traj},
                                  {"resamples", c.bootstrap->resamples},
                                  {"seed", c.bootstrap->seed},
                                  {"histogram_bins", c.bootstrap->histogram_bins}};
  }
  Json formats = Json::array({"csv"});
  if (c.write_store) formats.push_back("store");
  if (c.gnuplot) formats.push_back("gnuplot");
  j["output"] = {{"formats", formats}};
  return j;
}

}  // namespace

std::string StudyConfig::canonical_json() const { return config_json(*this).dump(); }

std::string StudyConfig::model_hash() const { return content_hash(model_json(*this).dump()); }

Window StudyConfig::resolve_window(const CorrelationTrace& reference) const {
  switch (window_mode) {
    case WindowMode::automatic:
      return auto_window(reference);
    case WindowMode::none:
      return {};
    case WindowMode::fixed:
      break;
  }
  return {window_tau};
}

StudyConfig parse_study_config(std::string_view text) {
  const auto sections = parse_sections(text);
  static const std::vector<std::string> known = {"model",       "bath",     "spectral_density", "run",
                                                 "populations", "analysis", "output"};
  for (const auto& [name, section] : sections)
    if (std::find(known.begin(), known.end(), name) == known.end())
      throw ConfigError(section.line, "unknown section [" + name + "]");
  auto block = [&](const std::string& name) -> const Section& {
    auto it = sections.find(name);
    if (it == sections.end()) throw ConfigError(0, "missing section [" + name + "]");
    return it->second;
  };

  StudyConfig c;
  const auto run_parsers = [&](const std::string& name, auto parse, bool required) {
    if (!required && !sections.count(name)) return;
    const Block b(block(name));
    parse(b, c);
    b.finish();
  };
  run_parsers("model", parse_model, true);
  run_parsers("bath", parse_bath, true);
  run_parsers("spectral_density", parse_spectral_density, false);
  run_parsers("run", parse_run, true);
  run_parsers("populations", parse_populations, false);
  run_parsers("analysis", parse_analysis, true);
  run_parsers("output", parse_output, true);
  return c;
}

StudyConfig load_study_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError(0, "cannot open config file", path.string());
  std::ostringstream text;
  text << in.rdbuf();
  try {
    return parse_study_config(text.str());
  } catch (const ConfigError& e) {
    throw ConfigError(e.line(), e.message(), path.string());
  }
}

void apply_overrides(StudyConfig& c, const StudyOverrides& o) {
  if (o.n_traj) {
    if (*o.n_traj < 0) throw ConfigError(0, "--n-traj must be non-negative");
    c.n_traj = *o.n_traj;
    if (c.populations) c.populations->n_traj = *o.n_traj;
  }
  if (o.seed) c.seed = *o.seed;
  if (o.workers) {
    if (*o.workers < 1) throw ConfigError(0, "--workers must be positive");
    c.workers = *o.workers;
  }
  if (o.equation) c.equations = {*o.equation};
  if (o.out_dir) c.out_dir = *o.out_dir;
}

// ---------------------------------------------------------------------------
// Pipeline

namespace {

constexpr int kStoreBatch = 1024;

std::string fmt(Real v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

class Study {
 public:
  Study(const StudyConfig& config, std::ostream* log)
      : c_(config), log_(log), workers_(std::max(1, config.workers)) {}

  StudyReport run();

 private:
  void note(const std::string& line) {
    if (log_) *log_ << line << std::endl;
  }
  std::filesystem::path out(const std::string& name) {
    files_.push_back(name);
    return c_.out_dir / name;
  }
  Metadata metadata(const std::string& kind, int n_traj, int depth) const {
    return {{"kind", kind},
            {"seed", std::to_string(c_.seed)},
            {"n_traj", std::to_string(n_traj)},
            {"K", std::to_string(depth)},
            {"dt", fmt(c_.dt)}};
  }
  Metadata spectrum_metadata(const std::string& kind, int n_traj) const {
    Metadata m = metadata(kind, n_traj, c_.depth);
    m["omega_min"] = fmt(c_.omega_min);
    m["omega_max"] = fmt(c_.omega_max);
    m["padding"] = std::to_string(c_.padding);
    return m;
  }

  void check_spectral_density();
  void reference();
  std::vector<TrajectoryRecord> collect(Equation eq);
  void correlation_study(Equation eq);
  void population_study();
  void write_gnuplot();

  const StudyConfig& c_;
  std::ostream* log_;
  int workers_;
  std::vector<std::string> files_;
  Json results_ = Json::object();

  std::unique_ptr<HopsSystem> system_;
  ExcitedState bright_;
  CorrelationTrace reference_;
  Window window_;
  Spectrum reference_spectrum_;
  std::vector<std::string> spectrum_kinds_;
};

void Study::check_spectral_density() {
  const auto& sd = *c_.spectral_density;
  const auto density = SpectralDensity::lorentzian(sd.weight, sd.center, sd.width, sd.omega_cut, sd.beta);
  std::vector<Real> taus(sd.points);
  for (int i = 0; i < sd.points; ++i) taus[i] = sd.t_max * i / (sd.points - 1);
  const CVector quadrature = bcf_from_spectral_density(density, taus);
  Real worst = 0.0;
  for (int n = 0; n < c_.bcf.n_sites(); ++n)
    for (int i = 0; i < sd.points; ++i) worst = std::max(worst, std::abs(quadrature[i] - bcf_eval(c_.bcf, n, taus[i])));
  results_["spectral_density"] = {{"max_deviation", worst}, {"tolerance", sd.tolerance}};
  note("spectral density check: max |alpha_J - alpha_modes| = " + fmt(worst));
  if (worst > sd.tolerance)
    throw Error("bath modes deviate from the spectral density by " + fmt(worst) + " (tolerance " +
                fmt(sd.tolerance) + ")");
}

void Study::reference() {
  reference_ = noisefree_correlation(c_.model, c_.bcf, c_.depth, c_.dt, c_.t_max, c_.record_stride);
  window_ = c_.resolve_window(reference_);
  reference_spectrum_ = spectrum(reference_, c_.padding, window_, c_.omega_min, c_.omega_max);
  write_correlation_csv(out("correlation_reference.csv"), reference_, metadata("reference", 0, c_.depth));
  write_spectrum_csv(out("spectrum_reference.csv"), reference_spectrum_, spectrum_metadata("reference", 0));
  spectrum_kinds_.push_back("reference");
  results_["reference"] = {{"window", window_.describe()},
                           {"c0", {reference_.values[0].real(), reference_.values[0].imag()}}};
  note("reference: window " + window_.describe());
}

std::vector<TrajectoryRecord> Study::collect(Equation eq) {
  const std::string kind = to_string(eq);
  PropagationSpec spec;
  spec.equation = eq;
  spec.dt = c_.dt;
  spec.n_steps = static_cast<int>(std::llround(c_.t_max / c_.dt));
  spec.record_stride = c_.record_stride;
  spec.normalization = Normalization::dyadic;

  StoreMetadata meta;
  meta.model_hash = c_.model_hash();
  meta.equation = to_string(eq);
  meta.depth = c_.depth;
  meta.dt = c_.dt;
  meta.dt_record = c_.dt * c_.record_stride;
  meta.n_records = spec.n_records();
  meta.master_seed = c_.seed;
  meta.mu_tot_sq = bright_.mu_tot * bright_.mu_tot;

  std::vector<TrajectoryRecord> records;
  std::unique_ptr<StoreWriter> writer;
  if (c_.write_store) {
    const auto path = out("store_" + kind + ".hops");
    if (std::filesystem::exists(path)) {
      StoreReadResult existing = read_store(path);
      if (!(existing.store.metadata == meta))
        throw Error(path.string() + " belongs to a different study; remove it or choose another output directory");
      auto& stored = existing.store.records;
      for (std::size_t i = 0; i < stored.size(); ++i)
        if (stored[i].id != i) throw Error(path.string() + ": records out of trajectory order");
      if (existing.corrupt) {
        note(path.string() + ": " + existing.error + "; keeping the valid prefix");
        write_store(path, stored, meta);
      }
      if (!stored.empty()) note(kind + ": resuming after " + std::to_string(stored.size()) + " stored trajectories");
      if (stored.size() > static_cast<std::size_t>(c_.n_traj)) stored.resize(c_.n_traj);
      records = std::move(stored);
    }
    writer = std::make_unique<StoreWriter>(path, meta);
  }

  EnsembleOptions opts;
  opts.spec = spec;
  opts.initial = bright_.state;
  opts.psi_ex = bright_.state;
  opts.mu_tot = bright_.mu_tot;
  opts.ground_energy = c_.model.ground_energy;
  opts.master_seed = c_.seed;
  opts.workers = workers_;
  records.reserve(c_.n_traj);
  while (static_cast<int>(records.size()) < c_.n_traj) {
    opts.first_id = static_cast<int>(records.size());
    opts.n_traj = std::min(kStoreBatch, c_.n_traj - opts.first_id);
    EnsembleResult batch = run_ensemble(*system_, c_.bcf, opts);
    for (const auto& reason : batch.abort_reasons) note(kind + ": " + reason);
    for (auto& r : batch.records) {
      if (writer) writer->append(r);
      records.push_back(std::move(r));
    }
    if (writer) writer->flush();
    note(kind + ": " + std::to_string(records.size()) + "/" + std::to_string(c_.n_traj) + " trajectories");
  }
  return records;
}

void Study::correlation_study(Equation eq) {
  const std::string kind = to_string(eq);
  std::vector<TrajectoryRecord> records = collect(eq);

  // Sum in trajectory-id order so results do not depend on scheduling.
  CorrelationTrace mean{reference_.times, CVector::Zero(reference_.times.size()), reference_.mu_tot_sq, kind};
  int completed = 0;
  Json aborted_ids = Json::array();
  for (const auto& r : records) {
    if (r.aborted) {
      aborted_ids.push_back(r.id);
      continue;
    }
    mean.values += r.samples;
    ++completed;
  }
  Json result = {{"n_traj", c_.n_traj}, {"n_completed", completed}, {"n_aborted", aborted_ids.size()},
                 {"aborted_ids", aborted_ids}};
  if (completed == 0) {
    note(kind + ": no completed trajectories");
    results_[kind] = result;
    return;
  }
  mean.values /= static_cast<Real>(completed);
  const Spectrum spec = spectrum(mean, c_.padding, window_, c_.omega_min, c_.omega_max);
  write_correlation_csv(out("correlation_" + kind + ".csv"), mean, metadata(kind, completed, c_.depth));
  write_spectrum_csv(out("spectrum_" + kind + ".csv"), spec, spectrum_metadata(kind, completed));
  spectrum_kinds_.push_back(kind);
  result["spectral_error"] = spectral_error(spec, reference_spectrum_, c_.omega_min, c_.omega_max);

  if (c_.bootstrap) {
    EnsembleStore store;
    store.metadata.n_records = static_cast<int>(reference_.times.size());
    store.metadata.dt_record = c_.dt * c_.record_stride;
    store.records = std::move(records);
    BootstrapOptions bo;
    bo.n_resamples = c_.bootstrap->resamples;
    bo.omega_min = c_.omega_min;
    bo.omega_max = c_.omega_max;
    bo.padding = c_.padding;
    bo.window = window_;
    bo.histogram_bins = c_.bootstrap->histogram_bins;
    bo.workers = workers_;
    RVector freqs;
    const RMatrix spectra = record_spectra(store, bo, &freqs);
    store.records.clear();

    std::ofstream table(out("bootstrap_" + kind + ".csv"));
    table << "# kind=" << kind << " store=" << spectra.cols() << " resamples=" << bo.n_resamples
          << " seed=" << c_.bootstrap->seed << " omega_min=" << fmt(c_.omega_min) << " omega_max=" << fmt(c_.omega_max)
          << "\n"
          << "n_traj,mean_error,fwhm\n";
    Json rows = Json::array();
    std::vector<Real> means;
    for (int n : c_.bootstrap->n_traj) {
      bo.n_traj = n;
      bo.seed = trajectory_seed(c_.bootstrap->seed, static_cast<std::uint64_t>(n));
      const ErrorDistribution d = bootstrap_errors(spectra, freqs, reference_spectrum_, bo);
      table << n << "," << fmt(d.mean) << "," << fmt(d.fwhm) << "\n";
      rows.push_back({{"n_traj", n}, {"mean_error", d.mean}, {"fwhm", d.fwhm}});
      means.push_back(d.mean);

      std::ofstream hist(out("histogram_" + kind + "_" + std::to_string(n) + ".csv"));
      hist << "# kind=" << kind << " n_traj=" << n << " bins=" << d.histogram.counts.size() << "\n"
           << "error,count\n";
      for (std::size_t b = 0; b < d.histogram.counts.size(); ++b)
        hist << fmt(d.histogram.center(static_cast<int>(b))) << "," << d.histogram.counts[b] << "\n";
      note(kind + ": bootstrap n_traj=" + std::to_string(n) + " mean error " + fmt(d.mean));
    }
    if (!table) throw Error("cannot write bootstrap table");
    result["bootstrap"] = rows;
    if (means.size() >= 3) result["scaling_slope"] = scaling_fit(means, c_.bootstrap->n_traj);
  }
  results_[kind] = result;
}

void Study::population_study() {
  const auto& p = *c_.populations;
  const int n_steps = static_cast<int>(std::llround(p.t_max / c_.dt));
  const HeomResult heom =
      heom_populations(c_.model, c_.bcf, p.heom_depth, p.initial_site, c_.dt, p.t_max, c_.record_stride);
  Metadata hm = metadata("heom", 0, p.heom_depth);
  hm["initial_site"] = std::to_string(p.initial_site + 1);
  write_populations_csv(out("populations_heom.csv"), heom.times, heom.populations, hm);
  Json result = {{"heom", {{"max_trace_drift", heom.max_trace_drift},
                           {"max_hermiticity_error", heom.max_hermiticity_error},
                           {"converged", heom.converged},
                           {"diagnostic", heom.diagnostic}}}};
  if (!heom.converged) note("heom: " + heom.diagnostic);

  const HopsSystem system(c_.model, c_.bcf, p.depth);
  CVector initial = CVector::Zero(c_.model.n_sites());
  initial[p.initial_site] = 1.0;
  for (Equation eq : c_.equations) {
    if (eq == Equation::noisefree || p.n_traj == 0) continue;
    const std::string kind = to_string(eq);
    EnsembleOptions opts;
    opts.spec.equation = eq;
    opts.spec.dt = c_.dt;
    opts.spec.n_steps = n_steps;
    opts.spec.record_stride = c_.record_stride;
    opts.spec.normalization = Normalization::excited_only;
    opts.initial = initial;
    opts.n_traj = p.n_traj;
    opts.master_seed = c_.seed;
    opts.workers = workers_;
    opts.correlation = false;
    opts.populations = true;
    opts.keep_records = false;
    const EnsembleResult r = run_ensemble(system, c_.bcf, opts);
    for (const auto& reason : r.abort_reasons) note("populations " + kind + ": " + reason);
    Json entry = {{"n_traj", p.n_traj}, {"n_completed", r.n_completed}, {"n_aborted", r.n_aborted}};
    if (r.n_completed > 0) {
      Metadata m = metadata(kind, r.n_completed, p.depth);
      m["initial_site"] = std::to_string(p.initial_site + 1);
      write_populations_csv(out("populations_" + kind + ".csv"), r.times, r.mean_populations, m);
      entry["max_deviation_from_heom"] = (r.mean_populations - heom.populations).cwiseAbs().maxCoeff();
    }
    result[kind] = entry;
    note("populations " + kind + ": " + std::to_string(r.n_completed) + " trajectories");
  }
  results_["populations"] = result;
}

void Study::write_gnuplot() {
  std::ofstream gp(out("plot.gp"));
  gp << "# gnuplot -p plot.gp\n"
     << "set datafile separator ','\n"
     << "set key top right\n"
     << "set xlabel 'omega'\nset ylabel 'A(omega)'\n"
     << "set xrange [" << fmt(c_.omega_min) << ":" << fmt(c_.omega_max) << "]\n"
     << "plot ";
  for (std::size_t i = 0; i < spectrum_kinds_.size(); ++i)
    gp << (i ? ", \\\n     " : "") << "'spectrum_" << spectrum_kinds_[i] << ".csv' every ::2 using 1:2 with lines title '"
       << spectrum_kinds_[i] << "'";
  gp << "\n";
  if (c_.populations) {
    gp << "pause -1\nset xlabel 't'\nset ylabel 'P_" << c_.populations->initial_site + 1 << "'\nset autoscale x\n"
       << "plot 'populations_heom.csv' every ::2 using 1:" << c_.populations->initial_site + 2
       << " with lines title 'heom'";
    for (Equation eq : c_.equations)
      if (eq != Equation::noisefree && c_.populations->n_traj > 0)
        gp << ", \\\n     'populations_" << to_string(eq) << ".csv' every ::2 using 1:"
           << c_.populations->initial_site + 2 << " with lines title '" << to_string(eq) << "'";
    gp << "\n";
  }
  if (c_.bootstrap) {
    gp << "pause -1\nset logscale xy\nset xlabel 'N_traj'\nset ylabel 'mean error'\nset autoscale x\nplot ";
    bool first = true;
    for (Equation eq : c_.equations)
      if (eq != Equation::noisefree && c_.n_traj > 0) {
        gp << (first ? "" : ", \\\n     ") << "'bootstrap_" << to_string(eq)
           << ".csv' every ::2 using 1:2 with linespoints title '" << to_string(eq) << "'";
        first = false;
      }
    gp << (first ? "1/sqrt(x)" : "") << "\n";
  }
  if (!gp) throw Error("cannot write plot.gp");
}

StudyReport Study::run() {
  std::filesystem::create_directories(c_.out_dir);
  if (c_.spectral_density) check_spectral_density();

  bright_ = build_initial_excited_state(c_.model);
  system_ = std::make_unique<HopsSystem>(c_.model, c_.bcf, c_.depth);
  reference();
  for (Equation eq : c_.equations)
    if (eq != Equation::noisefree && c_.n_traj > 0) correlation_study(eq);
  if (c_.populations) population_study();
  if (c_.gnuplot) write_gnuplot();

  std::sort(files_.begin(), files_.end());
  Json hashes = Json::object();
  StudyReport report;
  for (const auto& name : files_) {
    std::ifstream in(c_.out_dir / name, std::ios::binary);
    std::ostringstream bytes;
    bytes << in.rdbuf();
    hashes[name] = content_hash(bytes.str());
  }
  for (const auto& [key, value] : results_.items())
    if (value.is_object() && value.contains("n_aborted")) report.n_aborted += value["n_aborted"].get<int>();
  if (results_.contains("populations"))
    for (const auto& [key, value] : results_["populations"].items())
      if (value.contains("n_aborted")) report.n_aborted += value["n_aborted"].get<int>();

  Json manifest = {{"format", "hops-study-manifest/1"},
                   {"config", Json::parse(c_.canonical_json())},
                   {"model_hash", c_.model_hash()},
                   {"results", results_},
                   {"files", hashes}};
  report.manifest_hash = content_hash(manifest.dump());
  manifest["hash"] = report.manifest_hash;
  manifest["runtime"] = {{"workers", workers_}, {"out_dir", c_.out_dir.string()}};
  std::ofstream mf(c_.out_dir / "manifest.json");
  mf << manifest.dump(2) << "\n";
  if (!mf) throw Error("cannot write manifest.json");
  report.files = files_;
  report.files.push_back("manifest.json");
  std::sort(report.files.begin(), report.files.end());
  return report;
}

}  // namespace

StudyReport run_study(const StudyConfig& config, std::ostream* log) { return Study(config, log).run(); }

}  // namespace hops
