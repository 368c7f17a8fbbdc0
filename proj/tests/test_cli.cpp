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

#include <doctest.h>

#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "test_util.hpp"

using hops::test::contains;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code = -1;
  std::string output;  // stdout and stderr
};

Outcome cli(const std::string& args, const std::string& env = "") {
  const std::string cmd = env + " '" HOPS_CLI "' " + args + " 2>&1";
  Outcome o;
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  std::array<char, 4096> buf;
  while (std::fgets(buf.data(), buf.size(), pipe)) o.output += buf.data();
  const int status = pclose(pipe);
  o.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return o;
}

const fs::path& workdir() {
  static const fs::path dir = [] {
    auto d = fs::temp_directory_path() / "hops_test_cli";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

fs::path small_config() {
  const auto path = workdir() / "small.cfg";
  std::ofstream(path) << R"([model]
sites = 2
energies = 0 0
coupling = 1 2 1.0
dipoles = 1 1

[bath]
mode = all 0.5 0.25 1.0

[run]
equations = linear nonlinear
depth = 3
dt = 0.05
t_max = 5
record_stride = 2
n_traj = 16
seed = 42

[analysis]
omega_min = -2
omega_max = 5
padding = 2
window = auto
bootstrap_n_traj = 4 8 16
bootstrap_resamples = 40
bootstrap_seed = 3

[output]
directory = unused
formats = csv store
)";
  return path;
}

std::string manifest_line(const std::string& out) {
  const auto pos = out.find("manifest ");
  return pos == std::string::npos ? "" : out.substr(pos, 9 + 64);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

std::string rows_of(const std::string& table) { return table.substr(table.find("n_traj,mean_error,fwhm")); }

}  // namespace

TEST_CASE("usage errors exit with 1") {
  CHECK(cli("").code == 1);
  CHECK(cli("frobnicate").code == 1);
  CHECK(cli("run").code == 1);
  CHECK(cli("run -c " + q(workdir() / "missing.cfg")).code == 1);
  const Outcome v = cli("--version");
  CHECK(v.code == 0);
  CHECK(contains(v.output, "hops"));

  const auto bad = workdir() / "bad.cfg";
  std::string text = slurp(small_config());
  text.replace(text.find("dt = 0.05"), 9, "dt = abc");
  std::ofstream(bad) << text;
  const Outcome o = cli("run -c " + q(bad));
  CHECK(o.code == 1);
  CHECK(contains(o.output, "bad.cfg:13: expected a number for 'dt', got 'abc'"));
  CHECK(cli("validate-noise -c " + q(bad)).code == 1);
}

TEST_CASE("run, recompute and compare") {
  const auto cfg = small_config();
  const auto out = workdir() / "study";
  const Outcome first = cli("run -c " + q(cfg) + " --out-dir " + q(out));
  REQUIRE(first.code == 0);
  const std::string hash = manifest_line(first.output);
  CHECK(hash.size() == 73);
  CHECK(contains(first.output, (out / "spectrum_nonlinear.csv").string()));

  CHECK(manifest_line(cli("run -c " + q(cfg) + " --workers 3 --out-dir " + q(workdir() / "w3")).output) == hash);
  const Outcome env = cli("run -c " + q(cfg) + " --out-dir " + q(workdir() / "env"), "HOPS_WORKERS=2");
  CHECK(manifest_line(env.output) == hash);
  CHECK(contains(slurp(workdir() / "env" / "manifest.json"), "\"workers\": 2"));
  CHECK(manifest_line(cli("run -c " + q(cfg) + " --seed 43 --out-dir " + q(workdir() / "s43")).output) != hash);

  SUBCASE("noise-free only") {
    const auto dir = workdir() / "nf";
    const Outcome o = cli("run -c " + q(cfg) + " --n-traj 0 --equation noisefree --out-dir " + q(dir));
    CHECK(o.code == 0);
    int n = 0;
    for (const auto& e : fs::directory_iterator(dir)) {
      ++n;
      const std::string name = e.path().filename().string();
      CHECK((contains(name, "reference") || name == "manifest.json"));
    }
    CHECK(n == 3);
  }

  SUBCASE("spectrum and compare") {
    const auto again = workdir() / "again.csv";
    const Outcome s = cli("spectrum " + q(out / "correlation_reference.csv") + " -o " + q(again) +
                           " --omega-min -2 --omega-max 5 --padding 2 --window auto");
    CHECK(s.code == 0);
    const Outcome same = cli("compare " + q(again) + " " + q(out / "spectrum_reference.csv"));
    CHECK(same.code == 0);
    CHECK(same.output == "0\n");
    const Outcome diff = cli("compare " + q(out / "spectrum_linear.csv") + " " + q(out / "spectrum_reference.csv") +
                              " --omega-min -2 --omega-max 5");
    CHECK(diff.code == 0);
    CHECK(std::stod(diff.output) > 0.0);

    cli("spectrum " + q(out / "correlation_reference.csv") + " -o " + q(workdir() / "other.csv") +
         " --omega-min -1 --omega-max 1");
    const Outcome grids = cli("compare " + q(again) + " " + q(workdir() / "other.csv"));
    CHECK(grids.code == 2);
    CHECK(contains(grids.output, "different frequency grids"));
    CHECK(cli("spectrum " + q(cfg) + " -o " + q(workdir() / "x.csv") + " --omega-min -1 --omega-max 1").code == 2);
  }

  SUBCASE("bootstrap reproduces the study tables") {
    const auto dir = workdir() / "boot";
    const Outcome b = cli("bootstrap --store " + q(out / "store_linear.hops") + " --reference " +
                           q(out / "spectrum_reference.csv") + " --n-traj 4,8,16 --resamples 40 --seed 3 --out-dir " +
                           q(dir));
    CHECK(b.code == 0);
    CHECK(contains(b.output, "slope "));
    CHECK(rows_of(slurp(dir / "bootstrap_linear.csv")) == rows_of(slurp(out / "bootstrap_linear.csv")));
    CHECK(fs::exists(dir / "histogram_linear_8.csv"));
  }

  SUBCASE("a store from another study is a runtime error") {
    const Outcome o = cli("run -c " + q(cfg) + " --seed 7 --out-dir " + q(out));
    CHECK(o.code == 2);
    CHECK(contains(o.output, "belongs to a different study"));
  }
}

TEST_CASE("noise validation") {
  const Outcome o = cli("validate-noise -c " + q(small_config()) + " --realizations 2000 --steps 256 --dump " +
                         q(workdir() / "z.bin"));
  CHECK(o.code == 0);
  CHECK(contains(o.output, "ok   covariance"));
  CHECK(fs::file_size(workdir() / "z.bin") > 0);
  CHECK(cli("validate-noise -c " + q(small_config()) + " --realizations 1").code == 1);
}
