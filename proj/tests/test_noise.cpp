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

#include <filesystem>
#include <fstream>
#include <set>
#include <thread>

#include "hops/noise.hpp"
#include "test_util.hpp"

using namespace hops;
using hops::test::contains;
using hops::test::error_of;

namespace {

std::vector<NoiseTrajectory> ensemble(const ExponentialBCF& bcf, Real dt, int n, int count, std::uint64_t master) {
  const NoiseGenerator gen(bcf, dt, n);
  std::vector<NoiseTrajectory> out;
  for (int r = 0; r < count; ++r) out.push_back(gen.generate(trajectory_seed(master, r)));
  return out;
}

}  // namespace

TEST_CASE("smooth FFT sizes") {
  CHECK(next_smooth_size(1) == 1);
  CHECK(next_smooth_size(7) == 8);
  CHECK(next_smooth_size(11) == 12);
  CHECK(next_smooth_size(2048) == 2048);
  CHECK(next_smooth_size(2049) == 2160);
  const NoiseGenerator gen(ExponentialBCF::single_mode(1, 0.5, 0.25, 1.0), 0.005, 6001);
  CHECK(gen.grid_size() >= 4 * 6001);
  CHECK(gen.grid_size() % 2 == 0);
}

TEST_CASE("trajectory seeds are a pure function of (master, index)") {
  std::set<std::uint64_t> seen;
  for (std::uint64_t i = 0; i < 10000; ++i) seen.insert(trajectory_seed(17, i));
  CHECK(seen.size() == 10000);
  CHECK(trajectory_seed(17, 5) == trajectory_seed(17, 5));
  CHECK(trajectory_seed(17, 5) != trajectory_seed(18, 5));
}

TEST_CASE("generation is reproducible and thread independent") {
  const auto bcf = ExponentialBCF::single_mode(2, 0.5, 0.25, 1.0);
  const NoiseGenerator gen(bcf, 0.05, 400);
  const NoiseTrajectory a = gen.generate(99), b = gen.generate(99), c = gen.generate(100);
  CHECK(a.samples == b.samples);
  CHECK(a.samples != c.samples);
  CHECK(a.samples.rows() == 2);
  CHECK(a.samples.cols() == 400);
  CHECK(generate_noise(bcf, 0.05, 400, 99).samples == a.samples);

  std::vector<NoiseTrajectory> threaded(8);
  std::vector<std::thread> pool;
  for (int i = 0; i < 8; ++i) pool.emplace_back([&, i] { threaded[i] = gen.generate(1000 + i); });
  for (auto& t : pool) t.join();
  for (int i = 0; i < 8; ++i) CHECK(threaded[i].samples == gen.generate(1000 + i).samples);
}

TEST_CASE("a silent bath gives zero noise") {
  const auto bcf = ExponentialBCF::single_mode(2, 0.0, 0.25, 1.0);
  CHECK(generate_noise(bcf, 0.1, 64, 3).samples.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("empirical covariance matches alpha") {
  ExponentialBCF bcf;
  bcf.modes = {{{0.5, {0.25, 1.0}}}, {{1.0, {0.5, -2.0}}, {0.3, {0.1, 0.4}}}};
  const auto zs = ensemble(bcf, 0.1, 256, 4000, 11);
  const NoiseStatsReport rep = validate_noise_statistics(zs, bcf);
  CHECK(rep.passed());
  CHECK(rep.n_realizations == 4000);

  // Direct two-time estimates against an explicit 5-sigma band.
  for (int site = 0; site < 2; ++site) {
    const Real a0 = bcf_eval(bcf, site, 0.0).real();
    const Real band = 5.0 * a0 / std::sqrt(4000.0);
    for (auto [t, s] : {std::pair{0, 0}, std::pair{40, 10}, std::pair{200, 180}, std::pair{255, 0}}) {
      const Complex expected = bcf_eval(bcf, site, (t - s) * 0.1);
      CHECK(std::abs(empirical_covariance(zs, site, t, s) - expected) < band);
    }
  }
}

TEST_CASE("the validator rejects a mismatched bath") {
  const auto zs = ensemble(ExponentialBCF::single_mode(1, 0.5, 0.25, 1.0), 0.1, 256, 2000, 3);
  CHECK_FALSE(validate_noise_statistics(zs, ExponentialBCF::single_mode(1, 0.7, 0.25, 1.0)).covariance_ok());
  CHECK_FALSE(validate_noise_statistics(zs, ExponentialBCF::single_mode(1, 0.5, 0.25, 1.3)).covariance_ok());
  CHECK(contains(error_of([&] { validate_noise_statistics(zs, ExponentialBCF::single_mode(2, 0.5, 0.25, 1.0)); }),
                 "site count"));
}

TEST_CASE("binary dump round trip") {
  const auto path = std::filesystem::temp_directory_path() / "hops_test_noise.bin";
  const NoiseTrajectory z = generate_noise(ExponentialBCF::single_mode(2, 2.0, 0.25, 1.0), 0.01, 77, 5);
  write_noise_dump(path, z);
  const NoiseTrajectory back = read_noise_dump(path);
  CHECK(back.samples == z.samples);
  CHECK(back.dt == z.dt);
  CHECK(back.seed == 5);
  CHECK(back.n_steps == 77);
  CHECK(std::filesystem::file_size(path) == 8 + 4 + 4 + 8 + 8 + 8 + 2 * 77 * 16);

  std::ofstream(path, std::ios::binary) << "NOTNOISE";
  CHECK(contains(error_of([&] { read_noise_dump(path); }), "not a noise dump"));
  std::filesystem::remove(path);
}
