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

#include "hops/ensemble.hpp"

#include <atomic>
#include <memory>
#include <mutex>
#include <thread>

#include "hops/noise.hpp"

namespace hops {

namespace {

struct ChunkSums {
  CVector correlation;
  RMatrix populations;
  RVector norm;
  int completed = 0;
};

}  // namespace

EnsembleResult run_ensemble(const HopsSystem& system, const ExponentialBCF& bcf, const EnsembleOptions& options) {
  const PropagationSpec& spec = options.spec;
  spec.validate();
  const bool stochastic = spec.equation != Equation::noisefree;
  const int n_traj = stochastic ? options.n_traj : 1;
  if (n_traj < 0 || options.first_id < 0) throw Error("ensemble: n_traj and first_id must be non-negative");
  if (options.correlation && options.psi_ex.size() != system.n_sites())
    throw Error("ensemble: psi_ex has the wrong dimension");

  std::unique_ptr<NoiseGenerator> noise;
  if (stochastic && n_traj > 0) noise = std::make_unique<NoiseGenerator>(bcf, spec.noise_dt(), spec.noise_steps());

  const int n_records = spec.n_records();
  const int n = system.n_sites();
  const int n_chunks = (n_traj + kEnsembleChunk - 1) / kEnsembleChunk;
  std::vector<ChunkSums> chunks(n_chunks);
  std::vector<TrajectoryRecord> records(options.keep_records ? n_traj : 0);
  std::vector<std::string> reasons(n_traj);
  std::vector<char> aborted(n_traj, 0);

  std::atomic<int> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    try {
      for (int c = next++; c < n_chunks; c = next++) {
        ChunkSums& sums = chunks[c];
        sums.correlation = CVector::Zero(n_records);
        sums.populations = RMatrix::Zero(n, n_records);
        sums.norm = RVector::Zero(n_records);
        const int first = c * kEnsembleChunk;
        const int last = std::min(n_traj, first + kEnsembleChunk);
        for (int local = first; local < last; ++local) {
          const auto id = static_cast<std::uint64_t>(options.first_id) + static_cast<std::uint64_t>(local);
          const std::uint64_t seed = trajectory_seed(options.master_seed, id);
          PropagationResult run;
          if (noise) {
            const NoiseTrajectory z = noise->generate(seed);
            run = propagate(options.initial, spec, system, &z);
          } else {
            run = propagate(options.initial, spec, system);
          }
          TrajectoryRecord record;
          record.id = id;
          record.seed = stochastic ? seed : 0;
          record.kind = spec.equation;
          record.t0 = 0.0;
          record.dt_record = spec.dt * spec.record_stride;
          record.aborted = run.aborted;
          if (options.correlation)
            record.samples =
                correlation_samples(run, spec.equation, options.psi_ex, options.mu_tot, options.ground_energy);
          if (run.aborted) {
            aborted[local] = 1;
            reasons[local] = run.abort_reason;
          } else {
            if (options.correlation) sums.correlation += record.samples;
            if (options.populations) sums.populations += populations(run, spec.equation);
            for (int r = 0; r < n_records; ++r) sums.norm[r] += run.physical.col(r).squaredNorm();
            ++sums.completed;
          }
          if (options.keep_records) records[local] = std::move(record);
        }
      }
    } catch (...) {
      std::lock_guard lock(failure_mutex);
      if (!failure) failure = std::current_exception();
      next = n_chunks;
    }
  };
  const int workers = std::max(1, std::min(options.workers, std::max(n_chunks, 1)));
  std::vector<std::thread> threads;
  for (int w = 1; w < workers; ++w) threads.emplace_back(worker);
  worker();
  for (auto& t : threads) t.join();
  if (failure) std::rethrow_exception(failure);

  EnsembleResult result;
  result.times = RVector::LinSpaced(n_records, 0.0, spec.n_steps * spec.dt);
  result.mean_correlation = CVector::Zero(n_records);
  result.mean_populations = RMatrix::Zero(n, n_records);
  result.mean_norm = RVector::Zero(n_records);
  for (const auto& sums : chunks) {
    if (sums.completed == 0) continue;
    result.mean_correlation += sums.correlation;
    result.mean_populations += sums.populations;
    result.mean_norm += sums.norm;
    result.n_completed += sums.completed;
  }
  if (result.n_completed > 0) {
    result.mean_correlation /= static_cast<Real>(result.n_completed);
    result.mean_populations /= static_cast<Real>(result.n_completed);
    result.mean_norm /= static_cast<Real>(result.n_completed);
  }
  for (int local = 0; local < n_traj; ++local)
    if (aborted[local]) {
      ++result.n_aborted;
      result.abort_reasons.push_back("trajectory " + std::to_string(options.first_id + local) + ": " + reasons[local]);
    }
  result.records = std::move(records);
  return result;
}

}  // namespace hops
