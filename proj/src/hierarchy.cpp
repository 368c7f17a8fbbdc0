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

#include "hops/hierarchy.hpp"

#include <numeric>
#include <unordered_map>

namespace hops {

namespace {

struct IndexHash {
  std::size_t operator()(const std::vector<int>& k) const {
    std::size_t h = 1469598103934665603ULL;
    for (int v : k) {
      h ^= static_cast<std::size_t>(v) + 0x9e3779b97f4a7c15ULL;
      h *= 1099511628211ULL;
    }
    return h;
  }
};

// All compositions of `total` into `slots` non-negative parts, leading
// entries descending.
void enumerate_shell(int total, int slot, std::vector<int>& k, const std::function<void(const std::vector<int>&)>& emit) {
  const int last = static_cast<int>(k.size()) - 1;
  if (slot == last) {
    k[slot] = total;
    emit(k);
    return;
  }
  for (int v = total; v >= 0; --v) {
    k[slot] = v;
    enumerate_shell(total - v, slot + 1, k, emit);
  }
  k[slot] = 0;
}

}  // namespace

TruncationRule triangular_truncation(int depth) {
  return [depth](std::span<const int> k) { return std::accumulate(k.begin(), k.end(), 0) <= depth; };
}

double binomial(int n, int k) {
  if (k < 0 || k > n) return 0.0;
  k = std::min(k, n - k);
  double result = 1.0;
  for (int i = 1; i <= k; ++i) result = result * (n - k + i) / i;
  return std::round(result);
}

HierarchyIndexSpace::HierarchyIndexSpace(int n_modes, int depth, std::size_t cap)
    : n_modes_(n_modes), depth_(depth) {
  if (n_modes < 1) throw Error("hierarchy: at least one bath mode is required");
  if (depth < 0) throw Error("hierarchy: depth must be non-negative");
  const double expected = binomial(n_modes + depth, depth);
  if (expected > static_cast<double>(cap))
    throw Error("hierarchy: C(M+K, K) = " + std::to_string(static_cast<long long>(expected)) +
                " exceeds the size cap of " + std::to_string(cap));

  const TruncationRule keep = triangular_truncation(depth);
  std::unordered_map<std::vector<int>, int, IndexHash> flat_of;
  std::vector<int> k(n_modes, 0);
  for (int shell = 0; shell <= depth; ++shell) {
    shell_offsets_.push_back(size());
    enumerate_shell(shell, 0, k, [&](const std::vector<int>& idx) {
      if (!keep(idx)) return;
      flat_of.emplace(idx, size());
      indices_.insert(indices_.end(), idx.begin(), idx.end());
      levels_.push_back(shell);
    });
  }
  shell_offsets_.push_back(size());

  up_.assign(static_cast<std::size_t>(size()) * n_modes_, kTruncated);
  down_.assign(static_cast<std::size_t>(size()) * n_modes_, kBoundary);
  std::vector<int> probe(n_modes_);
  for (int id = 0; id < size(); ++id) {
    const auto idx = index(id);
    for (int m = 0; m < n_modes_; ++m) {
      std::copy(idx.begin(), idx.end(), probe.begin());
      ++probe[m];
      if (auto it = flat_of.find(probe); it != flat_of.end()) up_[static_cast<std::size_t>(id) * n_modes_ + m] = it->second;
      if (idx[m] > 0) {
        probe[m] -= 2;
        down_[static_cast<std::size_t>(id) * n_modes_ + m] = flat_of.at(probe);
      }
    }
  }
}

std::optional<int> HierarchyIndexSpace::find(std::span<const int> k) const {
  if (static_cast<int>(k.size()) != n_modes_) return std::nullopt;
  for (int v : k)
    if (v < 0) return std::nullopt;
  // The truncated set is closed under k -> k - e_m, so walking up from 0 reaches every member.
  int id = 0;
  for (int m = 0; m < n_modes_; ++m)
    for (int step = 0; step < k[m]; ++step) {
      id = up(id, m);
      if (id < 0) return std::nullopt;
    }
  return id;
}

Complex HierarchyIndexSpace::kdotw(int id, std::span<const Complex> rates) const {
  if (static_cast<int>(rates.size()) != n_modes_) throw Error("kdotw: one rate per mode is required");
  Complex sum{};
  const auto idx = index(id);
  for (int m = 0; m < n_modes_; ++m)
    if (idx[m] != 0) sum += static_cast<Real>(idx[m]) * rates[m];
  return sum;
}

HierarchyIndexSpace build_index_space(int n_sites, int modes_per_site, int depth, std::size_t cap) {
  if (n_sites < 1 || modes_per_site < 1) throw Error("hierarchy: N * J must be at least 1");
  return HierarchyIndexSpace(n_sites * modes_per_site, depth, cap);
}

}  // namespace hops
