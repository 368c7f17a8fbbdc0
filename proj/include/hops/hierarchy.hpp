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

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "hops/types.hpp"

namespace hops {

/// Predicate deciding whether a multi-index belongs to the hierarchy.
using TruncationRule = std::function<bool(std::span<const int>)>;

/// |k| <= depth.
TruncationRule triangular_truncation(int depth);

/// C(n, k) as a double, so overflow shows up as a large value instead of wrapping.
double binomial(int n, int k);

/// Truncated set of hierarchy multi-indices k in N^M with O(1) neighbour
/// lookup. Ordering is graded lexicographic: shells of equal |k| are
/// contiguous, id 0 is k = 0, and inside a shell larger leading entries
/// come first.
class HierarchyIndexSpace {
 public:
  static constexpr int kTruncated = -1;  // k + e_m lies outside the truncation
  static constexpr int kBoundary = -2;   // k - e_m would have a negative entry

  static constexpr std::size_t kDefaultCap = 5'000'000;

  HierarchyIndexSpace(int n_modes, int depth, std::size_t cap = kDefaultCap);

  int n_modes() const { return n_modes_; }
  int depth() const { return depth_; }
  int size() const { return static_cast<int>(levels_.size()); }

  std::span<const int> index(int id) const {
    return {indices_.data() + static_cast<std::size_t>(id) * n_modes_, static_cast<std::size_t>(n_modes_)};
  }
  int level(int id) const { return levels_[id]; }
  int up(int id, int mode) const { return up_[static_cast<std::size_t>(id) * n_modes_ + mode]; }
  int down(int id, int mode) const { return down_[static_cast<std::size_t>(id) * n_modes_ + mode]; }

  /// Dense id of a multi-index, if it is part of the space.
  std::optional<int> find(std::span<const int> k) const;

  /// k . w for the multi-index with the given id.
  Complex kdotw(int id, std::span<const Complex> rates) const;

  /// First id of each depth shell, plus size() as the end sentinel.
  const std::vector<int>& shell_offsets() const { return shell_offsets_; }

 private:
  int n_modes_;
  int depth_;
  std::vector<int> indices_;  // row-major size() x n_modes
  std::vector<int> levels_;
  std::vector<int> up_;
  std::vector<int> down_;
  std::vector<int> shell_offsets_;
};

/// Index space for N sites with J exponential modes each (M = N * J).
HierarchyIndexSpace build_index_space(int n_sites, int modes_per_site, int depth,
                                      std::size_t cap = HierarchyIndexSpace::kDefaultCap);

}  // namespace hops
