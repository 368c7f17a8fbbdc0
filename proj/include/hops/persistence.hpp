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

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

#include "hops/propagator.hpp"

namespace hops {

/// C(t) samples of one trajectory on the grid t0 + r * dt_record.
struct TrajectoryRecord {
  std::uint64_t id = 0;
  std::uint64_t seed = 0;
  Equation kind = Equation::linear;
  Real t0 = 0.0;
  Real dt_record = 0.0;
  bool aborted = false;
  CVector samples;  // only the records before an abort

  int n_records() const { return static_cast<int>(samples.size()); }
  bool operator==(const TrajectoryRecord&) const = default;
};

struct StoreMetadata {
  std::string model_hash;
  std::string equation;
  int depth = 0;
  Real dt = 0.0;
  Real dt_record = 0.0;
  int n_records = 0;
  std::uint64_t master_seed = 0;
  Real mu_tot_sq = 0.0;

  std::string to_json() const;
  static StoreMetadata from_json(std::string_view text);
  bool operator==(const StoreMetadata&) const = default;
};

struct EnsembleStore {
  StoreMetadata metadata;
  std::vector<TrajectoryRecord> records;
};

/// Hex SHA-256 of `data` prefixed git-style with "blob <size>\0".
std::string content_hash(std::string_view data);

/// File layout (little-endian):
///   "HOPS" | u32 version | u64 metadata length | metadata JSON
///   then per record: u64 payload length | payload | u32 CRC-32 of payload
/// with payload = u64 id | u64 seed | u32 kind | u32 aborted | f64 t0 |
///                f64 dt_record | u64 n | n x (f64 re, f64 im).
inline constexpr std::uint32_t kStoreVersion = 1;

/// Appends records to a store, creating it (header first) when absent. An
/// existing store must carry identical metadata.
class StoreWriter {
 public:
  StoreWriter(const std::filesystem::path& path, const StoreMetadata& metadata);
  void append(const TrajectoryRecord& record);
  void flush();

 private:
  std::filesystem::path path_;
  std::ofstream out_;
};

void write_store(const std::filesystem::path& path, std::span<const TrajectoryRecord> records,
                 const StoreMetadata& metadata);

struct StoreReadResult {
  EnsembleStore store;
  bool corrupt = false;
  std::string error;  // "corrupt after record i" when a record fails validation
};

/// Reads every valid record. A truncated or damaged record stops the read
/// and the valid prefix is returned with `corrupt` set; a bad header throws.
StoreReadResult read_store(const std::filesystem::path& path);

/// Concatenates two stores of the same study; differing metadata is refused.
EnsembleStore merge_stores(const EnsembleStore& a, const EnsembleStore& b);

}  // namespace hops
