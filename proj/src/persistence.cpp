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

#include "hops/persistence.hpp"

#include <cstring>

#include <json.hpp>
#include <openssl/evp.h>
#include <zlib.h>

#include "binary_io.hpp"

namespace hops {

namespace {

constexpr char kMagic[4] = {'H', 'O', 'P', 'S'};
constexpr std::size_t kRecordFixedBytes = 8 + 8 + 4 + 4 + 8 + 8 + 8;

std::uint32_t crc(std::string_view payload) {
  return static_cast<std::uint32_t>(
      crc32(crc32(0L, Z_NULL, 0), reinterpret_cast<const Bytef*>(payload.data()), static_cast<uInt>(payload.size())));
}

std::string encode_header(const StoreMetadata& metadata) {
  const std::string json = metadata.to_json();
  std::string out(kMagic, sizeof kMagic);
  detail::put_u32(out, kStoreVersion);
  detail::put_u64(out, json.size());
  out += json;
  return out;
}

std::string encode_record(const TrajectoryRecord& r) {
  std::string payload;
  payload.reserve(kRecordFixedBytes + 16 * static_cast<std::size_t>(r.samples.size()));
  detail::put_u64(payload, r.id);
  detail::put_u64(payload, r.seed);
  detail::put_u32(payload, static_cast<std::uint32_t>(r.kind));
  detail::put_u32(payload, r.aborted ? 1u : 0u);
  detail::put_f64(payload, r.t0);
  detail::put_f64(payload, r.dt_record);
  detail::put_u64(payload, static_cast<std::uint64_t>(r.samples.size()));
  for (Eigen::Index i = 0; i < r.samples.size(); ++i) {
    detail::put_f64(payload, r.samples[i].real());
    detail::put_f64(payload, r.samples[i].imag());
  }
  std::string framed;
  detail::put_u64(framed, payload.size());
  framed += payload;
  detail::put_u32(framed, crc(payload));
  return framed;
}

TrajectoryRecord decode_record(std::string_view payload) {
  detail::Reader in(payload);
  TrajectoryRecord r;
  r.id = in.u64();
  r.seed = in.u64();
  const std::uint32_t kind = in.u32();
  if (kind > 2) throw Error("unknown equation kind");
  r.kind = static_cast<Equation>(kind);
  r.aborted = in.u32() != 0;
  r.t0 = in.f64();
  r.dt_record = in.f64();
  const std::uint64_t n = in.u64();
  if (in.remaining() != n * 16) throw Error("sample count does not match payload length");
  r.samples.resize(static_cast<Eigen::Index>(n));
  for (std::uint64_t i = 0; i < n; ++i) {
    const double re = in.f64();
    r.samples[static_cast<Eigen::Index>(i)] = Complex(re, in.f64());
  }
  return r;
}

}  // namespace

std::string StoreMetadata::to_json() const {
  nlohmann::ordered_json j;
  j["model_hash"] = model_hash;
  j["equation"] = equation;
  j["depth"] = depth;
  j["dt"] = dt;
  j["dt_record"] = dt_record;
  j["n_records"] = n_records;
  j["master_seed"] = master_seed;
  j["mu_tot_sq"] = mu_tot_sq;
  return j.dump();
}

StoreMetadata StoreMetadata::from_json(std::string_view text) {
  try {
    const auto j = nlohmann::json::parse(text);
    StoreMetadata m;
    m.model_hash = j.at("model_hash").get<std::string>();
    m.equation = j.at("equation").get<std::string>();
    m.depth = j.at("depth").get<int>();
    m.dt = j.at("dt").get<Real>();
    m.dt_record = j.at("dt_record").get<Real>();
    m.n_records = j.at("n_records").get<int>();
    m.master_seed = j.at("master_seed").get<std::uint64_t>();
    m.mu_tot_sq = j.at("mu_tot_sq").get<Real>();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("store metadata: ") + e.what());
  }
}

std::string content_hash(std::string_view data) {
  const std::string prefix = "blob " + std::to_string(data.size()) + std::string(1, '\0');
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int length = 0;
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  EVP_DigestUpdate(ctx, prefix.data(), prefix.size());
  EVP_DigestUpdate(ctx, data.data(), data.size());
  EVP_DigestFinal_ex(ctx, digest, &length);
  EVP_MD_CTX_free(ctx);
  static constexpr char kHex[] = "0123456789abcdef";
  std::string hex;
  for (unsigned int i = 0; i < length; ++i) {
    hex.push_back(kHex[digest[i] >> 4]);
    hex.push_back(kHex[digest[i] & 0xf]);
  }
  return hex;
}

StoreWriter::StoreWriter(const std::filesystem::path& path, const StoreMetadata& metadata) : path_(path) {
  if (std::filesystem::exists(path) && std::filesystem::file_size(path) > 0) {
    const StoreReadResult existing = read_store(path);
    if (!(existing.store.metadata == metadata))
      throw Error(path.string() + ": existing store has different metadata; refusing to append");
    if (existing.corrupt) throw Error(path.string() + ": existing store is " + existing.error);
    out_.open(path, std::ios::binary | std::ios::app);
  } else {
    out_.open(path, std::ios::binary | std::ios::trunc);
    const std::string header = encode_header(metadata);
    out_.write(header.data(), static_cast<std::streamsize>(header.size()));
  }
  if (!out_) throw Error("cannot write " + path.string());
}

void StoreWriter::append(const TrajectoryRecord& record) {
  const std::string framed = encode_record(record);
  out_.write(framed.data(), static_cast<std::streamsize>(framed.size()));
  if (!out_) throw Error("short write to " + path_.string());
}

void StoreWriter::flush() { out_.flush(); }

void write_store(const std::filesystem::path& path, std::span<const TrajectoryRecord> records,
                 const StoreMetadata& metadata) {
  for (const auto& r : records)
    if (metadata.equation != to_string(r.kind)) throw Error("write_store: record kind differs from metadata");
  std::filesystem::remove(path);
  StoreWriter writer(path, metadata);
  for (const auto& r : records) writer.append(r);
  writer.flush();
}

StoreReadResult read_store(const std::filesystem::path& path) {
  const std::string data = detail::read_file(path.string());
  detail::Reader in(data);
  if (!in.has(4) || in.bytes(4) != std::string_view(kMagic, 4)) throw Error(path.string() + ": not a HOPS store");
  if (!in.has(12)) throw Error(path.string() + ": truncated header");
  const std::uint32_t version = in.u32();
  if (version != kStoreVersion)
    throw Error(path.string() + ": unsupported store version " + std::to_string(version));
  const std::uint64_t meta_len = in.u64();
  if (!in.has(meta_len)) throw Error(path.string() + ": truncated metadata block");

  StoreReadResult result;
  result.store.metadata = StoreMetadata::from_json(in.bytes(meta_len));
  while (in.remaining() > 0) {
    const std::size_t index = result.store.records.size();
    try {
      const std::uint64_t len = in.u64();
      if (len < kRecordFixedBytes || !in.has(len + 4)) throw Error("truncated record");
      const std::string_view payload = in.bytes(len);
      if (in.u32() != crc(payload)) throw Error("checksum mismatch");
      result.store.records.push_back(decode_record(payload));
    } catch (const Error&) {
      result.corrupt = true;
      result.error = "corrupt after record " + std::to_string(index);
      break;
    }
  }
  return result;
}

EnsembleStore merge_stores(const EnsembleStore& a, const EnsembleStore& b) {
  if (a.metadata.model_hash != b.metadata.model_hash) throw Error("merge: stores have different model hashes");
  if (!(a.metadata == b.metadata)) throw Error("merge: stores have different run metadata");
  EnsembleStore out = a;
  out.records.insert(out.records.end(), b.records.begin(), b.records.end());
  return out;
}

}  // namespace hops
