/* Copyright 2025 The QuantVec Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/
#pragma once

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "quantvec/bytes.hpp"
#include "quantvec/error.hpp"
#include "quantvec/matrix.hpp"
#include "quantvec/pq.hpp"
#include "quantvec/quantize.hpp"
#include "quantvec/rng.hpp"

namespace quantvec {

enum class IngestFormat { RAW_F32LE, JSONL, CSV };

inline std::string ingest_format_name(IngestFormat f) {
  switch (f) {
    case IngestFormat::RAW_F32LE: return "raw_f32le";
    case IngestFormat::JSONL: return "jsonl";
    case IngestFormat::CSV: return "csv";
  }
  return "";
}

inline IngestFormat ingest_format_parse(const std::string& s) {
  if (s == "raw" || s == "raw_f32le") return IngestFormat::RAW_F32LE;
  if (s == "jsonl") return IngestFormat::JSONL;
  if (s == "csv") return IngestFormat::CSV;
  throw ValidationError("unknown ingest format: " + s);
}

/// Reproducibility anchor for a dataset: where it came from, its shape, the
/// FNV-1a digest of its canonical FP32-LE payload, and any split applied.
struct DatasetManifest {
  std::vector<std::string> sources;
  std::uint64_t dim = 0;
  std::uint64_t count = 0;
  std::string encoding;
  std::uint64_t checksum = 0;
  std::optional<std::uint64_t> split_seed;
  std::optional<std::pair<std::uint64_t, std::uint64_t>> split_sizes;
};

/// Digest of the matrix data as little-endian float32 bytes; format
/// independent, so raw/jsonl/csv ingests of the same vectors agree.
inline std::uint64_t matrix_checksum(const EmbeddingMatrix& m) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  std::uint8_t le[4];
  for (const float v : m.data()) {
    store_le_f32(le, v);
    h = fnv1a64(le, 4, h);
  }
  return h;
}

namespace detail {

inline std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::vector<std::uint8_t> bytes{std::istreambuf_iterator<char>(in),
                                  std::istreambuf_iterator<char>()};
  if (in.bad()) throw IoError("read failed: " + path);
  return bytes;
}

inline void write_file(const std::string& path, const std::uint8_t* data,
                       std::size_t size) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path);
  out.write(reinterpret_cast<const char*>(data), std::streamsize(size));
  if (!out) throw IoError("write failed: " + path);
}

inline double parse_number(std::string_view tok, std::size_t line) {
  const char* begin = tok.data();
  const char* end = begin + tok.size();
  double v = 0.0;
  const auto res = std::from_chars(begin, end, v);
  if (res.ec != std::errc{} || res.ptr != end) {
    throw ParseError("line " + std::to_string(line) + ": bad number \"" +
                     std::string(tok) + "\"");
  }
  return v;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) {
    s.remove_prefix(1);
  }
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
    s.remove_suffix(1);
  }
  return s;
}

}  // namespace detail

struct IngestResult {
  EmbeddingMatrix matrix;
  DatasetManifest manifest;
};

/// Loads a vector file into an EmbeddingMatrix. Every row must carry exactly
/// `dim` finite values. JSONL rows are objects with a required "vector" array
/// and an optional "id"; rows without an id get their 0-based row index.
inline IngestResult ingest(const std::string& path, IngestFormat format,
                           std::size_t dim) {
  if (dim == 0) throw ValidationError("ingest: dim must be positive");
  std::vector<float> data;
  std::vector<std::uint64_t> ids;
  bool any_explicit_id = false;

  if (format == IngestFormat::RAW_F32LE) {
    const auto bytes = detail::read_file(path);
    if (bytes.size() % (4 * dim) != 0) {
      throw ParseError(path + ": size " + std::to_string(bytes.size()) +
                       " is not a multiple of 4*dim");
    }
    const std::size_t n = bytes.size() / (4 * dim);
    data.resize(n * dim);
    for (std::size_t i = 0; i < data.size(); ++i) {
      data[i] = load_le_f32(bytes.data() + 4 * i);
      if (!std::isfinite(data[i])) {
        throw NonFiniteValue("row " + std::to_string(i / dim) +
                             ": non-finite value");
      }
    }
  } else {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    std::string line;
    std::size_t line_no = 0;
    std::size_t row = 0;
    while (std::getline(in, line)) {
      ++line_no;
      const std::string_view sv = detail::trim(line);
      if (sv.empty()) continue;
      if (format == IngestFormat::JSONL) {
        nlohmann::json j = nlohmann::json::parse(sv, nullptr, false);
        if (j.is_discarded() || !j.is_object()) {
          throw ParseError("line " + std::to_string(line_no) + ": bad JSON object");
        }
        if (!j.contains("vector") || !j["vector"].is_array()) {
          throw ParseError("line " + std::to_string(line_no) +
                           ": missing \"vector\" array");
        }
        const auto& vec = j["vector"];
        if (vec.size() != dim) {
          throw DimensionMismatch("line " + std::to_string(line_no) + ": got " +
                                  std::to_string(vec.size()) + " values, want " +
                                  std::to_string(dim));
        }
        for (const auto& e : vec) {
          if (!e.is_number()) {
            throw ParseError("line " + std::to_string(line_no) +
                             ": vector entries must be numbers");
          }
          const double v = e.get<double>();
          if (!std::isfinite(v)) {
            throw NonFiniteValue("line " + std::to_string(line_no) +
                                 ": non-finite value");
          }
          data.push_back(float(v));
        }
        if (j.contains("id")) {
          if (!j["id"].is_number_unsigned()) {
            throw ParseError("line " + std::to_string(line_no) +
                             ": \"id\" must be an unsigned integer");
          }
          ids.push_back(j["id"].get<std::uint64_t>());
          any_explicit_id = true;
        } else {
          ids.push_back(row);
        }
      } else {  // CSV
        std::size_t values = 0;
        std::size_t pos = 0;
        while (true) {
          const std::size_t comma = sv.find(',', pos);
          const std::string_view tok =
              detail::trim(sv.substr(pos, comma == std::string_view::npos
                                              ? std::string_view::npos
                                              : comma - pos));
          const double v = detail::parse_number(tok, line_no);
          if (!std::isfinite(v)) {
            throw NonFiniteValue("line " + std::to_string(line_no) +
                                 ": non-finite value");
          }
          data.push_back(float(v));
          ++values;
          if (comma == std::string_view::npos) break;
          pos = comma + 1;
        }
        if (values != dim) {
          throw DimensionMismatch("line " + std::to_string(line_no) + ": got " +
                                  std::to_string(values) + " values, want " +
                                  std::to_string(dim));
        }
        ids.push_back(row);
      }
      ++row;
    }
  }

  IngestResult out{
      EmbeddingMatrix(dim, std::move(data),
                      any_explicit_id || format != IngestFormat::JSONL
                          ? std::move(ids)
                          : std::vector<std::uint64_t>{}),
      {}};
  // JSONL with no explicit ids and raw/csv both auto-assign 0..n-1.
  out.manifest.sources = {path};
  out.manifest.dim = dim;
  out.manifest.count = out.matrix.count();
  out.manifest.encoding = ingest_format_name(format);
  out.manifest.checksum = matrix_checksum(out.matrix);
  return out;
}

inline std::string checksum_hex(std::uint64_t v) {
  char buf[19];
  std::snprintf(buf, sizeof buf, "0x%016llx", static_cast<unsigned long long>(v));
  return buf;
}

inline std::uint64_t checksum_from_hex(const std::string& s) {
  if (s.size() < 3 || s[0] != '0' || (s[1] != 'x' && s[1] != 'X')) {
    throw ParseError("bad checksum literal: " + s);
  }
  std::uint64_t v = 0;
  const auto res = std::from_chars(s.data() + 2, s.data() + s.size(), v, 16);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) {
    throw ParseError("bad checksum literal: " + s);
  }
  return v;
}

inline void save_manifest(const DatasetManifest& m, const std::string& path) {
  nlohmann::ordered_json j;
  j["sources"] = m.sources;
  j["dim"] = m.dim;
  j["count"] = m.count;
  j["encoding"] = m.encoding;
  j["checksum_fnv1a64"] = checksum_hex(m.checksum);
  if (m.split_seed) j["split_seed"] = *m.split_seed;
  if (m.split_sizes) {
    j["split_sizes"] = {m.split_sizes->first, m.split_sizes->second};
  }
  const std::string text = j.dump(2) + "\n";
  detail::write_file(path, reinterpret_cast<const std::uint8_t*>(text.data()),
                     text.size());
}

inline DatasetManifest load_manifest(const std::string& path) {
  const auto bytes = detail::read_file(path);
  nlohmann::json j = nlohmann::json::parse(bytes.begin(), bytes.end(), nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw ParseError("bad manifest: " + path);
  DatasetManifest m;
  try {
    m.sources = j.at("sources").get<std::vector<std::string>>();
    m.dim = j.at("dim").get<std::uint64_t>();
    m.count = j.at("count").get<std::uint64_t>();
    m.encoding = j.at("encoding").get<std::string>();
    m.checksum = checksum_from_hex(j.at("checksum_fnv1a64").get<std::string>());
    if (j.contains("split_seed")) m.split_seed = j["split_seed"].get<std::uint64_t>();
    if (j.contains("split_sizes")) {
      const auto arr = j["split_sizes"];
      m.split_sizes = {arr.at(0).get<std::uint64_t>(), arr.at(1).get<std::uint64_t>()};
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("bad manifest " + path + ": " + e.what());
  }
  return m;
}

/// Recomputes the matrix digest and shape against a manifest.
inline void verify_manifest(const EmbeddingMatrix& m, const DatasetManifest& man) {
  if (m.dim() != man.dim || m.count() != man.count) {
    throw DimensionMismatch("manifest shape does not match matrix");
  }
  if (matrix_checksum(m) != man.checksum) {
    throw ChecksumMismatch("manifest checksum does not match matrix payload");
  }
}

// ---------------------------------------------------------------------------
// Quantized store container (QVST). Normative little-endian layout:
//
//   offset  size  field
//        0     4  magic "QVST"
//        4     2  format version (1)          u16
//        6     1  dtype kind (0=fp32 1=bf16 2=int8 3=int4)
//        7     1  reserved (0)
//        8     4  dim                         u32
//       12     8  count                       u64
//       20     4  group size (0=whole vector) u32
//       24     8  FNV-1a of the three blocks  u64
//       32        ids block: count * u64
//                 scales block: count * scales_per_vector * f32
//                 codes block: count * code_bytes_per_vector
//
// int4 codes are nibble-packed and padded per vector to whole bytes.
// ---------------------------------------------------------------------------

constexpr std::uint16_t kStoreFormatVersion = 1;
constexpr std::size_t kStoreHeaderSize = 32;

inline void save_store(const QuantizedStore& s, const std::string& path) {
  const std::uint64_t n = s.count();
  const std::uint64_t ids_bytes = 8 * n;
  const std::uint64_t scale_bytes = 4 * s.scales().size();
  const std::uint64_t code_bytes = s.codes().size();
  std::vector<std::uint8_t> buf(kStoreHeaderSize + ids_bytes + scale_bytes + code_bytes);

  std::uint8_t* p = buf.data() + kStoreHeaderSize;
  for (std::uint64_t i = 0; i < n; ++i, p += 8) store_le64(p, s.id(i));
  for (const float v : s.scales()) {
    store_le_f32(p, v);
    p += 4;
  }
  std::copy(s.codes().begin(), s.codes().end(), p);

  std::memcpy(buf.data(), "QVST", 4);
  store_le16(buf.data() + 4, kStoreFormatVersion);
  buf[6] = std::uint8_t(s.dtype().kind);
  buf[7] = 0;
  store_le32(buf.data() + 8, s.dim());
  store_le64(buf.data() + 12, n);
  store_le32(buf.data() + 20, s.dtype().group_size);
  store_le64(buf.data() + 24,
             fnv1a64(buf.data() + kStoreHeaderSize, buf.size() - kStoreHeaderSize));
  detail::write_file(path, buf.data(), buf.size());
}

inline QuantizedStore load_store(const std::string& path) {
  const auto buf = detail::read_file(path);
  if (buf.size() < kStoreHeaderSize) throw TruncatedFile(path + ": short header");
  if (std::memcmp(buf.data(), "QVST", 4) != 0) throw BadMagic(path + ": not a QVST file");
  const std::uint16_t version = load_le16(buf.data() + 4);
  if (version != kStoreFormatVersion) {
    throw VersionUnsupported(path + ": store format version " + std::to_string(version));
  }
  const std::uint8_t kind = buf[6];
  if (kind > 3) throw ParseError(path + ": unknown dtype kind");
  DType dt{DTypeKind(kind), load_le32(buf.data() + 20)};
  if (!dt.is_integer() && !dt.whole_vector()) {
    throw ParseError(path + ": group size on a float dtype");
  }
  const std::uint32_t dim = load_le32(buf.data() + 8);
  const std::uint64_t count = load_le64(buf.data() + 12);
  if (dim == 0) throw ParseError(path + ": zero dimension");
  const std::uint64_t want = kStoreHeaderSize + 8 * count +
                             4 * count * scales_per_vector(dt, dim) +
                             count * code_bytes_per_vector(dt, dim);
  if (buf.size() < want) throw TruncatedFile(path + ": payload shorter than header claims");
  if (buf.size() > want) throw ParseError(path + ": trailing bytes after payload");
  const std::uint64_t checksum = load_le64(buf.data() + 24);
  if (fnv1a64(buf.data() + kStoreHeaderSize, buf.size() - kStoreHeaderSize) != checksum) {
    throw ChecksumMismatch(path + ": payload checksum mismatch");
  }

  const std::uint8_t* p = buf.data() + kStoreHeaderSize;
  std::vector<std::uint64_t> ids(count);
  for (std::uint64_t i = 0; i < count; ++i, p += 8) ids[i] = load_le64(p);
  std::vector<float> scales(count * scales_per_vector(dt, dim));
  for (auto& v : scales) {
    v = load_le_f32(p);
    p += 4;
  }
  std::vector<std::uint8_t> codes(p, buf.data() + buf.size());
  return QuantizedStore(dt, dim, std::move(codes), std::move(scales), std::move(ids));
}

/// Fisher-Yates permutation under rng, then the first a rows and the next b
/// rows, original ids preserved.
inline std::pair<EmbeddingMatrix, EmbeddingMatrix> split(const EmbeddingMatrix& m,
                                                         std::uint64_t a,
                                                         std::uint64_t b, Rng& rng) {
  if (a + b > m.count()) {
    throw SizesExceedCount("split sizes " + std::to_string(a) + "+" +
                           std::to_string(b) + " exceed row count " +
                           std::to_string(m.count()));
  }
  std::vector<std::size_t> perm(m.count());
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  rng.shuffle(perm);
  return {m.take_rows({perm.data(), std::size_t(a)}),
          m.take_rows({perm.data() + a, std::size_t(b)})};
}

/// One numeric value per line (gold relatedness scores and the like).
inline std::vector<double> load_scores(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::vector<double> vals;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string_view sv = detail::trim(line);
    if (sv.empty()) continue;
    vals.push_back(detail::parse_number(sv, line_no));
  }
  return vals;
}

// ---------------------------------------------------------------------------
// PQ codebook container (PQCB):
//   magic "PQCB", version u16, reserved u16, dim u32, M u32, K u32,
//   max_iters u32, tol f64 bits, seed u64, checksum u64 (centroid block),
//   centroids M*K*(dim/M) f32 LE.
// PQ codes container (PQCS):
//   magic "PQCS", version u16, code width u8 (1 when K<=256 else 2),
//   reserved u8, M u32, K u32, count u64, checksum u64 (ids+codes),
//   ids count*u64, codes count*M*width LE.
// ---------------------------------------------------------------------------

inline void save_pq_codebook(const PQCodebook& cb, const std::string& path) {
  const auto& cfg = cb.config();
  const std::size_t header = 48;
  std::vector<std::uint8_t> buf(header + 4 * cb.centroids().size());
  std::uint8_t* p = buf.data() + header;
  for (const float v : cb.centroids()) {
    store_le_f32(p, v);
    p += 4;
  }
  std::memcpy(buf.data(), "PQCB", 4);
  store_le16(buf.data() + 4, 1);
  store_le16(buf.data() + 6, 0);
  store_le32(buf.data() + 8, cb.dim());
  store_le32(buf.data() + 12, cfg.num_subvectors);
  store_le32(buf.data() + 16, cfg.num_centroids);
  store_le32(buf.data() + 20, cfg.max_iters);
  store_le64(buf.data() + 24, std::bit_cast<std::uint64_t>(cfg.tol));
  store_le64(buf.data() + 32, cfg.seed);
  store_le64(buf.data() + 40, fnv1a64(buf.data() + header, buf.size() - header));
  detail::write_file(path, buf.data(), buf.size());
}

inline PQCodebook load_pq_codebook(const std::string& path) {
  const auto buf = detail::read_file(path);
  const std::size_t header = 48;
  if (buf.size() < header) throw TruncatedFile(path + ": short header");
  if (std::memcmp(buf.data(), "PQCB", 4) != 0) throw BadMagic(path + ": not a PQCB file");
  if (load_le16(buf.data() + 4) != 1) {
    throw VersionUnsupported(path + ": codebook format version");
  }
  PQConfig cfg;
  const std::uint32_t dim = load_le32(buf.data() + 8);
  cfg.num_subvectors = load_le32(buf.data() + 12);
  cfg.num_centroids = load_le32(buf.data() + 16);
  cfg.max_iters = load_le32(buf.data() + 20);
  cfg.tol = std::bit_cast<double>(load_le64(buf.data() + 24));
  cfg.seed = load_le64(buf.data() + 32);
  if (cfg.num_subvectors == 0 || dim == 0 || dim % cfg.num_subvectors != 0) {
    throw ParseError(path + ": bad codebook shape");
  }
  const std::uint64_t want =
      header + 4ULL * cfg.num_subvectors * cfg.num_centroids * (dim / cfg.num_subvectors);
  if (buf.size() < want) throw TruncatedFile(path + ": centroid block truncated");
  if (buf.size() > want) throw ParseError(path + ": trailing bytes after payload");
  if (fnv1a64(buf.data() + header, buf.size() - header) != load_le64(buf.data() + 40)) {
    throw ChecksumMismatch(path + ": centroid checksum mismatch");
  }
  std::vector<float> centroids((buf.size() - header) / 4);
  for (std::size_t i = 0; i < centroids.size(); ++i) {
    centroids[i] = load_le_f32(buf.data() + header + 4 * i);
  }
  return PQCodebook(cfg, dim, std::move(centroids));
}

inline void save_pq_codes(const PQCodes& codes, const std::string& path) {
  const std::size_t header = 32;
  const std::uint8_t width = codes.num_centroids <= 256 ? 1 : 2;
  const std::uint64_t n = codes.count();
  std::vector<std::uint8_t> buf(header + 8 * n + std::size_t(width) * codes.codes.size());
  std::uint8_t* p = buf.data() + header;
  for (const std::uint64_t id : codes.ids) {
    store_le64(p, id);
    p += 8;
  }
  for (const std::uint16_t c : codes.codes) {
    if (width == 1) {
      *p++ = std::uint8_t(c);
    } else {
      store_le16(p, c);
      p += 2;
    }
  }
  std::memcpy(buf.data(), "PQCS", 4);
  store_le16(buf.data() + 4, 1);
  buf[6] = width;
  buf[7] = 0;
  store_le32(buf.data() + 8, codes.num_subvectors);
  store_le32(buf.data() + 12, codes.num_centroids);
  store_le64(buf.data() + 16, n);
  store_le64(buf.data() + 24, fnv1a64(buf.data() + header, buf.size() - header));
  detail::write_file(path, buf.data(), buf.size());
}

inline PQCodes load_pq_codes(const std::string& path) {
  const auto buf = detail::read_file(path);
  const std::size_t header = 32;
  if (buf.size() < header) throw TruncatedFile(path + ": short header");
  if (std::memcmp(buf.data(), "PQCS", 4) != 0) throw BadMagic(path + ": not a PQCS file");
  if (load_le16(buf.data() + 4) != 1) {
    throw VersionUnsupported(path + ": codes format version");
  }
  const std::uint8_t width = buf[6];
  if (width != 1 && width != 2) throw ParseError(path + ": bad code width");
  PQCodes codes;
  codes.num_subvectors = load_le32(buf.data() + 8);
  codes.num_centroids = load_le32(buf.data() + 12);
  const std::uint64_t n = load_le64(buf.data() + 16);
  const std::uint64_t want =
      header + 8 * n + std::uint64_t(width) * n * codes.num_subvectors;
  if (buf.size() < want) throw TruncatedFile(path + ": codes truncated");
  if (buf.size() > want) throw ParseError(path + ": trailing bytes after payload");
  if (fnv1a64(buf.data() + header, buf.size() - header) != load_le64(buf.data() + 24)) {
    throw ChecksumMismatch(path + ": codes checksum mismatch");
  }
  const std::uint8_t* p = buf.data() + header;
  codes.ids.resize(n);
  for (std::uint64_t i = 0; i < n; ++i, p += 8) codes.ids[i] = load_le64(p);
  codes.codes.resize(n * codes.num_subvectors);
  for (auto& c : codes.codes) {
    if (width == 1) {
      c = *p++;
    } else {
      c = load_le16(p);
      p += 2;
    }
  }
  for (const std::uint16_t c : codes.codes) {
    if (c >= codes.num_centroids) throw ParseError(path + ": code index out of range");
  }
  return codes;
}

}  // namespace quantvec
