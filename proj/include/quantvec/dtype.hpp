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

#include <cstdint>
#include <string>
#include <string_view>

#include "quantvec/error.hpp"

namespace quantvec {

enum class DTypeKind : std::uint8_t { FP32 = 0, BF16 = 1, INT8 = 2, INT4 = 3 };

/// Element type descriptor for a vector store. Integer kinds carry a group
/// size: each contiguous group of that many elements shares one scale factor.
/// group_size == kWholeVector means a single scale per vector.
struct DType {
  static constexpr std::uint32_t kWholeVector = 0;

  DTypeKind kind = DTypeKind::FP32;
  std::uint32_t group_size = kWholeVector;

  constexpr int bits() const {
    switch (kind) {
      case DTypeKind::FP32: return 32;
      case DTypeKind::BF16: return 16;
      case DTypeKind::INT8: return 8;
      case DTypeKind::INT4: return 4;
    }
    return 0;
  }

  constexpr bool is_integer() const {
    return kind == DTypeKind::INT8 || kind == DTypeKind::INT4;
  }

  constexpr bool whole_vector() const { return group_size == kWholeVector; }

  /// Group length actually used for a vector of dimension d.
  constexpr std::uint32_t effective_group(std::uint32_t d) const {
    return whole_vector() ? d : group_size;
  }

  friend constexpr bool operator==(const DType&, const DType&) = default;
};

constexpr DType kFp32{DTypeKind::FP32, DType::kWholeVector};
constexpr DType kBf16{DTypeKind::BF16, DType::kWholeVector};

/// Canonical spelling, e.g. "fp32", "int8", "int8:64", "int4:32", "int4".
inline std::string dtype_render(const DType& dt) {
  std::string s;
  switch (dt.kind) {
    case DTypeKind::FP32: return "fp32";
    case DTypeKind::BF16: return "bf16";
    case DTypeKind::INT8: s = "int8"; break;
    case DTypeKind::INT4: s = "int4"; break;
  }
  if (!dt.whole_vector()) s += ":" + std::to_string(dt.group_size);
  return s;
}

/// Parses `fp32 | bf16 | int8[:g] | int4[:g]`. Integer kinds default to one
/// scale per whole vector when :g is omitted.
inline DType dtype_parse(std::string_view text) {
  const auto colon = text.find(':');
  const std::string_view head = text.substr(0, colon);
  DType dt;
  if (head == "fp32") {
    dt.kind = DTypeKind::FP32;
  } else if (head == "bf16") {
    dt.kind = DTypeKind::BF16;
  } else if (head == "int8") {
    dt.kind = DTypeKind::INT8;
  } else if (head == "int4") {
    dt.kind = DTypeKind::INT4;
  } else {
    throw MalformedDType("unknown dtype token: \"" + std::string(text) + "\"");
  }
  if (colon == std::string_view::npos) return dt;
  if (!dt.is_integer()) {
    throw MalformedDType("group size is only valid for int8/int4: \"" +
                         std::string(text) + "\"");
  }
  const std::string_view tail = text.substr(colon + 1);
  if (tail.empty()) throw MalformedDType("missing group size: \"" + std::string(text) + "\"");
  std::uint64_t g = 0;
  for (const char c : tail) {
    if (c < '0' || c > '9') {
      throw MalformedDType("bad group size digits: \"" + std::string(text) + "\"");
    }
    g = g * 10 + std::uint64_t(c - '0');
    if (g > 0xffffffffULL) throw InvalidGroup("group size out of range: " + std::string(tail));
  }
  if (g == 0) throw InvalidGroup("group size must be positive: \"" + std::string(text) + "\"");
  dt.group_size = std::uint32_t(g);
  return dt;
}

/// Table-style labels as printed in reports: ("Int4", "32"), ("Bf16", "").
inline std::pair<std::string, std::string> dtype_table_label(const DType& dt) {
  switch (dt.kind) {
    case DTypeKind::FP32: return {"Fp32", ""};
    case DTypeKind::BF16: return {"Bf16", ""};
    case DTypeKind::INT8:
      return {"Int8", dt.whole_vector() ? "" : std::to_string(dt.group_size)};
    case DTypeKind::INT4:
      return {"Int4", dt.whole_vector() ? "" : std::to_string(dt.group_size)};
  }
  return {"", ""};
}

/// Scale count for one vector: ceil(d / g_eff); zero for float kinds.
inline std::uint64_t scales_per_vector(const DType& dt, std::uint64_t d) {
  if (!dt.is_integer() || d == 0) return 0;
  const std::uint64_t g = dt.whole_vector() ? d : dt.group_size;
  return (d + g - 1) / g;
}

/// Packed code payload for one vector, excluding scales.
inline std::uint64_t code_bytes_per_vector(const DType& dt, std::uint64_t d) {
  switch (dt.kind) {
    case DTypeKind::FP32: return 4 * d;
    case DTypeKind::BF16: return 2 * d;
    case DTypeKind::INT8: return d;
    case DTypeKind::INT4: return (d + 1) / 2;
  }
  return 0;
}

/// Total storage per vector: packed codes plus 4-byte scales.
inline std::uint64_t bytes_per_vector(const DType& dt, std::uint64_t d) {
  return code_bytes_per_vector(dt, d) + 4 * scales_per_vector(dt, d);
}

/// Store-size accounting for n vectors, computed without allocating anything.
struct StorageFootprint {
  std::uint64_t code_bytes = 0;
  std::uint64_t scale_bytes = 0;
  std::uint64_t total_bytes = 0;
};

inline StorageFootprint storage_footprint(const DType& dt, std::uint64_t d,
                                          std::uint64_t n) {
  StorageFootprint f;
  f.code_bytes = n * code_bytes_per_vector(dt, d);
  f.scale_bytes = n * 4 * scales_per_vector(dt, d);
  f.total_bytes = f.code_bytes + f.scale_bytes;
  return f;
}

}  // namespace quantvec
