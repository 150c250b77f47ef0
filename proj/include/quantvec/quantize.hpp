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

#include <cmath>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "quantvec/bf16.hpp"
#include "quantvec/bytes.hpp"
#include "quantvec/dtype.hpp"
#include "quantvec/error.hpp"
#include "quantvec/matrix.hpp"
#include "quantvec/parallel.hpp"

namespace quantvec {

/// Choice of scale denominator for b-bit symmetric quantization.
///   Symmetric: S = max|x| / (2^(b-1) - 1). Full code range is usable and
///              nothing clips; this is the default.
///   Literal:   S = max|x| / (2^b - 1). Half the input range lands on the
///              clamp; kept selectable for comparison runs.
enum class ScaleDenominator { Symmetric, Literal };

constexpr int quant_denominator(int bits, ScaleDenominator mode) {
  return mode == ScaleDenominator::Symmetric ? (1 << (bits - 1)) - 1
                                             : (1 << bits) - 1;
}

struct GroupQuant {
  std::vector<std::int8_t> codes;
  double scale = 1.0;
};

/// b-bit symmetric linear quantization of one scale group:
///   S = max|x| / denom,  code_i = clamp(round(x_i / S), -2^(b-1), 2^(b-1)-1)
/// with round-half-away-from-zero. An all-zero group gets S = 1 and zero
/// codes so it round-trips exactly. The quotient is evaluated as
/// x_i * denom / max|x| in double, which is the well-conditioned form.
inline GroupQuant quantize_group(std::span<const float> x, int bits,
                                 ScaleDenominator mode = ScaleDenominator::Symmetric) {
  if (x.empty()) throw EmptyInput("quantize_group: empty input");
  if (bits != 4 && bits != 8) {
    throw ValidationError("quantize_group: bits must be 4 or 8");
  }
  float amax = 0.0f;
  for (const float v : x) {
    if (!std::isfinite(v)) throw NonFiniteInput("quantize_group: non-finite input");
    const float a = std::fabs(v);
    if (a > amax) amax = a;
  }
  GroupQuant out;
  out.codes.resize(x.size());
  if (amax == 0.0f) {
    out.scale = 1.0;
    return out;
  }
  const int denom = quant_denominator(bits, mode);
  const long lo = -(1L << (bits - 1));
  const long hi = (1L << (bits - 1)) - 1;
  out.scale = double(amax) / double(denom);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double t = double(x[i]) * double(denom) / double(amax);
    long c = std::lround(t);
    if (c < lo) c = lo;
    if (c > hi) c = hi;
    out.codes[i] = std::int8_t(c);
  }
  return out;
}

/// Inverse map: x_dq,i = S * code_i. Exact in double (24-bit scale times an
/// 8-bit code never rounds).
inline std::vector<double> dequantize_group(std::span<const std::int8_t> codes,
                                            double scale) {
  std::vector<double> x(codes.size());
  for (std::size_t i = 0; i < codes.size(); ++i) x[i] = scale * double(codes[i]);
  return x;
}

/// Packs int4 codes two per byte, even index in the low nibble, two's
/// complement nibbles. An odd tail is padded with a zero nibble.
inline std::vector<std::uint8_t> pack_int4(std::span<const std::int8_t> codes) {
  std::vector<std::uint8_t> bytes((codes.size() + 1) / 2, 0);
  for (std::size_t i = 0; i < codes.size(); ++i) {
    const int c = codes[i];
    if (c < -8 || c > 7) {
      throw CodeOutOfRange("pack_int4: code " + std::to_string(c) +
                           " outside [-8, 7]");
    }
    const std::uint8_t nib = std::uint8_t(c) & 0x0f;
    if (i % 2 == 0) {
      bytes[i / 2] |= nib;
    } else {
      bytes[i / 2] |= std::uint8_t(nib << 4);
    }
  }
  return bytes;
}

inline std::int8_t unpack_int4_nibble(std::uint8_t byte, bool high) {
  const std::uint8_t nib = high ? (byte >> 4) : (byte & 0x0f);
  return std::int8_t(nib >= 8 ? int(nib) - 16 : int(nib));
}

inline std::vector<std::int8_t> unpack_int4(std::span<const std::uint8_t> bytes,
                                            std::size_t count) {
  if (bytes.size() * 2 < count) throw TruncatedFile("unpack_int4: short byte run");
  std::vector<std::int8_t> codes(count);
  for (std::size_t i = 0; i < count; ++i) {
    codes[i] = unpack_int4_nibble(bytes[i / 2], i % 2 != 0);
  }
  return codes;
}

/// One vector's worth of store payload: packed codes plus per-group scales
/// (scales are narrowed to 4-byte floats; empty for fp32/bf16).
struct QuantizedVector {
  DType dt;
  std::uint32_t dim = 0;
  std::vector<std::uint8_t> codes;
  std::vector<float> scales;
};

namespace detail {

inline void check_group_divides(const DType& dt, std::size_t d) {
  if (dt.is_integer() && !dt.whole_vector() && d % dt.group_size != 0) {
    throw IndivisibleGroup("dim " + std::to_string(d) +
                           " is not divisible by group size " +
                           std::to_string(dt.group_size));
  }
}

// Quantizes one row into preallocated code/scale slots.
inline void quantize_row_into(std::span<const float> x, const DType& dt,
                              ScaleDenominator mode, std::uint8_t* code_out,
                              float* scale_out) {
  const std::size_t d = x.size();
  switch (dt.kind) {
    case DTypeKind::FP32:
      for (std::size_t i = 0; i < d; ++i) store_le_f32(code_out + 4 * i, x[i]);
      return;
    case DTypeKind::BF16:
      for (std::size_t i = 0; i < d; ++i) {
        store_le16(code_out + 2 * i, float_to_bf16_bits(x[i]));
      }
      return;
    case DTypeKind::INT8: {
      const std::size_t g = dt.effective_group(std::uint32_t(d));
      for (std::size_t off = 0, s = 0; off < d; off += g, ++s) {
        const auto q = quantize_group(x.subspan(off, std::min(g, d - off)), 8, mode);
        scale_out[s] = float(q.scale);
        for (std::size_t i = 0; i < q.codes.size(); ++i) {
          code_out[off + i] = std::uint8_t(q.codes[i]);
        }
      }
      return;
    }
    case DTypeKind::INT4: {
      const std::size_t g = dt.effective_group(std::uint32_t(d));
      std::vector<std::int8_t> all(d);
      for (std::size_t off = 0, s = 0; off < d; off += g, ++s) {
        const auto q = quantize_group(x.subspan(off, std::min(g, d - off)), 4, mode);
        scale_out[s] = float(q.scale);
        std::copy(q.codes.begin(), q.codes.end(), all.begin() + off);
      }
      const auto packed = pack_int4(all);
      std::copy(packed.begin(), packed.end(), code_out);
      return;
    }
  }
}

}  // namespace detail

/// Quantizes one vector: split into consecutive groups of dt.group_size
/// elements, each group scaled independently, int4 codes nibble-packed.
inline QuantizedVector quantize_vector(std::span<const float> x, const DType& dt,
                                       ScaleDenominator mode = ScaleDenominator::Symmetric) {
  if (x.empty()) throw EmptyInput("quantize_vector: empty input");
  detail::check_group_divides(dt, x.size());
  QuantizedVector qv;
  qv.dt = dt;
  qv.dim = std::uint32_t(x.size());
  qv.codes.resize(code_bytes_per_vector(dt, x.size()));
  qv.scales.resize(scales_per_vector(dt, x.size()));
  detail::quantize_row_into(x, dt, mode, qv.codes.data(), qv.scales.data());
  return qv;
}

/// Compressed database: one dtype, contiguous per-vector payloads, stable ids.
/// Immutable once built; reads are thread-safe.
class QuantizedStore {
 public:
  QuantizedStore() = default;

  QuantizedStore(DType dt, std::uint32_t dim, std::vector<std::uint8_t> codes,
                 std::vector<float> scales, std::vector<std::uint64_t> ids)
      : dt_(dt), dim_(dim), codes_(std::move(codes)), scales_(std::move(scales)),
        ids_(std::move(ids)) {
    if (dim_ == 0) throw ValidationError("store dimension must be positive");
    detail::check_group_divides(dt_, dim_);
    count_ = ids_.size();
    if (codes_.size() != count_ * code_bytes_per_vector(dt_, dim_) ||
        scales_.size() != count_ * scales_per_vector(dt_, dim_)) {
      throw ValidationError("store payload size does not match dtype layout");
    }
  }

  DType dtype() const { return dt_; }
  std::uint32_t dim() const { return dim_; }
  std::size_t count() const { return count_; }
  bool empty() const { return count_ == 0; }
  const std::vector<std::uint64_t>& ids() const { return ids_; }
  std::uint64_t id(std::size_t i) const { return ids_[i]; }
  const std::vector<std::uint8_t>& codes() const { return codes_; }
  const std::vector<float>& scales() const { return scales_; }

  std::uint64_t code_bytes_per_row() const { return code_bytes_per_vector(dt_, dim_); }
  std::uint64_t scales_per_row() const { return scales_per_vector(dt_, dim_); }

  /// Codes + scales payload in bytes; equals count * bytes_per_vector(dt, dim).
  std::uint64_t payload_bytes() const { return codes_.size() + 4 * scales_.size(); }

  std::span<const std::uint8_t> row_codes(std::size_t i) const {
    const std::uint64_t w = code_bytes_per_row();
    return {codes_.data() + i * w, std::size_t(w)};
  }
  std::span<const float> row_scales(std::size_t i) const {
    const std::uint64_t w = scales_per_row();
    return {scales_.data() + i * w, std::size_t(w)};
  }

  QuantizedVector vector_at(std::size_t i) const {
    QuantizedVector qv;
    qv.dt = dt_;
    qv.dim = dim_;
    const auto c = row_codes(i);
    const auto s = row_scales(i);
    qv.codes.assign(c.begin(), c.end());
    qv.scales.assign(s.begin(), s.end());
    return qv;
  }

  /// Reconstructs row i into `out` (size dim). This is the store's FP32
  /// image: bf16 widening is exact; integer kinds produce float(scale * code).
  void dequantize_row(std::size_t i, std::span<float> out) const {
    const std::uint8_t* codes = codes_.data() + i * code_bytes_per_row();
    const float* scales = scales_.data() + i * scales_per_row();
    dequantize_payload(codes, scales, out);
  }

  void dequantize_payload(const std::uint8_t* codes, const float* scales,
                          std::span<float> out) const {
    switch (dt_.kind) {
      case DTypeKind::FP32:
        for (std::size_t j = 0; j < dim_; ++j) out[j] = load_le_f32(codes + 4 * j);
        return;
      case DTypeKind::BF16:
        for (std::size_t j = 0; j < dim_; ++j) {
          out[j] = bf16_bits_to_float(load_le16(codes + 2 * j));
        }
        return;
      case DTypeKind::INT8: {
        const std::size_t g = dt_.effective_group(dim_);
        for (std::size_t j = 0; j < dim_; ++j) {
          out[j] = scales[j / g] * float(std::int8_t(codes[j]));
        }
        return;
      }
      case DTypeKind::INT4: {
        const std::size_t g = dt_.effective_group(dim_);
        for (std::size_t j = 0; j < dim_; ++j) {
          out[j] = scales[j / g] * float(unpack_int4_nibble(codes[j / 2], j % 2 != 0));
        }
        return;
      }
    }
  }

  /// Full FP32 image with the original ids.
  EmbeddingMatrix dequantize(unsigned threads = 0) const {
    std::vector<float> data(count_ * dim_);
    parallel_for(count_, threads, [&](std::size_t begin, std::size_t end) {
      for (std::size_t i = begin; i < end; ++i) {
        dequantize_row(i, {data.data() + i * dim_, dim_});
      }
    });
    return EmbeddingMatrix(dim_, std::move(data), ids_);
  }

 private:
  DType dt_;
  std::uint32_t dim_ = 0;
  std::size_t count_ = 0;
  std::vector<std::uint8_t> codes_;
  std::vector<float> scales_;
  std::vector<std::uint64_t> ids_;
};

/// Quantizes a whole matrix, rows in parallel, ids carried over.
inline QuantizedStore quantize_matrix(const EmbeddingMatrix& m, const DType& dt,
                                      ScaleDenominator mode = ScaleDenominator::Symmetric,
                                      unsigned threads = 0) {
  detail::check_group_divides(dt, m.dim());
  const std::uint64_t cb = code_bytes_per_vector(dt, m.dim());
  const std::uint64_t sp = scales_per_vector(dt, m.dim());
  std::vector<std::uint8_t> codes(m.count() * cb);
  std::vector<float> scales(m.count() * sp);
  parallel_for(m.count(), threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      detail::quantize_row_into(m.row(i), dt, mode, codes.data() + i * cb,
                                scales.data() + i * sp);
    }
  });
  return QuantizedStore(dt, std::uint32_t(m.dim()), std::move(codes),
                        std::move(scales), m.ids());
}

}  // namespace quantvec
