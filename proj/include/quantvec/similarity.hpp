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
#include <vector>

#include "quantvec/error.hpp"
#include "quantvec/quantize.hpp"

namespace quantvec {

/// Dot product with a fixed 4-lane double accumulation scheme. Every cosine
/// in the library funnels through this one kernel, so a quantized store and
/// its dequantized FP32 image score bit-identically.
inline double dot_product(std::span<const float> a, std::span<const float> b) {
  const std::size_t n = a.size();
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 += double(a[i]) * double(b[i]);
    s1 += double(a[i + 1]) * double(b[i + 1]);
    s2 += double(a[i + 2]) * double(b[i + 2]);
    s3 += double(a[i + 3]) * double(b[i + 3]);
  }
  for (; i < n; ++i) s0 += double(a[i]) * double(b[i]);
  return (s0 + s1) + (s2 + s3);
}

inline double squared_norm(std::span<const float> a) { return dot_product(a, a); }

inline double vector_norm(std::span<const float> a) { return std::sqrt(squared_norm(a)); }

namespace detail {

inline void check_same_dim(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    throw DimensionMismatch(std::string(what) + ": dims " + std::to_string(a) +
                            " vs " + std::to_string(b));
  }
}

}  // namespace detail

/// Euclidean distance sqrt(sum (p_i - q_i)^2), any dimension.
inline double euclidean(std::span<const float> p, std::span<const float> q) {
  detail::check_same_dim(p.size(), q.size(), "euclidean");
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double d = double(p[i]) - double(q[i]);
    acc += d * d;
  }
  return std::sqrt(acc);
}

/// Cosine similarity dot(p,q) / (|p| |q|), in [-1, 1] up to rounding.
inline double cosine(std::span<const float> p, std::span<const float> q) {
  detail::check_same_dim(p.size(), q.size(), "cosine");
  const double np = vector_norm(p);
  const double nq = vector_norm(q);
  if (np == 0.0 || nq == 0.0) throw ZeroVector("cosine: zero vector");
  return dot_product(p, q) / (np * nq);
}

/// Root mean square error sqrt(sum (p_i - q_i)^2 / N).
inline double rmse(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw LengthMismatch("rmse: length mismatch");
  if (p.empty()) throw EmptyInput("rmse: empty input");
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double d = p[i] - q[i];
    acc += d * d;
  }
  return std::sqrt(acc / double(p.size()));
}

/// Sample Pearson correlation, in [-1, 1]. Rejects constant inputs.
inline double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw LengthMismatch("pearson: length mismatch");
  if (x.size() < 2) throw ValidationError("pearson: need at least 2 samples");
  const double n = double(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) throw ConstantInput("pearson: constant input");
  return sxy / std::sqrt(sxx * syy);
}

namespace detail {

inline void check_same_payload(const QuantizedVector& a, const QuantizedVector& b) {
  if (a.dt != b.dt) throw DTypeMismatch("quantized cosine: dtype mismatch");
  check_same_dim(a.dim, b.dim, "quantized cosine");
}

inline std::vector<float> dequantize_image(const QuantizedVector& v) {
  QuantizedStore one(v.dt, v.dim, v.codes, v.scales, {0});
  std::vector<float> out(v.dim);
  one.dequantize_row(0, out);
  return out;
}

}  // namespace detail

/// Cosine between two quantized vectors, scored over their FP32 images
/// (groups are reconstructed on the fly; the full vectors are never stored).
/// By construction this equals cosine(dequantize(a), dequantize(b)) exactly,
/// which is what makes quantized retrieval agree with the float baseline
/// including tie-breaks.
inline double cosine_quantized(const QuantizedVector& a, const QuantizedVector& b) {
  detail::check_same_payload(a, b);
  const auto xa = detail::dequantize_image(a);
  const auto xb = detail::dequantize_image(b);
  return cosine(xa, xb);
}

/// Pure-integer formulation of the quantized cosine for int8/int4: per group
/// g, dot += S_a,g * S_b,g * (64-bit integer dot of the group codes), and the
/// norms use the same per-group S^2 * self-dot. Groups accumulate in index
/// order. Agrees with cosine_quantized within floating-point association
/// (<= 1e-6); kept as the arithmetic kernel integer hardware would run.
inline double cosine_quantized_intdot(const QuantizedVector& a,
                                      const QuantizedVector& b) {
  detail::check_same_payload(a, b);
  if (!a.dt.is_integer()) return cosine_quantized(a, b);
  const std::size_t d = a.dim;
  const std::size_t g = a.dt.effective_group(a.dim);
  const bool nib = a.dt.kind == DTypeKind::INT4;
  double num = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t off = 0, s = 0; off < d; off += g, ++s) {
    const std::size_t len = std::min(g, d - off);
    std::int64_t dab = 0, daa = 0, dbb = 0;
    for (std::size_t i = off; i < off + len; ++i) {
      const std::int64_t ca = nib ? unpack_int4_nibble(a.codes[i / 2], i % 2 != 0)
                                  : std::int8_t(a.codes[i]);
      const std::int64_t cb = nib ? unpack_int4_nibble(b.codes[i / 2], i % 2 != 0)
                                  : std::int8_t(b.codes[i]);
      dab += ca * cb;
      daa += ca * ca;
      dbb += cb * cb;
    }
    const double sa = double(a.scales[s]);
    const double sb = double(b.scales[s]);
    num += sa * sb * double(dab);
    na += sa * sa * double(daa);
    nb += sb * sb * double(dbb);
  }
  if (na == 0.0 || nb == 0.0) throw ZeroVector("quantized cosine: zero vector");
  return num / std::sqrt(na * nb);
}

/// Mixed-precision cosine: full-precision query against integer codes,
/// dot = sum_g S_g * (sum_i q_i * c_i). The query-side norm is the float
/// norm; the database-side norm uses S^2 * integer self-dot.
inline double cosine_mixed(std::span<const float> query, const QuantizedVector& b) {
  detail::check_same_dim(query.size(), b.dim, "mixed cosine");
  if (!b.dt.is_integer()) {
    const auto xb = detail::dequantize_image(b);
    return cosine(query, xb);
  }
  const std::size_t d = b.dim;
  const std::size_t g = b.dt.effective_group(b.dim);
  const bool nib = b.dt.kind == DTypeKind::INT4;
  double num = 0.0, nb = 0.0;
  for (std::size_t off = 0, s = 0; off < d; off += g, ++s) {
    const std::size_t len = std::min(g, d - off);
    double dqb = 0.0;
    std::int64_t dbb = 0;
    for (std::size_t i = off; i < off + len; ++i) {
      const std::int64_t cb = nib ? unpack_int4_nibble(b.codes[i / 2], i % 2 != 0)
                                  : std::int8_t(b.codes[i]);
      dqb += double(query[i]) * double(cb);
      dbb += cb * cb;
    }
    const double sb = double(b.scales[s]);
    num += sb * dqb;
    nb += sb * sb * double(dbb);
  }
  const double nq = vector_norm(query);
  if (nq == 0.0 || nb == 0.0) throw ZeroVector("mixed cosine: zero vector");
  return num / (nq * std::sqrt(nb));
}

}  // namespace quantvec
