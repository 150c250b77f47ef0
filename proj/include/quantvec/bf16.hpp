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

#include <bit>
#include <cstdint>

namespace quantvec {

/// bfloat16: 1 sign bit, 8 exponent bits, 7 fraction bits — the upper half of
/// an IEEE-754 binary32. Stored as raw 16-bit patterns; arithmetic happens
/// after widening back to float.

inline float bf16_bits_to_float(std::uint16_t bits) {
  return std::bit_cast<float>(std::uint32_t(bits) << 16);
}

/// Round-to-nearest-even on the truncated mantissa. Finite values that would
/// round to infinity saturate to the largest finite bf16 instead; NaN stays
/// NaN (quiet bit forced).
inline std::uint16_t float_to_bf16_bits(float value) {
  std::uint32_t u = std::bit_cast<std::uint32_t>(value);
  const std::uint32_t exp = u & 0x7f800000u;
  if (exp == 0x7f800000u) {
    std::uint16_t hi = std::uint16_t(u >> 16);
    if ((u & 0x007fffffu) != 0) hi |= 0x0040;  // quiet NaN
    return hi;
  }
  u += 0x7fffu + ((u >> 16) & 1u);  // round to nearest, ties to even
  std::uint16_t hi = std::uint16_t(u >> 16);
  if ((hi & 0x7f80u) == 0x7f80u) hi = (hi & 0x8000u) | 0x7f7fu;  // saturate
  return hi;
}

/// Nearest bf16 value of x, widened back to float.
inline float to_bf16(float x) { return bf16_bits_to_float(float_to_bf16_bits(x)); }

}  // namespace quantvec
