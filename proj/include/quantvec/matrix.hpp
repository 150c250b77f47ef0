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
#include <numeric>
#include <span>
#include <unordered_set>
#include <utility>
#include <vector>

#include "quantvec/error.hpp"

namespace quantvec {

/// Row-major dense FP32 matrix with stable vector ids. Immutable after
/// construction; shared concurrent reads are safe.
class EmbeddingMatrix {
 public:
  EmbeddingMatrix() = default;

  /// Takes ownership of `data` (size n*dim) and `ids` (size n). Passing an
  /// empty id vector auto-assigns 0..n-1. Rejects non-finite entries and
  /// duplicate ids.
  EmbeddingMatrix(std::size_t dim, std::vector<float> data,
                  std::vector<std::uint64_t> ids = {})
      : dim_(dim), data_(std::move(data)), ids_(std::move(ids)) {
    if (dim_ == 0) throw ValidationError("matrix dimension must be positive");
    if (data_.size() % dim_ != 0) {
      throw DimensionMismatch("data size " + std::to_string(data_.size()) +
                              " is not a multiple of dim " + std::to_string(dim_));
    }
    count_ = data_.size() / dim_;
    if (ids_.empty()) {
      ids_.resize(count_);
      std::iota(ids_.begin(), ids_.end(), std::uint64_t{0});
    } else if (ids_.size() != count_) {
      throw DimensionMismatch("id count does not match row count");
    }
    for (const float v : data_) {
      if (!std::isfinite(v)) throw NonFiniteInput("matrix contains a non-finite value");
    }
    std::unordered_set<std::uint64_t> seen;
    seen.reserve(ids_.size());
    for (const std::uint64_t id : ids_) {
      if (!seen.insert(id).second) {
        throw ValidationError("duplicate vector id " + std::to_string(id));
      }
    }
  }

  std::size_t dim() const { return dim_; }
  std::size_t count() const { return count_; }
  bool empty() const { return count_ == 0; }

  std::span<const float> row(std::size_t i) const {
    return {data_.data() + i * dim_, dim_};
  }
  std::uint64_t id(std::size_t i) const { return ids_[i]; }
  const std::vector<std::uint64_t>& ids() const { return ids_; }
  std::span<const float> data() const { return data_; }

  /// New matrix holding the given rows (in the given order), ids preserved.
  EmbeddingMatrix take_rows(std::span<const std::size_t> rows) const {
    std::vector<float> data;
    data.reserve(rows.size() * dim_);
    std::vector<std::uint64_t> ids;
    ids.reserve(rows.size());
    for (const std::size_t r : rows) {
      const auto src = row(r);
      data.insert(data.end(), src.begin(), src.end());
      ids.push_back(ids_[r]);
    }
    return EmbeddingMatrix(dim_, std::move(data), std::move(ids));
  }

 private:
  std::size_t dim_ = 0;
  std::size_t count_ = 0;
  std::vector<float> data_;
  std::vector<std::uint64_t> ids_;
};

}  // namespace quantvec
