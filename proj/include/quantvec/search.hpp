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

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <span>
#include <vector>

#include "quantvec/matrix.hpp"
#include "quantvec/parallel.hpp"
#include "quantvec/quantize.hpp"
#include "quantvec/similarity.hpp"

namespace quantvec {

struct Hit {
  std::uint64_t id = 0;
  double score = 0.0;
};

/// Exact top-k result for one query: hits in descending score order, ties
/// broken by ascending id. Length is min(k, database size).
struct TopKResult {
  std::uint64_t query_id = 0;
  std::vector<Hit> hits;
};

/// Rows with zero norm cannot be ranked by cosine; they score below every
/// real cosine value and still order deterministically by id.
constexpr double kZeroNormScore = -2.0;

namespace detail {

// Adapters giving knn one row access path for both storage forms. The store
// adapter reconstructs rows into a caller-owned buffer, so scores over a
// store are computed on exactly the floats its dequantized image holds.
struct MatrixRows {
  const EmbeddingMatrix& m;
  std::size_t dim() const { return m.dim(); }
  std::size_t count() const { return m.count(); }
  std::uint64_t id(std::size_t i) const { return m.id(i); }
  std::span<const float> row(std::size_t i, std::vector<float>&) const {
    return m.row(i);
  }
};

struct StoreRows {
  const QuantizedStore& s;
  std::size_t dim() const { return s.dim(); }
  std::size_t count() const { return s.count(); }
  std::uint64_t id(std::size_t i) const { return s.id(i); }
  std::span<const float> row(std::size_t i, std::vector<float>& buf) const {
    buf.resize(s.dim());
    s.dequantize_row(i, buf);
    return buf;
  }
};

template <typename Rows>
std::vector<double> row_norms(const Rows& rows, unsigned threads) {
  std::vector<double> norms(rows.count());
  parallel_for(rows.count(), threads, [&](std::size_t begin, std::size_t end) {
    std::vector<float> buf;
    for (std::size_t i = begin; i < end; ++i) {
      norms[i] = vector_norm(rows.row(i, buf));
    }
  });
  return norms;
}

inline std::vector<Hit> select_top_k(std::span<const double> scores,
                                     const std::vector<std::uint64_t>& ids,
                                     std::size_t k) {
  std::vector<std::uint32_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0u);
  const std::size_t kk = std::min(k, order.size());
  const auto better = [&](std::uint32_t a, std::uint32_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return ids[a] < ids[b];
  };
  std::partial_sort(order.begin(), order.begin() + kk, order.end(), better);
  std::vector<Hit> hits(kk);
  for (std::size_t r = 0; r < kk; ++r) {
    hits[r] = Hit{ids[order[r]], scores[order[r]]};
  }
  return hits;
}

template <typename QRows, typename DbRows>
std::vector<TopKResult> knn_impl(const QRows& queries, const DbRows& db,
                                 std::size_t k, unsigned threads) {
  check_same_dim(queries.dim(), db.dim(), "knn");
  if (k == 0) throw ValidationError("knn: k must be >= 1");
  const std::size_t nq = queries.count();
  const std::size_t nd = db.count();
  const std::vector<double> db_norms = row_norms(db, threads);
  std::vector<std::uint64_t> db_ids(nd);
  for (std::size_t i = 0; i < nd; ++i) db_ids[i] = db.id(i);

  std::vector<TopKResult> results(nq);
  const auto score_query = [&](std::size_t qi, std::vector<float>& qbuf,
                               std::vector<float>& dbuf,
                               std::vector<double>& scores, unsigned inner_threads) {
    const auto q = queries.row(qi, qbuf);
    const double qnorm = vector_norm(q);
    scores.resize(nd);
    parallel_for(nd, inner_threads, [&](std::size_t begin, std::size_t end) {
      std::vector<float> buf;
      std::vector<float>* rowbuf = inner_threads == 1 ? &dbuf : &buf;
      for (std::size_t i = begin; i < end; ++i) {
        const auto r = db.row(i, *rowbuf);
        const double denom = qnorm * db_norms[i];
        scores[i] = denom == 0.0 ? kZeroNormScore : dot_product(q, r) / denom;
      }
    });
    results[qi].query_id = queries.id(qi);
    results[qi].hits = select_top_k(scores, db_ids, k);
  };

  const unsigned t = resolve_threads(threads);
  if (nq >= t) {
    // Many queries: one thread per query stripe.
    parallel_for(nq, t, [&](std::size_t begin, std::size_t end) {
      std::vector<float> qbuf, dbuf;
      std::vector<double> scores;
      for (std::size_t qi = begin; qi < end; ++qi) {
        score_query(qi, qbuf, dbuf, scores, 1);
      }
    });
  } else {
    // Few queries: parallelize across database rows instead.
    std::vector<float> qbuf, dbuf;
    std::vector<double> scores;
    for (std::size_t qi = 0; qi < nq; ++qi) score_query(qi, qbuf, dbuf, scores, t);
  }
  return results;
}

}  // namespace detail

/// Exact brute-force top-k cosine retrieval over FP32 matrices.
inline std::vector<TopKResult> knn_float(const EmbeddingMatrix& queries,
                                         const EmbeddingMatrix& db, std::size_t k,
                                         unsigned threads = 0) {
  return detail::knn_impl(detail::MatrixRows{queries}, detail::MatrixRows{db}, k,
                          threads);
}

/// Exact top-k cosine retrieval over a quantized store. Scores are cosines
/// over the store's FP32 image, so the result — order and tie-breaks included
/// — is identical to knn_float over store.dequantize(). With quantize_queries,
/// each query is first pushed through the store's dtype (quantize then
/// reconstruct); otherwise the raw full-precision query is scored directly.
inline std::vector<TopKResult> knn_quantized(
    const EmbeddingMatrix& queries, const QuantizedStore& db, std::size_t k,
    bool quantize_queries = true,
    ScaleDenominator mode = ScaleDenominator::Symmetric, unsigned threads = 0) {
  if (db.empty()) throw EmptyInput("knn: empty database");
  detail::check_same_dim(queries.dim(), db.dim(), "knn");
  if (quantize_queries) {
    const QuantizedStore qstore = quantize_matrix(queries, db.dtype(), mode, threads);
    return detail::knn_impl(detail::StoreRows{qstore}, detail::StoreRows{db}, k,
                            threads);
  }
  return detail::knn_impl(detail::MatrixRows{queries}, detail::StoreRows{db}, k,
                          threads);
}

/// Pre-quantized queries variant; both sides must share one dtype.
inline std::vector<TopKResult> knn_quantized(const QuantizedStore& queries,
                                             const QuantizedStore& db, std::size_t k,
                                             unsigned threads = 0) {
  if (db.empty()) throw EmptyInput("knn: empty database");
  if (queries.dtype() != db.dtype()) {
    throw DTypeMismatch("knn: query store dtype differs from database dtype");
  }
  return detail::knn_impl(detail::StoreRows{queries}, detail::StoreRows{db}, k,
                          threads);
}

}  // namespace quantvec
