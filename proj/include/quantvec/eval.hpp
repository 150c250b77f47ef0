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
#include <map>
#include <optional>
#include <string>
#include <unordered_set>
#include <variant>
#include <vector>

#include "quantvec/dtype.hpp"
#include "quantvec/error.hpp"
#include "quantvec/io.hpp"
#include "quantvec/matrix.hpp"
#include "quantvec/pq.hpp"
#include "quantvec/quantize.hpp"
#include "quantvec/rng.hpp"
#include "quantvec/search.hpp"
#include "quantvec/similarity.hpp"

namespace quantvec {

struct PQSpec {
  std::uint32_t num_subvectors = 0;  // M
  std::uint32_t num_centroids = 0;   // K
  friend constexpr bool operator==(const PQSpec&, const PQSpec&) = default;
};

/// A compression method under evaluation: a scalar dtype or a PQ config.
using Method = std::variant<DType, PQSpec>;

/// Parses "fp32", "int4:32", ..., or "pq:M:K".
inline Method method_parse(const std::string& text) {
  if (text.rfind("pq:", 0) == 0) {
    const auto rest = text.substr(3);
    const auto colon = rest.find(':');
    if (colon == std::string::npos) {
      throw MalformedDType("pq method needs pq:M:K, got \"" + text + "\"");
    }
    PQSpec pq;
    try {
      pq.num_subvectors = std::uint32_t(std::stoul(rest.substr(0, colon)));
      pq.num_centroids = std::uint32_t(std::stoul(rest.substr(colon + 1)));
    } catch (const std::exception&) {
      throw MalformedDType("bad pq method \"" + text + "\"");
    }
    if (pq.num_subvectors == 0 || pq.num_centroids == 0) {
      throw MalformedDType("pq method needs positive M and K");
    }
    return pq;
  }
  return dtype_parse(text);
}

/// Report label pair: ("Int4", "32") or ("PQ[32,256]", "").
inline std::pair<std::string, std::string> method_table_label(const Method& m) {
  if (const auto* dt = std::get_if<DType>(&m)) return dtype_table_label(*dt);
  const auto& pq = std::get<PQSpec>(m);
  return {"PQ[" + std::to_string(pq.num_subvectors) + "," +
              std::to_string(pq.num_centroids) + "]",
          ""};
}

/// Sort key implementing "rows in declining precision": fp32, bf16, int8,
/// int4 (small groups first, whole vector last), then PQ by descending code
/// budget.
inline std::pair<int, std::int64_t> method_rank(const Method& m) {
  if (const auto* dt = std::get_if<DType>(&m)) {
    const std::int64_t g =
        dt->whole_vector() ? std::int64_t(1) << 40 : std::int64_t(dt->group_size);
    switch (dt->kind) {
      case DTypeKind::FP32: return {0, 0};
      case DTypeKind::BF16: return {1, 0};
      case DTypeKind::INT8: return {2, g};
      case DTypeKind::INT4: return {3, g};
    }
  }
  const auto& pq = std::get<PQSpec>(m);
  std::int64_t bits = 0;
  for (std::uint32_t k = pq.num_centroids; k > 1; k = (k + 1) / 2) ++bits;
  return {4, -std::int64_t(pq.num_subvectors) * std::max<std::int64_t>(bits, 1)};
}

inline void sort_methods(std::vector<Method>& methods) {
  std::stable_sort(methods.begin(), methods.end(), [](const Method& a, const Method& b) {
    return method_rank(a) < method_rank(b);
  });
}

enum class Experiment { RmsePairwise, RetrievalOverlap, StsCorrelation };

inline std::string experiment_name(Experiment e) {
  switch (e) {
    case Experiment::RmsePairwise: return "rmse_pairwise";
    case Experiment::RetrievalOverlap: return "retrieval_overlap";
    case Experiment::StsCorrelation: return "sts_correlation";
  }
  return "";
}

struct EvalRow {
  std::string label;   // "Fp32", "Bf16", "Int8", "Int4", "PQ[32,256]"
  std::string config;  // group size for grouped dtypes, else ""
  double value = 0.0;
  double baseline = 0.0;
  std::optional<double> ratio;  // value / baseline when the baseline is nonzero
};

/// Binned value counts (the similarity-distribution companion of the RMSE
/// table): `bins` uniform buckets over [lo, hi], out-of-range values counted
/// into the edge buckets.
struct Histogram {
  std::string label;
  double lo = -1.0;
  double hi = 1.0;
  std::vector<std::uint64_t> counts;
};

inline Histogram make_histogram(const std::string& label,
                                std::span<const double> values, std::size_t bins = 100,
                                double lo = -1.0, double hi = 1.0) {
  Histogram h{label, lo, hi, std::vector<std::uint64_t>(bins, 0)};
  for (const double v : values) {
    double t = (v - lo) / (hi - lo) * double(bins);
    std::int64_t b = std::int64_t(t);
    if (b < 0) b = 0;
    if (b >= std::int64_t(bins)) b = std::int64_t(bins) - 1;
    ++h.counts[std::size_t(b)];
  }
  return h;
}

/// Structured experiment results. Rows are sorted by declining precision;
/// the FP32 row is always the identity baseline. String metadata keeps
/// serialization deterministic (std::map iterates in key order).
struct EvalReport {
  Experiment experiment = Experiment::RmsePairwise;
  std::vector<EvalRow> rows;
  std::vector<Histogram> histograms;
  std::map<std::string, std::string> metadata;
};

struct EvalOptions {
  unsigned threads = 0;
  ScaleDenominator scale_denominator = ScaleDenominator::Symmetric;
  bool quantize_queries = true;
  std::uint32_t pq_max_iters = 25;
  double pq_tol = 1e-4;
  std::optional<double> reference_hnsw_accuracy;  // echoed into metadata only
  std::string dataset_label;                      // STS reports
};

namespace detail {

inline std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::vector<std::size_t> sample_without_replacement(std::size_t n,
                                                           std::size_t want, Rng& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t i = 0; i < want; ++i) {
    const std::size_t j = i + std::size_t(rng.next_below(n - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(want);
  return idx;
}

/// All C(n,2) pairwise cosines of `m`, pairs in lexicographic (i, j<i..n)
/// order, computed in parallel into a dense vector.
inline std::vector<double> pairwise_cosines(const EmbeddingMatrix& m, unsigned threads) {
  const std::size_t n = m.count();
  std::vector<double> norms(n);
  for (std::size_t i = 0; i < n; ++i) norms[i] = vector_norm(m.row(i));
  std::vector<std::pair<std::uint32_t, std::uint32_t>> pairs;
  pairs.reserve(n * (n - 1) / 2);
  for (std::uint32_t i = 0; i < n; ++i) {
    for (std::uint32_t j = i + 1; j < n; ++j) pairs.emplace_back(i, j);
  }
  std::vector<double> vals(pairs.size());
  parallel_for(pairs.size(), threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t p = begin; p < end; ++p) {
      const auto [i, j] = pairs[p];
      const double denom = norms[i] * norms[j];
      if (denom == 0.0) throw ZeroVector("pairwise cosine: zero vector in sample");
      vals[p] = dot_product(m.row(i), m.row(j)) / denom;
    }
  });
  return vals;
}

}  // namespace detail

/// Pairwise-cosine RMSE experiment: sample `sample_n` vectors, take all
/// C(sample_n, 2) FP32 cosines as the baseline, then per dtype quantize the
/// sample and report the RMSE of the quantized-pair cosines against the
/// baseline. Histograms of each distribution ride along in the report.
inline EvalReport eval_pairwise_rmse(const EmbeddingMatrix& db,
                                     std::vector<DType> dtypes, std::size_t sample_n,
                                     Rng& rng, const EvalOptions& opt = {}) {
  if (sample_n > db.count()) {
    throw SampleTooLarge("sample_n " + std::to_string(sample_n) + " exceeds " +
                         std::to_string(db.count()) + " rows");
  }
  if (sample_n < 2) throw ValidationError("pairwise RMSE needs sample_n >= 2");
  std::vector<Method> methods(dtypes.begin(), dtypes.end());
  sort_methods(methods);

  const auto idx = detail::sample_without_replacement(db.count(), sample_n, rng);
  const EmbeddingMatrix sample = db.take_rows(idx);
  const std::vector<double> baseline = detail::pairwise_cosines(sample, opt.threads);

  EvalReport rep;
  rep.experiment = Experiment::RmsePairwise;
  rep.histograms.push_back(make_histogram("Fp32", baseline));
  for (const auto& method : methods) {
    const DType dt = std::get<DType>(method);
    const QuantizedStore store =
        quantize_matrix(sample, dt, opt.scale_denominator, opt.threads);
    const EmbeddingMatrix image = store.dequantize(opt.threads);
    const std::vector<double> vals = detail::pairwise_cosines(image, opt.threads);
    const auto [label, config] = dtype_table_label(dt);
    rep.rows.push_back(EvalRow{label, config, rmse(vals, baseline), 0.0, std::nullopt});
    if (dt.kind != DTypeKind::FP32) {
      rep.histograms.push_back(make_histogram(label + (config.empty() ? "" : ":" + config), vals));
    }
  }
  rep.metadata["seed"] = std::to_string(rng.seed());
  rep.metadata["sample_n"] = std::to_string(sample_n);
  rep.metadata["pairs"] = std::to_string(baseline.size());
  rep.metadata["dim"] = std::to_string(db.dim());
  rep.metadata["scale_denominator"] =
      opt.scale_denominator == ScaleDenominator::Symmetric ? "symmetric" : "paper";
  return rep;
}

/// Greedy scan of the pool in rng-shuffled order, accepting a vector iff its
/// |cosine| against every previously accepted one stays below max_abs_cos.
/// Zero-norm rows are never accepted. Ids are preserved.
inline EmbeddingMatrix select_orthogonal_queries(const EmbeddingMatrix& pool,
                                                 std::size_t count, double max_abs_cos,
                                                 Rng& rng) {
  if (count == 0) throw ValidationError("query count must be >= 1");
  if (!(max_abs_cos > 0.0) || max_abs_cos > 1.0) {
    throw ValidationError("max_abs_cos must be in (0, 1]");
  }
  std::vector<std::size_t> order(pool.count());
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(order);
  std::vector<std::size_t> accepted;
  for (const std::size_t i : order) {
    if (accepted.size() == count) break;
    const auto cand = pool.row(i);
    if (vector_norm(cand) == 0.0) continue;
    bool ok = true;
    for (const std::size_t a : accepted) {
      if (std::abs(cosine(cand, pool.row(a))) >= max_abs_cos) {
        ok = false;
        break;
      }
    }
    if (ok) accepted.push_back(i);
  }
  if (accepted.size() < count) {
    throw InsufficientCandidates("found only " + std::to_string(accepted.size()) +
                                 " of " + std::to_string(count) +
                                 " mutually near-orthogonal vectors");
  }
  return pool.take_rows(accepted);
}

/// Retrieval-overlap experiment. The pool is permuted and split into a query
/// side and a database side; near-orthogonal queries come from the query
/// side; the FP32 top-k over the database side is the baseline; each method
/// re-runs the search over its compressed database and overlap accuracy is
/// |baseline ids ∩ method ids| / (k * n_queries), counted per query.
inline EvalReport eval_retrieval_overlap(const EmbeddingMatrix& pool,
                                         std::uint64_t train_n, std::uint64_t test_n,
                                         std::vector<Method> methods, std::size_t k,
                                         std::size_t n_queries, Rng& rng,
                                         const EvalOptions& opt = {},
                                         double max_abs_cos = 0.1) {
  sort_methods(methods);
  auto [train, test] = split(pool, train_n, test_n, rng);
  const EmbeddingMatrix queries =
      select_orthogonal_queries(train, n_queries, max_abs_cos, rng);

  // Post-hoc check of the selection property.
  double max_pair = 0.0;
  for (std::size_t i = 0; i < queries.count(); ++i) {
    for (std::size_t j = i + 1; j < queries.count(); ++j) {
      max_pair = std::max(max_pair, std::abs(cosine(queries.row(i), queries.row(j))));
    }
  }
  if (max_pair >= max_abs_cos) {
    throw InternalError("query selection violated its orthogonality bound");
  }

  const std::vector<TopKResult> baseline = knn_float(queries, test, k, opt.threads);
  std::size_t unique_hits = 0;
  {
    std::unordered_set<std::uint64_t> all;
    for (const auto& r : baseline) {
      for (const auto& h : r.hits) all.insert(h.id);
    }
    unique_hits = all.size();
  }

  EvalReport rep;
  rep.experiment = Experiment::RetrievalOverlap;
  const auto overlap_accuracy = [&](const std::vector<TopKResult>& res) {
    std::size_t total = 0;
    for (std::size_t q = 0; q < baseline.size(); ++q) {
      std::unordered_set<std::uint64_t> base_ids;
      for (const auto& h : baseline[q].hits) base_ids.insert(h.id);
      for (const auto& h : res[q].hits) total += base_ids.count(h.id);
    }
    return double(total) / (double(k) * double(n_queries));
  };

  for (const auto& method : methods) {
    std::vector<TopKResult> res;
    if (const auto* dt = std::get_if<DType>(&method)) {
      const QuantizedStore store =
          quantize_matrix(test, *dt, opt.scale_denominator, opt.threads);
      res = knn_quantized(queries, store, k, opt.quantize_queries,
                          opt.scale_denominator, opt.threads);
    } else {
      const auto& pq = std::get<PQSpec>(method);
      PQConfig cfg;
      cfg.num_subvectors = pq.num_subvectors;
      cfg.num_centroids = pq.num_centroids;
      cfg.max_iters = opt.pq_max_iters;
      cfg.tol = opt.pq_tol;
      cfg.seed = rng.derive((std::uint64_t(pq.num_subvectors) << 32) |
                            pq.num_centroids).seed();
      const PQCodebook cb = pq_fit(test, cfg, opt.threads);
      const PQCodes codes = pq_encode(test, cb, opt.threads);
      const EmbeddingMatrix recon = pq_reconstruct(codes, cb, opt.threads);
      res = knn_float(queries, recon, k, opt.threads);
    }
    const double acc = overlap_accuracy(res);
    const auto [label, config] = method_table_label(method);
    rep.rows.push_back(EvalRow{label, config, acc, 1.0, acc});
  }

  rep.metadata["seed"] = std::to_string(rng.seed());
  rep.metadata["train_n"] = std::to_string(train_n);
  rep.metadata["test_n"] = std::to_string(test_n);
  rep.metadata["k"] = std::to_string(k);
  rep.metadata["n_queries"] = std::to_string(n_queries);
  rep.metadata["dim"] = std::to_string(pool.dim());
  rep.metadata["max_abs_cos"] = detail::fmt_double(max_abs_cos);
  rep.metadata["max_pairwise_abs_cos"] = detail::fmt_double(max_pair);
  rep.metadata["baseline_hits_unique"] =
      unique_hits == k * n_queries ? "true" : "false";
  rep.metadata["baseline_unique_hits"] = std::to_string(unique_hits);
  rep.metadata["quantize_queries"] = opt.quantize_queries ? "on" : "off";
  rep.metadata["scale_denominator"] =
      opt.scale_denominator == ScaleDenominator::Symmetric ? "symmetric" : "paper";
  if (opt.reference_hnsw_accuracy) {
    rep.metadata["reference_hnsw_accuracy"] =
        detail::fmt_double(*opt.reference_hnsw_accuracy);
  }
  return rep;
}

/// Semantic-similarity correlation experiment: per method, compress both
/// sides of every sentence pair, take the pairwise cosines and report their
/// Pearson correlation against the gold relatedness scores plus the ratio to
/// the FP32 row. PQ methods train on `pq_train` (the harness passes the
/// train half of the 50/50 split).
inline EvalReport eval_sts(const EmbeddingMatrix& pairs_a,
                           const EmbeddingMatrix& pairs_b,
                           std::span<const double> gold, std::vector<Method> methods,
                           const EmbeddingMatrix* pq_train, std::uint64_t seed,
                           const EvalOptions& opt = {}) {
  if (pairs_a.count() != pairs_b.count() || pairs_a.count() != gold.size()) {
    throw LengthMismatch("sts inputs must have equal pair counts");
  }
  detail::check_same_dim(pairs_a.dim(), pairs_b.dim(), "eval_sts");
  if (gold.size() < 2) throw ValidationError("sts needs at least 2 pairs");
  sort_methods(methods);

  const std::size_t n = gold.size();
  const auto method_cosines = [&](const EmbeddingMatrix& a, const EmbeddingMatrix& b) {
    std::vector<double> vals(n);
    parallel_for(n, opt.threads, [&](std::size_t begin, std::size_t end) {
      for (std::size_t i = begin; i < end; ++i) vals[i] = cosine(a.row(i), b.row(i));
    });
    return vals;
  };

  const std::vector<double> base_cos = method_cosines(pairs_a, pairs_b);
  const double base_corr = pearson(base_cos, gold);

  EvalReport rep;
  rep.experiment = Experiment::StsCorrelation;
  rep.rows.push_back(EvalRow{"Fp32", "", base_corr, base_corr, 1.0});
  for (const auto& method : methods) {
    if (const auto* dt = std::get_if<DType>(&method)) {
      if (dt->kind == DTypeKind::FP32) continue;  // baseline row already present
      const EmbeddingMatrix qa =
          quantize_matrix(pairs_a, *dt, opt.scale_denominator, opt.threads)
              .dequantize(opt.threads);
      const EmbeddingMatrix qb =
          quantize_matrix(pairs_b, *dt, opt.scale_denominator, opt.threads)
              .dequantize(opt.threads);
      const double corr = pearson(method_cosines(qa, qb), gold);
      const auto [label, config] = dtype_table_label(*dt);
      rep.rows.push_back(EvalRow{label, config, corr, base_corr, corr / base_corr});
    } else {
      const auto& pq = std::get<PQSpec>(method);
      if (pq_train == nullptr) {
        throw ValidationError("PQ methods need training vectors");
      }
      PQConfig cfg;
      cfg.num_subvectors = pq.num_subvectors;
      cfg.num_centroids = pq.num_centroids;
      cfg.max_iters = opt.pq_max_iters;
      cfg.tol = opt.pq_tol;
      cfg.seed = Rng(seed)
                     .derive((std::uint64_t(pq.num_subvectors) << 32) | pq.num_centroids)
                     .seed();
      const PQCodebook cb = pq_fit(*pq_train, cfg, opt.threads);
      const EmbeddingMatrix ra = pq_reconstruct(pq_encode(pairs_a, cb, opt.threads),
                                                cb, opt.threads);
      const EmbeddingMatrix rb = pq_reconstruct(pq_encode(pairs_b, cb, opt.threads),
                                                cb, opt.threads);
      const double corr = pearson(method_cosines(ra, rb), gold);
      const auto [label, config] = method_table_label(method);
      rep.rows.push_back(EvalRow{label, config, corr, base_corr, corr / base_corr});
    }
  }
  rep.metadata["seed"] = std::to_string(seed);
  rep.metadata["pairs"] = std::to_string(n);
  rep.metadata["dim"] = std::to_string(pairs_a.dim());
  if (!opt.dataset_label.empty()) rep.metadata["dataset"] = opt.dataset_label;
  if (pq_train != nullptr) {
    rep.metadata["pq_train_n"] = std::to_string(pq_train->count());
  }
  rep.metadata["scale_denominator"] =
      opt.scale_denominator == ScaleDenominator::Symmetric ? "symmetric" : "paper";
  return rep;
}

}  // namespace quantvec
