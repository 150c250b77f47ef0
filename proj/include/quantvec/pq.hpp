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
#include <limits>
#include <span>
#include <vector>

#include "quantvec/error.hpp"
#include "quantvec/matrix.hpp"
#include "quantvec/parallel.hpp"
#include "quantvec/rng.hpp"
#include "quantvec/similarity.hpp"

namespace quantvec {

/// Product-quantization parameters: M sub-vectors, K centroids per sub-space.
struct PQConfig {
  std::uint32_t num_subvectors = 8;   // M
  std::uint32_t num_centroids = 256;  // K
  std::uint32_t max_iters = 25;
  double tol = 1e-4;  // relative inertia-change convergence threshold
  std::uint64_t seed = 0;
};

namespace detail {

inline double sq_dist(std::span<const float> a, std::span<const float> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = double(a[i]) - double(b[i]);
    acc += d * d;
  }
  return acc;
}

}  // namespace detail

/// M independent k-means codebooks of K centroids over d/M-dimensional
/// sub-vectors. Immutable once trained.
class PQCodebook {
 public:
  PQCodebook() = default;
  PQCodebook(PQConfig cfg, std::uint32_t dim, std::vector<float> centroids,
             std::vector<std::vector<double>> inertia_history = {})
      : cfg_(cfg), dim_(dim), centroids_(std::move(centroids)),
        inertia_history_(std::move(inertia_history)) {
    if (cfg_.num_subvectors == 0 || dim_ == 0 || dim_ % cfg_.num_subvectors != 0) {
      throw IndivisibleDim("codebook dim must be a positive multiple of M");
    }
    subdim_ = dim_ / cfg_.num_subvectors;
    const std::size_t want =
        std::size_t(cfg_.num_subvectors) * cfg_.num_centroids * subdim_;
    if (centroids_.size() != want) {
      throw ValidationError("centroid block size mismatch");
    }
    for (const float v : centroids_) {
      if (!std::isfinite(v)) throw NonFiniteInput("non-finite centroid");
    }
  }

  const PQConfig& config() const { return cfg_; }
  std::uint32_t dim() const { return dim_; }
  std::uint32_t subdim() const { return subdim_; }
  bool trained() const { return !centroids_.empty(); }
  const std::vector<float>& centroids() const { return centroids_; }

  /// Per-sub-space inertia trace from training (one entry per Lloyd pass).
  const std::vector<std::vector<double>>& inertia_history() const {
    return inertia_history_;
  }

  std::span<const float> centroid(std::uint32_t m, std::uint32_t j) const {
    return {centroids_.data() + (std::size_t(m) * cfg_.num_centroids + j) * subdim_,
            subdim_};
  }

 private:
  PQConfig cfg_;
  std::uint32_t dim_ = 0;
  std::uint32_t subdim_ = 0;
  std::vector<float> centroids_;
  std::vector<std::vector<double>> inertia_history_;
};

/// n x M centroid indices. Indices are kept 16-bit in memory; files narrow
/// them to 8-bit when K <= 256.
struct PQCodes {
  std::uint32_t num_subvectors = 0;
  std::uint32_t num_centroids = 0;
  std::vector<std::uint16_t> codes;  // n * M
  std::vector<std::uint64_t> ids;

  std::size_t count() const { return ids.size(); }
  std::span<const std::uint16_t> row(std::size_t i) const {
    return {codes.data() + i * num_subvectors, num_subvectors};
  }
};

namespace detail {

struct SubspaceKMeans {
  std::vector<float> centroids;         // K * subdim
  std::vector<double> inertia_history;  // one entry per assignment pass
};

// Lloyd's algorithm with k-means++ seeding over one sub-space. `points` is
// n x subdim contiguous. Deterministic for a fixed rng seed: ties in
// assignment and reseeding go to the lowest index.
inline SubspaceKMeans kmeans_subspace(std::span<const float> points, std::size_t n,
                                      std::size_t subdim, std::uint32_t k,
                                      std::uint32_t max_iters, double tol, Rng rng) {
  const auto point = [&](std::size_t i) {
    return std::span<const float>{points.data() + i * subdim, subdim};
  };
  SubspaceKMeans out;
  out.centroids.resize(std::size_t(k) * subdim);
  const auto centroid = [&](std::size_t j) {
    return std::span<float>{out.centroids.data() + j * subdim, subdim};
  };
  const auto set_centroid = [&](std::size_t j, std::span<const float> src) {
    std::copy(src.begin(), src.end(), centroid(j).begin());
  };

  // k-means++ seeding: first pick uniform, then D^2-weighted picks.
  std::vector<double> dist2(n, std::numeric_limits<double>::infinity());
  set_centroid(0, point(rng.next_below(n)));
  for (std::uint32_t j = 1; j < k; ++j) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      dist2[i] = std::min(dist2[i], sq_dist(point(i), centroid(j - 1)));
      total += dist2[i];
    }
    std::size_t pick = 0;
    if (total > 0.0) {
      const double target = rng.next_unit() * total;
      double cum = 0.0;
      pick = n - 1;
      for (std::size_t i = 0; i < n; ++i) {
        cum += dist2[i];
        if (cum > target) {
          pick = i;
          break;
        }
      }
    } else {
      pick = rng.next_below(n);  // all residuals zero; any point works
    }
    set_centroid(j, point(pick));
  }

  std::vector<std::uint32_t> labels(n, 0);
  std::vector<double> nearest(n, 0.0);
  double prev_inertia = std::numeric_limits<double>::infinity();
  for (std::uint32_t iter = 0; iter < max_iters; ++iter) {
    // Assignment pass; ties keep the lowest centroid index.
    double inertia = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      std::uint32_t arg = 0;
      for (std::uint32_t j = 0; j < k; ++j) {
        const double d = sq_dist(point(i), centroid(j));
        if (d < best) {
          best = d;
          arg = j;
        }
      }
      labels[i] = arg;
      nearest[i] = best;
      inertia += best;
    }
    out.inertia_history.push_back(inertia);
    if (iter > 0) {
      const double drop = prev_inertia - inertia;
      if (drop <= tol * std::max(prev_inertia, 1e-300)) break;
    }
    prev_inertia = inertia;

    // Update pass: means of assigned points.
    std::vector<double> sums(std::size_t(k) * subdim, 0.0);
    std::vector<std::uint64_t> counts(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      const auto p = point(i);
      double* dst = sums.data() + std::size_t(labels[i]) * subdim;
      for (std::size_t c = 0; c < subdim; ++c) dst[c] += p[c];
      ++counts[labels[i]];
    }
    std::vector<char> stolen(n, 0);
    for (std::uint32_t j = 0; j < k; ++j) {
      if (counts[j] > 0) {
        const double* src = sums.data() + std::size_t(j) * subdim;
        auto dst = centroid(j);
        for (std::size_t c = 0; c < subdim; ++c) dst[c] = float(src[c] / double(counts[j]));
      } else {
        // Empty cluster: reseed to the point farthest from its own centroid.
        std::size_t far = 0;
        double far_d = -1.0;
        for (std::size_t i = 0; i < n; ++i) {
          if (!stolen[i] && nearest[i] > far_d) {
            far_d = nearest[i];
            far = i;
          }
        }
        stolen[far] = 1;
        set_centroid(j, point(far));
      }
    }
  }
  return out;
}

}  // namespace detail

/// Trains the M per-sub-space codebooks. Deterministic given cfg.seed; the
/// sub-spaces fit in parallel, each on its own derived random stream.
inline PQCodebook pq_fit(const EmbeddingMatrix& train, const PQConfig& cfg,
                         unsigned threads = 0) {
  if (cfg.num_subvectors == 0 || train.dim() % cfg.num_subvectors != 0) {
    throw IndivisibleDim("dim " + std::to_string(train.dim()) +
                         " is not divisible by M=" + std::to_string(cfg.num_subvectors));
  }
  if (cfg.num_centroids == 0 || cfg.num_centroids > 65536) {
    throw ValidationError("K must be in [1, 65536]");
  }
  if (train.count() < cfg.num_centroids) {
    throw TooFewTrainingVectors("need at least K=" + std::to_string(cfg.num_centroids) +
                                " training vectors, have " + std::to_string(train.count()));
  }
  const std::size_t m_count = cfg.num_subvectors;
  const std::size_t subdim = train.dim() / m_count;
  const std::size_t n = train.count();
  const Rng base(cfg.seed);

  std::vector<float> centroids(m_count * cfg.num_centroids * subdim);
  std::vector<std::vector<double>> history(m_count);
  parallel_for(m_count, threads, [&](std::size_t begin, std::size_t end) {
    std::vector<float> sub(n * subdim);
    for (std::size_t m = begin; m < end; ++m) {
      for (std::size_t i = 0; i < n; ++i) {
        const auto row = train.row(i);
        std::copy_n(row.data() + m * subdim, subdim, sub.data() + i * subdim);
      }
      auto res = detail::kmeans_subspace(sub, n, subdim, cfg.num_centroids,
                                         cfg.max_iters, cfg.tol, base.derive(m));
      std::copy(res.centroids.begin(), res.centroids.end(),
                centroids.begin() + m * cfg.num_centroids * subdim);
      history[m] = std::move(res.inertia_history);
    }
  });
  return PQCodebook(cfg, std::uint32_t(train.dim()), std::move(centroids),
                    std::move(history));
}

/// Assigns each sub-vector its nearest centroid (Euclidean, ties to the
/// lowest index).
inline PQCodes pq_encode(const EmbeddingMatrix& x, const PQCodebook& cb,
                         unsigned threads = 0) {
  detail::check_same_dim(x.dim(), cb.dim(), "pq_encode");
  const std::uint32_t m_count = cb.config().num_subvectors;
  const std::uint32_t k = cb.config().num_centroids;
  const std::uint32_t subdim = cb.subdim();
  PQCodes codes;
  codes.num_subvectors = m_count;
  codes.num_centroids = k;
  codes.ids = x.ids();
  codes.codes.resize(x.count() * m_count);
  parallel_for(x.count(), threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const auto row = x.row(i);
      for (std::uint32_t m = 0; m < m_count; ++m) {
        const std::span<const float> sv{row.data() + std::size_t(m) * subdim, subdim};
        double best = std::numeric_limits<double>::infinity();
        std::uint32_t arg = 0;
        for (std::uint32_t j = 0; j < k; ++j) {
          const double d = detail::sq_dist(sv, cb.centroid(m, j));
          if (d < best) {
            best = d;
            arg = j;
          }
        }
        codes.codes[i * m_count + m] = std::uint16_t(arg);
      }
    }
  });
  return codes;
}

/// Concatenates each row's assigned centroids back into a dense matrix.
inline EmbeddingMatrix pq_reconstruct(const PQCodes& codes, const PQCodebook& cb,
                                      unsigned threads = 0) {
  if (codes.num_subvectors != cb.config().num_subvectors ||
      codes.num_centroids != cb.config().num_centroids) {
    throw DimensionMismatch("codes were produced by a different codebook shape");
  }
  const std::uint32_t m_count = cb.config().num_subvectors;
  const std::uint32_t subdim = cb.subdim();
  std::vector<float> data(codes.count() * cb.dim());
  parallel_for(codes.count(), threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      float* dst = data.data() + i * cb.dim();
      const auto row = codes.row(i);
      for (std::uint32_t m = 0; m < m_count; ++m) {
        const auto c = cb.centroid(m, row[m]);
        std::copy(c.begin(), c.end(), dst + std::size_t(m) * subdim);
      }
    }
  });
  return EmbeddingMatrix(cb.dim(), std::move(data), codes.ids);
}

/// Cosine between two encoded vectors: both sides reconstructed, then the
/// standard cosine kernel.
inline double pq_cosine(std::span<const std::uint16_t> a_codes,
                        std::span<const std::uint16_t> b_codes, const PQCodebook& cb) {
  const std::uint32_t m_count = cb.config().num_subvectors;
  if (a_codes.size() != m_count || b_codes.size() != m_count) {
    throw DimensionMismatch("pq_cosine: code rows do not match codebook M");
  }
  const std::uint32_t subdim = cb.subdim();
  std::vector<float> xa(cb.dim()), xb(cb.dim());
  for (std::uint32_t m = 0; m < m_count; ++m) {
    const auto ca = cb.centroid(m, a_codes[m]);
    const auto sb = cb.centroid(m, b_codes[m]);
    std::copy(ca.begin(), ca.end(), xa.begin() + std::size_t(m) * subdim);
    std::copy(sb.begin(), sb.end(), xb.begin() + std::size_t(m) * subdim);
  }
  return cosine(xa, xb);
}

/// Mean squared reconstruction error per element.
inline double pq_reconstruction_mse(const EmbeddingMatrix& x, const PQCodebook& cb,
                                    const PQCodes& codes) {
  detail::check_same_dim(x.dim(), cb.dim(), "pq_reconstruction_mse");
  if (x.count() != codes.count()) throw LengthMismatch("row count mismatch");
  if (x.count() == 0) throw EmptyInput("pq_reconstruction_mse: empty input");
  const std::uint32_t m_count = cb.config().num_subvectors;
  const std::uint32_t subdim = cb.subdim();
  double acc = 0.0;
  for (std::size_t i = 0; i < x.count(); ++i) {
    const auto row = x.row(i);
    const auto crow = codes.row(i);
    for (std::uint32_t m = 0; m < m_count; ++m) {
      const std::span<const float> sv{row.data() + std::size_t(m) * subdim, subdim};
      acc += detail::sq_dist(sv, cb.centroid(m, crow[m]));
    }
  }
  return acc / (double(x.count()) * double(x.dim()));
}

}  // namespace quantvec
