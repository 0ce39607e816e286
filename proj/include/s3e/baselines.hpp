#pragma once

#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "s3e/embedding.hpp"
#include "s3e/error.hpp"
#include "s3e/matrix.hpp"
#include "s3e/vectors_io.hpp"
#include "s3e/weighting.hpp"

namespace s3e {

enum class BaselineKind { avg, weighted_avg, weighted_avg_pc_removed };

inline std::string_view to_string(BaselineKind k) {
  switch (k) {
    case BaselineKind::avg: return "avg";
    case BaselineKind::weighted_avg: return "sif";
    case BaselineKind::weighted_avg_pc_removed: return "sif_pc";
  }
  return "avg";
}

inline BaselineKind parse_baseline_kind(std::string_view s) {
  if (s == "avg") return BaselineKind::avg;
  if (s == "sif") return BaselineKind::weighted_avg;
  if (s == "sif_pc") return BaselineKind::weighted_avg_pc_removed;
  throw ValidationError("unknown baseline '" + std::string(s) + "'");
}

// Mean (avg) or weight(w)-weighted mean of in-vocabulary token vectors.
// Empty or all-OOV sentences give the zero vector.
inline std::vector<double> average_embedding(const Sentence& s, bool weighted, const WordVectorTable& vectors,
                                             const UnigramTable& unigram, const WeightConfig& cfg) {
  std::vector<double> out(vectors.dim(), 0.0);
  double total = 0.0;
  for (const auto& tok : s.tokens) {
    auto row = vectors.find(tok);
    if (!row) continue;
    const double w = weighted ? weight(unigram.probability(tok), cfg) : 1.0;
    auto v = vectors.vector(*row);
    for (std::size_t j = 0; j < out.size(); ++j) out[j] += w * v[j];
    total += w;
  }
  if (total > 0.0) {
    for (double& x : out) x /= total;
  }
  return out;
}

struct PowerIterationOptions {
  std::size_t max_iter = 100;
  double tol = 1e-6;
};

// Leading eigenvector of X^T X (uncentered) by power iteration. The start
// vector is the normalized column sum, which is deterministic and almost
// never orthogonal to the leading direction for embedding data.
inline std::vector<double> first_principal_component(const Matrix& x, const PowerIterationOptions& opts = {}) {
  const std::size_t d = x.cols;
  std::vector<double> u(d, 0.0);
  for (std::size_t i = 0; i < x.rows; ++i) {
    auto r = x.row(i);
    for (std::size_t j = 0; j < d; ++j) u[j] += r[j];
  }
  if (!l2_normalize(u)) {
    if (d == 0) return u;
    u[0] = 1.0;
  }
  std::vector<double> next(d);
  for (std::size_t it = 0; it < opts.max_iter; ++it) {
    std::fill(next.begin(), next.end(), 0.0);
    for (std::size_t i = 0; i < x.rows; ++i) {
      auto r = x.row(i);
      const double p = dot(r, u);
      for (std::size_t j = 0; j < d; ++j) next[j] += p * r[j];
    }
    if (!l2_normalize(next)) return u;
    const double delta = std::sqrt(squared_distance(next, u));
    u.swap(next);
    if (delta < opts.tol) break;
  }
  return u;
}

// v - (v . u) u for unit u.
inline void remove_component(std::span<double> v, std::span<const double> u) {
  const double p = dot(v, u);
  for (std::size_t j = 0; j < v.size(); ++j) v[j] -= p * u[j];
}

inline std::vector<double> baseline_embed(const Sentence& s, BaselineKind kind, const WordVectorTable& vectors,
                                          const UnigramTable& unigram, const WeightConfig& cfg,
                                          std::span<const double> principal = {}) {
  auto v = average_embedding(s, kind != BaselineKind::avg, vectors, unigram, cfg);
  if (kind == BaselineKind::weighted_avg_pc_removed) {
    if (principal.size() != v.size()) throw ValidationError("sif_pc needs a principal component of matching size");
    remove_component(v, principal);
  }
  return v;
}

// Baseline embedder bound to one corpus. For sif_pc the first principal
// component is estimated once from the corpus' weighted averages and reused.
class BaselineEmbedder {
 public:
  BaselineEmbedder(BaselineKind kind, const WordVectorTable& vectors, const UnigramTable& unigram, WeightConfig cfg)
      : kind_(kind), vectors_(vectors), unigram_(unigram), cfg_(cfg) {
    cfg_.validate();
  }

  void fit(std::span<const Sentence> corpus) {
    if (kind_ != BaselineKind::weighted_avg_pc_removed) return;
    Matrix x(corpus.size(), vectors_.dim());
    for (std::size_t i = 0; i < corpus.size(); ++i) {
      auto v = average_embedding(corpus[i], true, vectors_, unigram_, cfg_);
      std::copy(v.begin(), v.end(), x.row(i).begin());
    }
    principal_ = first_principal_component(x);
  }

  const std::optional<std::vector<double>>& principal() const { return principal_; }
  BaselineKind kind() const { return kind_; }

  std::vector<double> embed(const Sentence& s) const {
    if (kind_ == BaselineKind::weighted_avg_pc_removed && !principal_) {
      throw ValidationError("sif_pc embedder used before fit()");
    }
    return baseline_embed(s, kind_, vectors_, unigram_, cfg_,
                          principal_ ? std::span<const double>(*principal_) : std::span<const double>{});
  }

 private:
  BaselineKind kind_;
  const WordVectorTable& vectors_;
  const UnigramTable& unigram_;
  WeightConfig cfg_;
  std::optional<std::vector<double>> principal_;
};

}  // namespace s3e
