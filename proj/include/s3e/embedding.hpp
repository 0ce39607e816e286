#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "s3e/error.hpp"
#include "s3e/grouping.hpp"
#include "s3e/matrix.hpp"
#include "s3e/vectors_io.hpp"
#include "s3e/weighting.hpp"

namespace s3e {

struct Sentence {
  std::vector<std::string> tokens;
};

// Per-group residual sums, one row per semantic group.
struct GroupResidualMatrix {
  Matrix phi;
  std::vector<double> row_means;

  static GroupResidualMatrix from(Matrix phi) {
    GroupResidualMatrix r{std::move(phi), {}};
    r.row_means.resize(r.phi.rows);
    for (std::size_t i = 0; i < r.phi.rows; ++i) {
      double s = 0.0;
      for (double x : r.phi.row(i)) s += x;
      r.row_means[i] = r.phi.cols == 0 ? 0.0 : s / static_cast<double>(r.phi.cols);
    }
    return r;
  }
};

struct CovarianceDescriptor {
  Matrix c;
};

enum class EmbedMode { cov_only, cov_plus_mean };

inline std::string_view to_string(EmbedMode m) {
  return m == EmbedMode::cov_only ? "cov_only" : "cov_plus_mean";
}

inline EmbedMode parse_embed_mode(std::string_view s) {
  if (s == "cov_only") return EmbedMode::cov_only;
  if (s == "cov_plus_mean") return EmbedMode::cov_plus_mean;
  throw ValidationError("unknown embed mode '" + std::string(s) + "'");
}

struct SentenceEmbedding {
  std::vector<double> values;
  // Set when the vector was scaled to unit length; unset for the zero vector.
  bool norm_flag = false;

  bool operator==(const SentenceEmbedding&) const = default;
};

inline std::size_t embedding_dim(std::size_t k, std::size_t d, EmbedMode mode) {
  const std::size_t tri = k * (k + 1) / 2;
  return mode == EmbedMode::cov_plus_mean ? tri + d : tri;
}

// Population covariance of the rows of phi, treating its d columns as
// observations: C = (1/d) (phi - mu)(phi - mu)^T with mu the row means.
// The upper triangle is computed and mirrored, so C is exactly symmetric.
inline CovarianceDescriptor covariance(const GroupResidualMatrix& r) {
  const std::size_t k = r.phi.rows, d = r.phi.cols;
  if (d == 0) throw ValidationError("covariance needs at least one column");
  Matrix centered(k, d);
  for (std::size_t i = 0; i < k; ++i) {
    auto src = r.phi.row(i);
    auto dst = centered.row(i);
    for (std::size_t j = 0; j < d; ++j) dst[j] = src[j] - r.row_means[i];
  }
  CovarianceDescriptor out{Matrix(k, k)};
  const double inv_d = 1.0 / static_cast<double>(d);
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = i; j < k; ++j) {
      const double s = dot(centered.row(i), centered.row(j)) * inv_d;
      out.c(i, j) = s;
      out.c(j, i) = s;
    }
  }
  return out;
}

// Upper triangle in row-major order, off-diagonals scaled by sqrt(2) so the
// Euclidean norm of the result equals the Frobenius norm of C.
inline std::vector<double> vectorize(const CovarianceDescriptor& cov) {
  const std::size_t k = cov.c.rows;
  if (cov.c.cols != k) throw ValidationError("covariance descriptor is not square");
  std::vector<double> out;
  out.reserve(k * (k + 1) / 2);
  for (std::size_t i = 0; i < k; ++i) {
    out.push_back(cov.c(i, i));
    for (std::size_t j = i + 1; j < k; ++j) out.push_back(std::numbers::sqrt2 * cov.c(i, j));
  }
  return out;
}

// Scales to unit L2 norm in place; returns false (leaving zeros) for the zero vector.
inline bool l2_normalize(std::span<double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  if (!(s > 0.0)) return false;
  const double n = std::sqrt(s);
  for (double& x : v) x /= n;
  return true;
}

// Binds a group model to the vectors and frequencies it was built from and
// computes sentence embeddings. Immutable after construction; each call uses
// its own scratch space, so one Embedder can serve concurrent callers.
class Embedder {
 public:
  Embedder(const GroupModel& model, const WordVectorTable& vectors, const UnigramTable& unigram)
      : model_(model), vectors_(vectors), unigram_(unigram), cfg_{model.epsilon} {
    model_.validate();
    if (model_.dim != vectors_.dim()) {
      throw ValidationError("model dimension " + std::to_string(model_.dim) + " does not match vector dimension " +
                            std::to_string(vectors_.dim()));
    }
    group_of_row_.assign(vectors_.size(), kNoGroup);
    for (std::size_t i = 0; i < model_.words.size(); ++i) {
      if (auto row = vectors_.find(model_.words[i])) group_of_row_[*row] = model_.assignment[i];
    }
  }

  const GroupModel& model() const { return model_; }
  const WeightConfig& weight_config() const { return cfg_; }
  std::size_t k() const { return model_.k; }
  std::size_t dim() const { return model_.dim; }
  std::size_t output_dim(EmbedMode mode) const { return embedding_dim(model_.k, model_.dim, mode); }

  // Reusable scratch for the residual stage. A row is overwritten on its first
  // touch in a sentence, so only rows listed in touched_rows are meaningful and
  // the stage stays linear in sentence length.
  struct Workspace {
    Matrix phi;
    std::vector<char> touched;
    std::vector<std::uint32_t> touched_rows;
    std::vector<double> weighted_sum;
    double weight_total = 0.0;
    std::size_t in_vocab = 0;
  };

  Workspace make_workspace() const {
    Workspace ws;
    ws.phi = Matrix(model_.k, model_.dim);
    ws.touched.assign(model_.k, 0);
    ws.weighted_sum.assign(model_.dim, 0.0);
    return ws;
  }

  // phi_i = sum over sentence words w in group i of weight(w) (v_w - g_i),
  // in token order; unknown tokens are skipped.
  void accumulate(std::span<const std::string> tokens, Workspace& ws, bool with_mean = false) const {
    for (auto r : ws.touched_rows) ws.touched[r] = 0;
    ws.touched_rows.clear();
    ws.in_vocab = 0;
    ws.weight_total = 0.0;
    if (with_mean) std::fill(ws.weighted_sum.begin(), ws.weighted_sum.end(), 0.0);

    const std::size_t d = model_.dim;
    for (const auto& tok : tokens) {
      auto row = vectors_.find(tok);
      if (!row) continue;
      const auto g = group_of_row_[*row];
      if (g == kNoGroup) continue;
      const double w = weight(unigram_.probability(tok), cfg_);
      auto v = vectors_.vector(*row);
      auto center = model_.group_centroids.row(g);
      auto dst = ws.phi.row(g);
      if (ws.touched[g]) {
        for (std::size_t j = 0; j < d; ++j) dst[j] += w * (v[j] - center[j]);
      } else {
        for (std::size_t j = 0; j < d; ++j) dst[j] = w * (v[j] - center[j]);
        ws.touched[g] = 1;
        ws.touched_rows.push_back(g);
      }
      if (with_mean) {
        for (std::size_t j = 0; j < d; ++j) ws.weighted_sum[j] += w * v[j];
        ws.weight_total += w;
      }
      ++ws.in_vocab;
    }
  }

  GroupResidualMatrix residual_matrix(const Sentence& s) const {
    auto ws = make_workspace();
    accumulate(s.tokens, ws);
    return GroupResidualMatrix::from(std::move(ws.phi));
  }

  SentenceEmbedding embed(const Sentence& s, EmbedMode mode) const {
    auto ws = make_workspace();
    return embed(s, mode, ws);
  }

  SentenceEmbedding embed(const Sentence& s, EmbedMode mode, Workspace& ws) const {
    const bool with_mean = mode == EmbedMode::cov_plus_mean;
    accumulate(s.tokens, ws, with_mean);

    SentenceEmbedding out;
    out.values.assign(output_dim(mode), 0.0);
    write_covariance(ws, out.values);
    if (with_mean && ws.weight_total > 0.0) {
      const std::size_t off = model_.k * (model_.k + 1) / 2;
      for (std::size_t j = 0; j < model_.dim; ++j) out.values[off + j] = ws.weighted_sum[j] / ws.weight_total;
    }
    out.norm_flag = l2_normalize(out.values);
    return out;
  }

  // Order-preserving; the result does not depend on the thread count.
  std::vector<SentenceEmbedding> embed_batch(std::span<const Sentence> sentences, EmbedMode mode,
                                             std::size_t threads = 1) const {
    std::vector<SentenceEmbedding> out(sentences.size());
    auto work = [&](std::size_t b, std::size_t e) {
      auto ws = make_workspace();
      for (std::size_t i = b; i < e; ++i) out[i] = embed(sentences[i], mode, ws);
    };
    threads = std::max<std::size_t>(1, std::min(threads, sentences.size()));
    if (threads == 1) {
      work(0, sentences.size());
      return out;
    }
    std::vector<std::jthread> pool;
    const std::size_t chunk = (sentences.size() + threads - 1) / threads;
    for (std::size_t t = 0; t < threads; ++t) {
      const std::size_t b = t * chunk, e = std::min(sentences.size(), b + chunk);
      if (b < e) pool.emplace_back(work, b, e);
    }
    return out;
  }

 private:
  static constexpr std::uint32_t kNoGroup = 0xffffffffu;

  // Covariance restricted to touched rows: untouched rows are zero with zero
  // mean, so every entry they take part in is exactly zero.
  void write_covariance(Workspace& ws, std::span<double> out) const {
    const std::size_t d = model_.dim, k = model_.k;
    auto& rows = ws.touched_rows;
    std::sort(rows.begin(), rows.end());
    const double inv_d = 1.0 / static_cast<double>(d);
    for (auto r : rows) {
      auto row = ws.phi.row(r);
      double s = 0.0;
      for (double x : row) s += x;
      const double mu = s * inv_d;
      for (double& x : row) x -= mu;
    }
    for (std::size_t a = 0; a < rows.size(); ++a) {
      const std::size_t i = rows[a];
      // Offset of (i, i) in the row-major upper triangle.
      const std::size_t diag = i * (2 * k - i + 1) / 2;
      for (std::size_t b = a; b < rows.size(); ++b) {
        const std::size_t j = rows[b];
        const double s = dot(ws.phi.row(i), ws.phi.row(j)) * inv_d;
        out[diag + (j - i)] = i == j ? s : std::numbers::sqrt2 * s;
      }
    }
  }

  const GroupModel& model_;
  const WordVectorTable& vectors_;
  const UnigramTable& unigram_;
  WeightConfig cfg_;
  std::vector<std::uint32_t> group_of_row_;
};

namespace detail {
inline void check_epsilon(const GroupModel& model, const WeightConfig& cfg) {
  cfg.validate();
  if (std::bit_cast<std::uint64_t>(cfg.epsilon) != std::bit_cast<std::uint64_t>(model.epsilon)) {
    throw ValidationError("epsilon " + std::to_string(cfg.epsilon) + " differs from the model's " +
                          std::to_string(model.epsilon));
  }
}
}  // namespace detail

inline GroupResidualMatrix residual_matrix(const Sentence& s, const GroupModel& model, const WordVectorTable& vectors,
                                           const UnigramTable& unigram, const WeightConfig& cfg) {
  detail::check_epsilon(model, cfg);
  return Embedder(model, vectors, unigram).residual_matrix(s);
}

inline SentenceEmbedding embed(const Sentence& s, const GroupModel& model, const WordVectorTable& vectors,
                               const UnigramTable& unigram, const WeightConfig& cfg,
                               EmbedMode mode = EmbedMode::cov_plus_mean) {
  detail::check_epsilon(model, cfg);
  return Embedder(model, vectors, unigram).embed(s, mode);
}

inline std::vector<SentenceEmbedding> embed_batch(std::span<const Sentence> sentences, const GroupModel& model,
                                                  const WordVectorTable& vectors, const UnigramTable& unigram,
                                                  const WeightConfig& cfg, EmbedMode mode = EmbedMode::cov_plus_mean,
                                                  std::size_t threads = 1) {
  detail::check_epsilon(model, cfg);
  return Embedder(model, vectors, unigram).embed_batch(sentences, mode, threads);
}

}  // namespace s3e
