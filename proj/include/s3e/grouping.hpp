#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <limits>
#include <optional>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "s3e/error.hpp"
#include "s3e/matrix.hpp"
#include "s3e/vectors_io.hpp"
#include "s3e/weighting.hpp"

namespace s3e {

// Semantic groups over a vocabulary.
//
// `centroids` are the weighted Lloyd centers found by clustering and are kept
// for diagnostics. `group_centroids` are the descriptor anchors
//   g_i = (1/|G_i|) * sum_{w in G_i} weight(w) * v_w
// (divided by the word count, not by the weight mass), which is what the
// sentence descriptor subtracts.
struct GroupModel {
  std::size_t k = 0;
  std::size_t dim = 0;
  double epsilon = 1e-3;
  PreprocessMode preprocess = PreprocessMode::none;
  std::uint64_t seed = 0;
  Matrix centroids;
  Matrix group_centroids;
  std::vector<std::string> words;
  std::vector<std::uint32_t> assignment;

  std::size_t group_size(std::size_t g) const {
    return static_cast<std::size_t>(std::count(assignment.begin(), assignment.end(), static_cast<std::uint32_t>(g)));
  }

  void validate() const {
    if (k == 0) throw ValidationError("model has k = 0");
    if (dim == 0) throw ValidationError("model has dimension 0");
    if (words.size() != assignment.size()) throw ValidationError("model word/assignment count mismatch");
    if (k > words.size()) throw ValidationError("model has more groups than words");
    if (!(epsilon > 0.0)) throw ValidationError("model epsilon must be positive");
    if (centroids.rows != k || centroids.cols != dim || group_centroids.rows != k || group_centroids.cols != dim) {
      throw ValidationError("model centroid matrices do not match k x dim");
    }
    for (std::size_t i = 0; i < assignment.size(); ++i) {
      if (assignment[i] >= k) {
        throw ValidationError("word '" + words[i] + "' assigned to group " + std::to_string(assignment[i]) +
                              " but k = " + std::to_string(k));
      }
    }
    for (double x : centroids.data) {
      if (!std::isfinite(x)) throw ValidationError("non-finite centroid component");
    }
    for (double x : group_centroids.data) {
      if (!std::isfinite(x)) throw ValidationError("non-finite group centroid component");
    }
    std::unordered_map<std::string_view, int> seen;
    for (const auto& w : words) {
      if (!seen.emplace(w, 0).second) throw ValidationError("duplicate word '" + w + "' in model");
    }
  }

  bool operator==(const GroupModel& o) const {
    return k == o.k && dim == o.dim && std::bit_cast<std::uint64_t>(epsilon) == std::bit_cast<std::uint64_t>(o.epsilon) &&
           preprocess == o.preprocess && seed == o.seed && centroids == o.centroids &&
           group_centroids == o.group_centroids && words == o.words && assignment == o.assignment;
  }
};

struct ClusterDiagnostics {
  std::size_t iterations = 0;
  // Weighted inertia after each assignment step, one entry per iteration.
  std::vector<double> weighted_inertia;
  std::size_t empty_group_events = 0;
  std::uint64_t seed = 0;
  bool converged = false;
};

struct KMeansOptions {
  std::size_t k = 30;
  std::uint64_t seed = 0;
  std::size_t max_iter = 100;
  // Stop once no center moves farther than this (Euclidean).
  double tol = 1e-4;
  std::size_t threads = 1;
};

struct KMeansResult {
  Matrix centers;
  std::vector<std::uint32_t> labels;
  ClusterDiagnostics diagnostics;
};

namespace detail {

// 53-bit uniform in [0, 1), independent of the standard library's distributions.
inline double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline std::size_t sample_proportional(std::span<const double> masses, std::mt19937_64& rng) {
  double total = 0.0;
  for (double m : masses) total += m;
  const double target = uniform01(rng) * total;
  double cum = 0.0;
  std::size_t last_positive = 0;
  for (std::size_t i = 0; i < masses.size(); ++i) {
    if (masses[i] <= 0.0) continue;
    cum += masses[i];
    last_positive = i;
    if (cum > target) return i;
  }
  return last_positive;
}

inline void assign_range(const Matrix& points, const Matrix& centers, std::size_t begin, std::size_t end,
                         std::vector<std::uint32_t>& labels, std::vector<double>& dist) {
  for (std::size_t i = begin; i < end; ++i) {
    auto x = points.row(i);
    double best = std::numeric_limits<double>::infinity();
    std::uint32_t arg = 0;
    for (std::size_t c = 0; c < centers.rows; ++c) {
      const double d = squared_distance(x, centers.row(c));
      if (d < best) {
        best = d;
        arg = static_cast<std::uint32_t>(c);
      }
    }
    labels[i] = arg;
    dist[i] = best;
  }
}

// Nearest-center assignment; ties go to the lowest center index. Each point is
// independent, so the threaded split gives the same labels as a serial pass.
inline void assign_nearest(const Matrix& points, const Matrix& centers, std::size_t threads,
                           std::vector<std::uint32_t>& labels, std::vector<double>& dist) {
  const std::size_t n = points.rows;
  labels.resize(n);
  dist.resize(n);
  threads = std::max<std::size_t>(1, std::min(threads, n / 1024 + 1));
  if (threads == 1) {
    assign_range(points, centers, 0, n, labels, dist);
    return;
  }
  std::vector<std::jthread> pool;
  const std::size_t chunk = (n + threads - 1) / threads;
  for (std::size_t t = 0; t < threads; ++t) {
    const std::size_t b = t * chunk, e = std::min(n, b + chunk);
    if (b >= e) break;
    pool.emplace_back([&, b, e] { assign_range(points, centers, b, e, labels, dist); });
  }
}

}  // namespace detail

// Weighted k-means++ seeding followed by weighted Lloyd iterations. Weights act
// as point masses: seeding samples proportional to weight * D^2 and center
// updates are weighted means.
inline KMeansResult weighted_kmeans(const Matrix& points, std::span<const double> weights, const KMeansOptions& opts) {
  const std::size_t n = points.rows, d = points.cols, k = opts.k;
  if (k == 0) throw ValidationError("k must be positive");
  if (n == 0) throw ValidationError("cannot cluster an empty point set");
  if (k > n) throw ValidationError("k = " + std::to_string(k) + " exceeds the number of points " + std::to_string(n));
  if (weights.size() != n) throw ValidationError("weights do not match point count");
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw ValidationError("point weights must be finite and non-negative");
  }

  KMeansResult res;
  res.diagnostics.seed = opts.seed;
  std::mt19937_64 rng(opts.seed);

  // Seeding.
  Matrix centers(k, d);
  std::vector<char> chosen(n, 0);
  std::vector<double> nearest(n, std::numeric_limits<double>::infinity());
  std::vector<double> masses(weights.begin(), weights.end());
  for (std::size_t c = 0; c < k; ++c) {
    double total = 0.0;
    for (double m : masses) total += m;
    if (!(total > 0.0)) {
      // Remaining points coincide with chosen centers; fall back to weight
      // among unchosen points, then to the first unchosen point.
      for (std::size_t i = 0; i < n; ++i) masses[i] = chosen[i] ? 0.0 : weights[i];
      total = 0.0;
      for (double m : masses) total += m;
      if (!(total > 0.0)) {
        for (std::size_t i = 0; i < n; ++i) masses[i] = chosen[i] ? 0.0 : 1.0;
      }
    }
    const std::size_t pick = detail::sample_proportional(masses, rng);
    chosen[pick] = 1;
    std::copy(points.row(pick).begin(), points.row(pick).end(), centers.row(c).begin());
    for (std::size_t i = 0; i < n; ++i) {
      nearest[i] = std::min(nearest[i], squared_distance(points.row(i), centers.row(c)));
      masses[i] = chosen[i] ? 0.0 : weights[i] * nearest[i];
    }
  }

  // Lloyd iterations.
  std::vector<std::uint32_t> labels;
  std::vector<double> dist;
  std::vector<double> mass(k);
  std::vector<std::size_t> count(k);
  Matrix sums(k, d);
  for (std::size_t it = 0; it < opts.max_iter; ++it) {
    detail::assign_nearest(points, centers, opts.threads, labels, dist);
    double inertia = 0.0;
    for (std::size_t i = 0; i < n; ++i) inertia += weights[i] * dist[i];
    res.diagnostics.weighted_inertia.push_back(inertia);

    std::fill(count.begin(), count.end(), 0);
    for (auto l : labels) ++count[l];
    for (std::size_t c = 0; c < k; ++c) {
      if (count[c] != 0) continue;
      ++res.diagnostics.empty_group_events;
      // Move the worst-served point (largest weighted squared distance, from a
      // group that keeps at least one member) into the empty group.
      double worst = 0.0;
      std::optional<std::size_t> arg;
      for (std::size_t i = 0; i < n; ++i) {
        const double wd = weights[i] * dist[i];
        if (count[labels[i]] > 1 && wd > worst) {
          worst = wd;
          arg = i;
        }
      }
      if (!arg) continue;
      --count[labels[*arg]];
      labels[*arg] = static_cast<std::uint32_t>(c);
      ++count[c];
      dist[*arg] = 0.0;
      std::copy(points.row(*arg).begin(), points.row(*arg).end(), centers.row(c).begin());
    }

    std::fill(sums.data.begin(), sums.data.end(), 0.0);
    std::fill(mass.begin(), mass.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      auto s = sums.row(labels[i]);
      auto x = points.row(i);
      const double w = weights[i];
      for (std::size_t j = 0; j < d; ++j) s[j] += w * x[j];
      mass[labels[i]] += w;
    }
    double shift = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
      // Zero-mass or empty groups keep their current center.
      if (!(mass[c] > 0.0)) continue;
      auto s = sums.row(c);
      for (double& v : s) v /= mass[c];
      shift = std::max(shift, std::sqrt(squared_distance(s, centers.row(c))));
      std::copy(s.begin(), s.end(), centers.row(c).begin());
    }
    res.diagnostics.iterations = it + 1;
    if (shift < opts.tol) {
      res.diagnostics.converged = true;
      break;
    }
  }

  res.centers = std::move(centers);
  res.labels = std::move(labels);
  return res;
}

struct GroupingOptions {
  std::size_t k = 30;
  std::uint64_t seed = 0;
  std::size_t max_iter = 100;
  double tol = 1e-4;
  // Cluster only the n most frequent words (0 = whole vocabulary); the rest
  // are then attached to their nearest center.
  std::size_t top_n_vocab = 0;
  std::size_t threads = std::max(1u, std::thread::hardware_concurrency());
};

struct GroupingResult {
  GroupModel model;
  ClusterDiagnostics diagnostics;
};

// g = (1/|G|) * sum weight(w) v_w over the given words, summed in the order given.
inline std::vector<double> group_centroid(std::span<const std::string> group_words, const WordVectorTable& vectors,
                                          const UnigramTable& unigram, const WeightConfig& cfg) {
  if (group_words.empty()) throw ValidationError("group centroid of an empty group");
  std::vector<double> g(vectors.dim(), 0.0);
  for (const auto& w : group_words) {
    auto row = vectors.find(w);
    if (!row) throw ValidationError("group word '" + w + "' has no vector");
    const double wt = weight(unigram.probability(w), cfg);
    auto v = vectors.vector(*row);
    for (std::size_t j = 0; j < g.size(); ++j) g[j] += wt * v[j];
  }
  const double inv = 1.0 / static_cast<double>(group_words.size());
  for (double& x : g) x *= inv;
  return g;
}

// Recomputes every g_i from an assignment, summing in vocabulary order.
// Groups with no words get a zero row.
inline Matrix compute_group_centroids(const GroupModel& model, const WordVectorTable& vectors,
                                      const UnigramTable& unigram) {
  const WeightConfig cfg{model.epsilon};
  Matrix g(model.k, model.dim);
  std::vector<std::size_t> count(model.k, 0);
  for (std::size_t i = 0; i < model.words.size(); ++i) {
    auto row = vectors.find(model.words[i]);
    if (!row) throw ValidationError("model word '" + model.words[i] + "' has no vector");
    const double wt = weight(unigram.probability(model.words[i]), cfg);
    auto v = vectors.vector(*row);
    auto dst = g.row(model.assignment[i]);
    for (std::size_t j = 0; j < model.dim; ++j) dst[j] += wt * v[j];
    ++count[model.assignment[i]];
  }
  for (std::size_t c = 0; c < model.k; ++c) {
    if (count[c] == 0) continue;
    const double inv = 1.0 / static_cast<double>(count[c]);
    for (double& x : g.row(c)) x *= inv;
  }
  return g;
}

inline GroupingResult build_groups(const WordVectorTable& vectors, const UnigramTable& unigram,
                                   const WeightConfig& cfg, const GroupingOptions& opts) {
  cfg.validate();
  if (vectors.empty()) throw ValidationError("cannot build groups from an empty vocabulary");
  if (opts.k == 0) throw ValidationError("k must be positive");
  if (opts.k > vectors.size()) {
    throw ValidationError("k = " + std::to_string(opts.k) + " exceeds vocabulary size " +
                          std::to_string(vectors.size()));
  }

  const std::size_t n = vectors.size(), d = vectors.dim();
  std::vector<double> weights(n);
  for (std::size_t i = 0; i < n; ++i) weights[i] = weight(unigram.probability(vectors.words()[i]), cfg);

  // Training subset: whole vocabulary, or the most frequent words.
  std::vector<std::size_t> train(n);
  for (std::size_t i = 0; i < n; ++i) train[i] = i;
  if (opts.top_n_vocab > 0 && opts.top_n_vocab < n) {
    std::stable_sort(train.begin(), train.end(), [&](std::size_t a, std::size_t b) {
      return unigram.probability(vectors.words()[a]) > unigram.probability(vectors.words()[b]);
    });
    train.resize(opts.top_n_vocab);
    std::sort(train.begin(), train.end());
    if (opts.k > train.size()) throw ValidationError("k exceeds --top-n-vocab");
  }

  KMeansOptions km{opts.k, opts.seed, opts.max_iter, opts.tol, opts.threads};
  KMeansResult fit;
  std::vector<std::uint32_t> labels(n);
  if (train.size() == n) {
    fit = weighted_kmeans(vectors.matrix(), weights, km);
    labels = fit.labels;
  } else {
    Matrix sub(train.size(), d);
    std::vector<double> sub_w(train.size());
    for (std::size_t t = 0; t < train.size(); ++t) {
      auto src = vectors.vector(train[t]);
      std::copy(src.begin(), src.end(), sub.row(t).begin());
      sub_w[t] = weights[train[t]];
    }
    fit = weighted_kmeans(sub, sub_w, km);
    std::vector<double> dist;
    detail::assign_nearest(vectors.matrix(), fit.centers, opts.threads, labels, dist);
    for (std::size_t t = 0; t < train.size(); ++t) labels[train[t]] = fit.labels[t];
  }

  GroupingResult out;
  auto& m = out.model;
  m.k = opts.k;
  m.dim = d;
  m.epsilon = cfg.epsilon;
  m.preprocess = vectors.preprocess;
  m.seed = opts.seed;
  m.centroids = std::move(fit.centers);
  m.words = vectors.words();
  m.assignment = std::move(labels);
  m.group_centroids = compute_group_centroids(m, vectors, unigram);
  out.diagnostics = std::move(fit.diagnostics);
  return out;
}

// Binary model container:
//   "S3E1" | u32 header length | JSON header | record* ,
// where each record is a u64 byte length followed by its payload, all
// integers little-endian. Records in order: Lloyd centroids (k*d f64),
// group centroids (k*d f64), words (u32 length + bytes, repeated),
// assignment (n u32).
namespace model_format {

inline constexpr char kMagic[4] = {'S', '3', 'E', '1'};
inline constexpr int kVersion = 1;

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline void put_f64(std::string& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

class Reader {
 public:
  explicit Reader(std::string_view buf) : buf_(buf) {}
  std::string_view take(std::size_t n) {
    if (n > buf_.size() - pos_) throw FormatError("model file is truncated");
    auto s = buf_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::uint32_t u32() {
    auto s = take(4);
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(s[static_cast<std::size_t>(i)]);
    return v;
  }
  std::uint64_t u64() {
    auto s = take(8);
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(s[static_cast<std::size_t>(i)]);
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  bool done() const { return pos_ == buf_.size(); }

 private:
  std::string_view buf_;
  std::size_t pos_ = 0;
};

}  // namespace model_format

inline std::string serialize_model(const GroupModel& model) {
  using namespace model_format;
  model.validate();
  nlohmann::ordered_json header = {
      {"format_version", kVersion},
      {"k", model.k},
      {"dim", model.dim},
      {"epsilon", model.epsilon},
      {"preprocess", std::string(to_string(model.preprocess))},
      {"seed", model.seed},
      {"n_words", model.words.size()},
  };
  const std::string text = header.dump();

  std::string out(kMagic, kMagic + 4);
  put_u32(out, static_cast<std::uint32_t>(text.size()));
  out += text;

  auto put_matrix = [&](const Matrix& m) {
    put_u64(out, m.data.size() * 8);
    for (double x : m.data) put_f64(out, x);
  };
  put_matrix(model.centroids);
  put_matrix(model.group_centroids);

  std::string words;
  for (const auto& w : model.words) {
    put_u32(words, static_cast<std::uint32_t>(w.size()));
    words += w;
  }
  put_u64(out, words.size());
  out += words;

  put_u64(out, model.assignment.size() * 4);
  for (auto a : model.assignment) put_u32(out, a);
  return out;
}

inline GroupModel deserialize_model(std::string_view bytes) {
  using namespace model_format;
  Reader r(bytes);
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw FormatError("not an S3E model file (bad magic bytes)");
  }
  r.take(4);
  const auto header_len = r.u32();
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(r.take(header_len));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad model header: ") + e.what());
  }

  GroupModel m;
  std::size_t n_words = 0;
  try {
    if (header.at("format_version").get<int>() != kVersion) {
      throw FormatError("unsupported model format version " + header.at("format_version").dump());
    }
    m.k = header.at("k").get<std::size_t>();
    m.dim = header.at("dim").get<std::size_t>();
    m.epsilon = header.at("epsilon").get<double>();
    m.preprocess = parse_preprocess_mode(header.at("preprocess").get<std::string>());
    m.seed = header.at("seed").get<std::uint64_t>();
    n_words = header.at("n_words").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad model header: ") + e.what());
  }

  auto get_matrix = [&](const char* what) {
    const auto len = r.u64();
    if (m.k == 0 || m.dim == 0 || len != static_cast<std::uint64_t>(m.k) * m.dim * 8) {
      throw FormatError(std::string("model record '") + what + "' has the wrong size");
    }
    Matrix out(m.k, m.dim);
    for (double& x : out.data) x = r.f64();
    return out;
  };
  m.centroids = get_matrix("centroids");
  m.group_centroids = get_matrix("group_centroids");

  const auto words_len = r.u64();
  Reader wr(r.take(static_cast<std::size_t>(words_len)));
  m.words.reserve(n_words);
  for (std::size_t i = 0; i < n_words; ++i) {
    const auto len = wr.u32();
    m.words.emplace_back(wr.take(len));
  }
  if (!wr.done()) throw FormatError("model word record has trailing bytes");

  if (r.u64() != static_cast<std::uint64_t>(n_words) * 4) throw FormatError("model assignment record has the wrong size");
  m.assignment.resize(n_words);
  for (auto& a : m.assignment) a = r.u32();
  if (!r.done()) throw FormatError("model file has trailing bytes");

  m.validate();
  return m;
}

inline void save_model(const GroupModel& model, const std::string& path) {
  const auto bytes = serialize_model(model);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("failed writing '" + path + "'");
}

inline GroupModel load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path + "'");
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return deserialize_model(bytes);
  } catch (const ValidationError& e) {
    throw ValidationError(path + ": " + e.what());
  } catch (const FormatError& e) {
    throw FormatError(path + ": " + e.what());
  }
}

}  // namespace s3e
