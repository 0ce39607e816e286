#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <istream>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "s3e/embedding.hpp"
#include "s3e/error.hpp"
#include "s3e/tokenizer.hpp"
#include "s3e/vectors_io.hpp"

namespace s3e {

struct StsPair {
  Sentence sent_a;
  Sentence sent_b;
  double gold = 0.0;
};

// Reads sentence pairs from TSV. Rows with at least 7 columns follow the
// STS-Benchmark layout (score, sentence1, sentence2 in columns 5-7); rows
// with exactly 3 columns are `score TAB s1 TAB s2`.
inline std::vector<StsPair> read_sts(std::istream& in, const TokenizerOptions& tok = {},
                                     const std::string& source = "<stream>") {
  std::vector<StsPair> pairs;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    std::vector<std::string_view> cols;
    std::string_view rest(line);
    while (true) {
      auto p = rest.find('\t');
      cols.push_back(rest.substr(0, p));
      if (p == std::string_view::npos) break;
      rest.remove_prefix(p + 1);
    }
    std::size_t score_col = 0;
    if (cols.size() >= 7) score_col = 4;
    else if (cols.size() != 3) {
      throw ParseError(source + ":" + std::to_string(lineno) + ": expected 3 or at least 7 tab-separated columns, found " +
                       std::to_string(cols.size()));
    }
    std::string_view score_text = cols[score_col];
    while (!score_text.empty() && score_text.front() == ' ') score_text.remove_prefix(1);
    while (!score_text.empty() && score_text.back() == ' ') score_text.remove_suffix(1);
    auto gold = detail::parse_double(score_text);
    if (!gold || !std::isfinite(*gold)) {
      throw ParseError(source + ":" + std::to_string(lineno) + ": bad score '" + std::string(cols[score_col]) + "'");
    }
    pairs.push_back({Sentence{tokenize(cols[score_col + 1], tok)}, Sentence{tokenize(cols[score_col + 2], tok)}, *gold});
  }
  if (pairs.empty()) throw ParseError(source + ": dataset has no sentence pairs");
  return pairs;
}

inline std::vector<StsPair> load_sts(const std::string& path, const TokenizerOptions& tok = {}) {
  auto in = detail::open_input(path);
  return read_sts(in, tok, path);
}

// Cosine similarity; 0 when either vector is zero.
inline double cosine(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) {
    throw ValidationError("cosine of vectors with lengths " + std::to_string(u.size()) + " and " +
                          std::to_string(v.size()));
  }
  const double uu = dot(u, u), vv = dot(v, v);
  if (!(uu > 0.0) || !(vv > 0.0)) return 0.0;
  // sqrt(uu * vv) rather than sqrt(uu) * sqrt(vv): exact 1 for u == v.
  return std::clamp(dot(u, v) / std::sqrt(uu * vv), -1.0, 1.0);
}

inline double pearson(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size()) throw ValidationError("pearson inputs differ in length");
  if (xs.size() < 2) throw ValidationError("pearson needs at least two observations");
  const double n = static_cast<double>(xs.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double dx = xs[i] - mx, dy = ys[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (!(sxx > 0.0) || !(syy > 0.0)) throw UndefinedCorrelationError("correlation undefined: a series has zero variance");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

struct EvalReport {
  std::string dataset_name;
  std::size_t n_pairs = 0;
  double pearson = 0.0;
  std::size_t n_zero_embeddings = 0;
  std::optional<std::size_t> k;
  nlohmann::ordered_json config_echo = nlohmann::ordered_json::object();

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["dataset_name"] = dataset_name;
    j["n_pairs"] = n_pairs;
    j["pearson"] = pearson;
    j["n_zero_embeddings"] = n_zero_embeddings;
    if (k) j["k"] = *k;
    j["config"] = config_echo;
    return j;
  }
};

using SentenceEmbedFn = std::function<std::vector<double>(const Sentence&)>;

inline bool is_zero(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return x == 0.0; });
}

// Cosine-scores every pair and correlates with the gold labels. A pair with
// a zero embedding on either side scores 0 and is counted, never dropped.
inline EvalReport evaluate(std::span<const StsPair> pairs, const SentenceEmbedFn& embed_fn,
                           std::string dataset_name = "sts") {
  if (pairs.empty()) throw ValidationError("no pairs to evaluate");
  std::vector<double> predicted(pairs.size()), gold(pairs.size());
  EvalReport report;
  report.dataset_name = std::move(dataset_name);
  report.n_pairs = pairs.size();
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto a = embed_fn(pairs[i].sent_a);
    const auto b = embed_fn(pairs[i].sent_b);
    if (is_zero(a) || is_zero(b)) ++report.n_zero_embeddings;
    predicted[i] = cosine(a, b);
    gold[i] = pairs[i].gold;
  }
  report.pearson = pearson(predicted, gold);
  return report;
}

inline std::vector<Sentence> all_sentences(std::span<const StsPair> pairs) {
  std::vector<Sentence> out;
  out.reserve(pairs.size() * 2);
  for (const auto& p : pairs) {
    out.push_back(p.sent_a);
    out.push_back(p.sent_b);
  }
  return out;
}

// Parses "start:stop:step" (inclusive stop) or a comma list "10,20,30".
inline std::vector<std::size_t> parse_k_sweep(std::string_view spec) {
  std::vector<std::size_t> ks;
  auto parse = [&](std::string_view s) {
    auto v = detail::parse_uint(s);
    if (!v || *v == 0) throw ValidationError("bad cluster count '" + std::string(s) + "' in k sweep");
    return static_cast<std::size_t>(*v);
  };
  if (spec.find(':') != std::string_view::npos) {
    std::vector<std::string_view> parts;
    std::string_view rest = spec;
    while (true) {
      auto p = rest.find(':');
      parts.push_back(rest.substr(0, p));
      if (p == std::string_view::npos) break;
      rest.remove_prefix(p + 1);
    }
    if (parts.size() != 3) throw ValidationError("k sweep must look like start:stop:step");
    const auto start = parse(parts[0]), stop = parse(parts[1]), step = parse(parts[2]);
    if (stop < start) throw ValidationError("k sweep stop is below start");
    for (std::size_t k = start; k <= stop; k += step) ks.push_back(k);
  } else {
    std::string_view rest = spec;
    while (true) {
      auto p = rest.find(',');
      ks.push_back(parse(rest.substr(0, p)));
      if (p == std::string_view::npos) break;
      rest.remove_prefix(p + 1);
    }
  }
  return ks;
}

}  // namespace s3e
