#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "s3e/embedding.hpp"
#include "s3e/error.hpp"

namespace s3e {

struct BenchOptions {
  std::size_t trials = 5;
  // Sentences per timed block; per-sentence time is block time / block size.
  std::size_t block_size = 100;
  // Minimum wall time of one residual-stage measurement.
  double min_scaling_ms = 200.0;
};

struct TimingStats {
  double mean = 0.0;
  double median = 0.0;
  double p95 = 0.0;
};

struct BenchReport {
  TimingStats per_sentence_ms;
  std::size_t n_sentences = 0;
  std::size_t n_trials = 0;
  // time(2N) / time(N) of the residual stage, each sentence concatenated with itself.
  double scaling_slope = 0.0;
  // Same ratio for the full embedding, which also carries the length-independent
  // covariance term and therefore stays closer to 1.
  double embed_scaling_slope = 0.0;
  double mean_tokens = 0.0;
  nlohmann::ordered_json config_echo = nlohmann::ordered_json::object();

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["per_sentence_ms"] = {{"mean", per_sentence_ms.mean},
                            {"median", per_sentence_ms.median},
                            {"p95", per_sentence_ms.p95}};
    j["n_sentences"] = n_sentences;
    j["n_trials"] = n_trials;
    j["mean_tokens"] = mean_tokens;
    j["scaling_slope"] = scaling_slope;
    j["embed_scaling_slope"] = embed_scaling_slope;
    j["config"] = config_echo;
    return j;
  }
};

namespace detail {

using bench_clock = std::chrono::steady_clock;

inline double elapsed_ms(bench_clock::time_point a, bench_clock::time_point b) {
  return std::chrono::duration<double, std::milli>(b - a).count();
}

inline TimingStats summarize(std::vector<double> xs) {
  TimingStats s;
  if (xs.empty()) return s;
  std::sort(xs.begin(), xs.end());
  double total = 0.0;
  for (double x : xs) total += x;
  s.mean = total / static_cast<double>(xs.size());
  const std::size_t n = xs.size();
  s.median = n % 2 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
  const auto idx = static_cast<std::size_t>(std::ceil(0.95 * static_cast<double>(n))) - 1;
  s.p95 = xs[std::min(idx, n - 1)];
  return s;
}

inline double median_of(std::vector<double> xs) { return summarize(std::move(xs)).median; }

}  // namespace detail

inline std::vector<Sentence> self_concatenated(std::span<const Sentence> sentences) {
  std::vector<Sentence> out;
  out.reserve(sentences.size());
  for (const auto& s : sentences) {
    Sentence d = s;
    d.tokens.insert(d.tokens.end(), s.tokens.begin(), s.tokens.end());
    out.push_back(std::move(d));
  }
  return out;
}

// Times single-sentence embedding (batch size 1) on the sequential path.
// Model construction is never timed; one untimed pass warms caches first.
inline BenchReport run_bench(std::span<const Sentence> sentences, const Embedder& embedder, EmbedMode mode,
                             const BenchOptions& opts = {}) {
  if (sentences.empty()) throw ValidationError("bench needs at least one sentence");
  if (opts.trials == 0) throw ValidationError("bench needs at least one trial");
  if (opts.block_size == 0) throw ValidationError("bench block size must be positive");
  using detail::bench_clock;

  auto ws = embedder.make_workspace();
  volatile double sink = 0.0;
  for (const auto& s : sentences) sink = sink + embedder.embed(s, mode, ws).values[0];

  BenchReport report;
  report.n_sentences = sentences.size();
  report.n_trials = opts.trials;
  std::size_t tokens = 0;
  for (const auto& s : sentences) tokens += s.tokens.size();
  report.mean_tokens = static_cast<double>(tokens) / static_cast<double>(sentences.size());

  std::vector<double> samples;
  for (std::size_t t = 0; t < opts.trials; ++t) {
    for (std::size_t b = 0; b < sentences.size(); b += opts.block_size) {
      const std::size_t e = std::min(sentences.size(), b + opts.block_size);
      const auto t0 = bench_clock::now();
      for (std::size_t i = b; i < e; ++i) sink = sink + embedder.embed(sentences[i], mode, ws).values[0];
      const auto t1 = bench_clock::now();
      samples.push_back(detail::elapsed_ms(t0, t1) / static_cast<double>(e - b));
    }
  }
  report.per_sentence_ms = detail::summarize(std::move(samples));

  const auto doubled = self_concatenated(sentences);

  // Residual stage, N versus 2N tokens, interleaved to share any drift.
  // Each sentence is repeated back to back so both lengths run with its
  // vectors in cache and first-touch misses do not mask the token cost.
  auto residual_pass = [&](std::span<const Sentence> set, std::size_t reps) {
    const auto t0 = bench_clock::now();
    for (const auto& s : set) {
      for (std::size_t r = 0; r < reps; ++r) {
        embedder.accumulate(s.tokens, ws);
        sink = sink + static_cast<double>(ws.in_vocab);
      }
    }
    return detail::elapsed_ms(t0, bench_clock::now()) / static_cast<double>(reps);
  };
  std::size_t reps = 1;
  while (residual_pass(sentences, reps) * static_cast<double>(reps) < opts.min_scaling_ms && reps < (1u << 20)) reps *= 2;

  auto embed_pass = [&](std::span<const Sentence> set) {
    const auto t0 = bench_clock::now();
    for (const auto& s : set) sink = sink + embedder.embed(s, mode, ws).values[0];
    return detail::elapsed_ms(t0, bench_clock::now());
  };

  std::vector<double> res_ratios, emb_ratios;
  for (std::size_t t = 0; t < opts.trials; ++t) {
    const double single = residual_pass(sentences, reps);
    const double twice = residual_pass(doubled, reps);
    res_ratios.push_back(twice / single);
    const double e1 = embed_pass(sentences);
    const double e2 = embed_pass(doubled);
    emb_ratios.push_back(e2 / e1);
  }
  report.scaling_slope = detail::median_of(std::move(res_ratios));
  report.embed_scaling_slope = detail::median_of(std::move(emb_ratios));
  (void)sink;
  return report;
}

}  // namespace s3e
