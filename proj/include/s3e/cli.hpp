#pragma once

#include <charconv>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "s3e/baselines.hpp"
#include "s3e/bench.hpp"
#include "s3e/embedding.hpp"
#include "s3e/error.hpp"
#include "s3e/grouping.hpp"
#include "s3e/sts_eval.hpp"
#include "s3e/tokenizer.hpp"
#include "s3e/vectors_io.hpp"
#include "s3e/weighting.hpp"

namespace s3e::cli {

inline constexpr int kReportSchemaVersion = 1;

class UsageError : public Error {
 public:
  using Error::Error;
};

// --help was requested; `text` is the help screen.
struct HelpRequested {
  std::string text;
};

struct RunConfig {
  std::string subcommand;
  std::vector<std::string> vectors;
  std::string freq;
  std::optional<std::string> preprocess;
  double epsilon = 1e-3;
  std::optional<std::size_t> k;
  std::uint64_t seed = 0;
  std::string seed_source = "default";
  std::size_t max_iter = 100;
  double tol = 1e-4;
  std::size_t top_n_vocab = 0;
  std::size_t threads = 1;
  std::string out;
  std::string diagnostics;
  std::string model;
  std::string input = "-";
  std::string output = "-";
  std::string format = "text";
  std::string mode = "cov_plus_mean";
  bool lowercase = true;
  std::string data;
  std::string name;
  std::optional<std::string> baseline;
  std::optional<std::string> k_sweep;
  std::string report;
  std::size_t trials = 5;
  std::size_t block_size = 100;

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["subcommand"] = subcommand;
    j["vectors"] = vectors;
    j["freq"] = freq;
    j["preprocess"] = preprocess ? nlohmann::ordered_json(*preprocess) : nlohmann::ordered_json(nullptr);
    j["epsilon"] = epsilon;
    j["k"] = k ? nlohmann::ordered_json(*k) : nlohmann::ordered_json(nullptr);
    j["seed"] = seed;
    j["seed_source"] = seed_source;
    j["max_iter"] = max_iter;
    j["tol"] = tol;
    j["top_n_vocab"] = top_n_vocab;
    j["mode"] = mode;
    j["lowercase"] = lowercase;
    if (subcommand == "build-groups") {
      j["out"] = out;
    } else if (subcommand == "embed") {
      j["model"] = model;
      j["input"] = input;
      j["format"] = format;
    } else if (subcommand == "eval-sts") {
      j["data"] = data;
      j["model"] = model;
      j["baseline"] = baseline ? nlohmann::ordered_json(*baseline) : nlohmann::ordered_json(nullptr);
      j["k_sweep"] = k_sweep ? nlohmann::ordered_json(*k_sweep) : nlohmann::ordered_json(nullptr);
    } else if (subcommand == "bench") {
      j["data"] = data;
      j["model"] = model;
      j["trials"] = trials;
      j["block_size"] = block_size;
    }
    return j;
  }
};

namespace detail {

inline void add_vector_flags(CLI::App* sub, RunConfig& c) {
  sub->add_option("--vectors", c.vectors, "Word-vector text file; repeat to concatenate in order")->required();
  sub->add_option("--freq", c.freq, "Word frequency file (word count per line)")->required();
  sub->add_option("--preprocess", c.preprocess, "Vector preprocessing")
      ->check(CLI::IsMember({"none", "l2", "center_scale"}));
}

inline void add_tokenizer_flags(CLI::App* sub, RunConfig& c) {
  sub->add_flag_callback("--no-lowercase", [&c] { c.lowercase = false; }, "Keep token case");
}

}  // namespace detail

// Parses a full argv (argv[0] is the program name). Throws UsageError on any
// invalid command line and HelpRequested for --help.
inline RunConfig parse_args(const std::vector<std::string>& argv) {
  RunConfig c;
  CLI::App app{"S3E sentence embeddings from static word vectors", "s3e"};
  app.require_subcommand(1);
  std::optional<std::uint64_t> seed_flag;

  auto* build = app.add_subcommand("build-groups", "Cluster the vocabulary into semantic groups and save a model");
  detail::add_vector_flags(build, c);
  build->add_option("-k,--k", c.k, "Number of semantic groups")->required()->check(CLI::PositiveNumber);
  build->add_option("--seed", seed_flag, "RNG seed (env S3E_SEED overrides the default 0)");
  build->add_option("--epsilon", c.epsilon, "Weighting parameter epsilon")->check(CLI::PositiveNumber);
  build->add_option("--max-iter", c.max_iter, "Maximum Lloyd iterations")->check(CLI::PositiveNumber);
  build->add_option("--tol", c.tol, "Convergence tolerance on centroid shift")->check(CLI::NonNegativeNumber);
  build->add_option("--top-n-vocab", c.top_n_vocab, "Cluster only the n most frequent words (0 = all)");
  build->add_option("--threads", c.threads, "Threads for the assignment step")->check(CLI::PositiveNumber);
  build->add_option("--out", c.out, "Output model path")->required();
  build->add_option("--diagnostics", c.diagnostics, "Write clustering diagnostics JSON here");

  auto* emb = app.add_subcommand("embed", "Embed sentences, one per input line");
  detail::add_vector_flags(emb, c);
  detail::add_tokenizer_flags(emb, c);
  emb->add_option("--model", c.model, "Model file from build-groups")->required();
  emb->add_option("--input", c.input, "Input file, '-' for stdin");
  emb->add_option("--output", c.output, "Output file, '-' for stdout");
  emb->add_option("--format", c.format, "Output format")->check(CLI::IsMember({"text", "jsonl"}));
  emb->add_option("--mode", c.mode, "Embedding mode")->check(CLI::IsMember({"cov_only", "cov_plus_mean"}));
  emb->add_option("--threads", c.threads, "Worker threads")->check(CLI::PositiveNumber);

  auto* eval = app.add_subcommand("eval-sts", "Pearson correlation of cosine similarities on an STS dataset");
  detail::add_vector_flags(eval, c);
  detail::add_tokenizer_flags(eval, c);
  eval->add_option("--data", c.data, "STS TSV file")->required();
  eval->add_option("--name", c.name, "Dataset name for the report (default: file name)");
  auto* model_opt = eval->add_option("--model", c.model, "Model file from build-groups");
  auto* baseline_opt = eval->add_option("--baseline", c.baseline, "Evaluate a baseline embedder instead")
                           ->check(CLI::IsMember({"avg", "sif", "sif_pc"}));
  auto* k_opt = eval->add_option("-k,--k", c.k, "Build a model with this many groups")->check(CLI::PositiveNumber);
  auto* sweep_opt = eval->add_option("--k-sweep", c.k_sweep, "Cluster counts start:stop:step or a,b,c");
  eval->add_option("--seed", seed_flag, "RNG seed for models built on the fly");
  eval->add_option("--epsilon", c.epsilon, "Weighting parameter epsilon")->check(CLI::PositiveNumber);
  eval->add_option("--max-iter", c.max_iter, "Maximum Lloyd iterations")->check(CLI::PositiveNumber);
  eval->add_option("--tol", c.tol, "Convergence tolerance on centroid shift")->check(CLI::NonNegativeNumber);
  eval->add_option("--top-n-vocab", c.top_n_vocab, "Cluster only the n most frequent words (0 = all)");
  eval->add_option("--threads", c.threads, "Threads for clustering")->check(CLI::PositiveNumber);
  eval->add_option("--mode", c.mode, "Embedding mode")->check(CLI::IsMember({"cov_only", "cov_plus_mean"}));
  eval->add_option("--report", c.report, "Write the JSON report here (default: stdout)");
  baseline_opt->excludes(model_opt)->excludes(k_opt)->excludes(sweep_opt);
  model_opt->excludes(k_opt)->excludes(sweep_opt);
  k_opt->excludes(sweep_opt);

  auto* bench = app.add_subcommand("bench", "Time single-sentence inference");
  detail::add_vector_flags(bench, c);
  detail::add_tokenizer_flags(bench, c);
  bench->add_option("--data", c.data, "Sentences, one per line, or an STS TSV")->required();
  bench->add_option("--model", c.model, "Model file from build-groups")->required();
  bench->add_option("--trials", c.trials, "Timed passes")->check(CLI::PositiveNumber);
  bench->add_option("--block-size", c.block_size, "Sentences per timed block")->check(CLI::PositiveNumber);
  bench->add_option("--mode", c.mode, "Embedding mode")->check(CLI::IsMember({"cov_only", "cov_plus_mean"}));
  bench->add_option("--report", c.report, "Write the JSON report here (default: stdout)");

  std::vector<std::string> args(argv.rbegin(), argv.rend() - (argv.empty() ? 0 : 1));
  try {
    app.parse(args);
  } catch (const CLI::CallForHelp&) {
    std::string text;
    for (auto* sub : app.get_subcommands()) text = sub->help();
    throw HelpRequested{text.empty() ? app.help() : text};
  } catch (const CLI::CallForAllHelp&) {
    throw HelpRequested{app.help("", CLI::AppFormatMode::All)};
  } catch (const CLI::ParseError& e) {
    throw UsageError(e.what());
  }

  c.subcommand = app.get_subcommands().front()->get_name();
  if (c.subcommand == "eval-sts" && !c.baseline && c.model.empty() && !c.k && !c.k_sweep) {
    throw UsageError("eval-sts needs one of --model, --baseline, -k or --k-sweep");
  }
  if (c.k_sweep) {
    try {
      (void)parse_k_sweep(*c.k_sweep);
    } catch (const ValidationError& e) {
      throw UsageError(std::string("--k-sweep: ") + e.what());
    }
  }
  if (seed_flag) {
    c.seed = *seed_flag;
    c.seed_source = "flag";
  } else if (const char* env = std::getenv("S3E_SEED")) {
    auto v = s3e::detail::parse_uint(env);
    if (!v) throw UsageError(std::string("S3E_SEED must be a non-negative integer, got '") + env + "'");
    c.seed = *v;
    c.seed_source = "env";
  }
  return c;
}

namespace detail {

struct Inputs {
  WordVectorTable vectors;
  UnigramTable unigram;
};

inline Inputs load_inputs(const RunConfig& c, PreprocessMode mode, std::ostream& log) {
  std::vector<WordVectorTable> tables;
  for (const auto& path : c.vectors) {
    tables.push_back(load_vectors(path));
    log << "s3e: loaded " << tables.back().size() << " vectors of dim " << tables.back().dim() << " from " << path;
    if (tables.back().duplicates_dropped) log << " (" << tables.back().duplicates_dropped << " duplicates dropped)";
    log << '\n';
  }
  Inputs in;
  if (tables.size() == 1) {
    in.vectors = std::move(tables.front());
  } else {
    in.vectors = concat_vocab_tables(tables);
    log << "s3e: concatenated vocabulary: " << in.vectors.size() << " words, dim " << in.vectors.dim() << '\n';
  }
  if (mode != PreprocessMode::none) {
    Matrix m = in.vectors.matrix();
    apply_preprocess(m, mode);
    in.vectors = WordVectorTable(in.vectors.words(), std::move(m));
  }
  in.vectors.preprocess = mode;
  in.unigram = load_unigram(c.freq);
  log << "s3e: loaded " << in.unigram.size() << " frequency entries (total count " << in.unigram.total_count()
      << ")\n";
  return in;
}

inline PreprocessMode resolve_preprocess(const RunConfig& c, const GroupModel* model) {
  if (!model) return parse_preprocess_mode(c.preprocess.value_or("none"));
  if (c.preprocess && parse_preprocess_mode(*c.preprocess) != model->preprocess) {
    throw ValidationError("--preprocess " + *c.preprocess + " conflicts with the model's '" +
                          std::string(to_string(model->preprocess)) + "'");
  }
  return model->preprocess;
}

inline std::string format_double(double x) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, ptr);
}

inline void write_text(const std::string& path, const std::string& text, std::ostream& stdout_stream) {
  if (path.empty() || path == "-") {
    stdout_stream << text;
    return;
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error("cannot open '" + path + "' for writing");
  f << text;
  if (!f) throw Error("failed writing '" + path + "'");
}

inline double oov_rate(std::span<const Sentence> sentences, const WordVectorTable& vectors) {
  std::size_t total = 0, missing = 0;
  for (const auto& s : sentences) {
    for (const auto& t : s.tokens) {
      ++total;
      if (!vectors.find(t)) ++missing;
    }
  }
  return total ? static_cast<double>(missing) / static_cast<double>(total) : 0.0;
}

inline GroupingOptions grouping_options(const RunConfig& c, std::size_t k) {
  GroupingOptions g;
  g.k = k;
  g.seed = c.seed;
  g.max_iter = c.max_iter;
  g.tol = c.tol;
  g.top_n_vocab = c.top_n_vocab;
  g.threads = c.threads;
  return g;
}

inline nlohmann::ordered_json diagnostics_json(const ClusterDiagnostics& d) {
  return {{"iterations", d.iterations},
          {"converged", d.converged},
          {"empty_group_events", d.empty_group_events},
          {"seed", d.seed},
          {"weighted_inertia", d.weighted_inertia}};
}

inline int run_build_groups(const RunConfig& c, std::ostream& log) {
  const auto in = load_inputs(c, resolve_preprocess(c, nullptr), log);
  const auto t0 = std::chrono::steady_clock::now();
  auto result = build_groups(in.vectors, in.unigram, WeightConfig{c.epsilon}, grouping_options(c, *c.k));
  const auto secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const auto& d = result.diagnostics;
  log << "s3e: clustered " << in.vectors.size() << " words into " << *c.k << " groups in " << d.iterations
      << " iterations (" << secs << " s), final weighted inertia "
      << (d.weighted_inertia.empty() ? 0.0 : d.weighted_inertia.back()) << ", empty-group repairs "
      << d.empty_group_events << '\n';
  save_model(result.model, c.out);
  if (!c.diagnostics.empty()) {
    nlohmann::ordered_json j;
    j["schema_version"] = kReportSchemaVersion;
    j["diagnostics"] = diagnostics_json(d);
    j["config"] = c.to_json();
    std::ostringstream unused;
    write_text(c.diagnostics, j.dump(2) + "\n", unused);
  }
  return 0;
}

inline int run_embed(const RunConfig& c, std::istream& in_stream, std::ostream& out_stream, std::ostream& log) {
  const auto model = load_model(c.model);
  const auto in = load_inputs(c, resolve_preprocess(c, &model), log);
  const Embedder embedder(model, in.vectors, in.unigram);
  const auto mode = parse_embed_mode(c.mode);
  const TokenizerOptions tok{c.lowercase};

  std::vector<std::string> lines;
  {
    std::ifstream file;
    std::istream* src = &in_stream;
    if (c.input != "-") {
      file.open(c.input, std::ios::binary);
      if (!file) throw Error("cannot open '" + c.input + "'");
      src = &file;
    }
    std::string line;
    while (std::getline(*src, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      lines.push_back(std::move(line));
    }
  }
  std::vector<Sentence> sentences;
  sentences.reserve(lines.size());
  for (const auto& l : lines) sentences.push_back({tokenize(l, tok)});
  log << "s3e: embedding " << sentences.size() << " sentences, OOV rate " << oov_rate(sentences, in.vectors) << '\n';

  const auto embeddings = embedder.embed_batch(sentences, mode, c.threads);
  std::string text;
  for (std::size_t i = 0; i < embeddings.size(); ++i) {
    const auto& e = embeddings[i];
    if (c.format == "jsonl") {
      nlohmann::ordered_json j;
      j["text"] = lines[i];
      j["dim"] = e.values.size();
      j["norm_flag"] = e.norm_flag;
      j["mode"] = c.mode;
      j["embedding"] = e.values;
      text += j.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
    } else {
      for (std::size_t j = 0; j < e.values.size(); ++j) {
        if (j) text += ' ';
        text += format_double(e.values[j]);
      }
    }
    text += '\n';
  }
  write_text(c.output, text, out_stream);
  return 0;
}

inline std::string dataset_name(const RunConfig& c) {
  if (!c.name.empty()) return c.name;
  auto p = c.data.find_last_of('/');
  return p == std::string::npos ? c.data : c.data.substr(p + 1);
}

inline int run_eval(const RunConfig& c, std::ostream& out_stream, std::ostream& log) {
  const TokenizerOptions tok{c.lowercase};
  const auto pairs = load_sts(c.data, tok);
  const auto name = dataset_name(c);
  const auto corpus = all_sentences(pairs);

  std::optional<GroupModel> loaded;
  if (!c.model.empty()) loaded = load_model(c.model);
  const auto in = load_inputs(c, resolve_preprocess(c, loaded ? &*loaded : nullptr), log);
  log << "s3e: " << pairs.size() << " pairs from " << c.data << ", OOV rate " << oov_rate(corpus, in.vectors) << '\n';

  const auto echo = c.to_json();
  std::vector<EvalReport> reports;
  const auto mode = parse_embed_mode(c.mode);

  auto eval_model = [&](const GroupModel& model) {
    const Embedder embedder(model, in.vectors, in.unigram);
    auto ws = embedder.make_workspace();
    auto report = evaluate(pairs, [&](const Sentence& s) { return embedder.embed(s, mode, ws).values; }, name);
    report.k = model.k;
    report.config_echo = echo;
    log << "s3e: K=" << model.k << " pearson " << report.pearson << " (" << report.n_zero_embeddings
        << " zero-embedding pairs)\n";
    reports.push_back(std::move(report));
  };

  if (c.baseline) {
    BaselineEmbedder embedder(parse_baseline_kind(*c.baseline), in.vectors, in.unigram, WeightConfig{c.epsilon});
    embedder.fit(corpus);
    auto report = evaluate(pairs, [&](const Sentence& s) { return embedder.embed(s); }, name);
    report.config_echo = echo;
    log << "s3e: baseline " << *c.baseline << " pearson " << report.pearson << '\n';
    reports.push_back(std::move(report));
  } else if (loaded) {
    eval_model(*loaded);
  } else {
    const auto ks = c.k_sweep ? parse_k_sweep(*c.k_sweep) : std::vector<std::size_t>{*c.k};
    for (auto k : ks) {
      auto built = build_groups(in.vectors, in.unigram, WeightConfig{c.epsilon}, grouping_options(c, k));
      eval_model(built.model);
    }
  }

  nlohmann::ordered_json j;
  j["schema_version"] = kReportSchemaVersion;
  j["reports"] = nlohmann::ordered_json::array();
  for (const auto& r : reports) j["reports"].push_back(r.to_json());
  write_text(c.report, j.dump(2) + "\n", out_stream);
  return 0;
}

inline std::vector<Sentence> load_bench_sentences(const RunConfig& c) {
  const TokenizerOptions tok{c.lowercase};
  std::ifstream f(c.data, std::ios::binary);
  if (!f) throw Error("cannot open '" + c.data + "'");
  std::string first;
  while (std::getline(f, first) && first.find_first_not_of(" \t\r") == std::string::npos) {
  }
  if (first.find('\t') != std::string::npos) return all_sentences(load_sts(c.data, tok));
  f.clear();
  f.seekg(0);
  std::vector<Sentence> out;
  std::string line;
  while (std::getline(f, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    out.push_back({tokenize(line, tok)});
  }
  if (out.empty()) throw ValidationError("'" + c.data + "' has no sentences");
  return out;
}

inline int run_bench_cmd(const RunConfig& c, std::ostream& out_stream, std::ostream& log) {
  const auto model = load_model(c.model);
  const auto in = load_inputs(c, resolve_preprocess(c, &model), log);
  const Embedder embedder(model, in.vectors, in.unigram);
  const auto sentences = load_bench_sentences(c);
  log << "s3e: benchmarking " << sentences.size() << " sentences, K=" << model.k << ", d=" << model.dim << '\n';
  BenchOptions opts;
  opts.trials = c.trials;
  opts.block_size = c.block_size;
  auto report = run_bench(sentences, embedder, parse_embed_mode(c.mode), opts);
  report.config_echo = c.to_json();
  log << "s3e: mean " << report.per_sentence_ms.mean << " ms/sentence, median " << report.per_sentence_ms.median
      << ", p95 " << report.per_sentence_ms.p95 << ", residual-stage time(2N)/time(N) " << report.scaling_slope
      << '\n';
  auto j = report.to_json();
  j["schema_version"] = kReportSchemaVersion;
  write_text(c.report, j.dump(2) + "\n", out_stream);
  return 0;
}

}  // namespace detail

// Dispatches a parsed configuration. Returns the process exit status; errors
// are reported as one line on `log`.
inline int run(const RunConfig& c, std::istream& in, std::ostream& out, std::ostream& log) {
  try {
    if (c.subcommand == "build-groups") return detail::run_build_groups(c, log);
    if (c.subcommand == "embed") return detail::run_embed(c, in, out, log);
    if (c.subcommand == "eval-sts") return detail::run_eval(c, out, log);
    if (c.subcommand == "bench") return detail::run_bench_cmd(c, out, log);
    log << "s3e: error: unknown subcommand '" << c.subcommand << "'\n";
    return 2;
  } catch (const std::exception& e) {
    log << "s3e: error: " << c.subcommand << ": " << e.what() << '\n';
    return 1;
  }
}

inline int main(const std::vector<std::string>& argv, std::istream& in, std::ostream& out, std::ostream& log) {
  RunConfig c;
  try {
    c = parse_args(argv);
  } catch (const HelpRequested& h) {
    out << h.text;
    return 0;
  } catch (const UsageError& e) {
    log << "s3e: usage error: " << e.what() << '\n';
    return 2;
  }
  return run(c, in, out, log);
}

}  // namespace s3e::cli
