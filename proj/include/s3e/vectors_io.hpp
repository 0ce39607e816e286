#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "s3e/error.hpp"
#include "s3e/matrix.hpp"

namespace s3e {

enum class PreprocessMode { none, l2, center_scale };

inline std::string_view to_string(PreprocessMode m) {
  switch (m) {
    case PreprocessMode::none: return "none";
    case PreprocessMode::l2: return "l2";
    case PreprocessMode::center_scale: return "center_scale";
  }
  return "none";
}

inline PreprocessMode parse_preprocess_mode(std::string_view s) {
  if (s == "none") return PreprocessMode::none;
  if (s == "l2") return PreprocessMode::l2;
  if (s == "center_scale") return PreprocessMode::center_scale;
  throw ValidationError("unknown preprocess mode '" + std::string(s) + "'");
}

// Vocabulary to d-dimensional vector map. Rows are stored in file order.
class WordVectorTable {
 public:
  WordVectorTable() = default;

  // Builds a table from parallel word/row data. Throws on duplicate words,
  // ragged rows or non-finite components.
  WordVectorTable(std::vector<std::string> words, Matrix vectors)
      : words_(std::move(words)), vectors_(std::move(vectors)) {
    if (words_.size() != vectors_.rows) {
      throw ValidationError("word count does not match vector row count");
    }
    if (!words_.empty() && vectors_.cols == 0) {
      throw ValidationError("vector dimension must be positive");
    }
    index_.reserve(words_.size());
    for (std::size_t i = 0; i < words_.size(); ++i) {
      if (!index_.emplace(words_[i], i).second) {
        throw ValidationError("duplicate word '" + words_[i] + "' in vector table");
      }
    }
    for (double x : vectors_.data) {
      if (!std::isfinite(x)) throw ValidationError("non-finite vector component");
    }
  }

  std::size_t size() const { return words_.size(); }
  std::size_t dim() const { return vectors_.cols; }
  bool empty() const { return words_.empty(); }

  const std::vector<std::string>& words() const { return words_; }
  const Matrix& matrix() const { return vectors_; }

  std::optional<std::size_t> find(std::string_view word) const {
    auto it = index_.find(std::string(word));
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  std::span<const double> vector(std::size_t i) const { return vectors_.row(i); }

  // Number of duplicate entries dropped while loading (first occurrence wins).
  std::size_t duplicates_dropped = 0;
  PreprocessMode preprocess = PreprocessMode::none;

 private:
  std::vector<std::string> words_;
  Matrix vectors_;
  std::unordered_map<std::string, std::size_t> index_;
};

namespace detail {

inline std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r') ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

inline std::optional<double> parse_double(std::string_view s) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

inline std::optional<std::uint64_t> parse_uint(std::string_view s) {
  std::uint64_t v = 0;
  if (s.empty() || s.front() == '-' || s.front() == '+') return std::nullopt;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

inline std::ifstream open_input(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path + "'");
  return in;
}

}  // namespace detail

// Applies the preprocessing step in place. center_scale subtracts the
// vocabulary mean and divides each dimension by its population standard
// deviation (dimensions with zero spread are only centered).
inline void apply_preprocess(Matrix& m, PreprocessMode mode) {
  if (mode == PreprocessMode::none || m.rows == 0) return;
  if (mode == PreprocessMode::l2) {
    for (std::size_t i = 0; i < m.rows; ++i) {
      auto r = m.row(i);
      const double n = std::sqrt(dot(r, r));
      if (n > 0.0) {
        for (double& x : r) x /= n;
      }
    }
    return;
  }
  std::vector<double> mean(m.cols, 0.0), var(m.cols, 0.0);
  for (std::size_t i = 0; i < m.rows; ++i) {
    auto r = m.row(i);
    for (std::size_t j = 0; j < m.cols; ++j) mean[j] += r[j];
  }
  for (double& x : mean) x /= static_cast<double>(m.rows);
  for (std::size_t i = 0; i < m.rows; ++i) {
    auto r = m.row(i);
    for (std::size_t j = 0; j < m.cols; ++j) {
      r[j] -= mean[j];
      var[j] += r[j] * r[j];
    }
  }
  for (std::size_t j = 0; j < m.cols; ++j) {
    const double sd = std::sqrt(var[j] / static_cast<double>(m.rows));
    if (sd > 0.0) {
      for (std::size_t i = 0; i < m.rows; ++i) m(i, j) /= sd;
    }
  }
}

// Reads a text vector file: `word c1 ... cd` per line, with an optional
// `|V| d` header line. Duplicate words keep their first row.
inline WordVectorTable read_vectors(std::istream& in, PreprocessMode preprocess = PreprocessMode::none,
                                    const std::string& source = "<stream>") {
  std::vector<std::string> words;
  std::vector<double> values;
  std::unordered_map<std::string, std::size_t> seen;
  std::size_t dim = 0;
  std::optional<std::size_t> header_dim;
  std::size_t duplicates = 0;
  std::string line;
  std::size_t lineno = 0;
  bool first = true;

  while (std::getline(in, line)) {
    ++lineno;
    auto fields = detail::split_ws(line);
    if (fields.empty()) continue;
    if (first) {
      first = false;
      if (fields.size() == 2) {
        auto n = detail::parse_uint(fields[0]);
        auto d = detail::parse_uint(fields[1]);
        if (n && d) {
          header_dim = static_cast<std::size_t>(*d);
          continue;
        }
      }
    }
    const std::size_t row_dim = fields.size() - 1;
    if (row_dim == 0) {
      throw ParseError(source + ":" + std::to_string(lineno) + ": entry has no vector components");
    }
    if (dim == 0) {
      dim = row_dim;
      if (header_dim && *header_dim != dim) {
        throw ParseError(source + ":" + std::to_string(lineno) + ": dimension " + std::to_string(dim) +
                         " disagrees with header dimension " + std::to_string(*header_dim));
      }
    } else if (row_dim != dim) {
      throw ParseError(source + ":" + std::to_string(lineno) + ": expected " + std::to_string(dim) +
                       " components, found " + std::to_string(row_dim));
    }
    std::string word(fields[0]);
    if (seen.contains(word)) {
      ++duplicates;
      continue;
    }
    for (std::size_t j = 1; j < fields.size(); ++j) {
      auto v = detail::parse_double(fields[j]);
      if (!v || !std::isfinite(*v)) {
        throw ParseError(source + ":" + std::to_string(lineno) + ": bad number '" + std::string(fields[j]) + "'");
      }
      values.push_back(*v);
    }
    seen.emplace(word, words.size());
    words.push_back(std::move(word));
  }
  if (words.empty()) throw ParseError(source + ": no word vectors found");

  Matrix m(words.size(), dim);
  m.data = std::move(values);
  apply_preprocess(m, preprocess);
  WordVectorTable table(std::move(words), std::move(m));
  table.duplicates_dropped = duplicates;
  table.preprocess = preprocess;
  return table;
}

inline WordVectorTable load_vectors(const std::string& path, PreprocessMode preprocess = PreprocessMode::none) {
  auto in = detail::open_input(path);
  return read_vectors(in, preprocess, path);
}

// Writes the table in the headerless text format, shortest round-trip digits.
inline void write_vectors(std::ostream& out, const WordVectorTable& table) {
  char buf[64];
  for (std::size_t i = 0; i < table.size(); ++i) {
    out << table.words()[i];
    for (double x : table.vector(i)) {
      auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), x);
      out << ' ' << std::string_view(buf, static_cast<std::size_t>(ptr - buf));
    }
    out << '\n';
  }
}

// Keeps words present in every table, in the first table's order; each
// vector is the concatenation of its per-table vectors.
inline WordVectorTable concat_vocab_tables(std::span<const WordVectorTable> tables) {
  if (tables.empty()) throw ValidationError("no vector tables to concatenate");
  if (tables.size() == 1) return tables.front();

  std::size_t total_dim = 0;
  for (const auto& t : tables) total_dim += t.dim();

  std::vector<std::string> words;
  std::vector<double> values;
  std::vector<std::size_t> rows(tables.size());
  for (std::size_t i = 0; i < tables[0].size(); ++i) {
    const auto& w = tables[0].words()[i];
    bool everywhere = true;
    rows[0] = i;
    for (std::size_t t = 1; t < tables.size() && everywhere; ++t) {
      auto r = tables[t].find(w);
      if (!r) everywhere = false;
      else rows[t] = *r;
    }
    if (!everywhere) continue;
    words.push_back(w);
    for (std::size_t t = 0; t < tables.size(); ++t) {
      auto v = tables[t].vector(rows[t]);
      values.insert(values.end(), v.begin(), v.end());
    }
  }
  if (words.empty()) throw ValidationError("vector tables share no vocabulary");

  Matrix m(words.size(), total_dim);
  m.data = std::move(values);
  WordVectorTable out(std::move(words), std::move(m));
  out.preprocess = tables[0].preprocess;
  return out;
}

// Unigram probabilities estimated from raw counts.
class UnigramTable {
 public:
  UnigramTable() = default;
  UnigramTable(std::unordered_map<std::string, std::uint64_t> counts) {
    for (const auto& [w, c] : counts) total_count_ += c;
    if (total_count_ == 0) throw ValidationError("unigram counts sum to zero");
    probs_.reserve(counts.size());
    const double total = static_cast<double>(total_count_);
    for (const auto& [w, c] : counts) probs_.emplace(w, static_cast<double>(c) / total);
  }

  // Absent words have probability 0.
  double probability(std::string_view word) const {
    auto it = probs_.find(std::string(word));
    return it == probs_.end() ? 0.0 : it->second;
  }

  std::uint64_t total_count() const { return total_count_; }
  std::size_t size() const { return probs_.size(); }
  const std::unordered_map<std::string, double>& probabilities() const { return probs_; }

 private:
  std::unordered_map<std::string, double> probs_;
  std::uint64_t total_count_ = 0;
};

inline UnigramTable read_unigram(std::istream& in, const std::string& source = "<stream>") {
  std::unordered_map<std::string, std::uint64_t> counts;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto fields = detail::split_ws(line);
    if (fields.empty()) continue;
    if (fields.size() != 2) {
      throw ParseError(source + ":" + std::to_string(lineno) + ": expected 'word count'");
    }
    auto c = detail::parse_uint(fields[1]);
    if (!c) {
      throw ParseError(source + ":" + std::to_string(lineno) + ": count must be a non-negative integer, got '" +
                       std::string(fields[1]) + "'");
    }
    counts[std::string(fields[0])] += *c;
  }
  if (counts.empty()) throw ParseError(source + ": no frequency entries");
  return UnigramTable(std::move(counts));
}

inline UnigramTable load_unigram(const std::string& path) {
  auto in = detail::open_input(path);
  return read_unigram(in, path);
}

}  // namespace s3e
