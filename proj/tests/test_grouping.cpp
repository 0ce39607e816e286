#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

#include "test_helpers.hpp"

using namespace s3e;
using testing_util::table;
using testing_util::unigram;

namespace {

std::vector<std::string> numbered(std::size_t n) {
  std::vector<std::string> w;
  for (std::size_t i = 0; i < n; ++i) w.push_back("w" + std::to_string(i));
  return w;
}

// Random word table with a few Gaussian blobs and Zipf-ish counts.
struct RandomVocab {
  WordVectorTable vectors;
  UnigramTable unigram;
};

RandomVocab random_vocab(std::uint64_t seed, std::size_t n, std::size_t d, std::size_t blobs) {
  std::mt19937_64 rng(seed);
  auto centers = oracle::random_rows(rng, blobs, d, 4.0);
  std::normal_distribution<double> g(0.0, 1.0);
  oracle::Rows rows(n, std::vector<double>(d));
  std::unordered_map<std::string, std::uint64_t> counts;
  auto words = numbered(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) rows[i][j] = centers[i % blobs][j] + g(rng);
    counts[words[i]] = 1 + 100000 / (i + 1);
  }
  return {table(words, rows), unigram(counts)};
}

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("s3e_test_" + name)).string();
}

}  // namespace

TEST(WeightedKMeans, IdenticalPointsOneGroup) {
  Matrix pts(4, 3);
  for (std::size_t i = 0; i < 4; ++i) {
    pts(i, 0) = 1.5;
    pts(i, 1) = -2.0;
    pts(i, 2) = 0.25;
  }
  std::vector<double> w{0.1, 0.2, 0.3, 0.4};
  auto r = weighted_kmeans(pts, w, {.k = 1, .seed = 7});
  EXPECT_EQ(r.diagnostics.iterations, 1u);
  EXPECT_TRUE(r.diagnostics.converged);
  EXPECT_EQ(r.centers(0, 0), 1.5);
  EXPECT_EQ(r.centers(0, 1), -2.0);
  EXPECT_EQ(r.centers(0, 2), 0.25);
  for (auto l : r.labels) EXPECT_EQ(l, 0u);
}

TEST(WeightedKMeans, CenterIsWeightedMean) {
  Matrix pts(2, 2);
  pts(1, 0) = 3.0;
  std::vector<double> w{1.0, 2.0};
  auto r = weighted_kmeans(pts, w, {.k = 1, .seed = 0});
  EXPECT_DOUBLE_EQ(r.centers(0, 0), 2.0);
  EXPECT_DOUBLE_EQ(r.centers(0, 1), 0.0);
}

TEST(WeightedKMeans, RejectsBadK) {
  Matrix pts(3, 2);
  std::vector<double> w(3, 1.0);
  EXPECT_THROW(weighted_kmeans(pts, w, {.k = 0}), ValidationError);
  EXPECT_THROW(weighted_kmeans(pts, w, {.k = 4}), ValidationError);
}

TEST(WeightedKMeans, SeparatedPairsMatchBruteForce) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> jitter(-0.1, 0.1), wt(0.1, 1.0);
    oracle::Rows pts{{0 + jitter(rng), 0 + jitter(rng)},
                     {0.2 + jitter(rng), 0.1 + jitter(rng)},
                     {10 + jitter(rng), 10 + jitter(rng)},
                     {10.3 + jitter(rng), 9.8 + jitter(rng)}};
    std::vector<double> w{wt(rng), wt(rng), wt(rng), wt(rng)};
    auto best = oracle::best_two_partition(pts, w);
    auto r = weighted_kmeans(testing_util::to_matrix(pts), w, {.k = 2, .seed = seed});
    for (std::size_t i = 0; i < pts.size(); ++i) {
      EXPECT_EQ(r.labels[i] == r.labels[0], best[i] == best[0]) << "seed " << seed;
    }
  }
}

TEST(WeightedKMeans, InertiaNonIncreasingAndCentersAreWeightedMeans) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    std::mt19937_64 rng(seed + 100);
    auto rows = oracle::random_rows(rng, 300, 5);
    std::uniform_real_distribution<double> wt(0.01, 1.0);
    std::vector<double> w(rows.size());
    for (double& x : w) x = wt(rng);
    auto pts = testing_util::to_matrix(rows);
    auto r = weighted_kmeans(pts, w, {.k = 8, .seed = seed, .max_iter = 200, .tol = 0.0});
    const auto& in = r.diagnostics.weighted_inertia;
    ASSERT_EQ(in.size(), r.diagnostics.iterations);
    for (std::size_t t = 1; t < in.size(); ++t) EXPECT_LE(in[t], in[t - 1]) << "iteration " << t;

    std::vector<std::vector<double>> sums(8, std::vector<double>(5, 0.0));
    std::vector<double> mass(8, 0.0);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      for (std::size_t j = 0; j < 5; ++j) sums[r.labels[i]][j] += w[i] * rows[i][j];
      mass[r.labels[i]] += w[i];
    }
    for (std::size_t c = 0; c < 8; ++c) {
      ASSERT_GT(mass[c], 0.0);
      for (std::size_t j = 0; j < 5; ++j) EXPECT_NEAR(r.centers(c, j), sums[c][j] / mass[c], 1e-9);
    }
  }
}

TEST(WeightedKMeans, EmptyGroupRepairWhenFewDistinctPoints) {
  // Two distinct locations, three groups: at most two can ever be non-empty.
  Matrix pts(6, 1);
  for (std::size_t i = 3; i < 6; ++i) pts(i, 0) = 5.0;
  std::vector<double> w(6, 1.0);
  auto r = weighted_kmeans(pts, w, {.k = 3, .seed = 1});
  EXPECT_GE(r.diagnostics.empty_group_events, 1u);
  EXPECT_EQ(r.diagnostics.weighted_inertia.back(), 0.0);
}

TEST(WeightedKMeans, RepairMovesFarthestPoint) {
  // Three seeds land on three points; the outlier forces a repair whenever a
  // group empties, and the result must still be a valid 3-partition.
  Matrix pts(5, 1);
  pts(0, 0) = 0.0;
  pts(1, 0) = 0.1;
  pts(2, 0) = 0.2;
  pts(3, 0) = 0.3;
  pts(4, 0) = 100.0;
  std::vector<double> w(5, 1.0);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto r = weighted_kmeans(pts, w, {.k = 3, .seed = seed});
    std::vector<int> count(3, 0);
    for (auto l : r.labels) ++count[l];
    for (int c : count) EXPECT_GT(c, 0);
  }
}

TEST(WeightedKMeans, ThreadedAssignmentIsIdentical) {
  auto v = random_vocab(4, 5000, 6, 7);
  std::vector<double> w(v.vectors.size(), 1.0);
  auto a = weighted_kmeans(v.vectors.matrix(), w, {.k = 9, .seed = 3, .threads = 1});
  auto b = weighted_kmeans(v.vectors.matrix(), w, {.k = 9, .seed = 3, .threads = 4});
  EXPECT_EQ(a.labels, b.labels);
  EXPECT_EQ(a.centers, b.centers);
  EXPECT_EQ(a.diagnostics.weighted_inertia, b.diagnostics.weighted_inertia);
}

TEST(GroupCentroid, DividesByWordCount) {
  auto vt = table({"a", "b"}, {{1, 0}, {0, 1}});
  auto u = unigram({{"a", 1}, {"b", 1}});
  const WeightConfig cfg{0.5};  // p = 0.5 for both, weight 0.5
  std::vector<std::string> g{"a", "b"};
  auto c = group_centroid(g, vt, u, cfg);
  EXPECT_DOUBLE_EQ(c[0], 0.25);
  EXPECT_DOUBLE_EQ(c[1], 0.25);
}

TEST(GroupCentroid, SingletonAndZeroCases) {
  auto vt = table({"a", "z1", "z2"}, {{0.3, -0.7}, {0, 0}, {0, 0}});
  auto u = unigram({{"q", 10}});  // a is absent: p = 0, weight 1
  const WeightConfig cfg{};
  std::vector<std::string> single{"a"}, zeros{"z1", "z2"};
  auto c = group_centroid(single, vt, u, cfg);
  EXPECT_EQ(c[0], 0.3);
  EXPECT_EQ(c[1], -0.7);
  auto z = group_centroid(zeros, vt, u, cfg);
  EXPECT_EQ(z[0], 0.0);
  EXPECT_EQ(z[1], 0.0);
  EXPECT_THROW(group_centroid(std::span<const std::string>{}, vt, u, cfg), ValidationError);
}

TEST(BuildGroups, AssignsEveryWordAndRecomputesCentroids) {
  auto v = random_vocab(21, 400, 6, 5);
  const WeightConfig cfg{};
  auto res = build_groups(v.vectors, v.unigram, cfg, {.k = 5, .seed = 9});
  const auto& m = res.model;
  ASSERT_EQ(m.words.size(), v.vectors.size());
  EXPECT_NO_THROW(m.validate());
  auto again = compute_group_centroids(m, v.vectors, v.unigram);
  for (std::size_t i = 0; i < again.data.size(); ++i) EXPECT_NEAR(again.data[i], m.group_centroids.data[i], 1e-12);

  // g_i also agrees with the standalone formula over each group's words.
  for (std::size_t g = 0; g < m.k; ++g) {
    std::vector<std::string> members;
    for (std::size_t i = 0; i < m.words.size(); ++i)
      if (m.assignment[i] == g) members.push_back(m.words[i]);
    auto c = group_centroid(members, v.vectors, v.unigram, cfg);
    for (std::size_t j = 0; j < m.dim; ++j) EXPECT_NEAR(c[j], m.group_centroids(g, j), 1e-12);
  }
}

TEST(BuildGroups, DeterministicForSeed) {
  auto v = random_vocab(5, 600, 4, 6);
  auto a = build_groups(v.vectors, v.unigram, {}, {.k = 6, .seed = 42});
  auto b = build_groups(v.vectors, v.unigram, {}, {.k = 6, .seed = 42});
  EXPECT_TRUE(a.model == b.model);
  EXPECT_EQ(serialize_model(a.model), serialize_model(b.model));
}

TEST(BuildGroups, RejectsBadK) {
  auto v = random_vocab(5, 10, 2, 2);
  EXPECT_THROW(build_groups(v.vectors, v.unigram, {}, {.k = 0}), ValidationError);
  EXPECT_THROW(build_groups(v.vectors, v.unigram, {}, {.k = 11}), ValidationError);
}

TEST(BuildGroups, TopNVocabStillAssignsEveryWord) {
  auto v = random_vocab(8, 500, 4, 4);
  auto res = build_groups(v.vectors, v.unigram, {}, {.k = 4, .seed = 1, .top_n_vocab = 100});
  EXPECT_EQ(res.model.assignment.size(), 500u);
  EXPECT_NO_THROW(res.model.validate());
}

TEST(ModelFile, RoundTripIsFieldIdentical) {
  auto v = random_vocab(12, 200, 5, 3);
  auto res = build_groups(v.vectors, v.unigram, WeightConfig{2.5e-4}, {.k = 7, .seed = 99});
  res.model.preprocess = PreprocessMode::center_scale;
  const auto path = temp_path("roundtrip.s3e");
  save_model(res.model, path);
  auto back = load_model(path);
  EXPECT_TRUE(back == res.model);
  EXPECT_EQ(back.epsilon, 2.5e-4);
  EXPECT_EQ(back.seed, 99u);
  EXPECT_EQ(back.preprocess, PreprocessMode::center_scale);
  std::filesystem::remove(path);
}

TEST(ModelFile, RejectsBadMagicTruncationAndVersion) {
  auto v = random_vocab(12, 50, 3, 3);
  auto bytes = serialize_model(build_groups(v.vectors, v.unigram, {}, {.k = 3}).model);

  auto bad = bytes;
  bad[0] = 'X';
  EXPECT_THROW(deserialize_model(bad), FormatError);
  EXPECT_THROW(deserialize_model(bytes.substr(0, bytes.size() - 3)), FormatError);
  EXPECT_THROW(deserialize_model(bytes.substr(0, 20)), FormatError);
  EXPECT_THROW(deserialize_model(bytes + "x"), FormatError);

  auto versioned = bytes;
  auto pos = versioned.find("\"format_version\":1");
  ASSERT_NE(pos, std::string::npos);
  versioned[pos + 17] = '9';
  EXPECT_THROW(deserialize_model(versioned), FormatError);
}

TEST(ModelFile, AssignmentOutOfRangeFailsValidation) {
  auto v = random_vocab(12, 50, 3, 3);
  auto bytes = serialize_model(build_groups(v.vectors, v.unigram, {}, {.k = 3}).model);
  // Last u32 is the final word's group index; set it to k.
  bytes[bytes.size() - 4] = 3;
  bytes[bytes.size() - 3] = 0;
  bytes[bytes.size() - 2] = 0;
  bytes[bytes.size() - 1] = 0;
  EXPECT_THROW(deserialize_model(bytes), ValidationError);
}

TEST(ModelFile, MissingFileNamesPath) {
  try {
    load_model("/nonexistent/model.s3e");
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("/nonexistent/model.s3e"), std::string::npos);
  }
}
