#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

#include "scdh/error.hpp"
#include "scdh/retrieval.hpp"
#include "test_util.hpp"

using namespace scdh;
using namespace scdh::retrieval;

namespace {

std::vector<int> random_bits(std::mt19937_64& rng, std::size_t r) {
  std::bernoulli_distribution coin(0.5);
  std::vector<int> bits(r);
  for (int& b : bits) b = coin(rng);
  return bits;
}

HashCode pack(const std::vector<int>& bits) {
  HashCode c(bits.size());
  for (std::size_t i = 0; i < bits.size(); ++i) c.set(i, bits[i] != 0);
  return c;
}

// Naive oracle: squared Euclidean distance of +-1 vectors divided by 4.
std::vector<std::pair<std::uint64_t, int>> naive_search(const std::vector<int>& q,
                                                        const std::vector<std::vector<int>>& db,
                                                        const std::vector<std::uint64_t>& ids,
                                                        std::size_t k) {
  std::vector<std::pair<int, std::uint64_t>> all;
  for (std::size_t i = 0; i < db.size(); ++i) {
    double sq = 0.0;
    for (std::size_t b = 0; b < q.size(); ++b) {
      const double u = q[b] ? 1.0 : -1.0, v = db[i][b] ? 1.0 : -1.0;
      sq += (u - v) * (u - v);
    }
    all.emplace_back(static_cast<int>(sq / 4.0), ids[i]);
  }
  std::sort(all.begin(), all.end());
  std::vector<std::pair<std::uint64_t, int>> out;
  for (std::size_t i = 0; i < k; ++i) out.emplace_back(all[i].second, all[i].first);
  return out;
}

CodeIndex labeled_index(const std::vector<std::vector<int>>& bits, const std::vector<LabelSet>& labels) {
  CodeIndex idx;
  for (std::size_t i = 0; i < bits.size(); ++i) idx.add(pack(bits[i]), i, labels[i]);
  return idx;
}

}  // namespace

TEST(Binarize, SignRule) {
  const auto c = binarize(Vector{0.3, -0.2, 0.0});
  EXPECT_TRUE(c.bit(0));
  EXPECT_FALSE(c.bit(1));
  EXPECT_TRUE(c.bit(2));
  EXPECT_EQ(binarize(Vector(70, -1.0)).words(), (std::vector<std::uint64_t>{0, 0}));
  std::mt19937_64 rng(1);
  const auto f = scdh::testing::random_vector(rng, 65);
  Vector twice = f;
  for (double& x : twice) x *= 2;
  EXPECT_EQ(binarize(f), binarize(twice));
  EXPECT_EQ(binarize(Vector(65, 1.0)).words()[1], 1u);
}

TEST(Hamming, HandValuesAndMetric) {
  EXPECT_EQ(hamming(pack({1, 0, 1, 0}), pack({0, 1, 1, 0})), 2);
  std::mt19937_64 rng(2);
  const auto a = random_bits(rng, 48);
  std::vector<int> comp(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) comp[i] = 1 - a[i];
  EXPECT_EQ(hamming(pack(a), pack(a)), 0);
  EXPECT_EQ(hamming(pack(a), pack(comp)), 48);
  for (int t = 0; t < 1000; ++t) {
    const auto x = pack(random_bits(rng, 65)), y = pack(random_bits(rng, 65)), z = pack(random_bits(rng, 65));
    EXPECT_EQ(hamming(x, y), hamming(y, x));
    EXPECT_LE(hamming(x, z), hamming(x, y) + hamming(y, z));
  }
  EXPECT_THROW(hamming(HashCode(3), HashCode(4)), DimensionError);
}

TEST(HashCode, CanonicalPadding) {
  EXPECT_THROW(HashCode(3, {0xFFu}), ValidationError);
  EXPECT_NO_THROW(HashCode(3, {0x7u}));
  EXPECT_THROW(HashCode(65, {0}), DimensionError);
}

TEST(Search, MatchesNaiveOracle) {
  for (std::size_t r : {24u, 48u, 63u, 64u, 65u}) {
    std::mt19937_64 rng(r);
    std::vector<std::vector<int>> db;
    std::vector<std::uint64_t> ids(200);
    std::iota(ids.begin(), ids.end(), 0);
    std::shuffle(ids.begin(), ids.end(), rng);
    CodeIndex index;
    for (std::size_t i = 0; i < 200; ++i) {
      db.push_back(random_bits(rng, r));
      index.add(pack(db.back()), ids[i]);
    }
    for (int q = 0; q < 20; ++q) {
      const auto qb = random_bits(rng, r);
      const auto hits = search(pack(qb), index, 200);
      const auto expected = naive_search(qb, db, ids, 200);
      for (std::size_t i = 0; i < hits.size(); ++i) {
        EXPECT_EQ(hits[i].id, expected[i].first);
        EXPECT_EQ(hits[i].distance, expected[i].second);
      }
    }
  }
}

TEST(Search, Basics) {
  CodeIndex index;
  index.add(pack({1, 1, 0}), 7);
  index.add(pack({0, 0, 0}), 3);
  index.add(pack({1, 1, 1}), 5);
  auto hits = search(pack({0, 0, 0}), index, 3);
  EXPECT_EQ(hits[0].id, 3u);
  EXPECT_EQ(hits[0].distance, 0);
  hits = search(pack({1, 1, 0}), index, 1);
  EXPECT_EQ(hits.size(), 1u);
  EXPECT_EQ(hits[0].id, 7u);
  EXPECT_THROW(search(pack({0, 0, 0}), index, 4), PreconditionError);
  EXPECT_THROW(search(pack({0, 0, 0}), CodeIndex{}, 0), PreconditionError);
}

TEST(Map, HandFixture) {
  // Ranks 1 and 3 of 4 are relevant: AP = (1/1 + 2/3)/2.
  const auto queries = labeled_index({{0, 0, 0}}, {LabelSet::single(0)});
  const auto db = labeled_index({{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {1, 1, 1}},
                                {LabelSet::single(0), LabelSet::single(1), LabelSet::single(0),
                                 LabelSet::single(1)});
  EXPECT_NEAR(mean_average_precision(queries, db), (1.0 + 2.0 / 3.0) / 2.0, 1e-12);
  // Truncated at k=2: one hit at rank 1, divided by min(2, 2).
  EXPECT_NEAR(mean_average_precision(queries, db, 2), 0.5, 1e-12);
}

TEST(Map, EdgeCases) {
  const auto q = labeled_index({{0, 0}}, {LabelSet::single(0)});
  const auto all = labeled_index({{0, 0}, {1, 1}}, {LabelSet::single(0), LabelSet::single(0)});
  EXPECT_DOUBLE_EQ(mean_average_precision(q, all), 1.0);
  const auto late = labeled_index({{0, 0}, {1, 1}}, {LabelSet::single(1), LabelSet::single(0)});
  EXPECT_EQ(mean_average_precision(q, late, 1), 0.0);
  // Queries without any relevant item are excluded from the mean.
  const auto qs = labeled_index({{0, 0}, {0, 0}}, {LabelSet::single(0), LabelSet::single(2)});
  EXPECT_DOUBLE_EQ(mean_average_precision(qs, all), 1.0);
  CodeIndex unlabeled;
  unlabeled.add(pack({0, 0}), 1);
  EXPECT_THROW(mean_average_precision(q, unlabeled), PreconditionError);
}

TEST(Map, RandomLabelsNearPrior) {
  std::mt19937_64 rng(10);
  std::uniform_int_distribution<int> label(0, 3);
  std::vector<std::vector<int>> qb, db;
  std::vector<LabelSet> ql, dl;
  for (int i = 0; i < 200; ++i) {
    qb.push_back(random_bits(rng, 32));
    ql.push_back(LabelSet::single(label(rng)));
  }
  for (int i = 0; i < 2000; ++i) {
    db.push_back(random_bits(rng, 32));
    dl.push_back(LabelSet::single(label(rng)));
  }
  const double map = mean_average_precision(labeled_index(qb, ql), labeled_index(db, dl));
  // AP of a random ranking concentrates near the prior 1/4; spread over 200 queries is small.
  EXPECT_NEAR(map, 0.25, 3 * 0.02);
}

TEST(Map, InvariantUnderDatabasePermutation) {
  std::mt19937_64 rng(11);
  std::vector<std::vector<int>> db;
  std::vector<LabelSet> labels;
  for (int i = 0; i < 100; ++i) {
    db.push_back(random_bits(rng, 8));
    labels.push_back(LabelSet::single(i % 3));
  }
  const auto q = labeled_index({random_bits(rng, 8), random_bits(rng, 8)},
                               {LabelSet::single(0), LabelSet::single(1)});
  const auto a = labeled_index(db, labels);
  CodeIndex b;
  std::vector<std::size_t> perm(100);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  for (auto i : perm) b.add(pack(db[i]), i, labels[i]);
  EXPECT_EQ(mean_average_precision(q, a), mean_average_precision(q, b));
  EXPECT_EQ(precision_at_radius(q, a), precision_at_radius(q, b));
  EXPECT_EQ(topk_precision_curve(q, a, {1, 5, 50}), topk_precision_curve(q, b, {1, 5, 50}));
}

TEST(PrecisionAtRadius, Examples) {
  const auto q = labeled_index({{0, 0, 0, 0}}, {LabelSet::single(0)});
  const auto same = labeled_index({{0, 0, 0, 0}, {0, 0, 0, 0}}, {LabelSet::single(0), LabelSet::single(0)});
  EXPECT_DOUBLE_EQ(precision_at_radius(q, same), 1.0);
  const auto far = labeled_index({{1, 1, 1, 1}}, {LabelSet::single(0)});
  EXPECT_EQ(precision_at_radius(q, far), 0.0);
  EXPECT_EQ(precision_at_radius(q, far, 2, false), 0.0);
  // Five items, three inside the ball, two of them relevant.
  const auto five = labeled_index({{0, 0, 0, 0}, {1, 0, 0, 0}, {1, 1, 0, 0}, {1, 1, 1, 0}, {1, 1, 1, 1}},
                                  {LabelSet::single(0), LabelSet::single(1), LabelSet::single(0),
                                   LabelSet::single(0), LabelSet::single(0)});
  EXPECT_NEAR(precision_at_radius(q, five), 2.0 / 3.0, 1e-15);
  // Skipping empty balls changes the mean.
  const auto qs = labeled_index({{0, 0, 0, 0}, {1, 1, 1, 1}}, {LabelSet::single(0), LabelSet::single(0)});
  const auto one = labeled_index({{0, 0, 0, 0}}, {LabelSet::single(0)});
  EXPECT_DOUBLE_EQ(precision_at_radius(qs, one), 0.5);
  EXPECT_DOUBLE_EQ(precision_at_radius(qs, one, 2, false), 1.0);
}

TEST(TopkCurve, Examples) {
  std::vector<std::vector<int>> db;
  std::vector<LabelSet> labels;
  for (int i = 0; i < 40; ++i) {
    db.push_back(i < 20 ? std::vector<int>{0, 0, 0, 0} : std::vector<int>{1, 1, 1, 1});
    labels.push_back(LabelSet::single(i < 20 ? 0 : 1));
  }
  const auto dbi = labeled_index(db, labels);
  const auto q = labeled_index({{0, 0, 0, 0}, {1, 1, 1, 1}}, {LabelSet::single(0), LabelSet::single(1)});
  const auto curve = topk_precision_curve(q, dbi, {1, 10, 20, 30, 40});
  EXPECT_DOUBLE_EQ(curve[0].second, 1.0);
  for (std::size_t i = 1; i < curve.size(); ++i) EXPECT_LE(curve[i].second, curve[i - 1].second);
  EXPECT_DOUBLE_EQ(curve.back().second, 0.5);
  EXPECT_THROW(topk_precision_curve(q, dbi, {10, 5}), ValidationError);
  EXPECT_THROW(topk_precision_curve(q, dbi, {41}), ValidationError);
}

TEST(TopkCurve, MatchesNaiveOracle) {
  std::mt19937_64 rng(12);
  std::vector<std::vector<int>> db;
  std::vector<LabelSet> labels;
  for (int i = 0; i < 120; ++i) {
    db.push_back(random_bits(rng, 10));
    labels.push_back(LabelSet::single(i % 4));
  }
  const auto dbi = labeled_index(db, labels);
  std::vector<std::uint64_t> ids(120);
  std::iota(ids.begin(), ids.end(), 0);
  for (int t = 0; t < 10; ++t) {
    const auto qb = random_bits(rng, 10);
    const auto q = labeled_index({qb}, {LabelSet::single(t % 4)});
    const auto expected = naive_search(qb, db, ids, 120);
    const auto curve = topk_precision_curve(q, dbi, {1, 7, 60, 120});
    for (const auto& [k, p] : curve) {
      std::size_t rel = 0;
      for (std::size_t i = 0; i < k; ++i) rel += labels[expected[i].first].contains(t % 4);
      EXPECT_DOUBLE_EQ(p, static_cast<double>(rel) / static_cast<double>(k));
    }
    EXPECT_DOUBLE_EQ(curve.back().second, 0.25);
  }
}

TEST(Evaluate, ThreadCountDoesNotChangeResults) {
  std::mt19937_64 rng(13);
  std::vector<std::vector<int>> db, qb;
  std::vector<LabelSet> dl, ql;
  for (int i = 0; i < 300; ++i) {
    db.push_back(random_bits(rng, 16));
    dl.push_back(LabelSet::single(i % 5));
  }
  for (int i = 0; i < 50; ++i) {
    qb.push_back(random_bits(rng, 16));
    ql.push_back(LabelSet::single(i % 5));
  }
  EvalConfig one;
  one.map_k = 100;
  EvalConfig four = one;
  four.threads = 4;
  const auto a = evaluate(labeled_index(qb, ql), labeled_index(db, dl), one);
  const auto b = evaluate(labeled_index(qb, ql), labeled_index(db, dl), four);
  EXPECT_EQ(a.map, b.map);
  EXPECT_EQ(a.map_at_k, b.map_at_k);
  EXPECT_EQ(a.precision_at_radius2, b.precision_at_radius2);
  EXPECT_EQ(a.topk_curve, b.topk_curve);
  EXPECT_EQ(a.topk_curve.size(), 4u);  // k=500 and 1000 exceed the database
}

TEST(CodeFile, RoundTripAndErrors) {
  std::mt19937_64 rng(14);
  CodeIndex index;
  for (int i = 0; i < 10; ++i) index.add(pack(random_bits(rng, 65)), 1000 + i);
  const auto bytes = encode_codes(index);
  EXPECT_EQ(bytes.size(), 4 + 2 + 4 + 8 + 10 * (8 + 16));
  const auto back = decode_codes(bytes);
  EXPECT_EQ(back.ids, index.ids);
  EXPECT_EQ(back.codes, index.codes);
  EXPECT_EQ(back.bits, 65u);
  EXPECT_THROW(decode_codes(std::string_view(bytes).substr(0, bytes.size() - 1)), ParseError);
  std::string padded = bytes;
  padded[4 + 2 + 4 + 8 + 8 + 8] = 0x7f;  // padding bits of the first code's last word
  EXPECT_THROW(decode_codes(padded), ParseError);
}
