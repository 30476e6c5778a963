#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "scdh/error.hpp"
#include "scdh/losses.hpp"
#include "test_util.hpp"

using namespace scdh;
using namespace scdh::losses;
using scdh::testing::numeric_gradient;
using scdh::testing::random_centers;
using scdh::testing::random_vector;
using scdh::testing::relative_error;

TEST(EuclideanDistance, HandValues) {
  EXPECT_EQ(euclidean_distance(Vector{0, 0, 0}, Vector{0, 0, 0}), 0.0);
  EXPECT_EQ(euclidean_distance(Vector{1, 0}, Vector{0, 0}), 1.0);
  EXPECT_DOUBLE_EQ(euclidean_distance(Vector{3, 4}, Vector{0, 0}), 5.0);
  EXPECT_THROW(euclidean_distance(Vector{1, 2}, Vector{1}), DimensionError);
}

TEST(NegDistSoftmax, HandValues) {
  auto p = softmax_of_negated(Vector{2, 2, 2, 2});
  for (double v : p) EXPECT_NEAR(v, 0.25, 1e-15);
  p = softmax_of_negated(Vector{0, std::log(3.0)});
  EXPECT_NEAR(p[0], 0.75, 1e-15);
  EXPECT_NEAR(p[1], 0.25, 1e-15);
  p = softmax_of_negated(Vector{0, 0});
  EXPECT_NEAR(p[0], 0.5, 1e-15);
}

TEST(NegDistSoftmax, SumsToOneAndShiftInvariant) {
  std::mt19937_64 rng(11);
  for (int t = 0; t < 200; ++t) {
    Vector d = random_vector(rng, 7, 5.0);
    for (double& x : d) x = std::abs(x);
    const auto p = softmax_of_negated(d);
    EXPECT_NEAR(std::accumulate(p.begin(), p.end(), 0.0), 1.0, 1e-12);
    Vector shifted = d;
    for (double& x : shifted) x += 123.0;
    const auto q = softmax_of_negated(shifted);
    for (std::size_t i = 0; i < p.size(); ++i) EXPECT_NEAR(p[i], q[i], 1e-12);
  }
  EXPECT_THROW(softmax_of_negated(Vector{0.0, NAN}), NumericError);
}

TEST(NegDistSoftmax, MatchesCenterDistances) {
  const Centers c(1, 2, {0.0, std::log(3.0)});
  const auto p = neg_dist_softmax(Vector{0.0}, c);
  EXPECT_NEAR(p[0], 0.75, 1e-15);
}

TEST(SculLoss, HandValues) {
  const Centers same(1, 2, {0.0, 0.0});
  EXPECT_NEAR(scul_loss(Vector{0.0}, LabelSet::single(0), same, 0.0), std::log(2.0), 1e-12);
  const Centers c(1, 2, {0.0, std::log(3.0)});
  EXPECT_NEAR(scul_loss(Vector{0.0}, LabelSet::single(0), c, 0.0), 0.287682072451781, 1e-12);
  // distances (2, 2 + ln 3): same softmax, |f - c_y| = 2
  const Centers far(1, 2, {2.0, 2.0 + std::log(3.0)});
  EXPECT_NEAR(scul_loss(Vector{0.0}, LabelSet::single(0), far, 0.5), 1.287682072451781, 1e-12);
}

TEST(SculLoss, RejectsBadLabels) {
  const Centers c(1, 2, {0.0, 1.0});
  EXPECT_THROW(scul_loss(Vector{0.0}, LabelSet{}, c, 0.0), LabelError);
  EXPECT_THROW(scul_loss(Vector{0.0}, LabelSet{0, 1}, c, 0.0), LabelError);
  EXPECT_THROW(scul_loss(Vector{0.0}, LabelSet::single(0), c, -1.0), ValidationError);
}

TEST(SculGradients, FiniteDifferences) {
  std::mt19937_64 rng(2024);
  for (int t = 0; t < 100; ++t) {
    Vector f = random_vector(rng, 16);
    Centers c = random_centers(rng, 16, 5);
    const LabelSet y = LabelSet::single(static_cast<int>(t % 5));
    const auto g = scul_gradients(f, y, c, 0.005);
    auto loss = [&] { return scul_loss(f, y, c, 0.005); };
    EXPECT_LT(relative_error(g.embedding, numeric_gradient(loss, f, 1e-4)), 1e-5);
    EXPECT_LT(relative_error(g.centers.data(), numeric_gradient(loss, c.data(), 1e-4)), 1e-5);
  }
}

TEST(SculGradients, SymmetricPair) {
  // f equidistant from both centers: p = (0.5, 0.5).
  const Centers c(2, 2, {1.0, 0.0, -1.0, 0.0});
  const Vector f{0.0, 1.0};
  const auto g = scul_gradients(f, LabelSet::single(0), c, 0.0);
  const double d = std::sqrt(2.0);
  // grad_{c_0} = (1 - 0.5) (c_0 - f)/d; grad_{c_1} = -0.5 (c_1 - f)/d
  EXPECT_NEAR(g.centers.column(0)[0], 0.5 * (1.0 - 0.0) / d, 1e-15);
  EXPECT_NEAR(g.centers.column(0)[1], 0.5 * (0.0 - 1.0) / d, 1e-15);
  EXPECT_NEAR(g.centers.column(1)[0], -0.5 * (-1.0 - 0.0) / d, 1e-15);
  EXPECT_NEAR(g.centers.column(1)[1], -0.5 * (0.0 - 1.0) / d, 1e-15);
}

TEST(SculGradients, LinearInLambda) {
  std::mt19937_64 rng(5);
  const Vector f = random_vector(rng, 6);
  const Centers c = random_centers(rng, 6, 3);
  const auto g0 = scul_gradients(f, LabelSet::single(1), c, 0.0);
  const auto g1 = scul_gradients(f, LabelSet::single(1), c, 1.0);
  const double d = euclidean_distance(f, c.column(1));
  for (std::size_t i = 0; i < f.size(); ++i) {
    EXPECT_NEAR(g1.embedding[i] - g0.embedding[i], (f[i] - c.column(1)[i]) / d, 1e-14);
  }
}

TEST(SculGradients, ZeroDistanceStaysFinite) {
  const Centers c(2, 2, {0.0, 0.0, 1.0, 1.0});
  const auto g = scul_gradients(Vector{0.0, 0.0}, LabelSet::single(0), c, 0.5);
  for (double v : g.embedding) EXPECT_TRUE(std::isfinite(v));
  for (double v : g.centers.data()) EXPECT_TRUE(std::isfinite(v));
  EXPECT_EQ(g.centers.column(0)[0], 0.0);
}

TEST(SculLoss, MonotoneInDistances) {
  std::mt19937_64 rng(77);
  for (int t = 0; t < 50; ++t) {
    Vector f = random_vector(rng, 5);
    Centers c = random_centers(rng, 5, 3);
    const LabelSet y = LabelSet::single(0);
    const double base = scul_loss(f, y, c, 0.3);
    // Push a negative center away along its ray from f.
    Centers pushed = c;
    auto col = pushed.column(2);
    for (std::size_t i = 0; i < 5; ++i) col[i] = f[i] + 1.1 * (col[i] - f[i]);
    EXPECT_LT(scul_loss(f, y, pushed, 0.3), base);
    // Push the positive center away: the loss grows.
    Centers own = c;
    auto cy = own.column(0);
    for (std::size_t i = 0; i < 5; ++i) cy[i] = f[i] + 1.1 * (cy[i] - f[i]);
    EXPECT_GT(scul_loss(f, y, own, 0.3), base);
  }
}

TEST(SculMultilabel, HandValues) {
  const Centers equal(2, 3, {1, 0, 0, 1, -1, 0});
  Vector f{0.0, 0.0};
  EXPECT_NEAR(scul_multilabel_loss(f, LabelSet{0, 1}, equal, 0.0), std::log(3.0), 1e-12);
  const Centers c(1, 3, {0.0, 0.0, std::log(2.0)});
  EXPECT_NEAR(scul_multilabel_loss(Vector{0.0}, LabelSet{0, 1}, c, 0.1), std::log(2.5), 1e-12);
  EXPECT_THROW(scul_multilabel_loss(Vector{0.0}, LabelSet{0, 1, 2}, c, 0.1), LabelError);
}

TEST(SculMultilabel, ReducesToSingleLabel) {
  std::mt19937_64 rng(8);
  for (int t = 0; t < 20; ++t) {
    const Vector f = random_vector(rng, 8);
    const Centers c = random_centers(rng, 8, 4);
    const LabelSet y = LabelSet::single(t % 4);
    EXPECT_DOUBLE_EQ(scul_multilabel_loss(f, y, c, 0.2), scul_loss(f, y, c, 0.2));
    const auto a = scul_multilabel_gradients(f, y, c, 0.2);
    const auto b = scul_gradients(f, y, c, 0.2);
    EXPECT_EQ(a.embedding, b.embedding);
    EXPECT_EQ(a.centers.data(), b.centers.data());
  }
}

TEST(SculMultilabel, FiniteDifferences) {
  std::mt19937_64 rng(99);
  for (int t = 0; t < 100; ++t) {
    Vector f = random_vector(rng, 16);
    Centers c = random_centers(rng, 16, 5);
    const int a = t % 5;
    const LabelSet y{a, (a + 2) % 5};
    const auto g = scul_multilabel_gradients(f, y, c, 0.005);
    auto loss = [&] { return scul_multilabel_loss(f, y, c, 0.005); };
    EXPECT_LT(relative_error(g.embedding, numeric_gradient(loss, f, 1e-4)), 1e-5);
    EXPECT_LT(relative_error(g.centers.data(), numeric_gradient(loss, c.data(), 1e-4)), 1e-5);
  }
}

TEST(SculMultilabel, SymmetricStationaryPoint) {
  // Centers at +-e0 (labels) and +-e1 (negatives); f at the origin.
  const Centers c(2, 4, {1, 0, -1, 0, 0, 1, 0, -1});
  const auto g = scul_multilabel_gradients(Vector{0.0, 0.0}, LabelSet{0, 1}, c, 0.0);
  EXPECT_NEAR(g.embedding[0], 0.0, 1e-15);
  EXPECT_NEAR(g.embedding[1], 0.0, 1e-15);
}

TEST(SculEvaluate, AgreesWithParts) {
  std::mt19937_64 rng(3);
  const Vector f = random_vector(rng, 6);
  const Centers c = random_centers(rng, 6, 4);
  const LabelSet y{1, 3};
  const auto ev = scul_evaluate(f, y, c, 0.25);
  EXPECT_NEAR(ev.loss, scul_multilabel_loss(f, y, c, 0.25), 1e-14);
  EXPECT_NEAR(ev.loss, ev.softmax_term + 0.25 * ev.center_distance, 1e-14);
}

TEST(QuantizationLoss, HandValues) {
  EXPECT_NEAR(quantization_loss(Vector{1, 1}), 0.0, 1e-15);
  EXPECT_NEAR(quantization_loss(Vector{1, 0}), 1.0 - std::pow(2.0, -2.0 / 3.0), 1e-12);
  EXPECT_NEAR(quantization_loss(Vector{2, 2, 2, 2}), 0.0, 1e-15);
  EXPECT_EQ(quantization_loss(Vector{0, 0, 0}), 1.0);
  EXPECT_THROW(quantization_loss(Vector{1, 0}, 3.0, 2.0), ValidationError);
}

TEST(QuantizationLoss, RangeAndScaleInvariance) {
  std::mt19937_64 rng(12);
  for (int t = 0; t < 1000; ++t) {
    Vector f = random_vector(rng, 1 + t % 48, 3.0);
    const double l = quantization_loss(f);
    EXPECT_GE(l, 0.0);
    EXPECT_LE(l, 1.0);
    Vector scaled = f;
    const double s = std::exp(random_vector(rng, 1, 2.0)[0]);
    for (double& x : scaled) x *= s;
    if (l > 1e-3) EXPECT_LT(std::abs(quantization_loss(scaled) - l) / l, 1e-12);
  }
}

TEST(QuantizationLoss, ZeroOnlyForEqualMagnitudes) {
  EXPECT_NEAR(quantization_loss(Vector{3, -3, 3, -3, 3}), 0.0, 1e-15);
  EXPECT_GT(quantization_loss(Vector{3, -3, 3, -3, 3.001}), 0.0);
  EXPECT_GT(quantization_loss(Vector{1, 0.5}), 1e-3);
}

TEST(QuantizationGradient, FiniteDifferencesAndSymmetry) {
  std::mt19937_64 rng(13);
  for (int t = 0; t < 100; ++t) {
    Vector f = random_vector(rng, 24);
    for (double& x : f) x += (x >= 0 ? 0.1 : -0.1);
    const auto g = quantization_gradient(f);
    auto loss = [&] { return quantization_loss(f); };
    EXPECT_LT(relative_error(g, numeric_gradient(loss, f, 1e-6)), 1e-5);
    Vector neg = f;
    for (double& x : neg) x = -x;
    const auto gn = quantization_gradient(neg);
    for (std::size_t i = 0; i < f.size(); ++i) EXPECT_DOUBLE_EQ(gn[i], -g[i]);
  }
  for (double v : quantization_gradient(Vector{2, -2, 2})) EXPECT_NEAR(v, 0.0, 1e-15);
  for (double v : quantization_gradient(Vector{0, 0})) EXPECT_EQ(v, 0.0);
}

TEST(ClassificationLoss, HandValues) {
  EXPECT_NEAR(classification_loss(Vector(10, 0.3), LabelSet::single(4)).value, std::log(10.0), 1e-12);
  EXPECT_NEAR(classification_loss(Vector{std::log(9.0), 0.0}, LabelSet::single(0)).value,
              -std::log(0.9), 1e-12);
  EXPECT_THROW(classification_loss(Vector{0, 0}, LabelSet{}), LabelError);
}

TEST(ClassificationLoss, FiniteDifferences) {
  std::mt19937_64 rng(14);
  for (int t = 0; t < 100; ++t) {
    Vector a = random_vector(rng, 6, 2.0);
    const LabelSet y = t % 2 ? LabelSet::single(t % 6) : LabelSet{t % 6, (t + 3) % 6};
    const auto lg = classification_loss(a, y);
    auto loss = [&] { return classification_loss(a, y).value; };
    EXPECT_LT(relative_error(lg.gradient, numeric_gradient(loss, a, 1e-5)), 1e-6);
  }
}

TEST(TripletRankingLoss, HandValuesAndContract) {
  const auto g = TripletLossKind::margin_loss(1.0);
  EXPECT_EQ(triplet_ranking_loss(2, 5, g), 0.0);
  EXPECT_EQ(triplet_ranking_loss(5, 2, g), 4.0);
  EXPECT_EQ(triplet_ranking_loss(3, 3, TripletLossKind::margin_loss(0.0)), 0.0);
  EXPECT_THROW(TripletLossKind::margin_loss(-0.1), ValidationError);

  std::mt19937_64 rng(15);
  std::uniform_real_distribution<double> u(0.0, 5.0);
  for (int t = 0; t < 10000; ++t) {
    double a1 = u(rng), a2 = u(rng), b1 = u(rng), b2 = u(rng), b = u(rng), a = u(rng);
    if (a1 > a2) std::swap(a1, a2);
    if (b1 > b2) std::swap(b1, b2);
    const double da = g(a2, b) - g(a1, b);
    EXPECT_GE(da, 0.0);
    EXPECT_LE(da, a2 - a1 + 1e-12);
    const double db = g(a, b1) - g(a, b2);
    EXPECT_GE(db, 0.0);
    EXPECT_LE(db, b2 - b1 + 1e-12);
    EXPECT_GE(g(a, b), 0.0);
  }
}
