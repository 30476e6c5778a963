#include <gtest/gtest.h>

#include <cmath>

#include "scdh/error.hpp"
#include "scdh/meanteacher.hpp"
#include "test_util.hpp"

using namespace scdh;
using namespace scdh::meanteacher;
using scdh::testing::numeric_gradient;
using scdh::testing::random_vector;
using scdh::testing::relative_error;

namespace {

model::Network filled(double value) {
  auto net = model::init_model({{3, 4}, 5, 2}, 1).net;
  for (auto block : net.parameters()) std::fill(block.begin(), block.end(), value);
  return net;
}

data::Dataset clusters(std::uint64_t seed) {
  data::SyntheticConfig cfg;
  cfg.class_count = 3;
  cfg.feature_dim = 6;
  cfg.cluster_std = 0.6;
  cfg.samples_per_class = 40;
  cfg.seed = seed;
  return data::gen_gaussian_clusters(cfg);
}

model::Hyperparams short_run() {
  model::Hyperparams hp;
  hp.epochs = 4;
  hp.warmup_epochs = 1;
  hp.batch_size = 16;
  hp.lr = 0.002;
  hp.lr_schedule = {{3, 0.2}};
  return hp;
}

}  // namespace

TEST(EmaUpdate, Examples) {
  auto student = filled(1.0);
  auto teacher = make_teacher(filled(0.0), 0.99);
  ema_update(teacher, student, 0.99);
  for (auto block : teacher.net.parameters())
    for (double v : block) EXPECT_NEAR(v, 0.01, 1e-15);
  ema_update(teacher, student, 0.0);
  EXPECT_EQ(teacher.net, student);
  const auto fixed = teacher.net;
  ema_update(teacher, student, 0.5);
  EXPECT_EQ(teacher.net, fixed);
  auto other = model::init_model({{3, 7}, 5, 2}, 1).net;
  EXPECT_THROW(ema_update(teacher, other, 0.5), DimensionError);
  EXPECT_THROW(ema_update(teacher, student, 1.0), ValidationError);
}

TEST(EmaUpdate, MatchesClosedForm) {
  std::mt19937_64 rng(3);
  auto teacher = make_teacher(filled(0.7), 0.9);
  auto student = filled(0.0);
  const double d = 0.9;
  const Vector trajectory = random_vector(rng, 30);
  double closed = std::pow(d, 30) * 0.7;
  for (int k = 0; k < 30; ++k) {
    student.hash.bias[0] = trajectory[k];
    ema_update(teacher, student, d);
    closed += (1 - d) * std::pow(d, 29 - k) * trajectory[k];
  }
  EXPECT_NEAR(teacher.net.hash.bias[0], closed, 1e-12);
}

TEST(EmaUpdate, WarmupDecay) {
  EXPECT_EQ(effective_decay(0, 0.999), 0.0);
  EXPECT_DOUBLE_EQ(effective_decay(1, 0.999), 0.5);
  EXPECT_DOUBLE_EQ(effective_decay(100000, 0.999), 0.999);
}

TEST(Perturb, Properties) {
  Rng rng(1);
  const Vector x{1.0, -2.0, 3.0};
  EXPECT_EQ(perturb(x, 0.0, rng), x);
  EXPECT_NE(perturb(x, 0.1, rng), perturb(x, 0.1, rng));
  Vector mean(3, 0.0);
  for (int t = 0; t < 10000; ++t) {
    const auto p = perturb(x, 0.5, rng);
    for (int i = 0; i < 3; ++i) mean[i] += p[i] / 1e4;
  }
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(mean[i], x[i], 4 * 0.5 / 100);
  EXPECT_THROW(perturb(x, -1.0, rng), ValidationError);
}

TEST(Consistency, HandValues) {
  const Vector a{std::log(3.0), 0.0}, at{0.0, 0.0};
  EXPECT_NEAR(softmax_distance(a, at), 0.125, 1e-15);
  const auto c = consistency_losses(a, a, at, at);
  EXPECT_EQ(c.logits, 0.0);
  EXPECT_EQ(c.distances, 0.0);
  EXPECT_THROW(softmax_distance(Vector{1, 2}, Vector{1}), DimensionError);
}

TEST(Consistency, SymmetricValue) {
  std::mt19937_64 rng(4);
  for (int t = 0; t < 100; ++t) {
    const Vector u = random_vector(rng, 5, 2.0), v = random_vector(rng, 5, 2.0);
    EXPECT_NEAR(softmax_distance(u, v), softmax_distance(v, u), 1e-15);
  }
}

TEST(Consistency, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(5);
  for (int t = 0; t < 100; ++t) {
    Vector u = random_vector(rng, 6, 2.0);
    const Vector v = random_vector(rng, 6, 2.0);
    auto f = [&] { return softmax_distance(u, v); };
    EXPECT_LT(relative_error(softmax_distance_gradient(u, v), numeric_gradient(f, u, 1e-5)), 1e-6);
  }
}

TEST(Consistency, RampStartsAtZero) {
  MeanTeacherConfig cfg;
  EXPECT_EQ(consistency_weight(cfg, 0, 1000), 0.0);
  EXPECT_DOUBLE_EQ(consistency_weight(cfg, 100, 1000), 25.0);
  EXPECT_DOUBLE_EQ(consistency_weight(cfg, 200, 1000), 50.0);
  EXPECT_DOUBLE_EQ(consistency_weight(cfg, 900, 1000), 50.0);
  cfg.rampup_fraction = 0.0;
  EXPECT_EQ(consistency_weight(cfg, 0, 1000), 50.0);
}

TEST(SemiDataset, SplitsByLabels) {
  const auto ds = data::strip_labels(clusters(1), 0.25, 2);
  const auto semi = SemiDataset::from(ds);
  EXPECT_EQ(semi.labeled.size() + semi.unlabeled.size(), ds.size());
  EXPECT_EQ(semi.labeled.size(), 30u);
  EXPECT_NO_THROW(semi.validate());
  SemiDataset empty;
  EXPECT_THROW(empty.validate(), ValidationError);
}

TEST(TrainMt, ReducesToSupervisedWithoutConsistency) {
  const auto ds = clusters(2);
  const model::Architecture arch{{6, 16}, 8, 3};
  MeanTeacherConfig cfg;
  cfg.w = 0.0;
  const auto mt = train_mt_scdh(SemiDataset::from(ds), arch, short_run(), cfg);
  auto [sup, report] = model::train_scdh(ds, arch, short_run());
  EXPECT_EQ(mt.student.net, sup.net);
  EXPECT_EQ(mt.student.velocity, sup.velocity);
  ASSERT_EQ(mt.report.epochs.size(), report.epochs.size());
  for (std::size_t e = 0; e < report.epochs.size(); ++e) {
    EXPECT_EQ(mt.report.epochs[e].total_loss, report.epochs[e].total_loss);
  }
}

TEST(TrainMt, SemiSupervisedRunIsDeterministic) {
  const auto ds = data::strip_labels(clusters(3), 0.2, 4);
  const model::Architecture arch{{6, 16}, 8, 3};
  MeanTeacherConfig cfg;
  cfg.w = 0.5;
  cfg.unlabeled_batch_size = 8;
  const auto a = train_mt_scdh(SemiDataset::from(ds), arch, short_run(), cfg);
  const auto b = train_mt_scdh(SemiDataset::from(ds), arch, short_run(), cfg);
  EXPECT_EQ(a.student.net, b.student.net);
  EXPECT_EQ(a.teacher.net, b.teacher.net);
  EXPECT_FALSE(a.teacher.net == a.student.net);
  ASSERT_EQ(a.consistency.size(), 4u);
  EXPECT_EQ(a.consistency.front().weight > 0.0, true);
  EXPECT_GT(a.consistency.back().distances + a.consistency.back().logits, 0.0);
  for (const auto& e : a.report.epochs) EXPECT_TRUE(std::isfinite(e.total_loss));
}

TEST(TrainMt, TeacherIsOnlyTouchedByEma) {
  // With decay ceiling 0 the teacher copies the student after every step.
  const auto ds = data::strip_labels(clusters(5), 0.3, 6);
  MeanTeacherConfig cfg;
  cfg.w = 1.0;
  cfg.ema_decay = 0.0;
  const auto r = train_mt_scdh(SemiDataset::from(ds), {{6, 16}, 8, 3}, short_run(), cfg);
  EXPECT_EQ(r.teacher.net, r.student.net);
}

TEST(MeanTeacherConfig, JsonAndValidation) {
  MeanTeacherConfig cfg;
  cfg.w = 0.2;
  EXPECT_EQ(mean_teacher_config_from_json(to_json(cfg)), cfg);
  EXPECT_THROW(mean_teacher_config_from_json(R"({"weight": 1})"), ValidationError);
  cfg.ema_decay = 1.0;
  EXPECT_THROW(cfg.validate(), ValidationError);
}
