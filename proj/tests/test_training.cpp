#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "rotorlin/experiments.hpp"

using namespace rotorlin;

namespace {

Dataset random_linear_task(int d_in, int d_out, std::size_t samples, std::uint64_t seed) {
  TaskShape shape;
  shape.d_in = d_in;
  shape.d_out = d_out;
  shape.samples = samples;
  return make_synthetic_task(TaskKind::random_dense, shape, seed).data;
}

}  // namespace

TEST(Loss, MseExamples) {
  EXPECT_DOUBLE_EQ(mse_loss({{1.0, 2.0}}, {{1.0, 2.0}}), 0.0);
  EXPECT_DOUBLE_EQ(mse_loss({{1.0, 0.0}, {0.0, 0.0}}, {{0.0, 0.0}, {0.0, 2.0}}), 5.0 / 4.0);
  EXPECT_THROW(mse_loss({{1.0}}, {{1.0, 2.0}}), InvalidArgument);
}

TEST(Loss, TrackedMeanMatchesPlainMse) {
  ad::Tape tape;
  const auto p = tape.variables(std::vector<double>{1.0, -2.0, 0.5});
  SquaredErrorSum s;
  s.add(std::span<const Var>(p.data(), 2), std::vector<double>{0.0, 0.0});
  s.add(std::span<const Var>(p.data() + 2, 1), std::vector<double>{1.5});
  const Var loss = s.mean();
  EXPECT_DOUBLE_EQ(loss.value(), (1.0 + 4.0 + 1.0) / 3.0);
  const auto g = ad::backward_gradients(tape, loss, p);
  EXPECT_DOUBLE_EQ(g[0], 2.0 * 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(g[1], 2.0 * -2.0 / 3.0);
  EXPECT_DOUBLE_EQ(g[2], 2.0 * -1.0 / 3.0);
}

TEST(FiniteDifferences, SquareAndSine) {
  const auto g = finite_difference_gradients(
      [](std::span<const double> p) { return p[0] * p[0] + std::sin(p[1]); }, {3.0, 0.4}, 1e-5);
  EXPECT_NEAR(g[0], 6.0, 1e-8);
  EXPECT_NEAR(g[1], std::cos(0.4), 1e-9);
  EXPECT_THROW(finite_difference_gradients([](std::span<const double>) { return 0.0; }, {1.0}, 0.0), InvalidArgument);
}

TEST(Adam, FirstStepIsSignedLearningRate) {
  TrainConfig cfg;
  cfg.cosine_annealing = false;
  cfg.learning_rate = 0.1;
  Adam adam;
  std::vector<double> p{1.0, 1.0, 1.0};
  const auto delta = adam.step(p, std::vector<double>{3.0, -0.01, 0.0}, cfg, 0);
  EXPECT_NEAR(delta[0], -0.1, 1e-8);
  EXPECT_NEAR(delta[1], 0.1, 1e-5);
  EXPECT_EQ(delta[2], 0.0);
  EXPECT_EQ(p[2], 1.0);
}

TEST(Adam, CosineSchedule) {
  TrainConfig cfg;
  cfg.learning_rate = 0.2;
  cfg.steps = 100;
  EXPECT_DOUBLE_EQ(cosine_lr(cfg, 0), 0.2);
  EXPECT_NEAR(cosine_lr(cfg, 50), 0.1, 1e-15);
  EXPECT_NEAR(cosine_lr(cfg, 100), 0.0, 1e-15);
  cfg.cosine_annealing = false;
  EXPECT_DOUBLE_EQ(cosine_lr(cfg, 50), 0.2);
}

TEST(Adam, ConvergesOnQuadratic) {
  TrainConfig cfg;
  cfg.learning_rate = 0.05;
  cfg.steps = 2000;
  Adam adam;
  std::vector<double> p{0.0};
  for (int s = 0; s < cfg.steps; ++s) adam.step(p, std::vector<double>{2.0 * (p[0] - 3.0)}, cfg, s);
  EXPECT_NEAR(p[0], 3.0, 1e-2);
  EXPECT_LE((p[0] - 3.0) * (p[0] - 3.0), 1e-4);
}

TEST(Adam, WeightDecayIsDecoupled) {
  TrainConfig cfg;
  cfg.cosine_annealing = false;
  cfg.learning_rate = 0.1;
  cfg.weight_decay = 0.5;
  Adam adam;
  std::vector<double> p{2.0};
  const auto delta = adam.step(p, std::vector<double>{0.0}, cfg, 0);
  EXPECT_NEAR(delta[0], -0.1 * 0.5 * 2.0, 1e-15);
}

TEST(Config, Validation) {
  TrainConfig cfg;
  cfg.learning_rate = 0.0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = {};
  cfg.batch_size = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  EXPECT_THROW(make_lowrank(4, 4, 0, 1), ConfigError);
  EXPECT_THROW(make_block_hadamard(6, 6, 2, 1), ConfigError);
  EXPECT_THROW(make_block_hadamard(8, 8, 3, 1), ConfigError);
}

TEST(Baselines, ParameterCounts) {
  EXPECT_EQ(lowrank_parameter_count(2048, 2048, 1), 4096u);
  EXPECT_EQ(lowrank_parameter_count(2048, 2048, 4), 16384u);
  EXPECT_EQ(make_lowrank(32, 16, 3, 0).params.size(), 3u * 48u);
  EXPECT_EQ(block_hadamard_parameter_count(2048, 2048, 64), 64u * 32u * 32u);
  EXPECT_EQ(make_block_hadamard(32, 16, 4, 0).params.size(), 4u * 4u * 8u);
}

TEST(Baselines, HadamardTransform) {
  const auto h = hadamard_transform(std::vector<double>{1.0, 0.0});
  EXPECT_NEAR(h[0], M_SQRT1_2, 1e-15);
  EXPECT_NEAR(h[1], M_SQRT1_2, 1e-15);
  const auto h2 = hadamard_transform(std::vector<double>{0.0, 1.0});
  EXPECT_NEAR(h2[1], -M_SQRT1_2, 1e-15);
  // columns of the normalized transform are orthonormal
  const int d = 16;
  std::vector<std::vector<double>> cols;
  for (int k = 0; k < d; ++k) {
    std::vector<double> e(d, 0.0);
    e[k] = 1.0;
    cols.push_back(hadamard_transform(e));
  }
  for (int a = 0; a < d; ++a)
    for (int b = 0; b < d; ++b) {
      double s = 0.0;
      for (int k = 0; k < d; ++k) s += cols[a][k] * cols[b][k];
      EXPECT_NEAR(s, a == b ? 1.0 : 0.0, 1e-14);
    }
}

TEST(Baselines, ForwardMatchesExplicitMatrices) {
  const auto lr = make_lowrank(5, 3, 2, 4);
  std::vector<double> x{0.3, -1.0, 2.0, 0.5, 0.1};
  const auto y = lowrank_forward(lr, x);
  for (int i = 0; i < 3; ++i) {
    double want = 0.0;
    for (int a = 0; a < 2; ++a) {
      double z = 0.0;
      for (int j = 0; j < 5; ++j) z += lr.params[6 + a * 5 + j] * x[j];
      want += lr.params[i * 2 + a] * z;
    }
    EXPECT_NEAR(y[i], want, 1e-14);
  }
  const auto bh = make_block_hadamard(4, 4, 2, 5);
  const auto hx = hadamard_transform(std::vector<double>{1.0, 2.0, 3.0, 4.0});
  const auto yb = block_hadamard_forward(bh, std::vector<double>{1.0, 2.0, 3.0, 4.0});
  EXPECT_NEAR(yb[0], bh.params[0] * hx[0] + bh.params[1] * hx[1], 1e-14);
  EXPECT_NEAR(yb[3], bh.params[6] * hx[2] + bh.params[7] * hx[3], 1e-14);
}

TEST(Fit, FullRankLowRankSolvesLinearTask) {
  const auto data = random_linear_task(6, 6, 128, 3);
  auto lr = make_lowrank(6, 6, 6, 1);
  TrainConfig cfg = TrainConfig::baseline_defaults();
  cfg.learning_rate = 0.02;
  cfg.batch_size = 128;
  cfg.steps = 4000;
  const auto r = fit(lr, data, cfg);
  EXPECT_LT(r.final_mse, 1e-6 * r.initial_mse);
  EXPECT_EQ(r.method, "lr");
  EXPECT_EQ(r.params.total, 72u);
}

TEST(Fit, ZeroStepsReportsInitialLoss) {
  const auto data = random_linear_task(8, 8, 32, 4);
  GadgetConfig c;
  c.d_in = c.d_out = 8;
  c.n = 3;
  auto g = build_gadget(c, 2);
  const auto before = g.params();
  TrainConfig cfg;
  cfg.steps = 0;
  const auto r = fit(g, data, cfg);
  EXPECT_EQ(r.initial_mse, r.final_mse);
  EXPECT_EQ(g.params(), before);
}

TEST(Fit, DeterministicForFixedSeeds) {
  const auto data = random_linear_task(8, 8, 64, 5);
  GadgetConfig c;
  c.d_in = c.d_out = 8;
  c.n = 3;
  c.depth = 2;
  TrainConfig cfg;
  cfg.steps = 30;
  cfg.batch_size = 16;
  cfg.seed = 11;
  auto a = build_gadget(c, 3), b = build_gadget(c, 3);
  const auto ra = fit(a, data, cfg), rb = fit(b, data, cfg);
  EXPECT_EQ(a.params(), b.params());
  EXPECT_EQ(ra.final_mse, rb.final_mse);
  EXPECT_EQ(ra.iteration_trace, rb.iteration_trace);
}

TEST(Fit, StudentApproachesTeacher) {
  TaskShape shape;
  shape.d_in = shape.d_out = 8;
  shape.samples = 128;
  shape.teacher.n = 3;
  shape.teacher_scale = 0.5;
  const auto task = make_synthetic_task(TaskKind::teacher_gadget, shape, 21);
  GadgetConfig c = shape.teacher;
  c.d_in = c.d_out = 8;
  auto g = build_gadget(c, 1);
  TrainConfig cfg;
  cfg.steps = 600;
  cfg.batch_size = 32;
  const auto r = fit(g, task.data, cfg);
  EXPECT_LT(r.final_mse, 0.05 * r.initial_mse);
  EXPECT_FALSE(r.iteration_trace.empty());
  EXPECT_EQ(r.iteration_stats.size(), 10u);
}

TEST(Tasks, Deterministic) {
  TaskShape shape;
  shape.d_in = shape.d_out = 8;
  shape.samples = 16;
  shape.teacher.n = 3;
  for (auto kind : {TaskKind::teacher_gadget, TaskKind::random_dense, TaskKind::random_rotation_bivector}) {
    const auto a = make_synthetic_task(kind, shape, 9), b = make_synthetic_task(kind, shape, 9);
    EXPECT_EQ(a.data.inputs, b.data.inputs) << to_string(kind);
    EXPECT_EQ(a.data.targets, b.data.targets) << to_string(kind);
  }
}

TEST(Tasks, RotationPreservesGradeNorms) {
  TaskShape shape;
  shape.d_in = shape.d_out = 16;
  shape.samples = 8;
  const auto task = make_synthetic_task(TaskKind::random_rotation_bivector, shape, 13);
  for (std::size_t i = 0; i < task.data.size(); ++i) {
    const auto x = task.data.input(i), y = task.data.target(i);
    std::vector<double> nx(5, 0.0), ny(5, 0.0);
    for (unsigned m = 0; m < 16; ++m) {
      nx[std::popcount(m)] += x[m] * x[m];
      ny[std::popcount(m)] += y[m] * y[m];
    }
    for (int k = 0; k <= 4; ++k) EXPECT_NEAR(nx[k], ny[k], 1e-12);
  }
  shape.d_in = shape.d_out = 12;
  EXPECT_THROW(make_synthetic_task(TaskKind::random_rotation_bivector, shape, 1), ConfigError);
}

TEST(Tasks, PhaseMeans) {
  std::vector<double> t(20);
  for (int k = 0; k < 20; ++k) t[k] = k;
  const auto m = detail::phase_means(t);
  ASSERT_EQ(m.size(), 10u);
  EXPECT_DOUBLE_EQ(m.front(), 0.5);
  EXPECT_DOUBLE_EQ(m.back(), 18.5);
}
