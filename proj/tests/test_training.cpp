#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <limits>
#include <algorithm>

#include "stablepde/csv.hpp"
#include "stablepde/errors.hpp"
#include "stablepde/training.hpp"

using namespace stablepde;

namespace {

TrainConfig small_config(ProblemKind kind = ProblemKind::poisson1d) {
  TrainConfig c;
  c.problem = ProblemSpec::defaults(kind);
  c.width = 16;
  c.depth = 2;
  c.steps = 10;
  c.batch_size = 4;
  c.seed = 5;
  c.attack.n_iter = 3;
  return c;
}

// Textbook Adam written out per coordinate.
void scalar_adam(std::vector<double>& x, std::vector<double>& m, std::vector<double>& v, int t,
                 const std::vector<double>& g, double lr, double b1, double b2, double eps) {
  for (std::size_t i = 0; i < x.size(); ++i) {
    m[i] = b1 * m[i] + (1 - b1) * g[i];
    v[i] = b2 * v[i] + (1 - b2) * g[i] * g[i];
    const double mh = m[i] / (1 - std::pow(b1, t));
    const double vh = v[i] / (1 - std::pow(b2, t));
    x[i] -= lr * mh / (std::sqrt(vh) + eps);
  }
}

}  // namespace

TEST(Adam, FirstStepMovesByLearningRate) {
  const Eigen::Vector3d p(1.0, -2.0, 0.5);
  const auto u = adam_step(p, Eigen::Vector3d(1.0, -1.0, 0.0), AdamState::zeros(3), AdamConfig{});
  EXPECT_NEAR(u.params[0], 1.0 - 1e-3 / (1.0 + 1e-8), 1e-15);
  EXPECT_NEAR(u.params[1], -2.0 + 1e-3 / (1.0 + 1e-8), 1e-15);
  EXPECT_EQ(u.params[2], 0.5);
  EXPECT_EQ(u.state.step, 1);
}

TEST(Adam, ZeroGradientKeepsParamsAndAdvancesStep) {
  const Eigen::VectorXd p = Eigen::VectorXd::LinSpaced(5, -1.0, 1.0);
  AdamState s = AdamState::zeros(5);
  for (int k = 0; k < 3; ++k) {
    auto u = adam_step(p, Eigen::VectorXd::Zero(5), s, AdamConfig{});
    EXPECT_EQ(u.params, p);
    s = u.state;
  }
  EXPECT_EQ(s.step, 3);
}

TEST(Adam, MatchesScalarRecurrence) {
  AdamConfig c{0.01, 0.8, 0.99, 1e-6};
  Eigen::VectorXd p(4);
  p << 0.3, -0.1, 2.0, 0.0;
  std::vector<double> x(p.data(), p.data() + 4), m(4, 0.0), v(4, 0.0);
  AdamState s = AdamState::zeros(4);
  for (int t = 1; t <= 25; ++t) {
    Eigen::VectorXd g(4);
    g << std::sin(t), 0.1 * t, -std::cos(2.0 * t), t % 3 == 0 ? 0.0 : 1e-4;
    auto u = adam_step(p, g, s, c);
    p = u.params;
    s = u.state;
    scalar_adam(x, m, v, t, std::vector<double>(g.data(), g.data() + 4), c.learning_rate, c.beta1, c.beta2, c.eps);
  }
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(p[i], x[i], 1e-14);
}

TEST(Adam, NonFiniteGradientNamesBlock) {
  const ArchSpec arch = ArchSpec::deeponet(6, 1, 4, 2);
  const Eigen::VectorXd p = flatten(init_params(arch, 1));
  const auto names = block_names(arch);
  const auto offsets = block_offsets(arch);
  Eigen::VectorXd g = Eigen::VectorXd::Zero(p.size());
  g[static_cast<Eigen::Index>(offsets[3])] = std::numeric_limits<double>::quiet_NaN();
  try {
    adam_step(p, g, AdamState::zeros(p.size()), AdamConfig{}, names, offsets);
    FAIL() << "expected NumericalError";
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find(names[3]), std::string::npos) << e.what();
  }
  EXPECT_THROW(adam_step(p, g.head(3), AdamState::zeros(p.size()), AdamConfig{}), ShapeError);
}

TEST(Schedule, AdversarialStepsFollowWarmupAndCadence) {
  TrainConfig c = small_config();
  c.steps = 50;
  c.warmup_fraction = 0.2;
  c.cadence = 3;
  for (int j = 1; j <= c.steps; ++j) {
    const bool expected = j > 10 && j % 3 == 0;
    EXPECT_EQ(c.adversarial_step(j), expected) << j;
    EXPECT_EQ(c.phase(j), j <= 10 ? Phase::warmup : (expected ? Phase::adversarial : Phase::normal)) << j;
  }
  c.warmup_fraction = 1.0;
  for (int j = 1; j <= c.steps; ++j) EXPECT_EQ(c.phase(j), Phase::warmup);
  c.warmup_fraction = 0.0;
  c.cadence = 1;
  for (int j = 1; j <= c.steps; ++j) EXPECT_EQ(c.phase(j), Phase::adversarial);
}

TEST(Schedule, ValidationNamesField) {
  auto expect_message = [](TrainConfig c, const std::string& field) {
    try {
      c.validate();
      FAIL() << "expected InvalidArgument for " << field;
    } catch (const InvalidArgument& e) {
      EXPECT_NE(std::string(e.what()).find(field), std::string::npos) << e.what();
    }
  };
  TrainConfig c = small_config();
  c.cadence = 0;
  expect_message(c, "train.cadence");
  c = small_config();
  c.warmup_fraction = 1.5;
  expect_message(c, "train.warmup_fraction");
  c = small_config();
  c.steps = 0;
  expect_message(c, "train.steps");
  c = small_config();
  c.attack.epsilon = -1.0;
  expect_message(c, "attack.epsilon");
}

TEST(LossGradient, MatchesFiniteDifferences) {
  const TrainConfig c = small_config(ProblemKind::heat_ic);
  const ArchSpec arch = c.arch();
  const LossPlan plan(c.problem, arch, make_collocation(c.problem));
  const DeepONetParams params = init_params(arch, 3);
  const Eigen::MatrixXd inputs = InputSampler(c.problem).batch(9, 3);
  LossBreakdown lb;
  const Eigen::VectorXd g = loss_gradient(plan, params, inputs, &lb);
  EXPECT_NEAR(lb.total, assemble_loss(plan, params, inputs).total, 1e-12);
  const Eigen::VectorXd flat = flatten(params);
  const auto offsets = block_offsets(arch);
  const double h = 1e-6;
  for (std::size_t b = 0; b + 1 < offsets.size(); ++b) {
    const auto i = static_cast<Eigen::Index>(offsets[b]);
    Eigen::VectorXd up = flat, down = flat;
    up[i] += h;
    down[i] -= h;
    const double fd = (assemble_loss(plan, unflatten(arch, up), inputs).total -
                       assemble_loss(plan, unflatten(arch, down), inputs).total) / (2 * h);
    EXPECT_NEAR(g[i], fd, 1e-6 * std::max(1.0, std::abs(fd))) << "block " << b;
  }
}

TEST(Train, DeterministicAndLogged) {
  const TrainConfig c = small_config(ProblemKind::heat_ic);
  int calls = 0;
  const auto a = train(c, [&](const StepRecord&) { ++calls; });
  const auto b = train(c);
  EXPECT_EQ(calls, c.steps);
  EXPECT_TRUE(a.params == b.params);
  ASSERT_EQ(a.log.size(), static_cast<std::size_t>(c.steps));
  for (std::size_t k = 0; k < a.log.size(); ++k) {
    const auto& r = a.log[k];
    EXPECT_EQ(r.step, static_cast<int>(k) + 1);
    EXPECT_EQ(r.phase, c.phase(r.step));
    EXPECT_NEAR(r.loss.total, r.loss.physics + r.loss.bc + r.loss.ic, 1e-12 * std::max(1.0, r.loss.total));
    EXPECT_EQ(r.loss.total, b.log[k].loss.total);
  }
  TrainConfig other = c;
  other.seed = 6;
  EXPECT_FALSE(train(other).params == a.params);
}

TEST(Train, ZeroRadiusMatchesBaselineBitForBit) {
  TrainConfig c = small_config();
  c.attack.epsilon = 0.0;
  const auto adv = train(c);
  const auto base = train_baseline(c);
  EXPECT_TRUE(adv.params == base.params);
  for (const auto& r : base.log) EXPECT_EQ(r.phase, Phase::warmup);
  EXPECT_GT(std::count_if(adv.log.begin(), adv.log.end(), [](const StepRecord& r) {
              return r.phase == Phase::adversarial;
            }),
            0);
}

TEST(Train, BaselineEqualsFullWarmup) {
  TrainConfig c = small_config();
  const auto base = train_baseline(c);
  c.warmup_fraction = 1.0;
  EXPECT_TRUE(train(c).params == base.params);
}

TEST(Train, AttacksChangeTheTrajectory) {
  const TrainConfig c = small_config();
  EXPECT_FALSE(train(c).params == train_baseline(c).params);
}

TEST(Train, ReducesLoss) {
  TrainConfig c = small_config();
  c.steps = 300;
  c.adam.learning_rate = 3e-3;
  const auto r = train_baseline(c);
  auto mean_total = [&](std::size_t from, std::size_t n) {
    double s = 0.0;
    for (std::size_t k = from; k < from + n; ++k) s += r.log[k].loss.total;
    return s / static_cast<double>(n);
  };
  EXPECT_LT(mean_total(280, 20), 0.25 * mean_total(0, 20));
}

TEST(Train, WritesCheckpointsAndLog) {
  const auto dir = std::filesystem::temp_directory_path() / "stablepde_train_test";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  TrainConfig c = small_config();
  c.checkpoint_every = 5;
  c.checkpoint_dir = dir;
  const auto r = train(c);
  ASSERT_TRUE(std::filesystem::exists(dir / "checkpoint_0000005.bin"));
  const auto ckpt = load_checkpoint(dir / "checkpoint_0000010.bin");
  EXPECT_EQ(ckpt.step, 10u);
  EXPECT_EQ(ckpt.seed, c.seed);
  EXPECT_EQ(ckpt.arch, c.arch());
  EXPECT_TRUE(ckpt.params == r.params);

  write_step_log_csv(dir / "log.csv", r.log);
  const auto table = read_csv(dir / "log.csv");
  EXPECT_EQ(table.header, (std::vector<std::string>{"step", "phase", "physics", "bc", "ic", "total"}));
  ASSERT_EQ(table.rows.size(), r.log.size());
  EXPECT_EQ(table.rows.back()[1], to_string(r.log.back().phase));
  std::filesystem::remove_all(dir);
}
