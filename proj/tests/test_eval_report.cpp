#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <numeric>
#include <random>

#include <Eigen/LU>

#include "stablepde/csv.hpp"
#include "stablepde/eval_report.hpp"
#include "stablepde/function_spaces.hpp"

using namespace stablepde;

namespace {

Eigen::MatrixXd random_matrix(int rows, int cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n;
  return Eigen::MatrixXd::NullaryExpr(rows, cols, [&] { return n(rng); });
}

// x -> A x on any tape scalar.
struct LinearMap {
  Eigen::MatrixXd a;
  template <typename S>
  Var<S> operator()(Tape<S>& tape, Var<S> x) const {
    return matmul(tape.constant(a.cast<S>()), x);
  }
};

struct SmallModel {
  ProblemSpec problem = ProblemSpec::defaults(ProblemKind::poisson1d);
  ArchSpec arch = problem.arch(12, 2);
  DeepONetParams params = init_params(arch, 17);
};

// Dataset whose references are the model's own predictions.
EvalDatasets self_consistent(const SmallModel& m, int n) {
  EvalDatasets d;
  d.problem = m.problem;
  d.grid = evaluation_grid(m.problem);
  d.attack.epsilon = 0.0;
  d.base_inputs = InputSampler(m.problem).batch(3, n);
  d.robust_inputs = d.base_inputs;
  d.base_solutions = forward(m.arch, m.params, d.base_inputs, d.grid);
  d.robust_solutions = d.base_solutions;
  d.sample_seeds.assign(n, 0);
  return d;
}

}  // namespace

TEST(RelativeL2, TrivialCasesAndScaling) {
  const Eigen::VectorXd t = Eigen::VectorXd::LinSpaced(10, 0.1, 2.0);
  const Eigen::VectorXd p = t + 0.3 * Eigen::VectorXd::Ones(10);
  EXPECT_EQ(relative_l2(t, t), 0.0);
  EXPECT_DOUBLE_EQ(relative_l2(2.0 * t, t), 1.0);
  for (double c : {-3.0, 0.5, 1e4}) {
    const Eigen::VectorXd cp = c * p, ct = c * t;
    EXPECT_NEAR(relative_l2(cp, ct), relative_l2(p, t), 1e-14);
  }
  EXPECT_THROW(relative_l2(t, Eigen::VectorXd::Zero(10)), NumericalError);
  EXPECT_THROW(relative_l2(t, t.head(3)), ShapeError);
}

TEST(Quantile, LinearInterpolation) {
  EXPECT_DOUBLE_EQ(quantile({4.0, 1.0, 3.0, 2.0}, 0.5), 2.5);
  EXPECT_DOUBLE_EQ(quantile({4.0, 1.0, 3.0, 2.0}, 0.95), 3.85);
  EXPECT_DOUBLE_EQ(quantile({7.0}, 0.95), 7.0);
  EXPECT_THROW(quantile({}, 0.5), InvalidArgument);
}

TEST(SpectralNorm, DiagonalMap) {
  LinearMap m{Eigen::Vector2d(3.0, 1.0).asDiagonal()};
  const auto est = power_spectral_norm(m, Eigen::Vector2d(0.2, -0.4), {});
  EXPECT_NEAR(est.spectral_norm, 3.0, 1e-6);
  EXPECT_LT(est.residual, 1e-6 * 3.0);
  EXPECT_EQ(dense_spectral_norm(Eigen::Vector2d(3.0, 1.0).asDiagonal().toDenseMatrix()), 3.0);
}

TEST(SpectralNorm, RandomDenseMatchesSvd) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    LinearMap m{random_matrix(5, 7, seed)};
    const double exact = Eigen::JacobiSVD<Eigen::MatrixXd>(m.a).singularValues()[0];
    const auto est = power_spectral_norm(m, Eigen::VectorXd::Zero(7), {1e-13, 5000, seed});
    EXPECT_NEAR(est.spectral_norm, exact, 1e-8) << seed;
    EXPECT_LE(est.spectral_norm, exact * (1 + 1e-14));
    // lower-bound witness
    for (int k = 0; k < 5; ++k) {
      const Eigen::VectorXd v = random_matrix(7, 1, 100 + k);
      EXPECT_GE(est.spectral_norm, (m.a * v).norm() / v.norm() - 1e-12);
    }
  }
}

TEST(SpectralNorm, NonConvergenceKeepsEstimate) {
  LinearMap m{random_matrix(5, 7, 3)};
  try {
    (void)power_spectral_norm(m, Eigen::VectorXd::Zero(7), {1e-6, 1, 0});
    FAIL() << "expected SpectralNormNotConverged";
  } catch (const SpectralNormNotConverged& e) {
    EXPECT_GT(e.last_estimate().spectral_norm, 0.0);
    EXPECT_EQ(e.last_estimate().iterations_used, 1);
  }
  LinearMap zero{Eigen::MatrixXd::Zero(3, 4)};
  EXPECT_EQ(power_spectral_norm(zero, Eigen::VectorXd::Zero(4), {}).spectral_norm, 0.0);
}

TEST(SpectralNorm, NetworkPowerMatchesDense) {
  const SmallModel m;
  const Eigen::MatrixXd grid = evaluation_grid(m.problem);
  const Eigen::VectorXd f = InputSampler(m.problem).draw(4);
  const double dense = jacobian_spectral_norm_dense(m.arch, m.params, f, grid);
  const auto est = jacobian_spectral_norm(m.arch, m.params, f, grid, {1e-12, 2000, 0});
  EXPECT_NEAR(est.spectral_norm, dense, 1e-6 * std::max(1.0, dense));
  const auto coarse = jacobian_spectral_norm(m.arch, m.params, f, grid);
  EXPECT_LE(coarse.spectral_norm, dense + 1e-6);
}

TEST(EvalDatasets, ZeroRadiusRobustSetEqualsBase) {
  const SmallModel m;
  AttackConfig a;
  a.epsilon = 0.0;
  const auto d = build_eval_datasets(m.problem, m.arch, m.params, a, {4, 11, {}});
  EXPECT_EQ(d.robust_inputs, d.base_inputs);
  EXPECT_EQ(d.robust_solutions, d.base_solutions);
  EXPECT_EQ(d.solver.method, "fd_central_thomas");
  EXPECT_NO_THROW(d.validate());
}

TEST(EvalDatasets, BallConstraintAndDeterminism) {
  const SmallModel m;
  for (AttackNorm norm : {AttackNorm::linf, AttackNorm::l2}) {
    AttackConfig a;
    a.norm = norm;
    const auto d = build_eval_datasets(m.problem, m.arch, m.params, a, {6, 11, {}});
    d.validate();
    const Eigen::VectorXd radii = attack_radii(d.base_inputs, a);
    for (Eigen::Index i = 0; i < d.size(); ++i) {
      const Eigen::VectorXd diff = (d.robust_inputs.row(i) - d.base_inputs.row(i)).transpose();
      EXPECT_LE(attack_norm(diff, norm), radii[i] * (1 + 1e-12));
      EXPECT_GT(diff.cwiseAbs().maxCoeff(), 0.0);
    }
    const auto again = build_eval_datasets(m.problem, m.arch, m.params, a, {6, 11, {}});
    EXPECT_EQ(again.robust_inputs, d.robust_inputs);
    EXPECT_EQ(again.robust_solutions, d.robust_solutions);
  }
}

TEST(EvalDatasets, PoissonReferenceShiftBoundedByFdOperatorNorm) {
  const SmallModel m;
  const auto d = build_eval_datasets(m.problem, m.arch, m.params, AttackConfig{}, {5, 2, {}});
  // Dense oracle: sensors -> FD nodes -> interior solve -> grid.
  const int n = ReferenceResolution{}.nx_1d;
  const double h = 1.0 / (n - 1);
  const Eigen::VectorXd nodes = Eigen::VectorXd::LinSpaced(n, 0.0, 1.0);
  Eigen::MatrixXd lap = Eigen::MatrixXd::Zero(n - 2, n - 2);
  for (int i = 0; i < n - 2; ++i) {
    lap(i, i) = 2.0 / (h * h);
    if (i > 0) lap(i, i - 1) = -1.0 / (h * h);
    if (i + 1 < n - 2) lap(i, i + 1) = -1.0 / (h * h);
  }
  Eigen::MatrixXd solve_full = Eigen::MatrixXd::Zero(n, n);
  solve_full.block(1, 1, n - 2, n - 2) = lap.inverse();
  const Eigen::MatrixXd to_nodes = linear_interpolation_matrix(sensor_axis(m.problem), nodes);
  const Eigen::MatrixXd to_grid = linear_interpolation_matrix(nodes, d.grid.col(0));
  const Eigen::MatrixXd op = to_grid * solve_full * to_nodes;
  const double c_fd = Eigen::JacobiSVD<Eigen::MatrixXd>(op).singularValues()[0];
  for (Eigen::Index i = 0; i < d.size(); ++i) {
    const Eigen::VectorXd df = (d.robust_inputs.row(i) - d.base_inputs.row(i)).transpose();
    const Eigen::VectorXd du = (d.robust_solutions.row(i) - d.base_solutions.row(i)).transpose();
    EXPECT_LE(du.norm(), c_fd * df.norm() * (1 + 1e-9));
    EXPECT_LT((du - op * df).norm(), 1e-9 * std::max(1.0, du.norm()));
  }
}

TEST(EvalDatasets, PermutationMovesAllSequencesTogether) {
  const SmallModel m;
  const auto d = build_eval_datasets(m.problem, m.arch, m.params, AttackConfig{}, {4, 5, {}});
  const std::vector<Eigen::Index> order{2, 0, 3, 1};
  const auto p = d.permuted(order);
  p.validate();
  for (Eigen::Index k = 0; k < 4; ++k) {
    EXPECT_EQ(p.base_inputs.row(k), d.base_inputs.row(order[k]));
    EXPECT_EQ(p.robust_solutions.row(k), d.robust_solutions.row(order[k]));
    EXPECT_EQ(p.sample_seeds[k], d.sample_seeds[order[k]]);
  }
  const std::vector<ModelEntry> models{{"m", m.arch, m.params}};
  const auto a = stability_report("e", models, std::vector<EvalDatasets>{d});
  const auto b = stability_report("e", models, std::vector<EvalDatasets>{p});
  for (Eigen::Index k = 0; k < 4; ++k) EXPECT_EQ(b.rows[1].errors[k], a.rows[1].errors[order[k]]);
}

TEST(StabilityReport, PerfectModelHasZeroError) {
  const SmallModel m;
  const auto d = self_consistent(m, 5);
  const std::vector<ModelEntry> models{{"perfect", m.arch, m.params}};
  const auto r = stability_report("poisson1d", models, std::vector<EvalDatasets>{d}, {2, {}});
  ASSERT_EQ(r.rows.size(), 2u);
  for (const auto& row : r.rows) {
    EXPECT_EQ(row.mean_rel_l2, 0.0);
    EXPECT_GE(row.mean_spectral_norm, 0.0);
    EXPECT_EQ(row.c_emp_p50, 0.0);
  }
  EXPECT_EQ(r.row("perfect", "attacked").dataset, "attacked");
  EXPECT_THROW((void)r.row("perfect", "other"), InvalidArgument);
}

TEST(StabilityReport, SwappingModelsPermutesRows) {
  const SmallModel m;
  const ModelEntry a{"a", m.arch, m.params};
  const ModelEntry b{"b", m.arch, init_params(m.arch, 99)};
  const auto da = build_eval_datasets(m.problem, a.arch, a.params, AttackConfig{}, {3, 1, {}});
  const auto db = build_eval_datasets(m.problem, b.arch, b.params, AttackConfig{}, {3, 1, {}});
  const auto ab = stability_report("e", std::vector<ModelEntry>{a, b}, std::vector<EvalDatasets>{da, db}, {2, {}});
  const auto ba = stability_report("e", std::vector<ModelEntry>{b, a}, std::vector<EvalDatasets>{db, da}, {2, {}});
  ASSERT_EQ(ab.rows.size(), 4u);
  for (int k = 0; k < 4; ++k) {
    const auto& x = ab.rows[k];
    const auto& y = ba.rows[(k + 2) % 4];
    EXPECT_EQ(x.model, y.model);
    EXPECT_EQ(x.dataset, y.dataset);
    EXPECT_EQ(x.errors, y.errors);
    EXPECT_EQ(x.mean_spectral_norm, y.mean_spectral_norm);
    EXPECT_EQ(x.c_emp_p95, y.c_emp_p95);
  }
  // the attacked pairs were built against each model's own gradients
  EXPECT_GT(ab.row("a", "attacked").mean_rel_l2, ab.row("a", "base").mean_rel_l2);
  EXPECT_GE(ab.row("a", "attacked").c_emp_p95, ab.row("a", "attacked").c_emp_p50);
}

TEST(StabilityReport, GridMismatchThrows) {
  const SmallModel m;
  auto d = self_consistent(m, 2);
  const ArchSpec other = ProblemSpec::defaults(ProblemKind::antiderivative).arch(12, 2);
  const std::vector<ModelEntry> models{{"x", other, init_params(other, 1)}};
  EXPECT_THROW(stability_report("e", models, std::vector<EvalDatasets>{d}), ShapeError);
  d.grid = d.grid.topRows(10);
  const std::vector<ModelEntry> ok{{"x", m.arch, m.params}};
  EXPECT_THROW(stability_report("e", ok, std::vector<EvalDatasets>{d}), ShapeError);
}

TEST(ReportCsv, HeadersAndRowCounts) {
  const SmallModel m;
  const auto d = self_consistent(m, 3);
  const ModelEntry a{"baseline", m.arch, m.params};
  const ModelEntry b{"stable", m.arch, m.params};
  const auto r = stability_report("poisson1d", std::vector<ModelEntry>{a, b}, std::vector<EvalDatasets>{d, d}, {1, {}});
  const auto dir = std::filesystem::temp_directory_path() / "stablepde_report_test";
  std::filesystem::create_directories(dir);
  write_errors_csv(dir / "errors.csv", r);
  write_summary_csv(dir / "summary.csv", r);
  const std::vector<Eigen::Index> ids{0, 2};
  write_plot_csv(dir / "plot.csv", d, a, b, ids);

  const auto errors = read_csv(dir / "errors.csv");
  EXPECT_EQ(errors.header, errors_csv_header());
  EXPECT_EQ(errors.rows.size(), 4u * 3u);
  const auto summary = read_csv(dir / "summary.csv");
  EXPECT_EQ(summary.header, (std::vector<std::string>{"experiment", "model", "dataset", "mean_rel_l2",
                                                      "mean_spectral_norm", "c_emp_p50", "c_emp_p95"}));
  EXPECT_EQ(summary.rows.size(), 4u);
  const auto plot = read_csv(dir / "plot.csv");
  EXPECT_EQ(plot.header,
            (std::vector<std::string>{"sample_id", "x", "f", "f_tilde", "u_true", "pred_baseline", "pred_stable"}));
  EXPECT_EQ(plot.rows.size(), 2u * static_cast<std::size_t>(d.grid.rows()));
  std::filesystem::remove_all(dir);
}
