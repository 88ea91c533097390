#include "oracle_checks.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <random>

#include "stablepde/adversarial.hpp"
#include "stablepde/eval_report.hpp"
#include "stablepde/function_spaces.hpp"
#include "stablepde/reference_solvers.hpp"
#include "stablepde/training.hpp"

namespace stablepde::cli {

using std::numbers::pi;

namespace {

double max_abs(const Eigen::VectorXd& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }

// Least-squares slope of log err against log h.
double log_slope(const std::vector<double>& h, const std::vector<double>& err) {
  const auto n = static_cast<double>(h.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < h.size(); ++i) {
    const double x = std::log(h[i]), y = std::log(err[i]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

SampledFunction sampled(int n, const std::function<double(double)>& f) {
  SampledFunction s;
  s.xs = uniform_axis(n);
  s.values = s.xs.unaryExpr(f);
  return s;
}

struct LossInstance {
  RandomInstance net;
  LossPlan plan;
  Eigen::MatrixXd inputs;
};

LossInstance loss_instance(int i, std::uint64_t seed) {
  const auto kinds = all_problems();
  RandomInstance net = random_instance(kinds[static_cast<std::size_t>(i) % kinds.size()],
                                       derive_seed(seed, 0, static_cast<std::uint64_t>(i)));
  LossPlan plan(net.problem, net.arch, make_collocation(net.problem));
  Eigen::MatrixXd inputs = InputSampler(net.problem).batch(derive_seed(seed, 1, static_cast<std::uint64_t>(i)), 2);
  return {std::move(net), std::move(plan), std::move(inputs)};
}

// Coordinates probed per instance, spread over the flattened vector.
std::vector<Eigen::Index> probe_indices(Eigen::Index n, int count, std::mt19937_64& rng) {
  std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
  std::vector<Eigen::Index> out;
  for (int k = 0; k < count; ++k) out.push_back(pick(rng));
  return out;
}

}  // namespace

RandomInstance random_instance(ProblemKind kind, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  ProblemSpec p = ProblemSpec::defaults(kind);
  if (kind == ProblemKind::poisson2d) {
    p.sensor_grid_side = 5;
    p.sensor_count = 25;
  } else {
    p.sensor_count = 12;
  }
  p.counts = {16, 4, 4};
  const auto transforms = ProblemSpec::allowed_transforms(kind);
  p.transform = transforms[static_cast<std::size_t>(rng() % transforms.size())];
  p.validate();

  const int width = 4 + 3 * static_cast<int>(rng() % 5);
  const int depth = 1 + static_cast<int>(rng() % 3);
  const ArchSpec arch = p.arch(width, depth);
  Eigen::VectorXd flat = flatten(init_params(arch, rng()));
  std::normal_distribution<double> jiggle(0.0, 0.1);
  for (auto& v : flat) v += jiggle(rng);
  return {p, arch, unflatten(arch, flat)};
}

double parameter_gradient_error(int instances, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const double h = 1e-5;
  double worst = 0.0;
  for (int i = 0; i < instances; ++i) {
    const LossInstance li = loss_instance(i, seed);
    const Eigen::VectorXd g = loss_gradient(li.plan, li.net.params, li.inputs);
    const Eigen::VectorXd flat = flatten(li.net.params);
    const double scale = std::max(max_abs(g), 1e-8);
    for (Eigen::Index k : probe_indices(flat.size(), 6, rng)) {
      Eigen::VectorXd up = flat, down = flat;
      up[k] += h;
      down[k] -= h;
      const double fd = (assemble_loss(li.plan, unflatten(li.net.arch, up), li.inputs).total -
                         assemble_loss(li.plan, unflatten(li.net.arch, down), li.inputs).total) /
                        (2 * h);
      worst = std::max(worst, std::abs(g[k] - fd) / scale);
    }
  }
  return worst;
}

double input_gradient_error(int instances, std::uint64_t seed) {
  std::mt19937_64 rng(seed ^ 0x5eedULL);
  const double h = 1e-5;
  double worst = 0.0;
  for (int i = 0; i < instances; ++i) {
    const LossInstance li = loss_instance(i, seed);
    const AttackObjective objective = physics_objective(li.plan, li.net.params);
    Eigen::MatrixXd g;
    objective(li.inputs, &g);
    const double scale = std::max(g.cwiseAbs().maxCoeff(), 1e-8);
    for (Eigen::Index k : probe_indices(li.inputs.size(), 4, rng)) {
      Eigen::MatrixXd up = li.inputs, down = li.inputs;
      up(k) += h;
      down(k) -= h;
      const double fd = (objective(up, nullptr) - objective(down, nullptr)) / (2 * h);
      worst = std::max(worst, std::abs(g(k) - fd) / scale);
    }
  }
  return worst;
}

double second_derivative_error(int instances, std::uint64_t seed) {
  std::mt19937_64 rng(seed ^ 0xd2ULL);
  std::uniform_real_distribution<double> inside(0.1, 0.9);
  const double h = 1e-4;
  double worst = 0.0;
  for (int i = 0; i < instances; ++i) {
    const LossInstance li = loss_instance(i, seed);
    const Eigen::VectorXd f = li.inputs.row(0).transpose();
    const int dim = li.net.arch.coord_dim();
    Eigen::RowVectorXd y(dim);
    for (int a = 0; a < dim; ++a) y[a] = inside(rng);
    for (int axis = 0; axis < dim; ++axis) {
      auto u = [&](double shift) {
        Eigen::MatrixXd c = y;
        c(0, axis) += shift;
        return forward(li.net.arch, li.net.params, f, c)[0];
      };
      const double fd = (u(h) - 2 * u(0.0) + u(-h)) / (h * h);
      const double exact = second_coordinate_derivative(li.net.arch, li.net.params, f, y, axis);
      worst = std::max(worst, std::abs(exact - fd) / std::max(std::abs(fd), 1e-3));
    }
  }
  return worst;
}

double spectral_norm_gap(int instances, std::uint64_t seed) {
  double worst = 0.0;
  for (int i = 0; i < instances; ++i) {
    const LossInstance li = loss_instance(i, seed);
    const Eigen::VectorXd f = li.inputs.row(0).transpose();
    const Eigen::MatrixXd grid = li.plan.set().interior;
    SpectralNormOptions options;
    options.tol = 1e-12;
    options.max_iter = 5000;
    options.seed = static_cast<std::uint64_t>(i);
    const double power = jacobian_spectral_norm(li.net.arch, li.net.params, f, grid, options).spectral_norm;
    const double dense = jacobian_spectral_norm_dense(li.net.arch, li.net.params, f, grid);
    worst = std::max(worst, std::abs(power - dense) / std::max(dense, 1e-12));
  }
  return worst;
}

std::vector<Check> solver_checks() {
  std::vector<Check> out;
  const auto max_diff = [](const Eigen::VectorXd& a, const Eigen::VectorXd& b) { return (a - b).cwiseAbs().maxCoeff(); };

  {
    const auto f = [](double x) { return pi * pi * std::sin(pi * x); };
    const auto s = solve_poisson_1d_fd(sampled(1001, f), 1001);
    out.push_back({"solver_poisson1d_error", max_diff(s.values, (pi * s.axes[0].array()).sin().matrix()), 1e-5});
    std::vector<double> h, err;
    for (int n : {26, 51, 101, 201}) {
      const auto r = solve_poisson_1d_fd(sampled(n, f), n);
      h.push_back(1.0 / (n - 1));
      err.push_back(max_diff(r.values, (pi * r.axes[0].array()).sin().matrix()));
    }
    out.push_back({"solver_poisson1d_order", std::abs(log_slope(h, err) - 2.0), 0.3});
  }
  {
    const auto f = [](double x) { return (2 + pi * pi) * std::cos(pi * x); };
    const auto s = solve_helmholtz_neumann_fd(sampled(1001, f), 1001);
    out.push_back({"solver_helmholtz_error", max_diff(s.values, (pi * s.axes[0].array()).cos().matrix()), 1e-4});
    std::vector<double> h, err;
    for (int n : {26, 51, 101, 201}) {
      const auto r = solve_helmholtz_neumann_fd(sampled(n, f), n);
      h.push_back(1.0 / (n - 1));
      err.push_back(max_diff(r.values, (pi * r.axes[0].array()).cos().matrix()));
    }
    out.push_back({"solver_helmholtz_order", std::abs(log_slope(h, err) - 2.0), 0.3});
  }
  {
    const auto heat_exact = [](const GridSolution& s, double alpha) {
      const Eigen::MatrixXd pts = s.points();
      return Eigen::VectorXd(((-alpha * pi * pi * pts.col(1).array()).exp() * (pi * pts.col(0).array()).sin()).matrix());
    };
    const auto sine = [](double x) { return std::sin(pi * x); };
    const auto s = solve_heat_fd(ProblemKind::heat_ic, sampled(401, sine), 0.01, {401, 401, 1.0});
    out.push_back({"solver_heat_error", max_diff(s.values, heat_exact(s, 0.01)), 1e-4});
    std::vector<double> h, err;
    for (int n : {11, 21, 41, 81}) {
      const auto r = solve_heat_fd(ProblemKind::heat_ic, sampled(n, sine), 0.5, {n, n, 0.5});
      h.push_back(1.0 / (n - 1));
      err.push_back(max_diff(r.values, heat_exact(r, 0.5)));
    }
    out.push_back({"solver_heat_order", std::abs(log_slope(h, err) - 2.0), 0.3});
  }
  {
    const Eigen::VectorXd grid = uniform_axis(50);
    const auto s = solve_ode_rk45(sampled(200, [](double x) { return std::cos(pi * x); }), grid);
    out.push_back({"solver_rk45_error", max_diff(s.values, ((pi * grid.array()).sin() / pi).matrix()), 2e-4});
    std::vector<double> h, err;
    for (int steps : {2, 4, 8}) {
      const auto r = solve_ode_rk45_fixed([](double x) { return 3.0 * std::cos(3.0 * x); }, steps);
      h.push_back(1.0 / steps);
      err.push_back(std::abs(r.values[steps] - std::sin(3.0)));
    }
    out.push_back({"solver_rk45_order", std::abs(log_slope(h, err) - 5.0), 0.5});
  }
  {
    Eigen::MatrixXd c = Eigen::MatrixXd::Zero(2, 3);
    c(0, 0) = 1.0;
    c(1, 2) = -0.5;
    std::vector<double> h, err;
    for (int n : {11, 21, 41}) {
      const Poisson2dFd fd(n);
      const auto num = fd.solve(eval_bitrig(c, fd.nodes()));
      const auto exact = solve_poisson_2d_analytic(c, uniform_axis(n), uniform_axis(n));
      h.push_back(1.0 / (n - 1));
      err.push_back(max_diff(num.values, exact.values));
    }
    out.push_back({"solver_poisson2d_order", std::abs(log_slope(h, err) - 2.0), 0.3});
  }
  return out;
}

std::vector<Check> projection_checks(int trials, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> radius(0.01, 2.0);
  double violation = 0.0, idempotence = 0.0, expansion = 0.0;
  for (int t = 0; t < trials; ++t) {
    const AttackNorm norm = t % 2 ? AttackNorm::l2 : AttackNorm::linf;
    const int m = 5 + t % 20;
    const auto draw = [&](double scale) { return Eigen::VectorXd(Eigen::VectorXd::NullaryExpr(m, [&] { return scale * normal(rng); })); };
    const Eigen::VectorXd center = draw(1.0), a = draw(3.0), b = draw(3.0);
    const double eps = radius(rng);
    const Eigen::VectorXd pa = project(center + a, center, eps, norm);
    const Eigen::VectorXd pb = project(center + b, center, eps, norm);
    violation = std::max(violation, attack_norm(pa - center, norm) - eps);
    idempotence = std::max(idempotence, max_abs(project(pa, center, eps, norm) - pa));
    expansion = std::max(expansion, (pa - pb).norm() - (a - b).norm());
  }

  // Zero radius must leave the inputs untouched, whatever the objective.
  const AttackObjective quadratic = [](const Eigen::MatrixXd& x, Eigen::MatrixXd* grad) {
    if (grad) *grad = 2.0 * x;
    return x.squaredNorm();
  };
  const Eigen::MatrixXd clean = Eigen::MatrixXd::NullaryExpr(8, 10, [&] { return normal(rng); });
  AttackConfig zero;
  zero.epsilon = 0.0;
  const double identity = (pgd(quadratic, clean, zero, seed).perturbed - clean).cwiseAbs().maxCoeff();

  return {{"attack_ball_violation", std::max(violation, 0.0), 1e-12},
          {"attack_projection_idempotence", idempotence, 1e-12},
          {"attack_projection_expansion", std::max(expansion, 0.0), 1e-12},
          {"attack_zero_radius_change", identity, 0.0}};
}

}  // namespace stablepde::cli
