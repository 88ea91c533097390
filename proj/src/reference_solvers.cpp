#include "stablepde/reference_solvers.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include <Eigen/SparseCore>
#include <boost/numeric/odeint.hpp>

#include "stablepde/csv.hpp"
#include "stablepde/errors.hpp"

namespace stablepde {

namespace odeint = boost::numeric::odeint;
using std::numbers::pi;

namespace {

// Interval index k with axis[k] <= x <= axis[k+1] and the weight of axis[k+1].
std::pair<Eigen::Index, double> locate(const Eigen::VectorXd& axis, double x) {
  const Eigen::Index n = axis.size();
  const double slack = 1e-12 * std::max(1.0, std::abs(axis[n - 1] - axis[0]));
  if (x < axis[0] - slack || x > axis[n - 1] + slack) {
    throw InvalidArgument("query point " + std::to_string(x) + " lies outside the solution grid");
  }
  x = std::clamp(x, axis[0], axis[n - 1]);
  const auto* begin = axis.data();
  auto k = static_cast<Eigen::Index>(std::upper_bound(begin, begin + n, x) - begin) - 1;
  k = std::clamp<Eigen::Index>(k, 0, n - 2);
  return {k, (x - axis[k]) / (axis[k + 1] - axis[k])};
}

void require(bool ok, const std::string& message) {
  if (!ok) throw InvalidArgument(message);
}

// Second-difference operator restricted to interior nodes of a uniform grid:
// returns (sub, diag, super) of I * a + L * b where L is the 1/h^2 Laplacian.
struct Tridiag {
  Eigen::VectorXd sub, diag, super;
};

Tridiag shifted_laplacian(Eigen::Index n_inner, double h, double a, double b) {
  const double off = b / (h * h);
  Tridiag t;
  t.sub = Eigen::VectorXd::Constant(n_inner - 1, off);
  t.super = t.sub;
  t.diag = Eigen::VectorXd::Constant(n_inner, a - 2.0 * off);
  return t;
}

// (I * a + L * b) v with zero Dirichlet values outside.
Eigen::VectorXd apply(const Tridiag& t, const Eigen::VectorXd& v) {
  Eigen::VectorXd out = t.diag.cwiseProduct(v);
  const Eigen::Index n = v.size();
  out.head(n - 1) += t.super.cwiseProduct(v.tail(n - 1));
  out.tail(n - 1) += t.sub.cwiseProduct(v.head(n - 1));
  return out;
}

GridSolution space_time(const Eigen::VectorXd& xs, const Eigen::VectorXd& ts, SolverMeta meta) {
  GridSolution s;
  s.axes = {xs, ts};
  s.values = Eigen::VectorXd::Zero(xs.size() * ts.size());
  s.meta = std::move(meta);
  return s;
}

// Stores interior values for time index k.
void store_slice(GridSolution& s, Eigen::Index k, const Eigen::VectorXd& inner) {
  const Eigen::Index nt = s.axes[1].size();
  for (Eigen::Index i = 0; i < inner.size(); ++i) s.values[(i + 1) * nt + k] = inner[i];
}

}  // namespace

Eigen::MatrixXd GridSolution::points() const {
  if (axes.size() == 1) return axes[0];
  return tensor_grid(axes[0], axes[1]);
}

double GridSolution::at(Eigen::Index i, Eigen::Index j) const {
  return axes.size() == 1 ? values[i] : values[i * axes[1].size() + j];
}

Eigen::VectorXd GridSolution::sample(const Eigen::MatrixXd& query) const {
  if (query.cols() != static_cast<Eigen::Index>(axes.size())) {
    throw ShapeError("GridSolution::sample: query dimension does not match the grid");
  }
  Eigen::VectorXd out(query.rows());
  for (Eigen::Index r = 0; r < query.rows(); ++r) {
    const auto [i, wx] = locate(axes[0], query(r, 0));
    if (axes.size() == 1) {
      out[r] = (1 - wx) * values[i] + wx * values[i + 1];
      continue;
    }
    const auto [j, wy] = locate(axes[1], query(r, 1));
    out[r] = (1 - wx) * ((1 - wy) * at(i, j) + wy * at(i, j + 1)) + wx * ((1 - wy) * at(i + 1, j) + wy * at(i + 1, j + 1));
  }
  return out;
}

void GridSolution::validate() const {
  require(axes.size() == 1 || axes.size() == 2, "GridSolution needs one or two axes");
  Eigen::Index expected = 1;
  for (const auto& a : axes) {
    require(a.size() >= 2, "GridSolution axis needs at least two nodes");
    expected *= a.size();
  }
  if (values.size() != expected) throw ShapeError("GridSolution: value count does not match the grid");
  if (!values.allFinite()) throw NumericalError("GridSolution: non-finite solution values (" + meta.method + ")");
}

void write_grid_csv(const std::filesystem::path& path, const GridSolution& s, const std::vector<std::string>& axis_names) {
  s.validate();
  if (axis_names.size() != s.axes.size()) throw InvalidArgument("write_grid_csv: one name per axis required");
  std::vector<std::string> header = axis_names;
  header.emplace_back("u");
  CsvWriter out(path, header);
  const Eigen::MatrixXd pts = s.points();
  for (Eigen::Index r = 0; r < pts.rows(); ++r) {
    std::vector<std::string> row;
    for (Eigen::Index c = 0; c < pts.cols(); ++c) row.push_back(CsvWriter::num(pts(r, c)));
    row.push_back(CsvWriter::num(s.values[r]));
    out.write_row(row);
  }
}

Eigen::VectorXd SampledFunction::at(const Eigen::VectorXd& query) const {
  if (xs.size() != values.size() || xs.size() < 2) throw ShapeError("SampledFunction: need >= 2 matching samples");
  GridSolution g;
  g.axes = {xs};
  g.values = values;
  return g.sample(query);
}

Eigen::VectorXd uniform_axis(int n) {
  require(n >= 2, "grid needs at least two nodes");
  return Eigen::VectorXd::LinSpaced(n, 0.0, 1.0);
}

GridSolution solve_ode_rk45(const SampledFunction& f, const Eigen::VectorXd& output_grid, double abs_tol) {
  require(output_grid.size() >= 1, "solve_ode_rk45: empty output grid");
  require(abs_tol > 0, "solve_ode_rk45: tolerance must be positive");
  for (Eigen::Index i = 1; i < output_grid.size(); ++i) {
    require(output_grid[i] > output_grid[i - 1], "solve_ode_rk45: output grid must be strictly increasing");
  }
  require(output_grid[0] >= 0.0, "solve_ode_rk45: output grid starts before x = 0");

  using State = std::array<double, 1>;
  std::vector<double> times(output_grid.data(), output_grid.data() + output_grid.size());
  const bool prepend = times.front() > 0.0;
  if (prepend) times.insert(times.begin(), 0.0);

  GridSolution g;
  g.axes = {f.xs};
  g.values = f.values;
  auto rhs = [&g](const State&, State& dudx, double x) {
    const auto [k, w] = locate(g.axes[0], x);
    dudx[0] = (1 - w) * g.values[k] + w * g.values[k + 1];
  };

  std::vector<double> result;
  result.reserve(times.size());
  State u{0.0};
  try {
    auto stepper = odeint::make_dense_output(abs_tol, 0.0, odeint::runge_kutta_dopri5<State>());
    odeint::integrate_times(stepper, rhs, u, times.begin(), times.end(), 1e-3,
                            [&result](const State& s, double) { result.push_back(s[0]); },
                            odeint::max_step_checker(100000));
  } catch (const odeint::odeint_error& e) {
    throw NumericalError(std::string("solve_ode_rk45: step size control failed: ") + e.what());
  }
  if (prepend) result.erase(result.begin());

  GridSolution s;
  s.axes = {output_grid};
  s.values = Eigen::Map<const Eigen::VectorXd>(result.data(), static_cast<Eigen::Index>(result.size()));
  s.meta = {"dopri5_adaptive", static_cast<int>(output_grid.size()), 5.0};
  s.validate();
  return s;
}

GridSolution solve_ode_rk45_fixed(const std::function<double(double)>& f, int steps) {
  require(steps >= 1, "solve_ode_rk45_fixed: steps must be positive");
  using State = std::array<double, 1>;
  odeint::runge_kutta_dopri5<State> stepper;
  auto rhs = [&f](const State&, State& dudx, double x) { dudx[0] = f(x); };
  const double h = 1.0 / steps;
  GridSolution s;
  s.axes = {uniform_axis(steps + 1)};
  s.values = Eigen::VectorXd::Zero(steps + 1);
  State u{0.0};
  for (int k = 0; k < steps; ++k) {
    stepper.do_step(rhs, u, k * h, h);
    s.values[k + 1] = u[0];
  }
  s.meta = {"dopri5_fixed", steps + 1, 5.0};
  s.validate();
  return s;
}

Eigen::VectorXd solve_tridiagonal(const Eigen::VectorXd& sub, const Eigen::VectorXd& diag,
                                  const Eigen::VectorXd& super, const Eigen::VectorXd& rhs) {
  const Eigen::Index n = diag.size();
  if (n == 0 || rhs.size() != n || sub.size() != n - 1 || super.size() != n - 1) {
    throw ShapeError("solve_tridiagonal: inconsistent band sizes");
  }
  Eigen::VectorXd c(n), d(n);
  double pivot = diag[0];
  if (pivot == 0.0) throw NumericalError("solve_tridiagonal: zero pivot at row 0");
  c[0] = n > 1 ? super[0] / pivot : 0.0;
  d[0] = rhs[0] / pivot;
  for (Eigen::Index i = 1; i < n; ++i) {
    pivot = diag[i] - sub[i - 1] * c[i - 1];
    if (pivot == 0.0) throw NumericalError("solve_tridiagonal: zero pivot at row " + std::to_string(i));
    c[i] = i < n - 1 ? super[i] / pivot : 0.0;
    d[i] = (rhs[i] - sub[i - 1] * d[i - 1]) / pivot;
  }
  for (Eigen::Index i = n - 2; i >= 0; --i) d[i] -= c[i] * d[i + 1];
  return d;
}

GridSolution solve_poisson_1d_fd(const SampledFunction& f, int n_grid) {
  require(n_grid >= 3, "solve_poisson_1d_fd: n_grid must be >= 3");
  const Eigen::VectorXd xs = uniform_axis(n_grid);
  const double h = 1.0 / (n_grid - 1);
  const Eigen::VectorXd rhs = f.at(xs.segment(1, n_grid - 2));
  const Tridiag a = shifted_laplacian(n_grid - 2, h, 0.0, -1.0);
  GridSolution s;
  s.axes = {xs};
  s.values = Eigen::VectorXd::Zero(n_grid);
  s.values.segment(1, n_grid - 2) = solve_tridiagonal(a.sub, a.diag, a.super, rhs);
  s.meta = {"fd_central_thomas", n_grid, 2.0};
  s.validate();
  return s;
}

GridSolution solve_poisson_2d_analytic(const Eigen::MatrixXd& coefficients, const Eigen::VectorXd& axis_x,
                                       const Eigen::VectorXd& axis_y) {
  Eigen::MatrixXd scaled = coefficients;
  for (Eigen::Index r = 0; r < scaled.rows(); ++r) {
    for (Eigen::Index c = 0; c < scaled.cols(); ++c) {
      scaled(r, c) /= static_cast<double>((r + 1) * (r + 1) + (c + 1) * (c + 1)) * pi * pi;
    }
  }
  GridSolution s;
  s.axes = {axis_x, axis_y};
  s.values = eval_bitrig(scaled, tensor_grid(axis_x, axis_y));
  s.meta = {"eigenfunction_inversion", static_cast<int>(axis_x.size()), 0.0};
  s.validate();
  return s;
}

Poisson2dFd::Poisson2dFd(int n_grid) : n_(n_grid) {
  require(n_grid >= 3, "Poisson2dFd: n_grid must be >= 3");
  const int m = n_grid - 2;
  const double inv_h2 = static_cast<double>(n_grid - 1) * (n_grid - 1);
  std::vector<Eigen::Triplet<double>> entries;
  entries.reserve(static_cast<std::size_t>(m) * m * 5);
  auto id = [m](int i, int j) { return i * m + j; };
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < m; ++j) {
      entries.emplace_back(id(i, j), id(i, j), 4.0 * inv_h2);
      if (i > 0) entries.emplace_back(id(i, j), id(i - 1, j), -inv_h2);
      if (i < m - 1) entries.emplace_back(id(i, j), id(i + 1, j), -inv_h2);
      if (j > 0) entries.emplace_back(id(i, j), id(i, j - 1), -inv_h2);
      if (j < m - 1) entries.emplace_back(id(i, j), id(i, j + 1), -inv_h2);
    }
  }
  Eigen::SparseMatrix<double> a(m * m, m * m);
  a.setFromTriplets(entries.begin(), entries.end());
  factor_.compute(a);
  if (factor_.info() != Eigen::Success) throw NumericalError("Poisson2dFd: factorization failed");
}

Eigen::MatrixXd Poisson2dFd::nodes() const { return tensor_grid(uniform_axis(n_), uniform_axis(n_)); }

GridSolution Poisson2dFd::solve(const Eigen::VectorXd& source_at_nodes) const {
  const int n = n_;
  const int m = n - 2;
  if (source_at_nodes.size() != static_cast<Eigen::Index>(n) * n) throw ShapeError("Poisson2dFd: source size mismatch");
  Eigen::VectorXd rhs(m * m);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) rhs[i * m + j] = source_at_nodes[(i + 1) * n + (j + 1)];
  const Eigen::VectorXd inner = factor_.solve(rhs);
  GridSolution s;
  s.axes = {uniform_axis(n), uniform_axis(n)};
  s.values = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n) * n);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) s.values[(i + 1) * n + (j + 1)] = inner[i * m + j];
  s.meta = {"fd_five_point_ldlt", n, 2.0};
  s.validate();
  return s;
}

GridSolution solve_helmholtz_neumann_fd(const SampledFunction& f, int n_grid, double shift) {
  require(n_grid >= 3, "solve_helmholtz_neumann_fd: n_grid must be >= 3");
  require(shift > 0, "solve_helmholtz_neumann_fd: shift must be positive");
  const Eigen::VectorXd xs = uniform_axis(n_grid);
  const double h2 = 1.0 / ((n_grid - 1.0) * (n_grid - 1.0));
  Eigen::VectorXd sub = Eigen::VectorXd::Constant(n_grid - 1, -1.0 / h2);
  Eigen::VectorXd super = sub;
  const Eigen::VectorXd diag = Eigen::VectorXd::Constant(n_grid, 2.0 / h2 + shift);
  // ghost nodes mirror the first interior neighbour
  super[0] = -2.0 / h2;
  sub[n_grid - 2] = -2.0 / h2;
  GridSolution s;
  s.axes = {xs};
  s.values = solve_tridiagonal(sub, diag, super, f.at(xs));
  s.meta = {"fd_central_ghost_neumann", n_grid, 2.0};
  s.validate();
  return s;
}

GridSolution solve_heat_fd(ProblemKind kind, const SampledFunction& f, double alpha, const HeatOptions& opt) {
  require(kind == ProblemKind::heat_ic || kind == ProblemKind::heat_source, "solve_heat_fd: not a heat problem");
  require(alpha > 0, "solve_heat_fd: alpha must be > 0");
  require(opt.nx >= 3 && opt.nt >= 2, "solve_heat_fd: need nx >= 3 and nt >= 2");
  require(opt.t_end > 0, "solve_heat_fd: t_end must be > 0");
  const bool cn = opt.scheme == TimeScheme::crank_nicolson;
  const Eigen::VectorXd xs = uniform_axis(opt.nx);
  const Eigen::VectorXd ts = Eigen::VectorXd::LinSpaced(opt.nt, 0.0, opt.t_end);
  const double h = 1.0 / (opt.nx - 1);
  const double dt = opt.t_end / (opt.nt - 1);
  const Eigen::Index inner_n = opt.nx - 2;
  const Eigen::VectorXd inner_x = xs.segment(1, inner_n);

  const double theta = cn ? 0.5 : 1.0;
  const Tridiag lhs = shifted_laplacian(inner_n, h, 1.0, -theta * alpha * dt);
  const Tridiag explicit_part = shifted_laplacian(inner_n, h, 1.0, (1.0 - theta) * alpha * dt);
  const Eigen::VectorXd source = kind == ProblemKind::heat_source ? Eigen::VectorXd(dt * f.at(inner_x))
                                                                  : Eigen::VectorXd::Zero(inner_n);

  GridSolution s = space_time(xs, ts, {cn ? "crank_nicolson" : "implicit_euler", opt.nx, cn ? 2.0 : 1.0});
  Eigen::VectorXd u = kind == ProblemKind::heat_ic ? f.at(inner_x) : Eigen::VectorXd::Zero(inner_n);
  store_slice(s, 0, u);
  for (int k = 1; k < opt.nt; ++k) {
    const Eigen::VectorXd rhs = (cn ? apply(explicit_part, u) : u) + source;
    u = solve_tridiagonal(lhs.sub, lhs.diag, lhs.super, rhs);
    store_slice(s, k, u);
  }
  s.validate();
  return s;
}

GridSolution solve_diffusion_reaction(ReactionMode mode, const SampledFunction& input, double diffusion,
                                      double reaction, const ReactionOptions& opt) {
  require(diffusion > 0, "solve_diffusion_reaction: diffusion must be > 0");
  require(opt.nx >= 3 && opt.nt >= 2, "solve_diffusion_reaction: need nx >= 3 and nt >= 2");
  require(opt.t_end > 0 && opt.picard_tol > 0 && opt.picard_max_iter > 0,
          "solve_diffusion_reaction: invalid time horizon or Picard settings");
  const Eigen::VectorXd xs = uniform_axis(opt.nx);
  const Eigen::VectorXd ts = Eigen::VectorXd::LinSpaced(opt.nt, 0.0, opt.t_end);
  const double h = 1.0 / (opt.nx - 1);
  const double dt = opt.t_end / (opt.nt - 1);
  const Eigen::Index inner_n = opt.nx - 2;
  const Eigen::VectorXd inner_x = xs.segment(1, inner_n);

  // quadratic coefficient q and constant forcing g: u_t = D u_xx + q u^2 + g
  Eigen::VectorXd q, g;
  if (mode == ReactionMode::source) {
    q = Eigen::VectorXd::Constant(inner_n, reaction);
    g = input.at(inner_x);
  } else {
    q = -input.at(inner_x);
    g = (pi * inner_x.array()).sin().matrix();
  }

  const Tridiag lhs = shifted_laplacian(inner_n, h, 1.0, -diffusion * dt);
  GridSolution s = space_time(xs, ts, {"implicit_euler_picard", opt.nx, 1.0});
  Eigen::VectorXd u = Eigen::VectorXd::Zero(inner_n);
  for (int k = 1; k < opt.nt; ++k) {
    const Eigen::VectorXd base = u + dt * g;
    Eigen::VectorXd iterate = u;
    bool converged = false;
    for (int it = 0; it < opt.picard_max_iter; ++it) {
      const Eigen::VectorXd rhs = base + dt * q.cwiseProduct(iterate.cwiseAbs2());
      Eigen::VectorXd next = solve_tridiagonal(lhs.sub, lhs.diag, lhs.super, rhs);
      if (!next.allFinite()) break;
      const double change = (next - iterate).cwiseAbs().maxCoeff();
      iterate = std::move(next);
      if (change < opt.picard_tol) {
        converged = true;
        break;
      }
    }
    if (!converged) {
      throw NumericalError("solve_diffusion_reaction: Picard iteration did not converge at time step " +
                           std::to_string(k));
    }
    u = iterate;
    store_slice(s, k, u);
  }
  s.validate();
  return s;
}

ReferenceSolver::ReferenceSolver(ProblemSpec problem, ReferenceResolution res)
    : problem_(std::move(problem)), res_(res), sensors_(sensor_axis(problem_)) {
  problem_.validate();
  if (problem_.kind == ProblemKind::poisson2d) fd2d_ = std::make_shared<const Poisson2dFd>(res_.nx);
}

SolverMeta ReferenceSolver::meta() const {
  switch (problem_.kind) {
    case ProblemKind::antiderivative: return {"dopri5_adaptive", res_.nx_1d, 5.0};
    case ProblemKind::poisson1d: return {"fd_central_thomas", res_.nx_1d, 2.0};
    case ProblemKind::helmholtz_neumann: return {"fd_central_ghost_neumann", res_.nx_1d, 2.0};
    case ProblemKind::heat_ic:
    case ProblemKind::heat_source: return {"crank_nicolson", res_.nx, 2.0};
    case ProblemKind::diffrec_source:
    case ProblemKind::diffrec_coeff: return {"implicit_euler_picard", res_.nx, 1.0};
    case ProblemKind::poisson2d: return {"eigenfunction_inversion+fd_five_point_ldlt", res_.nx, 2.0};
  }
  return {};
}

Eigen::VectorXd ReferenceSolver::solve(const Eigen::VectorXd& f, const Eigen::MatrixXd& points,
                                       const Eigen::MatrixXd* bitrig) const {
  if (f.size() != problem_.sensor_count) throw ShapeError("ReferenceSolver: input length does not match sensors");
  if (points.cols() != problem_.coord_dim()) throw ShapeError("ReferenceSolver: point dimension mismatch");
  const SampledFunction sampled{sensors_, f};
  switch (problem_.kind) {
    case ProblemKind::antiderivative: {
      const Eigen::VectorXd xs = points.col(0);
      const bool increasing = std::adjacent_find(xs.data(), xs.data() + xs.size(), std::greater_equal<>()) ==
                              xs.data() + xs.size();
      if (increasing) return solve_ode_rk45(sampled, xs).values;
      return solve_ode_rk45(sampled, uniform_axis(res_.nx_1d)).sample(points);
    }
    case ProblemKind::poisson1d: return solve_poisson_1d_fd(sampled, res_.nx_1d).sample(points);
    case ProblemKind::helmholtz_neumann:
      return solve_helmholtz_neumann_fd(sampled, res_.nx_1d, problem_.constant("shift")).sample(points);
    case ProblemKind::heat_ic:
    case ProblemKind::heat_source:
      return solve_heat_fd(problem_.kind, sampled, problem_.constant("alpha"), {res_.nx, res_.nt, 1.0})
          .sample(points);
    case ProblemKind::diffrec_source:
      return solve_diffusion_reaction(ReactionMode::source, sampled, problem_.constant("diffusion"),
                                      problem_.constant("reaction"), {res_.nx, res_.nt})
          .sample(points);
    case ProblemKind::diffrec_coeff:
      return solve_diffusion_reaction(ReactionMode::coefficient, sampled, problem_.constant("diffusion"), 0.0,
                                      {res_.nx, res_.nt})
          .sample(points);
    case ProblemKind::poisson2d: {
      Eigen::VectorXd remainder = f;
      Eigen::VectorXd out = Eigen::VectorXd::Zero(points.rows());
      if (bitrig) {
        Eigen::MatrixXd scaled = *bitrig;
        for (Eigen::Index r = 0; r < scaled.rows(); ++r)
          for (Eigen::Index c = 0; c < scaled.cols(); ++c)
            scaled(r, c) /= static_cast<double>((r + 1) * (r + 1) + (c + 1) * (c + 1)) * pi * pi;
        out = eval_bitrig(scaled, points);
        remainder -= eval_bitrig(*bitrig, sensor_points(problem_));
      }
      if (remainder.cwiseAbs().maxCoeff() > 0.0) {
        GridSolution on_sensors;
        on_sensors.axes = {sensors_, sensors_};
        on_sensors.values = remainder;
        out += fd2d_->solve(on_sensors.sample(fd2d_->nodes())).sample(points);
      }
      return out;
    }
  }
  throw InvalidArgument("ReferenceSolver: unsupported problem");
}

}  // namespace stablepde
