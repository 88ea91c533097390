#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SparseCholesky>

#include "stablepde/pde_suite.hpp"

namespace stablepde {

struct SolverMeta {
  std::string method;
  int resolution = 0;     // nodes per axis
  double order = 0.0;     // nominal convergence order
};

/// Solution on a structured grid. One axis (x) or two axes (x then y or t);
/// values are flattened as i * n1 + j, matching tensor_grid.
struct GridSolution {
  std::vector<Eigen::VectorXd> axes;
  Eigen::VectorXd values;
  SolverMeta meta;

  [[nodiscard]] Eigen::MatrixXd points() const;
  [[nodiscard]] double at(Eigen::Index i, Eigen::Index j = 0) const;
  /// Piecewise-(bi)linear interpolation at query points (rows). Throws
  /// InvalidArgument for points outside the grid.
  [[nodiscard]] Eigen::VectorXd sample(const Eigen::MatrixXd& query) const;
  /// Checks axis/value sizes and finiteness.
  void validate() const;
};

/// Grid columns followed by a `u` column.
void write_grid_csv(const std::filesystem::path& path, const GridSolution& s,
                    const std::vector<std::string>& axis_names);

/// Function known by samples on a 1-d grid; evaluated by linear interpolation.
struct SampledFunction {
  Eigen::VectorXd xs;
  Eigen::VectorXd values;
  [[nodiscard]] Eigen::VectorXd at(const Eigen::VectorXd& query) const;
};

Eigen::VectorXd uniform_axis(int n);

/// u' = f, u(0) = 0 by adaptive Dormand-Prince 5(4), reported on `output_grid`.
/// Throws NumericalError when the step size underflows.
GridSolution solve_ode_rk45(const SampledFunction& f, const Eigen::VectorXd& output_grid, double abs_tol = 1e-8);
/// Fixed-step Dormand-Prince on [0, 1] with `steps` steps, for order checks.
GridSolution solve_ode_rk45_fixed(const std::function<double(double)>& f, int steps);

/// Tridiagonal solve, throws NumericalError on a zero pivot. Sub/super
/// diagonals have length n - 1.
Eigen::VectorXd solve_tridiagonal(const Eigen::VectorXd& sub, const Eigen::VectorXd& diag,
                                  const Eigen::VectorXd& super, const Eigen::VectorXd& rhs);

/// -u'' = f, u(0) = u(1) = 0, central differences on n_grid nodes.
GridSolution solve_poisson_1d_fd(const SampledFunction& f, int n_grid = 201);

/// Exact solution of -Δu = f for bi-trigonometric f with the given coefficients.
GridSolution solve_poisson_2d_analytic(const Eigen::MatrixXd& coefficients, const Eigen::VectorXd& axis_x,
                                       const Eigen::VectorXd& axis_y);

/// Five-point -Δ on an n x n node grid of the unit square, zero Dirichlet.
/// The factorization is computed once per instance.
class Poisson2dFd {
 public:
  explicit Poisson2dFd(int n_grid = 201);
  /// `source` is evaluated at every node (node-major as tensor_grid).
  [[nodiscard]] GridSolution solve(const Eigen::VectorXd& source_at_nodes) const;
  [[nodiscard]] Eigen::MatrixXd nodes() const;
  [[nodiscard]] int n_grid() const { return n_; }

 private:
  int n_;
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> factor_;
};

/// -u'' + shift u = f with u'(0) = u'(1) = 0 via ghost points.
GridSolution solve_helmholtz_neumann_fd(const SampledFunction& f, int n_grid = 201, double shift = 2.0);

enum class TimeScheme { crank_nicolson, implicit_euler };

struct HeatOptions {
  int nx = 201;
  int nt = 201;
  double t_end = 1.0;
  TimeScheme scheme = TimeScheme::crank_nicolson;
};

/// Heat equation on (x, t) in [0,1] x [0, t_end], zero Dirichlet boundary.
/// heat_ic: initial profile f, no source. heat_source: zero initial profile,
/// source f(x). Boundary nodes are held at zero for every t.
GridSolution solve_heat_fd(ProblemKind kind, const SampledFunction& f, double alpha, const HeatOptions& opt = {});

enum class ReactionMode { source, coefficient };

struct ReactionOptions {
  int nx = 201;
  int nt = 201;
  double t_end = 1.0;
  double picard_tol = 1e-10;
  int picard_max_iter = 50;
};

/// Implicit Euler with Picard iteration on the quadratic term, zero IC/BC.
/// source:      u_t = D u_xx + k u^2 + f(x)
/// coefficient: u_t = D u_xx - k(x) u^2 + sin(pi x)
/// Throws NumericalError naming the time step when Picard fails to converge.
GridSolution solve_diffusion_reaction(ReactionMode mode, const SampledFunction& input, double diffusion,
                                      double reaction, const ReactionOptions& opt = {});

struct ReferenceResolution {
  int nx_1d = 201;
  int nx = 201;
  int nt = 201;
};

/// Dispatches to the problem's reference solver and returns the solution at
/// `points`. `f` holds sensor values. For poisson2d, `bitrig` are the
/// coefficients of the smooth part of f; the remainder f - bitrig(sensors)
/// is solved by finite differences and added to the analytic part.
class ReferenceSolver {
 public:
  explicit ReferenceSolver(ProblemSpec problem, ReferenceResolution res = {});

  [[nodiscard]] Eigen::VectorXd solve(const Eigen::VectorXd& f, const Eigen::MatrixXd& points,
                                      const Eigen::MatrixXd* bitrig = nullptr) const;
  [[nodiscard]] const ProblemSpec& problem() const { return problem_; }
  /// Method, resolution and nominal order of the solver used for the problem.
  [[nodiscard]] SolverMeta meta() const;

 private:
  ProblemSpec problem_;
  ReferenceResolution res_;
  Eigen::VectorXd sensors_;
  std::shared_ptr<const Poisson2dFd> fd2d_;
};

}  // namespace stablepde
