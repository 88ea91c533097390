#pragma once

#include <cstdint>
#include <array>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "stablepde/function_spaces.hpp"
#include "stablepde/operator_net.hpp"

namespace stablepde {

enum class ProblemKind {
  antiderivative,     // u' = f, u(0) = 0
  poisson1d,          // -u'' = f, u(0) = u(1) = 0
  poisson2d,          // -Δu = f on the unit square, zero Dirichlet
  helmholtz_neumann,  // -u'' + shift u = f, u'(0) = u'(1) = 0
  heat_ic,            // u_t - α u_xx = 0, u(x,0) = f
  heat_source,        // u_t - α u_xx = f, zero IC/BC
  diffrec_source,     // u_t - D u_xx - k u² - f = 0, zero IC/BC
  diffrec_coeff,      // u_t - D u_xx + k(x) u² - sin(πx) = 0, zero IC/BC
};

std::string to_string(ProblemKind k);
ProblemKind problem_from_string(const std::string& s);
std::vector<ProblemKind> all_problems();

struct CollocationCounts {
  int interior = 0;
  int boundary = 0;
  int initial = 0;
  bool operator==(const CollocationCounts&) const = default;
};

/// How training inputs are drawn.
struct InputSpace {
  SamplerKind sampler = SamplerKind::grf;
  GrfSpec grf{};
  CoeffRange coefficients{};
  int modes = 10;          // bi-trigonometric R = S
  double range_lo = 1.0;   // rescaled_grf target interval
  double range_hi = 5.0;
  bool operator==(const InputSpace& o) const;
};

struct ProblemSpec {
  ProblemKind kind = ProblemKind::poisson1d;
  /// Physical constants keyed by name; exactly the keys the kind uses:
  /// alpha (heat), diffusion and reaction (diffrec_source), diffusion
  /// (diffrec_coeff), shift (helmholtz_neumann).
  std::map<std::string, double> constants;
  int sensor_count = 0;       // m; for poisson2d the square of sensor_grid_side
  int sensor_grid_side = 0;   // poisson2d only
  CollocationCounts counts;
  InputSpace input;
  Transform transform = Transform::none;

  static ProblemSpec defaults(ProblemKind kind);

  [[nodiscard]] double constant(const std::string& name) const;
  [[nodiscard]] int coord_dim() const;
  [[nodiscard]] bool time_dependent() const;
  /// Constant names required by `kind`, sorted.
  static std::vector<std::string> required_constants(ProblemKind kind);
  /// Transforms whose mask is compatible with the kind's constraints.
  static std::vector<Transform> allowed_transforms(ProblemKind kind);

  /// Throws InvalidArgument naming the offending field.
  void validate() const;
  [[nodiscard]] ArchSpec arch(int width = 128, int depth = 3) const;

  bool operator==(const ProblemSpec&) const = default;
};

struct LossBreakdown {
  double physics = 0.0;
  double bc = 0.0;
  double ic = 0.0;
  double total = 0.0;
};

/// Sensor locations: m x 1 for 1-d inputs, m x 2 (tensor grid) for poisson2d.
Eigen::MatrixXd sensor_points(const ProblemSpec& problem);
/// Axis of the sensor grid (the sensor list itself in 1-d).
Eigen::VectorXd sensor_axis(const ProblemSpec& problem);

/// Collocation layout shared by every function in a batch.
struct CollocationSet {
  Eigen::MatrixXd interior;        // residual points, strictly inside the domain
  Eigen::MatrixXd boundary;        // Dirichlet or Neumann points
  Eigen::VectorXd boundary_normal; // outward normal sign per boundary point (Neumann only)
  Eigen::MatrixXd initial;         // initial-condition points (t = 0, or x = 0 for the ODE)
  std::uint64_t seed = 0;
};

/// Interior points from a Hammersley set with the origin dropped; boundary
/// and initial points on uniform grids. Sets that the transform enforces are
/// left empty. The layout is deterministic; `seed` is recorded only.
CollocationSet make_collocation(const ProblemSpec& problem, std::uint64_t seed = 0);

/// Which loss components the problem carries given its transform.
struct LossTerms {
  bool bc = false;
  bool ic = false;
};
LossTerms active_terms(const ProblemSpec& problem);

/// Uniform evaluation grid per problem: 50 points (ODE), 100 points (1-d
/// elliptic), 100 x 100 in (x, y) or (x, t); heat_ic uses 100 x-points on t = 1.
Eigen::MatrixXd evaluation_grid(const ProblemSpec& problem);
/// Column names of evaluation_grid.
std::vector<std::string> grid_columns(const ProblemSpec& problem);

/// Matrix W with W f = input function at the given points (linear in 1-d,
/// bilinear on the poisson2d sensor grid). Only the spatial coordinate of
/// (x, t) points is used.
Eigen::MatrixXd input_interpolation(const ProblemSpec& problem, const Eigen::MatrixXd& points);

/// Precomputed constants for one (problem, arch, collocation set).
class LossPlan {
 public:
  LossPlan(ProblemSpec problem, ArchSpec arch, CollocationSet set);

  [[nodiscard]] const ProblemSpec& problem() const { return problem_; }
  [[nodiscard]] const ArchSpec& arch() const { return arch_; }
  [[nodiscard]] const CollocationSet& set() const { return set_; }
  [[nodiscard]] const LossTerms& terms() const { return terms_; }
  [[nodiscard]] JetRequest interior_request() const;

  Eigen::MatrixXd interior_interp_t;  // m x P_int, so F W^T is a plain matmul
  Eigen::MatrixXd initial_interp_t;   // m x P_ic (heat_ic only)
  Eigen::RowVectorXd fixed_source;    // 1 x P_int (diffrec_coeff only)

 private:
  ProblemSpec problem_;
  ArchSpec arch_;
  CollocationSet set_;
  LossTerms terms_;
};

/// Trunk features for the plan's point sets, frozen for a given parameter
/// value. Lets attacks re-record only the branch side per iteration.
struct TrunkCache {
  struct Jet {
    Eigen::MatrixXd value;
    std::array<Eigen::MatrixXd, 2> d1;
    std::array<Eigen::MatrixXd, 2> d2;
  };
  Jet interior, boundary, initial;
};
TrunkCache make_trunk_cache(const LossPlan& plan, const DeepONetParams& params);

struct LossVars {
  Var<double> physics, bc, ic, total;
};

/// Residual of the governing equation at `points` for every function row:
/// `field` holds u and its coordinate derivatives (N x P), `input_at_points`
/// is the input function at the points (N x P): the source, the initial
/// profile, or the reaction coefficient for diffrec_coeff.
Var<double> residual(const ProblemSpec& problem, const Field<double>& field, Var<double> input_at_points,
                     const Eigen::MatrixXd& points);

/// Records the full loss for a batch of inputs (N x m) sharing the plan's
/// collocation set. Physics, boundary and initial terms are plain means over
/// samples and points.
LossVars record_loss(const LossPlan& plan, const NetVars<double>& net, Var<double> inputs,
                     const TrunkCache* cache = nullptr);

/// Residual values at `points` for one input function.
Eigen::VectorXd physics_residual(const ProblemSpec& problem, const ArchSpec& arch, const DeepONetParams& params,
                                 const Eigen::VectorXd& f, const Eigen::MatrixXd& points);

struct BatchItem {
  Eigen::VectorXd f;
  const LossPlan* plan = nullptr;
};

/// Mean loss over a batch whose items may use different collocation sets;
/// items sharing a plan are evaluated together.
LossBreakdown assemble_loss(const DeepONetParams& params, std::span<const BatchItem> batch);
LossBreakdown assemble_loss(const LossPlan& plan, const DeepONetParams& params, const Eigen::MatrixXd& inputs);

LossBreakdown breakdown(const LossVars& v);

/// Draws training inputs for a problem. Sample i of a batch uses seed
/// derive_seed(batch_seed, 0, i).
class InputSampler {
 public:
  explicit InputSampler(const ProblemSpec& problem);

  [[nodiscard]] Eigen::VectorXd draw(std::uint64_t sample_seed) const;
  [[nodiscard]] Eigen::MatrixXd batch(std::uint64_t batch_seed, int n) const;  // n x m
  /// Bi-trigonometric coefficients behind draw(sample_seed) (poisson2d only).
  [[nodiscard]] Eigen::MatrixXd bitrig_coefficients(std::uint64_t sample_seed) const;
  [[nodiscard]] const ProblemSpec& problem() const { return problem_; }

 private:
  ProblemSpec problem_;
  Eigen::MatrixXd sensors_;
  std::optional<GrfSampler> grf_;
};

}  // namespace stablepde
