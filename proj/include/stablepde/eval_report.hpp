#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SVD>

#include "stablepde/adversarial.hpp"
#include "stablepde/diffkit/jacobian.hpp"
#include "stablepde/errors.hpp"
#include "stablepde/operator_net.hpp"
#include "stablepde/pde_suite.hpp"
#include "stablepde/reference_solvers.hpp"

namespace stablepde {

/// ||pred - truth||_2 / ||truth||_2. Throws NumericalError for a zero truth.
double relative_l2(const Eigen::VectorXd& pred, const Eigen::VectorXd& truth);
/// One ratio per row.
Eigen::VectorXd relative_l2_rows(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& truth);

/// Linearly interpolated quantile (q in [0, 1]) of a non-empty sample.
double quantile(std::vector<double> values, double q);

/// Clean and attacked evaluation pairs. Row i of every matrix belongs to
/// sample i; solutions live on `grid`.
struct EvalDatasets {
  ProblemSpec problem;
  Eigen::MatrixXd grid;              // P x d
  Eigen::MatrixXd base_inputs;       // N x m
  Eigen::MatrixXd base_solutions;    // N x P
  Eigen::MatrixXd robust_inputs;     // N x m
  Eigen::MatrixXd robust_solutions;  // N x P
  std::vector<std::uint64_t> sample_seeds;
  std::vector<Eigen::MatrixXd> bitrig;  // poisson2d only, one coefficient block per sample
  AttackConfig attack;
  SolverMeta solver;

  [[nodiscard]] Eigen::Index size() const { return base_inputs.rows(); }
  /// Shape alignment and the ball constraint for every sample.
  void validate(double slack = 1e-12) const;
  /// Same samples reordered: row k of the result is row order[k] here.
  [[nodiscard]] EvalDatasets permuted(std::span<const Eigen::Index> order) const;
};

struct EvalBuildOptions {
  int n_samples = 200;
  std::uint64_t seed = 0;
  ReferenceResolution resolution;
};

/// Draws inputs and reference solutions, attacks each input against its
/// reference under `model`, then re-solves at the attacked inputs. Sample i
/// draws from derive_seed(seed, 2, i). Errors carry the sample index.
EvalDatasets build_eval_datasets(const ProblemSpec& problem, const ArchSpec& arch, const DeepONetParams& model,
                                 const AttackConfig& attack, const EvalBuildOptions& options);

// ---------------------------------------------------------------------------
// Jacobian spectral norm.

struct SpectralNormOptions {
  double tol = 1e-6;  // on successive estimates, relative to max(1, estimate)
  int max_iter = 500;
  std::uint64_t seed = 0;  // start vector
};

struct JacobianEstimate {
  double spectral_norm = 0.0;
  int iterations_used = 0;
  double residual = 0.0;  // last change of the estimate
};

/// Raised when power iteration runs out of iterations; keeps the last estimate.
class SpectralNormNotConverged : public NumericalError {
 public:
  SpectralNormNotConverged(const std::string& what, JacobianEstimate last)
      : NumericalError(what), last_(last) {}
  [[nodiscard]] const JacobianEstimate& last_estimate() const { return last_; }

 private:
  JacobianEstimate last_;
};

/// Largest singular value of the Jacobian of `fn` at `point` by power
/// iteration on J^T J, using one jvp and one vjp per iteration. Every
/// estimate is ||J v|| for a unit v, so it never exceeds the true norm.
template <typename Fn>
JacobianEstimate power_spectral_norm(Fn&& fn, const Eigen::VectorXd& point, const SpectralNormOptions& options) {
  if (options.tol <= 0 || options.max_iter < 1) throw InvalidArgument("spectral norm: tol > 0 and max_iter >= 1");
  std::mt19937_64 rng(options.seed);
  std::normal_distribution<double> normal;
  Eigen::VectorXd v = Eigen::VectorXd::NullaryExpr(point.size(), [&] { return normal(rng); });
  v.normalize();
  JacobianEstimate est;
  double previous = -1.0;
  for (int k = 1; k <= options.max_iter; ++k) {
    const Eigen::VectorXd jv = diffkit::jvp(fn, point, v);
    est.spectral_norm = jv.norm();
    est.iterations_used = k;
    if (!std::isfinite(est.spectral_norm)) throw NumericalError("spectral norm: non-finite Jacobian product");
    if (est.spectral_norm == 0.0) {
      est.residual = 0.0;
      return est;
    }
    est.residual = previous < 0 ? est.spectral_norm : std::abs(est.spectral_norm - previous);
    if (previous >= 0 && est.residual < options.tol * std::max(1.0, est.spectral_norm)) return est;
    previous = est.spectral_norm;
    const Eigen::VectorXd z = diffkit::vjp(fn, point, jv);
    const double zn = z.norm();
    if (zn == 0.0) return est;
    v = z / zn;
  }
  throw SpectralNormNotConverged("spectral norm: no convergence in " + std::to_string(options.max_iter) +
                                     " iterations (last estimate " + std::to_string(est.spectral_norm) + ")",
                                 est);
}

/// Largest singular value of an explicit matrix.
double dense_spectral_norm(const Eigen::MatrixXd& jacobian);

/// Spectral norm of f -> G(f)(grid) at one input.
JacobianEstimate jacobian_spectral_norm(const ArchSpec& arch, const DeepONetParams& params,
                                        const Eigen::VectorXd& f, const Eigen::MatrixXd& grid,
                                        const SpectralNormOptions& options = {});
/// Same quantity from the dense Jacobian (column-by-column jvp).
double jacobian_spectral_norm_dense(const ArchSpec& arch, const DeepONetParams& params, const Eigen::VectorXd& f,
                                    const Eigen::MatrixXd& grid);

// ---------------------------------------------------------------------------
// Reports.

struct ModelEntry {
  std::string name;
  ArchSpec arch;
  DeepONetParams params;
};

struct ReportOptions {
  int spectral_samples = 10;  // leading samples of each dataset
  SpectralNormOptions spectral;
};

/// One (model, dataset) row. `dataset` is "base" or "attacked". The
/// stability ratios ||G(f~) - G(f)|| / ||f~ - f|| come from the model's own
/// attacked pairs and are repeated on both of its rows.
struct ReportRow {
  std::string experiment;
  std::string model;
  std::string dataset;
  std::vector<double> errors;  // relative L2 per sample
  double mean_rel_l2 = 0.0;
  double mean_spectral_norm = 0.0;
  double c_emp_p50 = 0.0;
  double c_emp_p95 = 0.0;
};

struct StabilityReport {
  std::vector<ReportRow> rows;

  [[nodiscard]] const ReportRow& row(const std::string& model, const std::string& dataset) const;
};

/// Model i is scored on datasets[i] (its own attacked pairs). Two rows per
/// model in input order: base, then attacked.
StabilityReport stability_report(const std::string& experiment, std::span<const ModelEntry> models,
                                 std::span<const EvalDatasets> datasets, const ReportOptions& options = {});

/// experiment, model, dataset, sample_id, relative_l2
void write_errors_csv(const std::filesystem::path& path, const StabilityReport& report);
/// experiment, model, dataset, mean_rel_l2, mean_spectral_norm, c_emp_p50, c_emp_p95
void write_summary_csv(const std::filesystem::path& path, const StabilityReport& report);
/// Long format, one line per grid point of each listed sample:
/// sample_id, grid coordinates, f, f_tilde, u_true, pred_baseline, pred_stable.
/// Inputs are interpolated onto the grid; u_true is the re-solved reference at
/// f_tilde, and both predictions are taken at f_tilde.
void write_plot_csv(const std::filesystem::path& path, const EvalDatasets& data, const ModelEntry& baseline,
                    const ModelEntry& stable, std::span<const Eigen::Index> sample_ids);

std::vector<std::string> errors_csv_header();
std::vector<std::string> summary_csv_header();
std::vector<std::string> plot_csv_header(const ProblemSpec& problem);

}  // namespace stablepde
