#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "stablepde/pde_suite.hpp"

namespace stablepde {

enum class AttackNorm { linf, l2 };

std::string to_string(AttackNorm n);
AttackNorm attack_norm_from_string(const std::string& s);

/// PGD settings. With `relative` set, `epsilon` and `step_alpha` are
/// fractions of each clean input's norm (in the configured norm), so every
/// sample gets its own radius.
struct AttackConfig {
  double epsilon = 0.1;
  double step_alpha = 0.025;
  int n_iter = 20;
  AttackNorm norm = AttackNorm::linf;
  bool warm_start = true;
  bool relative = true;

  void validate() const;
  bool operator==(const AttackConfig&) const = default;
};

/// Loss values over one attack. `loss_per_iter[k]` is the objective after
/// step k + 1; `clean_loss` is the objective at the unperturbed input.
struct AttackTrace {
  double clean_loss = 0.0;
  std::vector<double> loss_per_iter;
  double final_perturbation_norm = 0.0;  // largest over rows, in the attack norm
  int nan_gradient_steps = 0;            // steps whose gradient had non-finite entries (zeroed)

  [[nodiscard]] double final_loss() const { return loss_per_iter.empty() ? clean_loss : loss_per_iter.back(); }
};

void write_trace_csv(const std::filesystem::path& path, const AttackTrace& trace);

struct AttackResult {
  Eigen::MatrixXd perturbed;  // N x m
  AttackTrace trace;
};

/// Scalar objective over a batch of inputs (rows). Writes the gradient with
/// respect to the inputs when `grad` is non-null.
using AttackObjective = std::function<double(const Eigen::MatrixXd& inputs, Eigen::MatrixXd* grad)>;

/// Norm of a vector in the attack norm.
double attack_norm(const Eigen::VectorXd& v, AttackNorm norm);

/// Per-row radius: epsilon, or epsilon times the row's norm when relative.
Eigen::VectorXd attack_radii(const Eigen::MatrixXd& clean, const AttackConfig& config);

/// Closest point of the ball of radius `epsilon` around `center`.
Eigen::VectorXd project(const Eigen::VectorXd& candidate, const Eigen::VectorXd& center, double epsilon,
                        AttackNorm norm);
/// Row-wise projection with one radius per row.
Eigen::MatrixXd project_rows(const Eigen::MatrixXd& candidate, const Eigen::MatrixXd& center,
                             const Eigen::VectorXd& radii, AttackNorm norm);

/// Projected ascent: optional uniform warm start inside the linf box, then
/// n_iter steps of sign ascent (linf) or unit-gradient ascent (l2) with
/// projection. Rows are independent as long as the objective separates.
/// Throws NumericalError naming the iteration when the objective is non-finite.
AttackResult pgd(const AttackObjective& objective, const Eigen::MatrixXd& clean, const AttackConfig& config,
                 std::uint64_t seed);

/// Single signed step of full radius.
Eigen::MatrixXd fgsm(const AttackObjective& objective, const Eigen::MatrixXd& clean, double epsilon,
                     bool relative = false);

/// Physics-informed loss of the plan as an attack objective. Trunk features
/// are frozen at construction; `plan` and `params` must outlive the objective.
AttackObjective physics_objective(const LossPlan& plan, const DeepONetParams& params);

/// Sum over rows of || G(f_row)(grid) - targets_row ||^2. `params` must
/// outlive the objective.
AttackObjective solution_error_objective(const ArchSpec& arch, const DeepONetParams& params,
                                         const Eigen::MatrixXd& grid, const Eigen::MatrixXd& targets);

/// Ascent on the physics-informed loss (used inside training).
AttackResult attack_training(const LossPlan& plan, const DeepONetParams& params, const Eigen::MatrixXd& clean,
                             const AttackConfig& config, std::uint64_t seed);

/// Ascent on the squared error against reference solutions, started from
/// the clean input (warm_start is ignored).
AttackResult attack_evaluation(const ArchSpec& arch, const DeepONetParams& params, const Eigen::MatrixXd& clean,
                               const Eigen::MatrixXd& u_true, const Eigen::MatrixXd& grid, AttackConfig config);

}  // namespace stablepde
