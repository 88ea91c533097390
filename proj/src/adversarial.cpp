#include "stablepde/adversarial.hpp"

#include <cmath>
#include <random>

#include "stablepde/csv.hpp"
#include "stablepde/errors.hpp"

namespace stablepde {

std::string to_string(AttackNorm n) { return n == AttackNorm::linf ? "linf" : "l2"; }

AttackNorm attack_norm_from_string(const std::string& s) {
  if (s == "linf") return AttackNorm::linf;
  if (s == "l2") return AttackNorm::l2;
  throw InvalidArgument("unknown attack norm '" + s + "' (expected linf or l2)");
}

void AttackConfig::validate() const {
  if (!(epsilon >= 0.0) || !std::isfinite(epsilon)) throw InvalidArgument("attack.epsilon must be >= 0");
  if (n_iter < 0) throw InvalidArgument("attack.n_iter must be >= 0");
  if (n_iter > 0 && !(step_alpha > 0.0)) throw InvalidArgument("attack.step_alpha must be > 0 when n_iter > 0");
}

void write_trace_csv(const std::filesystem::path& path, const AttackTrace& trace) {
  CsvWriter out(path, {"iteration", "loss"});
  out.row(0, trace.clean_loss);
  for (std::size_t k = 0; k < trace.loss_per_iter.size(); ++k) out.row(k + 1, trace.loss_per_iter[k]);
}

double attack_norm(const Eigen::VectorXd& v, AttackNorm norm) {
  if (v.size() == 0) return 0.0;
  return norm == AttackNorm::linf ? v.cwiseAbs().maxCoeff() : v.norm();
}

Eigen::VectorXd attack_radii(const Eigen::MatrixXd& clean, const AttackConfig& config) {
  Eigen::VectorXd r(clean.rows());
  for (Eigen::Index i = 0; i < clean.rows(); ++i) {
    r[i] = config.relative ? config.epsilon * attack_norm(clean.row(i).transpose(), config.norm) : config.epsilon;
  }
  return r;
}

Eigen::VectorXd project(const Eigen::VectorXd& candidate, const Eigen::VectorXd& center, double epsilon,
                        AttackNorm norm) {
  if (candidate.size() != center.size()) throw ShapeError("project: vectors differ in length");
  if (epsilon < 0.0) throw InvalidArgument("project: epsilon must be >= 0");
  if (norm == AttackNorm::linf) {
    return candidate.array().max(center.array() - epsilon).min(center.array() + epsilon).matrix();
  }
  const Eigen::VectorXd diff = candidate - center;
  const double n = diff.norm();
  if (n <= epsilon) return candidate;
  return center + diff * (epsilon / n);
}

Eigen::MatrixXd project_rows(const Eigen::MatrixXd& candidate, const Eigen::MatrixXd& center,
                             const Eigen::VectorXd& radii, AttackNorm norm) {
  if (candidate.rows() != center.rows() || candidate.cols() != center.cols() || radii.size() != center.rows()) {
    throw ShapeError("project_rows: shape mismatch");
  }
  Eigen::MatrixXd out(candidate.rows(), candidate.cols());
  for (Eigen::Index i = 0; i < candidate.rows(); ++i) {
    out.row(i) = project(candidate.row(i).transpose(), center.row(i).transpose(), radii[i], norm).transpose();
  }
  return out;
}

namespace {

double checked(double loss, int iteration) {
  if (!std::isfinite(loss)) {
    throw NumericalError("attack: non-finite objective at iteration " + std::to_string(iteration));
  }
  return loss;
}

}  // namespace

AttackResult pgd(const AttackObjective& objective, const Eigen::MatrixXd& clean, const AttackConfig& config,
                 std::uint64_t seed) {
  config.validate();
  const Eigen::VectorXd radii = attack_radii(clean, config);
  const Eigen::VectorXd steps = config.relative ? Eigen::VectorXd(radii / config.epsilon * config.step_alpha)
                                                : Eigen::VectorXd::Constant(clean.rows(), config.step_alpha);
  AttackResult result;
  result.trace.clean_loss = checked(objective(clean, nullptr), 0);
  result.perturbed = clean;
  if (config.epsilon == 0.0) {
    // degenerate ball: the iterate can never move
    result.trace.loss_per_iter.assign(config.n_iter, result.trace.clean_loss);
    return result;
  }

  Eigen::MatrixXd& x = result.perturbed;
  if (config.warm_start) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    for (Eigen::Index i = 0; i < x.rows(); ++i)
      for (Eigen::Index j = 0; j < x.cols(); ++j) x(i, j) += radii[i] * unit(rng);
    x = project_rows(x, clean, radii, config.norm);
  }

  Eigen::MatrixXd grad(x.rows(), x.cols());
  result.trace.loss_per_iter.reserve(config.n_iter);
  for (int k = 0; k < config.n_iter; ++k) {
    const double loss = checked(objective(x, &grad), k);
    if (k > 0) result.trace.loss_per_iter.push_back(loss);
    if (!grad.allFinite()) {
      ++result.trace.nan_gradient_steps;
      grad = grad.unaryExpr([](double g) { return std::isfinite(g) ? g : 0.0; });
    }
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      if (config.norm == AttackNorm::linf) {
        x.row(i) += steps[i] * grad.row(i).unaryExpr([](double g) { return double((g > 0) - (g < 0)); });
      } else {
        const double n = grad.row(i).norm();
        if (n > 0.0) x.row(i) += (steps[i] / n) * grad.row(i);
      }
    }
    x = project_rows(x, clean, radii, config.norm);
  }
  if (config.n_iter > 0) result.trace.loss_per_iter.push_back(checked(objective(x, nullptr), config.n_iter));

  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    result.trace.final_perturbation_norm =
        std::max(result.trace.final_perturbation_norm, attack_norm((x.row(i) - clean.row(i)).transpose(), config.norm));
  }
  return result;
}

Eigen::MatrixXd fgsm(const AttackObjective& objective, const Eigen::MatrixXd& clean, double epsilon, bool relative) {
  AttackConfig c;
  c.epsilon = epsilon;
  c.step_alpha = epsilon > 0.0 ? epsilon : 1.0;
  c.n_iter = 1;
  c.norm = AttackNorm::linf;
  c.warm_start = false;
  c.relative = relative;
  return pgd(objective, clean, c, 0).perturbed;
}

AttackObjective physics_objective(const LossPlan& plan, const DeepONetParams& params) {
  auto cache = std::make_shared<const TrunkCache>(make_trunk_cache(plan, params));
  return [&plan, &params, cache](const Eigen::MatrixXd& inputs, Eigen::MatrixXd* grad) {
    Tape<double> tape;
    auto net = record_params(tape, params, false);
    if (!grad) return breakdown(record_loss(plan, net, tape.constant(inputs), cache.get())).total;
    auto leaf = tape.leaf(inputs);
    auto loss = record_loss(plan, net, leaf, cache.get()).total;
    *grad = tape.grad(loss, {leaf})[0];
    return loss.value()(0, 0);
  };
}

AttackObjective solution_error_objective(const ArchSpec& arch, const DeepONetParams& params,
                                         const Eigen::MatrixXd& grid, const Eigen::MatrixXd& targets) {
  if (targets.cols() != grid.rows()) throw ShapeError("solution_error_objective: targets do not match the grid");
  Eigen::MatrixXd trunk;
  {
    Tape<double> tape;
    auto net = record_params(tape, params, false);
    trunk = trunk_features(net, grid, JetRequest::none()).value.value();
  }
  Eigen::RowVectorXd mask = Eigen::RowVectorXd::Ones(grid.rows());
  if (arch.transform != Transform::none) mask = transform_mask(arch.transform, grid).value.transpose();
  return [&params, trunk = std::move(trunk), mask = std::move(mask), targets](const Eigen::MatrixXd& inputs,
                                                                              Eigen::MatrixXd* grad) {
    if (inputs.rows() != targets.rows()) throw ShapeError("solution_error_objective: batch size mismatch");
    Tape<double> tape;
    auto net = record_params(tape, params, false);
    auto x = grad ? tape.leaf(inputs) : tape.constant(inputs);
    auto u = matmul(branch_features(net, x), tape.constant(trunk), false, true) + net.output_bias;
    u = u * tape.constant(mask.replicate(inputs.rows(), 1));
    auto loss = sum(square(u - tape.constant(targets)));
    if (grad) *grad = tape.grad(loss, {x})[0];
    return loss.value()(0, 0);
  };
}

AttackResult attack_training(const LossPlan& plan, const DeepONetParams& params, const Eigen::MatrixXd& clean,
                             const AttackConfig& config, std::uint64_t seed) {
  return pgd(physics_objective(plan, params), clean, config, seed);
}

AttackResult attack_evaluation(const ArchSpec& arch, const DeepONetParams& params, const Eigen::MatrixXd& clean,
                               const Eigen::MatrixXd& u_true, const Eigen::MatrixXd& grid, AttackConfig config) {
  if (u_true.rows() != clean.rows()) throw ShapeError("attack_evaluation: one reference row per input required");
  config.warm_start = false;
  return pgd(solution_error_objective(arch, params, grid, u_true), clean, config, 0);
}

}  // namespace stablepde
