#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "stablepde/adversarial.hpp"
#include "stablepde/errors.hpp"
#include "stablepde/operator_net.hpp"
#include "stablepde/pde_suite.hpp"

namespace stablepde {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  bool operator==(const AdamConfig&) const = default;
};

struct AdamState {
  Eigen::VectorXd first_moment;
  Eigen::VectorXd second_moment;
  std::int64_t step = 0;

  static AdamState zeros(Eigen::Index n);
};

struct AdamUpdate {
  Eigen::VectorXd params;
  AdamState state;
};

/// Bias-corrected Adam. Throws NumericalError for a non-finite gradient,
/// naming the parameter block when `block_names`/`block_offsets` are given.
AdamUpdate adam_step(const Eigen::VectorXd& params, const Eigen::VectorXd& grads, const AdamState& state,
                     const AdamConfig& config, const std::vector<std::string>& block_names = {},
                     const std::vector<std::size_t>& block_offsets = {});

enum class Phase { warmup, normal, adversarial };
std::string to_string(Phase p);

struct TrainConfig {
  ProblemSpec problem;
  int width = 128;
  int depth = 3;
  int steps = 5000;
  int batch_size = 32;
  AdamConfig adam;
  double warmup_fraction = 0.2;
  int cadence = 2;  // adversarial on every cadence-th step after warmup
  AttackConfig attack;
  std::uint64_t seed = 0;
  int checkpoint_every = 0;            // 0 disables periodic checkpoints
  std::filesystem::path checkpoint_dir;  // empty disables checkpoint files

  [[nodiscard]] ArchSpec arch() const { return problem.arch(width, depth); }
  /// Throws InvalidArgument naming the offending field.
  void validate() const;
  /// True exactly when step j (1-based) runs an attack.
  [[nodiscard]] bool adversarial_step(int j) const;
  [[nodiscard]] Phase phase(int j) const;
  bool operator==(const TrainConfig&) const = default;
};

struct StepRecord {
  int step = 0;
  Phase phase = Phase::warmup;
  LossBreakdown loss;
};

struct TrainResult {
  DeepONetParams params;
  std::vector<StepRecord> log;
};

using ProgressSink = std::function<void(const StepRecord&)>;

/// Raised when the loss turns non-finite; carries the last finite parameters.
class TrainingAborted : public NumericalError {
 public:
  TrainingAborted(const std::string& what, int step, DeepONetParams last_good)
      : NumericalError(what), step_(step), last_good_(std::move(last_good)) {}
  [[nodiscard]] int step() const { return step_; }
  [[nodiscard]] const DeepONetParams& last_good() const { return last_good_; }

 private:
  int step_;
  DeepONetParams last_good_;
};

/// Seeds: batch j draws inputs from seed ^ j; its attack warm start uses
/// derive_seed(seed, 1, j); parameters start from init_params(arch, seed).
TrainResult train(const TrainConfig& config, const ProgressSink& progress = {});
/// Same loop with every attack disabled.
TrainResult train_baseline(TrainConfig config, const ProgressSink& progress = {});

/// step, phase, physics, bc, ic, total
void write_step_log_csv(const std::filesystem::path& path, std::span<const StepRecord> log);

/// Parameter gradients of the plan's loss at `inputs` in flatten() order.
Eigen::VectorXd loss_gradient(const LossPlan& plan, const DeepONetParams& params, const Eigen::MatrixXd& inputs,
                              LossBreakdown* loss = nullptr);

}  // namespace stablepde
