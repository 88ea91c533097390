#include "stablepde/training.hpp"

#include <cmath>
#include <cstdio>

#include "stablepde/csv.hpp"

namespace stablepde {

AdamState AdamState::zeros(Eigen::Index n) {
  return {Eigen::VectorXd::Zero(n), Eigen::VectorXd::Zero(n), 0};
}

namespace {

std::string offending_block(Eigen::Index index, const std::vector<std::string>& names,
                            const std::vector<std::size_t>& offsets) {
  if (names.empty() || offsets.size() != names.size() + 1) return "index " + std::to_string(index);
  for (std::size_t b = 0; b < names.size(); ++b) {
    if (static_cast<std::size_t>(index) < offsets[b + 1]) return names[b];
  }
  return "index " + std::to_string(index);
}

}  // namespace

AdamUpdate adam_step(const Eigen::VectorXd& params, const Eigen::VectorXd& grads, const AdamState& state,
                     const AdamConfig& c, const std::vector<std::string>& block_names,
                     const std::vector<std::size_t>& block_offsets) {
  if (grads.size() != params.size() || state.first_moment.size() != params.size() ||
      state.second_moment.size() != params.size()) {
    throw ShapeError("adam_step: parameter, gradient and moment sizes differ");
  }
  for (Eigen::Index i = 0; i < grads.size(); ++i) {
    if (!std::isfinite(grads[i])) {
      throw NumericalError("adam_step: non-finite gradient in block " +
                           offending_block(i, block_names, block_offsets));
    }
  }
  AdamUpdate out;
  out.state.step = state.step + 1;
  out.state.first_moment = c.beta1 * state.first_moment + (1.0 - c.beta1) * grads;
  out.state.second_moment = c.beta2 * state.second_moment + (1.0 - c.beta2) * grads.cwiseAbs2();
  const double t = static_cast<double>(out.state.step);
  const double correct1 = 1.0 - std::pow(c.beta1, t);
  const double correct2 = 1.0 - std::pow(c.beta2, t);
  out.params = params.array() - c.learning_rate * (out.state.first_moment.array() / correct1) /
                                    ((out.state.second_moment.array() / correct2).sqrt() + c.eps);
  return out;
}

std::string to_string(Phase p) {
  switch (p) {
    case Phase::warmup: return "warmup";
    case Phase::normal: return "normal";
    case Phase::adversarial: return "adversarial";
  }
  return "unknown";
}

void TrainConfig::validate() const {
  problem.validate();
  auto require = [](bool ok, const char* message) {
    if (!ok) throw InvalidArgument(message);
  };
  require(width > 0, "arch.width must be > 0");
  require(depth > 0, "arch.depth must be > 0");
  require(steps > 0, "train.steps must be > 0");
  require(batch_size > 0, "train.batch_size must be > 0");
  require(adam.learning_rate > 0, "train.learning_rate must be > 0");
  require(adam.beta1 >= 0 && adam.beta1 < 1, "train.beta1 must lie in [0, 1)");
  require(adam.beta2 >= 0 && adam.beta2 < 1, "train.beta2 must lie in [0, 1)");
  require(adam.eps > 0, "train.adam_eps must be > 0");
  require(warmup_fraction >= 0 && warmup_fraction <= 1, "train.warmup_fraction must lie in [0, 1]");
  require(cadence >= 1, "train.cadence must be >= 1");
  require(checkpoint_every >= 0, "train.checkpoint_every must be >= 0");
  attack.validate();
  arch().validate();
}

bool TrainConfig::adversarial_step(int j) const {
  return static_cast<double>(j) > warmup_fraction * steps && j % cadence == 0;
}

Phase TrainConfig::phase(int j) const {
  if (static_cast<double>(j) <= warmup_fraction * steps) return Phase::warmup;
  return adversarial_step(j) ? Phase::adversarial : Phase::normal;
}

Eigen::VectorXd loss_gradient(const LossPlan& plan, const DeepONetParams& params, const Eigen::MatrixXd& inputs,
                              LossBreakdown* loss) {
  Tape<double> tape;
  auto net = record_params(tape, params, true);
  const auto vars = record_loss(plan, net, tape.constant(inputs));
  const auto blocks = net.blocks();
  const auto grads = tape.grad(vars.total, std::span<const Var<double>>(blocks));
  Eigen::VectorXd flat(static_cast<Eigen::Index>(params.parameter_count()));
  Eigen::Index k = 0;
  for (const auto& g : grads) {
    flat.segment(k, g.size()) = Eigen::Map<const Eigen::VectorXd>(g.data(), g.size());
    k += g.size();
  }
  if (loss) *loss = breakdown(vars);
  return flat;
}

TrainResult train(const TrainConfig& config, const ProgressSink& progress) {
  config.validate();
  const ArchSpec arch = config.arch();
  const LossPlan plan(config.problem, arch, make_collocation(config.problem, config.seed));
  const InputSampler sampler(config.problem);
  const auto names = block_names(arch);
  const auto offsets = block_offsets(arch);

  TrainResult result;
  result.params = init_params(arch, config.seed);
  result.log.reserve(config.steps);
  Eigen::VectorXd flat = flatten(result.params);
  AdamState state = AdamState::zeros(flat.size());

  for (int j = 1; j <= config.steps; ++j) {
    const Phase phase = config.phase(j);
    Eigen::MatrixXd inputs = sampler.batch(config.seed ^ static_cast<std::uint64_t>(j), config.batch_size);
    if (phase == Phase::adversarial) {
      inputs = attack_training(plan, result.params, inputs, config.attack, derive_seed(config.seed, 1, j)).perturbed;
    }
    StepRecord rec{j, phase, {}};
    const Eigen::VectorXd grad = loss_gradient(plan, result.params, inputs, &rec.loss);
    if (!std::isfinite(rec.loss.total)) {
      throw TrainingAborted("training: non-finite loss at step " + std::to_string(j), j, result.params);
    }
    auto update = adam_step(flat, grad, state, config.adam, names, offsets);
    flat = std::move(update.params);
    state = std::move(update.state);
    result.params = unflatten(arch, flat);
    result.log.push_back(rec);
    if (progress) progress(rec);

    if (config.checkpoint_every > 0 && !config.checkpoint_dir.empty() && j % config.checkpoint_every == 0) {
      char name[48];
      std::snprintf(name, sizeof name, "checkpoint_%07d.bin", j);
      save_checkpoint(config.checkpoint_dir / name, {arch, result.params, config.seed, static_cast<std::uint64_t>(j)});
    }
  }
  return result;
}

TrainResult train_baseline(TrainConfig config, const ProgressSink& progress) {
  config.warmup_fraction = 1.0;
  return train(config, progress);
}

void write_step_log_csv(const std::filesystem::path& path, std::span<const StepRecord> log) {
  CsvWriter out(path, {"step", "phase", "physics", "bc", "ic", "total"});
  for (const auto& r : log) out.row(r.step, to_string(r.phase), r.loss.physics, r.loss.bc, r.loss.ic, r.loss.total);
}

}  // namespace stablepde
