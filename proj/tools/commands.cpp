#include "commands.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <ostream>

#include "stablepde/csv.hpp"
#include "stablepde/errors.hpp"
#include "stablepde/function_spaces.hpp"

namespace stablepde::cli {

namespace fs = std::filesystem;

namespace {

fs::path prepare_dir(const RunConfig& config, const std::string& name) {
  const fs::path dir = config.output_dir / name;
  fs::create_directories(dir);
  save_config(dir / "resolved_config.ini", config);
  return dir;
}

std::vector<FunctionSample> as_samples(const ProblemSpec& problem, const Eigen::MatrixXd& rows,
                                       std::span<const std::uint64_t> seeds) {
  std::vector<FunctionSample> out;
  const Eigen::VectorXd sensors = sensor_axis(problem);
  const bool has_length = problem.input.sampler == SamplerKind::grf || problem.input.sampler == SamplerKind::rescaled_grf;
  for (Eigen::Index i = 0; i < rows.rows(); ++i) {
    FunctionSample s;
    s.sensor_xs = sensors;
    s.values = rows.row(i).transpose();
    s.meta.kind = problem.input.sampler;
    s.meta.seed = seeds[static_cast<std::size_t>(i)];
    s.meta.length_scale = has_length ? problem.input.grf.length_scale : 0.0;
    out.push_back(std::move(s));
  }
  return out;
}

// One line per (sample, grid point).
void write_solutions_csv(const fs::path& path, const ProblemSpec& problem, const Eigen::MatrixXd& grid,
                         const Eigen::MatrixXd& values) {
  std::vector<std::string> header{"sample_id"};
  for (auto& c : grid_columns(problem)) header.push_back(c);
  header.emplace_back("u");
  CsvWriter out(path, header);
  for (Eigen::Index i = 0; i < values.rows(); ++i) {
    for (Eigen::Index r = 0; r < grid.rows(); ++r) {
      std::vector<std::string> line{std::to_string(i)};
      for (Eigen::Index c = 0; c < grid.cols(); ++c) line.push_back(CsvWriter::num(grid(r, c)));
      line.push_back(CsvWriter::num(values(i, r)));
      out.write_row(line);
    }
  }
}

EvalBuildOptions build_options(const RunConfig& c) { return {c.eval.n_samples, c.eval.seed, c.eval.resolution}; }

}  // namespace

Checkpoint load_matching_checkpoint(const fs::path& path, const RunConfig& config) {
  Checkpoint ckpt = load_checkpoint(path);
  if (!(ckpt.arch == config.arch())) {
    throw InvalidArgument("checkpoint " + path.string() + " does not match the configured architecture");
  }
  return ckpt;
}

int cmd_train(const RunConfig& config, std::ostream& log) {
  config.validate();
  const fs::path dir = prepare_dir(config, to_string(config.mode));
  TrainConfig tc = config.train;
  if (tc.checkpoint_every > 0) {
    tc.checkpoint_dir = dir / "checkpoints";
    fs::create_directories(tc.checkpoint_dir);
  }
  std::vector<StepRecord> records;
  const int every = std::max(1, tc.steps / 20);
  const ProgressSink sink = [&](const StepRecord& r) {
    records.push_back(r);
    if (r.step % every == 0 || r.step == tc.steps) {
      log << "step " << r.step << "/" << tc.steps << " " << to_string(r.phase) << " loss " << r.loss.total << "\n";
    }
  };
  try {
    const TrainResult result = config.mode == TrainMode::stable ? train(tc, sink) : train_baseline(tc, sink);
    write_step_log_csv(dir / "step_log.csv", result.log);
    save_checkpoint(dir / "final.ckpt", {tc.arch(), result.params, tc.seed, static_cast<std::uint64_t>(tc.steps)});
  } catch (const TrainingAborted& e) {
    write_step_log_csv(dir / "step_log.csv", records);
    save_checkpoint(dir / "aborted.ckpt", {tc.arch(), e.last_good(), tc.seed, static_cast<std::uint64_t>(e.step())});
    log << "error: " << e.what() << "\n";
    return exit_runtime;
  }
  log << "wrote " << (dir / "final.ckpt").string() << "\n";
  return exit_ok;
}

int cmd_evaluate(const RunConfig& config, const fs::path& baseline_ckpt, const fs::path& stable_ckpt,
                 std::ostream& log) {
  config.validate();
  const std::vector<ModelEntry> models{{"baseline", config.arch(), load_matching_checkpoint(baseline_ckpt, config).params},
                                       {"stable", config.arch(), load_matching_checkpoint(stable_ckpt, config).params}};
  const fs::path dir = prepare_dir(config, "evaluate");
  std::vector<EvalDatasets> datasets;
  for (const auto& m : models) {
    log << "building evaluation pairs against " << m.name << "\n";
    datasets.push_back(build_eval_datasets(config.problem(), m.arch, m.params, config.eval_attack, build_options(config)));
  }
  const ReportOptions options{config.eval.spectral_samples,
                              {config.eval.spectral_tol, config.eval.spectral_max_iter, config.eval.seed}};
  const StabilityReport report = stability_report(config.experiment, models, datasets, options);
  write_summary_csv(dir / "summary.csv", report);
  write_errors_csv(dir / "errors.csv", report);
  std::vector<Eigen::Index> ids(static_cast<std::size_t>(std::min<Eigen::Index>(config.eval.plot_samples, datasets[0].size())));
  for (std::size_t k = 0; k < ids.size(); ++k) ids[k] = static_cast<Eigen::Index>(k);
  write_plot_csv(dir / "plot.csv", datasets[0], models[0], models[1], ids);

  log << std::left << std::setw(10) << "model" << std::setw(10) << "dataset" << std::setw(14) << "rel_l2"
      << std::setw(14) << "spectral" << "c_emp_p50\n";
  for (const auto& r : report.rows) {
    log << std::setw(10) << r.model << std::setw(10) << r.dataset << std::setw(14) << r.mean_rel_l2 << std::setw(14)
        << r.mean_spectral_norm << r.c_emp_p50 << "\n";
  }
  return exit_ok;
}

int cmd_attack(const RunConfig& config, const fs::path& ckpt_path, std::ostream& log) {
  config.validate();
  const Checkpoint ckpt = load_matching_checkpoint(ckpt_path, config);
  const fs::path dir = prepare_dir(config, "attack");
  const ProblemSpec& problem = config.problem();
  const InputSampler sampler(problem);
  const ReferenceSolver solver(problem, config.eval.resolution);
  const Eigen::MatrixXd grid = evaluation_grid(problem);
  const int n = config.eval.n_samples;
  Eigen::MatrixXd clean(n, problem.sensor_count), refs(n, grid.rows());
  std::vector<std::uint64_t> seeds;
  for (int i = 0; i < n; ++i) {
    seeds.push_back(derive_seed(config.eval.seed, 2, static_cast<std::uint64_t>(i)));
    const Eigen::VectorXd f = sampler.draw(seeds.back());
    const Eigen::MatrixXd coeff = problem.kind == ProblemKind::poisson2d ? sampler.bitrig_coefficients(seeds.back())
                                                                         : Eigen::MatrixXd();
    clean.row(i) = f.transpose();
    refs.row(i) = solver.solve(f, grid, coeff.size() ? &coeff : nullptr).transpose();
  }
  const AttackResult r = attack_evaluation(ckpt.arch, ckpt.params, clean, refs, grid, config.eval_attack);
  write_samples_csv(dir / "clean_samples.csv", as_samples(problem, clean, seeds));
  write_samples_csv(dir / "attacked_samples.csv", as_samples(problem, r.perturbed, seeds));
  write_trace_csv(dir / "attack_trace.csv", r.trace);
  log << "squared error: clean " << r.trace.clean_loss << ", attacked " << r.trace.final_loss()
      << ", largest perturbation " << r.trace.final_perturbation_norm << "\n";
  return exit_ok;
}

int cmd_jacobian(const RunConfig& config, const fs::path& ckpt_path, std::ostream& log) {
  config.validate();
  const Checkpoint ckpt = load_matching_checkpoint(ckpt_path, config);
  const fs::path dir = prepare_dir(config, "jacobian");
  const ProblemSpec& problem = config.problem();
  const InputSampler sampler(problem);
  const Eigen::MatrixXd grid = evaluation_grid(problem);
  const bool dense = static_cast<long>(problem.sensor_count) * grid.rows() <= 10000;
  const SpectralNormOptions options{config.eval.spectral_tol, config.eval.spectral_max_iter, config.eval.seed};
  CsvWriter out(dir / "jacobian.csv", {"sample_id", "spectral_norm", "iterations", "residual", "dense_spectral_norm"});
  double total = 0.0;
  for (int i = 0; i < config.eval.spectral_samples; ++i) {
    const Eigen::VectorXd f = sampler.draw(derive_seed(config.eval.seed, 2, static_cast<std::uint64_t>(i)));
    const JacobianEstimate est = jacobian_spectral_norm(ckpt.arch, ckpt.params, f, grid, options);
    const std::string exact = dense ? CsvWriter::num(jacobian_spectral_norm_dense(ckpt.arch, ckpt.params, f, grid)) : "";
    out.row(i, est.spectral_norm, est.iterations_used, est.residual, exact);
    total += est.spectral_norm;
  }
  if (config.eval.spectral_samples > 0) {
    log << "mean spectral norm " << total / config.eval.spectral_samples << " over " << config.eval.spectral_samples
        << " inputs\n";
  }
  return exit_ok;
}

int cmd_generate_data(const RunConfig& config, const fs::path& ckpt_path, std::ostream& log) {
  config.validate();
  const Checkpoint ckpt = load_matching_checkpoint(ckpt_path, config);
  const fs::path dir = prepare_dir(config, "data");
  const EvalDatasets d =
      build_eval_datasets(config.problem(), ckpt.arch, ckpt.params, config.eval_attack, build_options(config));
  write_samples_csv(dir / "base_samples.csv", as_samples(d.problem, d.base_inputs, d.sample_seeds));
  write_samples_csv(dir / "robust_samples.csv", as_samples(d.problem, d.robust_inputs, d.sample_seeds));
  write_solutions_csv(dir / "base_solutions.csv", d.problem, d.grid, d.base_solutions);
  write_solutions_csv(dir / "robust_solutions.csv", d.problem, d.grid, d.robust_solutions);
  log << "wrote " << d.size() << " pairs per dataset (reference: " << d.solver.method << ")\n";
  return exit_ok;
}

int cmd_selftest(const std::map<std::string, double>& tolerance_overrides, std::ostream& out) {
  const auto rows = run_selftest(tolerance_overrides);
  out << "check,value,tolerance,status\n";
  bool ok = true;
  for (const auto& r : rows) {
    out << r.name << "," << CsvWriter::num(r.value) << "," << CsvWriter::num(r.tolerance) << ","
        << (r.pass ? "pass" : "FAIL") << "\n";
    ok = ok && r.pass;
  }
  return ok ? exit_ok : exit_validation;
}

}  // namespace stablepde::cli
