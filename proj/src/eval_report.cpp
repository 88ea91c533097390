#include "stablepde/eval_report.hpp"

#include <algorithm>
#include <cmath>

#include "stablepde/csv.hpp"
#include "stablepde/function_spaces.hpp"

namespace stablepde {

double relative_l2(const Eigen::VectorXd& pred, const Eigen::VectorXd& truth) {
  if (pred.size() != truth.size()) throw ShapeError("relative_l2: lengths differ");
  const double denom = truth.norm();
  if (!(denom > 0.0)) throw NumericalError("relative_l2: reference has zero norm");
  return (pred - truth).norm() / denom;
}

Eigen::VectorXd relative_l2_rows(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& truth) {
  if (pred.rows() != truth.rows() || pred.cols() != truth.cols()) throw ShapeError("relative_l2_rows: shapes differ");
  Eigen::VectorXd out(pred.rows());
  for (Eigen::Index i = 0; i < pred.rows(); ++i) out[i] = relative_l2(pred.row(i).transpose(), truth.row(i).transpose());
  return out;
}

double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw InvalidArgument("quantile of an empty sample");
  if (!(q >= 0.0 && q <= 1.0)) throw InvalidArgument("quantile level must lie in [0, 1]");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

void EvalDatasets::validate(double slack) const {
  const Eigen::Index n = base_inputs.rows();
  const Eigen::Index m = problem.sensor_count;
  if (grid.cols() != problem.coord_dim()) throw ShapeError("EvalDatasets: grid dimension does not match the problem");
  if (base_inputs.cols() != m || robust_inputs.rows() != n || robust_inputs.cols() != m) {
    throw ShapeError("EvalDatasets: input blocks are not aligned");
  }
  if (base_solutions.rows() != n || robust_solutions.rows() != n || base_solutions.cols() != grid.rows() ||
      robust_solutions.cols() != grid.rows()) {
    throw ShapeError("EvalDatasets: solution blocks are not aligned with the grid");
  }
  if (static_cast<Eigen::Index>(sample_seeds.size()) != n) throw ShapeError("EvalDatasets: one seed per sample");
  if (!bitrig.empty() && static_cast<Eigen::Index>(bitrig.size()) != n) {
    throw ShapeError("EvalDatasets: one coefficient block per sample");
  }
  const Eigen::VectorXd radii = attack_radii(base_inputs, attack);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double d = attack_norm((robust_inputs.row(i) - base_inputs.row(i)).transpose(), attack.norm);
    if (d > radii[i] * (1.0 + slack) + slack) {
      throw NumericalError("EvalDatasets: sample " + std::to_string(i) + " leaves the attack ball");
    }
  }
}

EvalDatasets EvalDatasets::permuted(std::span<const Eigen::Index> order) const {
  const Eigen::Index n = size();
  if (static_cast<Eigen::Index>(order.size()) != n) throw ShapeError("permuted: order length differs from size");
  EvalDatasets out = *this;
  for (Eigen::Index k = 0; k < n; ++k) {
    const Eigen::Index i = order[k];
    if (i < 0 || i >= n) throw InvalidArgument("permuted: index out of range");
    out.base_inputs.row(k) = base_inputs.row(i);
    out.base_solutions.row(k) = base_solutions.row(i);
    out.robust_inputs.row(k) = robust_inputs.row(i);
    out.robust_solutions.row(k) = robust_solutions.row(i);
    out.sample_seeds[k] = sample_seeds[i];
    if (!bitrig.empty()) out.bitrig[k] = bitrig[i];
  }
  return out;
}

EvalDatasets build_eval_datasets(const ProblemSpec& problem, const ArchSpec& arch, const DeepONetParams& model,
                                 const AttackConfig& attack, const EvalBuildOptions& options) {
  problem.validate();
  attack.validate();
  if (options.n_samples < 1) throw InvalidArgument("eval.n_samples must be >= 1");
  if (arch.sensor_count() != problem.sensor_count || arch.coord_dim() != problem.coord_dim()) {
    throw ShapeError("build_eval_datasets: model architecture does not fit the problem");
  }
  const InputSampler sampler(problem);
  const ReferenceSolver solver(problem, options.resolution);
  const bool with_bitrig = problem.kind == ProblemKind::poisson2d;

  EvalDatasets d;
  d.problem = problem;
  d.grid = evaluation_grid(problem);
  d.attack = attack;
  d.attack.warm_start = false;
  d.solver = solver.meta();
  const Eigen::Index n = options.n_samples;
  const Eigen::Index m = problem.sensor_count;
  const Eigen::Index p = d.grid.rows();
  d.base_inputs.resize(n, m);
  d.base_solutions.resize(n, p);
  d.robust_inputs.resize(n, m);
  d.robust_solutions.resize(n, p);

  for (Eigen::Index i = 0; i < n; ++i) {
    try {
      const std::uint64_t s = derive_seed(options.seed, 2, static_cast<std::uint64_t>(i));
      d.sample_seeds.push_back(s);
      const Eigen::VectorXd f = sampler.draw(s);
      if (with_bitrig) d.bitrig.push_back(sampler.bitrig_coefficients(s));
      const Eigen::MatrixXd* coeff = with_bitrig ? &d.bitrig.back() : nullptr;
      d.base_inputs.row(i) = f.transpose();
      d.base_solutions.row(i) = solver.solve(f, d.grid, coeff).transpose();

      const AttackResult attacked =
          attack_evaluation(arch, model, d.base_inputs.row(i), d.base_solutions.row(i), d.grid, attack);
      d.robust_inputs.row(i) = attacked.perturbed;
      if (attacked.perturbed == Eigen::MatrixXd(d.base_inputs.row(i))) {
        d.robust_solutions.row(i) = d.base_solutions.row(i);
      } else {
        d.robust_solutions.row(i) = solver.solve(attacked.perturbed.row(0).transpose(), d.grid, coeff).transpose();
      }
    } catch (const NumericalError& e) {
      throw NumericalError("sample " + std::to_string(i) + ": " + e.what());
    } catch (const InvalidArgument& e) {
      throw InvalidArgument("sample " + std::to_string(i) + ": " + e.what());
    }
  }
  return d;
}

double dense_spectral_norm(const Eigen::MatrixXd& jacobian) {
  if (jacobian.size() == 0) return 0.0;
  return Eigen::JacobiSVD<Eigen::MatrixXd>(jacobian).singularValues()[0];
}

JacobianEstimate jacobian_spectral_norm(const ArchSpec& arch, const DeepONetParams& params, const Eigen::VectorXd& f,
                                        const Eigen::MatrixXd& grid, const SpectralNormOptions& options) {
  const OperatorMap map(arch, params, grid);
  return power_spectral_norm(map, f, options);
}

double jacobian_spectral_norm_dense(const ArchSpec& arch, const DeepONetParams& params, const Eigen::VectorXd& f,
                                    const Eigen::MatrixXd& grid) {
  const OperatorMap map(arch, params, grid);
  return dense_spectral_norm(diffkit::dense_jacobian(map, f));
}

const ReportRow& StabilityReport::row(const std::string& model, const std::string& dataset) const {
  for (const auto& r : rows) {
    if (r.model == model && r.dataset == dataset) return r;
  }
  throw InvalidArgument("report has no row for model '" + model + "' on dataset '" + dataset + "'");
}

namespace {

double mean_spectral_norm(const ModelEntry& model, const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& grid,
                          const ReportOptions& options) {
  const Eigen::Index k = std::min<Eigen::Index>(options.spectral_samples, inputs.rows());
  if (k <= 0) return 0.0;
  const OperatorMap map(model.arch, model.params, grid);
  double total = 0.0;
  for (Eigen::Index i = 0; i < k; ++i) total += power_spectral_norm(map, inputs.row(i).transpose(), options.spectral).spectral_norm;
  return total / static_cast<double>(k);
}

}  // namespace

StabilityReport stability_report(const std::string& experiment, std::span<const ModelEntry> models,
                                 std::span<const EvalDatasets> datasets, const ReportOptions& options) {
  if (models.size() != datasets.size()) throw InvalidArgument("stability_report: one dataset per model required");
  StabilityReport report;
  for (std::size_t k = 0; k < models.size(); ++k) {
    const ModelEntry& model = models[k];
    const EvalDatasets& data = datasets[k];
    data.validate();
    if (model.arch.coord_dim() != data.grid.cols() || model.arch.sensor_count() != data.base_inputs.cols()) {
      throw ShapeError("stability_report: model '" + model.name + "' does not match its dataset grid");
    }
    const Eigen::MatrixXd clean_pred = forward(model.arch, model.params, data.base_inputs, data.grid);
    const Eigen::MatrixXd attacked_pred = forward(model.arch, model.params, data.robust_inputs, data.grid);

    std::vector<double> ratios;
    for (Eigen::Index i = 0; i < data.size(); ++i) {
      const double df = (data.robust_inputs.row(i) - data.base_inputs.row(i)).norm();
      if (df > 0.0) ratios.push_back((attacked_pred.row(i) - clean_pred.row(i)).norm() / df);
    }
    const double p50 = ratios.empty() ? 0.0 : quantile(ratios, 0.5);
    const double p95 = ratios.empty() ? 0.0 : quantile(ratios, 0.95);

    auto make_row = [&](const std::string& dataset, const Eigen::MatrixXd& pred, const Eigen::MatrixXd& truth,
                        const Eigen::MatrixXd& inputs) {
      ReportRow r;
      r.experiment = experiment;
      r.model = model.name;
      r.dataset = dataset;
      const Eigen::VectorXd e = relative_l2_rows(pred, truth);
      r.errors.assign(e.data(), e.data() + e.size());
      r.mean_rel_l2 = e.mean();
      r.mean_spectral_norm = mean_spectral_norm(model, inputs, data.grid, options);
      r.c_emp_p50 = p50;
      r.c_emp_p95 = p95;
      return r;
    };
    report.rows.push_back(make_row("base", clean_pred, data.base_solutions, data.base_inputs));
    report.rows.push_back(make_row("attacked", attacked_pred, data.robust_solutions, data.robust_inputs));
  }
  return report;
}

std::vector<std::string> errors_csv_header() { return {"experiment", "model", "dataset", "sample_id", "relative_l2"}; }

std::vector<std::string> summary_csv_header() {
  return {"experiment", "model", "dataset", "mean_rel_l2", "mean_spectral_norm", "c_emp_p50", "c_emp_p95"};
}

std::vector<std::string> plot_csv_header(const ProblemSpec& problem) {
  std::vector<std::string> h{"sample_id"};
  for (auto& c : grid_columns(problem)) h.push_back(c);
  for (const char* c : {"f", "f_tilde", "u_true", "pred_baseline", "pred_stable"}) h.emplace_back(c);
  return h;
}

void write_errors_csv(const std::filesystem::path& path, const StabilityReport& report) {
  CsvWriter out(path, errors_csv_header());
  for (const auto& r : report.rows) {
    for (std::size_t i = 0; i < r.errors.size(); ++i) out.row(r.experiment, r.model, r.dataset, i, r.errors[i]);
  }
}

void write_summary_csv(const std::filesystem::path& path, const StabilityReport& report) {
  CsvWriter out(path, summary_csv_header());
  for (const auto& r : report.rows) {
    out.row(r.experiment, r.model, r.dataset, r.mean_rel_l2, r.mean_spectral_norm, r.c_emp_p50, r.c_emp_p95);
  }
}

void write_plot_csv(const std::filesystem::path& path, const EvalDatasets& data, const ModelEntry& baseline,
                    const ModelEntry& stable, std::span<const Eigen::Index> sample_ids) {
  const Eigen::MatrixXd interp = input_interpolation(data.problem, data.grid);
  CsvWriter out(path, plot_csv_header(data.problem));
  for (const Eigen::Index i : sample_ids) {
    if (i < 0 || i >= data.size()) throw InvalidArgument("write_plot_csv: sample id out of range");
    const Eigen::VectorXd f = interp * data.base_inputs.row(i).transpose();
    const Eigen::VectorXd ft = interp * data.robust_inputs.row(i).transpose();
    const Eigen::VectorXd pb = forward(baseline.arch, baseline.params, Eigen::VectorXd(data.robust_inputs.row(i).transpose()), data.grid);
    const Eigen::VectorXd ps = forward(stable.arch, stable.params, Eigen::VectorXd(data.robust_inputs.row(i).transpose()), data.grid);
    for (Eigen::Index r = 0; r < data.grid.rows(); ++r) {
      std::vector<std::string> line{std::to_string(i)};
      for (Eigen::Index c = 0; c < data.grid.cols(); ++c) line.push_back(CsvWriter::num(data.grid(r, c)));
      for (double v : {f[r], ft[r], data.robust_solutions(i, r), pb[r], ps[r]}) line.push_back(CsvWriter::num(v));
      out.write_row(line);
    }
  }
}

}  // namespace stablepde
