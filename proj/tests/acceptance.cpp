// Acceptance run: one PASS/FAIL line per criterion, details indented below.
// Exit status is 0 only when every criterion passes.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "commands.hpp"
#include "oracle_checks.hpp"
#include "stablepde/csv.hpp"
#include "stablepde/eval_report.hpp"
#include "stablepde/function_spaces.hpp"
#include "stablepde/reference_solvers.hpp"
#include "stablepde/training.hpp"

using namespace stablepde;
using namespace stablepde::cli;
namespace fs = std::filesystem;

namespace {

class Stopwatch {
 public:
  [[nodiscard]] double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

struct Verdict {
  Verdict(int id_, std::string title_) : id(id_), title(std::move(title_)) {}

  int id;
  std::string title;
  bool pass = true;
  std::vector<std::string> details;

  void require(bool ok, const std::string& what) {
    pass = pass && ok;
    details.push_back(std::string(ok ? "ok    " : "FAIL  ") + what);
  }
  void note(const std::string& what) { details.push_back("      " + what); }
};

std::string fmt(const char* pattern, auto... args) {
  char buf[256];
  std::snprintf(buf, sizeof buf, pattern, args...);
  return buf;
}

void print(const Verdict& v) {
  std::cout << "criterion " << v.id << ": " << (v.pass ? "PASS" : "FAIL") << "  " << v.title << "\n";
  for (const auto& d : v.details) std::cout << "    " << d << "\n";
  std::cout.flush();
}

struct Settings {
  int steps = 20000;
  int eval_pairs = 200;
  std::uint64_t train_seed = 1;
  std::uint64_t eval_seed = 2;
  bool determinism = true;
};

struct Flagship {
  ProblemKind kind;
  TrainConfig train;
  DeepONetParams baseline, stable;
  StabilityReport report;
  double train_seconds = 0.0;
  double total_seconds = 0.0;

  [[nodiscard]] const ReportRow& row(const std::string& model, const std::string& dataset) const {
    return report.row(model, dataset);
  }
};

Flagship run_flagship(ProblemKind kind, const Settings& s) {
  Stopwatch clock;
  Flagship out{kind, {}, {}, {}, {}};
  out.train.problem = ProblemSpec::defaults(kind);
  out.train.steps = s.steps;
  out.train.seed = s.train_seed;
  out.train.validate();
  out.baseline = train_baseline(out.train).params;
  out.stable = train(out.train).params;
  out.train_seconds = clock.seconds();

  AttackConfig eval_attack = out.train.attack;
  eval_attack.warm_start = false;
  const ArchSpec arch = out.train.arch();
  const std::vector<ModelEntry> models{{"baseline", arch, out.baseline}, {"stable", arch, out.stable}};
  const EvalBuildOptions options{s.eval_pairs, s.eval_seed, {}};
  std::vector<EvalDatasets> datasets;
  for (const auto& m : models) datasets.push_back(build_eval_datasets(out.train.problem, arch, m.params, eval_attack, options));
  out.report = stability_report(to_string(kind), models, datasets, ReportOptions{});
  out.total_seconds = clock.seconds();
  return out;
}

void describe(Verdict& v, const Flagship& f) {
  for (const auto& r : f.report.rows) {
    v.note(fmt("%-8s %-8s rel_l2 %.4g  spectral %.4g  c_emp_p50 %.4g", r.model.c_str(), r.dataset.c_str(), r.mean_rel_l2,
               r.mean_spectral_norm, r.c_emp_p50));
  }
}

Verdict criterion_differentiation() {
  Verdict v{1, "gradients and second coordinate derivatives against central differences"};
  Stopwatch clock;
  const double params = parameter_gradient_error(100, 11);
  const double inputs = input_gradient_error(100, 12);
  const double second = second_derivative_error(100, 13);
  v.require(params <= 1e-5, fmt("parameter gradients, 100 instances: %.3g <= 1e-5", params));
  v.require(inputs <= 1e-5, fmt("input gradients, 100 instances: %.3g <= 1e-5", inputs));
  v.require(second <= 1e-4, fmt("second coordinate derivatives, 100 instances: %.3g <= 1e-4", second));
  v.require(clock.seconds() < 30.0, fmt("runtime %.2f s < 30 s", clock.seconds()));
  return v;
}

Verdict criterion_solvers() {
  Verdict v{2, "reference solvers against analytic solutions and convergence orders"};
  Stopwatch clock;
  for (const auto& c : solver_checks()) v.require(c.pass(), fmt("%s: %.3g <= %.3g", c.name.c_str(), c.value, c.tolerance));
  v.require(clock.seconds() < 120.0, fmt("runtime %.2f s < 120 s", clock.seconds()));
  return v;
}

// Ascent is judged per sample, each attacked on its own against the trained model.
Verdict criterion_attacks(const Flagship& poisson, const Settings& s) {
  Verdict v{3, "attack contracts"};
  Stopwatch clock;
  for (const auto& c : projection_checks(1000, 21)) v.require(c.pass(), fmt("%s: %.3g <= %.3g", c.name.c_str(), c.value, c.tolerance));

  const ProblemSpec& problem = poisson.train.problem;
  const ArchSpec arch = poisson.train.arch();
  const InputSampler sampler(problem);
  const ReferenceSolver solver(problem);
  const Eigen::MatrixXd grid = evaluation_grid(problem);
  AttackConfig config = poisson.train.attack;
  config.warm_start = false;
  int ascended = 0;
  double worst_violation = 0.0;
  const int n = 100;
  for (int i = 0; i < n; ++i) {
    const Eigen::VectorXd f = sampler.draw(derive_seed(s.eval_seed + 1000, 2, static_cast<std::uint64_t>(i)));
    const Eigen::MatrixXd clean = f.transpose();
    const Eigen::MatrixXd truth = solver.solve(f, grid).transpose();
    const AttackResult r = attack_evaluation(arch, poisson.baseline, clean, truth, grid, config);
    if (r.trace.final_loss() >= r.trace.clean_loss) ++ascended;
    const double radius = attack_radii(clean, config)[0];
    const Eigen::VectorXd delta = (r.perturbed - clean).row(0).transpose();
    worst_violation = std::max(worst_violation, attack_norm(delta, config.norm) - radius);
  }
  v.require(worst_violation <= 1e-12, fmt("ball violation on %d attacked samples: %.3g <= 1e-12", n, std::max(worst_violation, 0.0)));
  v.require(ascended >= 90, fmt("final >= initial loss on %d/%d samples against the trained poisson1d baseline (need 90)", ascended, n));
  v.require(clock.seconds() < 120.0, fmt("runtime %.2f s < 120 s", clock.seconds()));
  return v;
}

Verdict criterion_poisson(const Flagship& f, const Settings& s) {
  Verdict v{4, fmt("poisson1d flagship (%d steps, batch 32, %d pairs)", s.steps, s.eval_pairs)};
  const double bc = f.row("baseline", "base").mean_rel_l2, ba = f.row("baseline", "attacked").mean_rel_l2;
  const double sc = f.row("stable", "base").mean_rel_l2, sa = f.row("stable", "attacked").mean_rel_l2;
  v.require(bc <= 0.05 && sc <= 0.05, fmt("(a) clean errors baseline %.4g, stable %.4g <= 0.05", bc, sc));
  v.require(ba >= 10 * bc, fmt("(b) baseline attacked / clean = %.3g >= 10", ba / bc));
  v.require(sa <= 3 * sc, fmt("(c) stable attacked / clean = %.3g <= 3", sa / sc));
  v.require(ba >= 5 * sa, fmt("(d) baseline attacked / stable attacked = %.3g >= 5", ba / sa));
  v.require(f.total_seconds <= 1800.0, fmt("runtime %.0f s <= 1800 s (training %.0f s)", f.total_seconds, f.train_seconds));
  describe(v, f);
  return v;
}

Verdict criterion_ode(const Flagship& f, const Settings& s) {
  Verdict v{5, fmt("antiderivative flagship (%d steps, batch 32, %d pairs)", s.steps, s.eval_pairs)};
  const double bc = f.row("baseline", "base").mean_rel_l2, ba = f.row("baseline", "attacked").mean_rel_l2;
  const double sc = f.row("stable", "base").mean_rel_l2, sa = f.row("stable", "attacked").mean_rel_l2;
  v.require(bc <= 0.06 && sc <= 0.06, fmt("(a) clean errors baseline %.4g, stable %.4g <= 0.06", bc, sc));
  v.require(ba >= 5 * bc, fmt("(b) baseline attacked / clean = %.3g >= 5", ba / bc));
  v.require(sa <= 3 * sc, fmt("(c) stable attacked / clean = %.3g <= 3", sa / sc));
  v.require(f.total_seconds <= 1200.0, fmt("runtime %.0f s <= 1200 s (training %.0f s)", f.total_seconds, f.train_seconds));
  describe(v, f);
  return v;
}

Verdict criterion_spectral(const std::vector<const Flagship*>& flagships) {
  Verdict v{6, "Jacobian spectral norms"};
  for (const Flagship* f : flagships) {
    for (const char* dataset : {"base", "attacked"}) {
      const double b = f->row("baseline", dataset).mean_spectral_norm, st = f->row("stable", dataset).mean_spectral_norm;
      v.require(st < b, fmt("%s %s inputs: stable %.4g < baseline %.4g", to_string(f->kind).c_str(), dataset, st, b));
    }
  }
  const double gap = spectral_norm_gap(20, 31);
  v.require(gap <= 1e-6, fmt("power iteration vs dense SVD, 20 small instances: %.3g <= 1e-6", gap));
  return v;
}

bool identical(const ReportRow& a, const ReportRow& b) {
  return a.experiment == b.experiment && a.model == b.model && a.dataset == b.dataset && a.errors == b.errors &&
         a.mean_rel_l2 == b.mean_rel_l2 && a.mean_spectral_norm == b.mean_spectral_norm &&
         a.c_emp_p50 == b.c_emp_p50 && a.c_emp_p95 == b.c_emp_p95;
}

Verdict criterion_determinism(const std::vector<const Flagship*>& first, const Settings& s) {
  Verdict v{7, "bit-exact rerun of the flagship runs"};
  if (!s.determinism) {
    v.require(false, "skipped (--no-rerun)");
    return v;
  }
  for (const Flagship* f : first) {
    const Flagship again = run_flagship(f->kind, s);
    const std::string name = to_string(f->kind);
    v.require(again.baseline == f->baseline && again.stable == f->stable, name + ": trained parameters identical");
    bool rows = again.report.rows.size() == f->report.rows.size();
    for (std::size_t r = 0; rows && r < f->report.rows.size(); ++r) rows = identical(again.report.rows[r], f->report.rows[r]);
    v.require(rows, name + ": every reported number identical (per-sample errors, means, spectral norms, quantiles)");
  }
  return v;
}

// Tiny end-to-end CLI run whose CSV headers are compared with the documented layouts.
Verdict criterion_plumbing() {
  Verdict v{8, "self-test, config round trip and CSV schemas"};
  const auto rows = run_selftest();
  int failed = 0;
  for (const auto& r : rows) failed += r.pass ? 0 : 1;
  v.require(failed == 0, fmt("selftest: %d of %d checks pass", static_cast<int>(rows.size()) - failed, static_cast<int>(rows.size())));

  const fs::path dir = fs::temp_directory_path() / "stablepde_acceptance_plumbing";
  fs::remove_all(dir);
  std::istringstream text("[run]\noutput_dir = " + dir.string() +
                          "\n[problem]\nkind = heat_ic\nsensors = 8\ninterior = 20\nboundary = 4\ninitial = 4\n"
                          "[arch]\nwidth = 6\ndepth = 1\n[train]\nsteps = 6\nbatch_size = 3\ncheckpoint_every = 3\n"
                          "[eval]\nn_samples = 3\nspectral_samples = 2\nnx_1d = 21\nnx = 21\nnt = 21\n");
  RunConfig config = parse_config(text);
  std::ostringstream written;
  write_config(written, config);
  std::istringstream back(written.str());
  v.require(parse_config(back) == config, "resolved config re-parses to an equal configuration");

  std::ostringstream log;
  bool ran = cmd_train(config, log) == exit_ok;
  RunConfig baseline = config;
  baseline.mode = TrainMode::baseline;
  ran = ran && cmd_train(baseline, log) == exit_ok;
  const fs::path b = dir / "baseline" / "final.ckpt", st = dir / "stable" / "final.ckpt";
  ran = ran && cmd_evaluate(config, b, st, log) == exit_ok;
  ran = ran && cmd_attack(config, st, log) == exit_ok;
  ran = ran && cmd_jacobian(config, st, log) == exit_ok;
  ran = ran && cmd_generate_data(config, st, log) == exit_ok;
  v.require(ran, "train, evaluate, attack, jacobian and generate-data succeed");
  if (!ran) return v;
  v.require(load_config(dir / "evaluate" / "resolved_config.ini") == config, "emitted resolved_config.ini re-parses equal");

  using Header = std::vector<std::string>;
  const Header samples{"s0", "s1", "s2", "s3", "s4", "s5", "s6", "s7", "kind", "seed", "length_scale"};
  const Header solutions{"sample_id", "x", "t", "u"};
  const std::vector<std::pair<fs::path, Header>> expected{
      {"stable/step_log.csv", {"step", "phase", "physics", "bc", "ic", "total"}},
      {"baseline/step_log.csv", {"step", "phase", "physics", "bc", "ic", "total"}},
      {"evaluate/summary.csv", {"experiment", "model", "dataset", "mean_rel_l2", "mean_spectral_norm", "c_emp_p50", "c_emp_p95"}},
      {"evaluate/errors.csv", {"experiment", "model", "dataset", "sample_id", "relative_l2"}},
      {"evaluate/plot.csv", {"sample_id", "x", "t", "f", "f_tilde", "u_true", "pred_baseline", "pred_stable"}},
      {"attack/attack_trace.csv", {"iteration", "loss"}},
      {"attack/clean_samples.csv", samples},
      {"attack/attacked_samples.csv", samples},
      {"jacobian/jacobian.csv", {"sample_id", "spectral_norm", "iterations", "residual", "dense_spectral_norm"}},
      {"data/base_samples.csv", samples},
      {"data/robust_samples.csv", samples},
      {"data/base_solutions.csv", solutions},
      {"data/robust_solutions.csv", solutions},
  };
  for (const auto& [file, header] : expected) {
    bool ok = false;
    std::string got;
    try {
      const CsvTable t = read_csv(dir / file);
      ok = t.header == header && !t.rows.empty();
      for (const auto& h : t.header) got += (got.empty() ? "" : ",") + h;
    } catch (const std::exception& e) {
      got = e.what();
    }
    v.require(ok, file.string() + (ok ? "" : " (got " + got + ")"));
  }
  return v;
}

}  // namespace

int main(int argc, char** argv) {
  Settings s;
  CLI::App app{"Acceptance criteria 1-8"};
  app.add_option("--steps", s.steps, "Training steps per flagship model")->check(CLI::Range(1, 20000));
  app.add_option("--eval-pairs", s.eval_pairs, "Evaluation pairs per dataset")->check(CLI::PositiveNumber);
  app.add_flag("!--no-rerun", s.determinism, "Skip the determinism rerun");
  CLI11_PARSE(app, argc, argv);

  std::vector<Verdict> verdicts;
  const auto record = [&](Verdict v) {
    print(v);
    verdicts.push_back(std::move(v));
  };
  record(criterion_differentiation());
  record(criterion_solvers());

  std::cout << "training flagship models (" << s.steps << " steps each)...\n" << std::flush;
  const Flagship poisson = run_flagship(ProblemKind::poisson1d, s);
  const Flagship ode = run_flagship(ProblemKind::antiderivative, s);
  record(criterion_attacks(poisson, s));
  record(criterion_poisson(poisson, s));
  record(criterion_ode(ode, s));
  record(criterion_spectral({&poisson, &ode}));
  record(criterion_determinism({&poisson, &ode}, s));
  record(criterion_plumbing());

  int passed = 0;
  for (const auto& v : verdicts) passed += v.pass ? 1 : 0;
  std::cout << "\nsummary\n";
  for (const auto& v : verdicts) std::cout << "criterion " << v.id << ": " << (v.pass ? "PASS" : "FAIL") << "\n";
  std::cout << passed << "/" << verdicts.size() << " criteria pass\n";
  return passed == static_cast<int>(verdicts.size()) ? 0 : 1;
}
