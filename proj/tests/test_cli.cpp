#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>

#include "commands.hpp"
#include "stablepde/csv.hpp"
#include "stablepde/errors.hpp"

using namespace stablepde;
using namespace stablepde::cli;
namespace fs = std::filesystem;

namespace {

RunConfig parse(const std::string& text) {
  std::istringstream in(text);
  return parse_config(in);
}

std::string error_of(const std::string& text) {
  try {
    parse(text).validate();
  } catch (const InvalidArgument& e) {
    return e.what();
  }
  return {};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

std::size_t col(const CsvTable& t, const std::string& name) {
  const auto it = std::find(t.header.begin(), t.header.end(), name);
  if (it == t.header.end()) throw std::out_of_range("no column " + name);
  return static_cast<std::size_t>(it - t.header.begin());
}

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("stablepde_cli_" + name);
  fs::remove_all(dir);
  return dir;
}

RunConfig tiny(const fs::path& out, const std::string& mode = "stable") {
  return parse("[run]\noutput_dir = " + out.string() + "\nmode = " + mode +
               "\nseed = 5\n"
               "[problem]\nkind = antiderivative\nsensors = 10\n"
               "[arch]\nwidth = 8\ndepth = 1\n"
               "[train]\nsteps = 12\nbatch_size = 4\nwarmup_fraction = 0.25\n"
               "[eval]\nn_samples = 4\nspectral_samples = 2\n");
}

std::string quiet_train(const RunConfig& c) {
  std::ostringstream log;
  EXPECT_EQ(cmd_train(c, log), exit_ok) << log.str();
  return log.str();
}

}  // namespace

TEST(Config, DefaultsComeFromTheProblemKind) {
  const RunConfig c = parse("[problem]\nkind = poisson1d\n");
  EXPECT_EQ(c.problem(), ProblemSpec::defaults(ProblemKind::poisson1d));
  EXPECT_EQ(c.experiment, "poisson1d");
  EXPECT_FALSE(c.eval_attack.warm_start);
  EXPECT_EQ(c.mode, TrainMode::stable);
}

TEST(Config, RoundTripIsIdentity) {
  for (ProblemKind kind : all_problems()) {
    RunConfig c = parse("[problem]\nkind = " + to_string(kind) + "\n[run]\nmode = baseline\n");
    c.train.adam.learning_rate = 1.0 / 3.0;
    c.train.attack.epsilon = 0.1 + 1e-16 * 3;
    c.eval.resolution.nx = 77;
    std::ostringstream out;
    write_config(out, c);
    EXPECT_EQ(parse(out.str()), c) << to_string(kind);
  }
}

TEST(Config, SensorGridSideSetsTheCount) {
  const RunConfig c = parse("[problem]\nkind = poisson2d\nsensor_grid_side = 7\n");
  EXPECT_EQ(c.problem().sensor_count, 49);
}

TEST(Config, RejectsUnknownKeysAndSections) {
  EXPECT_THROW(parse("[problem]\nkind = poisson1d\nwidht = 3\n"), InvalidArgument);
  EXPECT_THROW(parse("[problem]\nkind = poisson1d\n[optimizer]\nlr = 1\n"), InvalidArgument);
  EXPECT_THROW(parse("[problem]\nkind = poisson1d\n[eval_attack]\nwarm_start = true\n"), InvalidArgument);
}

TEST(Config, ErrorsNameTheField) {
  EXPECT_NE(error_of("[run]\nseed = 1\n").find("problem.kind"), std::string::npos);
  EXPECT_NE(error_of("[problem]\nkind = heat\n").find("problem.kind"), std::string::npos);
  EXPECT_NE(error_of("[problem]\nkind = poisson1d\n[train]\nbatch_size = 0\n").find("train.batch_size"),
            std::string::npos);
  EXPECT_NE(error_of("[problem]\nkind = poisson1d\n[arch]\nwidth = x\n").find("arch.width"), std::string::npos);
  EXPECT_NE(error_of("[problem]\nkind = poisson1d\ntransform = dirichlet_2d_space\n").find("problem.transform"),
            std::string::npos);
  EXPECT_NE(error_of("[problem]\nkind = antiderivative\nalpha = 0.1\n").find("alpha"), std::string::npos);
}

TEST(Train, IdenticalConfigsGiveIdenticalArtifacts) {
  const fs::path a = fresh_dir("train_a"), b = fresh_dir("train_b");
  quiet_train(tiny(a));
  quiet_train(tiny(b));
  EXPECT_EQ(slurp(a / "stable" / "final.ckpt"), slurp(b / "stable" / "final.ckpt"));
  EXPECT_EQ(slurp(a / "stable" / "step_log.csv"), slurp(b / "stable" / "step_log.csv"));
  const RunConfig echoed = load_config(a / "stable" / "resolved_config.ini");
  EXPECT_EQ(echoed, tiny(a));
}

TEST(Train, ModesDifferOnlyInAdversarialSteps) {
  const fs::path dir = fresh_dir("modes");
  quiet_train(tiny(dir, "stable"));
  quiet_train(tiny(dir, "baseline"));
  const auto stable = read_csv(dir / "stable" / "step_log.csv");
  const auto baseline = read_csv(dir / "baseline" / "step_log.csv");
  ASSERT_EQ(stable.rows.size(), baseline.rows.size());
  const auto phase = col(stable, "phase");
  const auto total = col(stable, "total");
  ASSERT_EQ(baseline.header, stable.header);
  bool diverged = false;
  int adversarial = 0;
  for (std::size_t r = 0; r < stable.rows.size(); ++r) {
    EXPECT_EQ(baseline.rows[r][phase], "warmup");
    if (stable.rows[r][phase] == "adversarial") {
      ++adversarial;
      diverged = true;
    }
    // identical until the first adversarial step
    if (!diverged) EXPECT_EQ(stable.rows[r][total], baseline.rows[r][total]) << "step " << r + 1;
  }
  // steps 4..12 after a 25% warmup, every second step
  EXPECT_EQ(adversarial, 5);
}

TEST(Evaluate, WritesFourRowsPerExperiment) {
  const fs::path dir = fresh_dir("evaluate");
  quiet_train(tiny(dir, "stable"));
  quiet_train(tiny(dir, "baseline"));
  std::ostringstream log;
  ASSERT_EQ(cmd_evaluate(tiny(dir), dir / "baseline" / "final.ckpt", dir / "stable" / "final.ckpt", log), exit_ok);
  const auto summary = read_csv(dir / "evaluate" / "summary.csv");
  EXPECT_EQ(summary.header, summary_csv_header());
  EXPECT_EQ(summary.rows.size(), 4u);
  EXPECT_EQ(read_csv(dir / "evaluate" / "errors.csv").header, errors_csv_header());
  EXPECT_EQ(read_csv(dir / "evaluate" / "plot.csv").header, plot_csv_header(ProblemSpec::defaults(ProblemKind::antiderivative)));
}

TEST(Evaluate, ZeroRadiusGivesIdenticalRows) {
  const fs::path dir = fresh_dir("zero_radius");
  quiet_train(tiny(dir, "stable"));
  quiet_train(tiny(dir, "baseline"));
  RunConfig c = tiny(dir);
  c.eval_attack.epsilon = 0.0;
  std::ostringstream log;
  ASSERT_EQ(cmd_evaluate(c, dir / "baseline" / "final.ckpt", dir / "stable" / "final.ckpt", log), exit_ok);
  const auto summary = read_csv(dir / "evaluate" / "summary.csv");
  ASSERT_EQ(summary.rows.size(), 4u);
  const auto dataset = col(summary, "dataset");
  for (std::size_t r = 0; r < 4; r += 2) {
    auto base = summary.rows[r], attacked = summary.rows[r + 1];
    EXPECT_EQ(base[dataset], "base");
    EXPECT_EQ(attacked[dataset], "attacked");
    base[dataset] = attacked[dataset] = "";
    EXPECT_EQ(base, attacked);
  }
}

TEST(Evaluate, RejectsCheckpointOfAnotherArchitecture) {
  const fs::path dir = fresh_dir("mismatch");
  quiet_train(tiny(dir));
  RunConfig other = tiny(dir);
  other.train.width = 6;
  std::ostringstream log;
  const fs::path ckpt = dir / "stable" / "final.ckpt";
  EXPECT_THROW(cmd_evaluate(other, ckpt, ckpt, log), InvalidArgument);
  EXPECT_THROW(cmd_jacobian(other, ckpt, log), InvalidArgument);
}

TEST(StandaloneCommands, WriteDocumentedFiles) {
  const fs::path dir = fresh_dir("standalone");
  quiet_train(tiny(dir));
  const fs::path ckpt = dir / "stable" / "final.ckpt";
  std::ostringstream log;
  ASSERT_EQ(cmd_attack(tiny(dir), ckpt, log), exit_ok);
  ASSERT_EQ(cmd_jacobian(tiny(dir), ckpt, log), exit_ok);
  ASSERT_EQ(cmd_generate_data(tiny(dir), ckpt, log), exit_ok);
  EXPECT_EQ(read_csv(dir / "attack" / "attack_trace.csv").rows.size(), 21u);
  const auto jac = read_csv(dir / "jacobian" / "jacobian.csv");
  ASSERT_EQ(jac.rows.size(), 2u);
  for (const auto& row : jac.rows) {
    EXPECT_NEAR(std::stod(row[col(jac, "spectral_norm")]), std::stod(row[col(jac, "dense_spectral_norm")]),
                1e-5 * std::stod(row[col(jac, "dense_spectral_norm")]));
  }
  for (const char* f : {"base_samples.csv", "robust_samples.csv", "base_solutions.csv", "robust_solutions.csv"}) {
    EXPECT_TRUE(fs::exists(dir / "data" / f)) << f;
  }
}

TEST(Selftest, PassesAndReportsInjectedFailures) {
  const auto rows = run_selftest();
  ASSERT_FALSE(rows.empty());
  for (const auto& r : rows) EXPECT_TRUE(r.pass) << r.name << " " << r.value << " > " << r.tolerance;

  std::ostringstream out;
  EXPECT_EQ(cmd_selftest({{"grad_parameters", 0.0}}, out), exit_validation);
  EXPECT_NE(out.str().find("grad_parameters,"), std::string::npos);
  EXPECT_NE(out.str().find("FAIL"), std::string::npos);
  EXPECT_THROW(run_selftest({{"no_such_check", 1.0}}), InvalidArgument);
}
