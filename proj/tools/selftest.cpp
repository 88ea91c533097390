#include <algorithm>
#include <sstream>

#include "commands.hpp"
#include "oracle_checks.hpp"
#include "stablepde/errors.hpp"

namespace stablepde::cli {

namespace {

// Worst-case count of kinds whose resolved config does not read back equal.
double config_round_trip_failures() {
  int failures = 0;
  for (ProblemKind kind : all_problems()) {
    std::istringstream in("[problem]\nkind = " + to_string(kind) + "\n[train]\nlearning_rate = 0.0003\n");
    RunConfig config = parse_config(in);
    config.eval_attack.epsilon = 0.1 + 1e-15;
    std::ostringstream out;
    write_config(out, config);
    std::istringstream back(out.str());
    if (!(parse_config(back) == config)) ++failures;
  }
  return failures;
}

}  // namespace

std::vector<SelftestRow> run_selftest(const std::map<std::string, double>& tolerance_overrides) {
  constexpr std::uint64_t seed = 20240601;
  std::vector<Check> checks{
      {"grad_parameters", parameter_gradient_error(100, seed), 1e-5},
      {"grad_inputs", input_gradient_error(100, seed), 1e-5},
      {"second_coordinate_derivative", second_derivative_error(100, seed), 1e-4},
      {"spectral_power_vs_svd", spectral_norm_gap(20, seed), 1e-6},
  };
  for (auto& c : solver_checks()) checks.push_back(std::move(c));
  for (auto& c : projection_checks(200, seed)) checks.push_back(std::move(c));
  checks.push_back({"config_round_trip", config_round_trip_failures(), 0.0});

  for (const auto& [name, tol] : tolerance_overrides) {
    const bool known = std::any_of(checks.begin(), checks.end(), [&](const Check& c) { return c.name == name; });
    if (!known) throw InvalidArgument("selftest: no check named " + name);
  }
  std::vector<SelftestRow> rows;
  for (auto& c : checks) {
    if (auto it = tolerance_overrides.find(c.name); it != tolerance_overrides.end()) c.tolerance = it->second;
    rows.push_back({c.name, c.value, c.tolerance, c.pass()});
  }
  return rows;
}

}  // namespace stablepde::cli
