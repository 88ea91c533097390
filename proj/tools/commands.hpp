#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "run_config.hpp"

namespace stablepde::cli {

enum ExitCode : int { exit_ok = 0, exit_validation = 1, exit_runtime = 2 };

/// Writes <output_dir>/<mode>/{resolved_config.ini, step_log.csv, final.ckpt,
/// checkpoints/}. On a non-finite loss keeps the partial log and the last
/// finite parameters as aborted.ckpt.
int cmd_train(const RunConfig& config, std::ostream& log);

/// Writes <output_dir>/evaluate/{summary.csv, errors.csv, plot.csv,
/// resolved_config.ini}. Each model is attacked on its own gradients.
int cmd_evaluate(const RunConfig& config, const std::filesystem::path& baseline_ckpt,
                 const std::filesystem::path& stable_ckpt, std::ostream& log);

/// Attacks eval.n_samples fresh inputs against their references; writes
/// clean_samples.csv, attacked_samples.csv and attack_trace.csv under
/// <output_dir>/attack.
int cmd_attack(const RunConfig& config, const std::filesystem::path& ckpt, std::ostream& log);

/// Spectral norms at eval.spectral_samples inputs; writes
/// <output_dir>/jacobian/jacobian.csv.
int cmd_jacobian(const RunConfig& config, const std::filesystem::path& ckpt, std::ostream& log);

/// Writes both evaluation datasets for one model under <output_dir>/data.
int cmd_generate_data(const RunConfig& config, const std::filesystem::path& ckpt, std::ostream& log);

struct SelftestRow {
  std::string name;
  double value = 0.0;
  double tolerance = 0.0;
  bool pass = false;
};

/// Fast oracle checks. `tolerance_overrides` replaces the tolerance of the
/// named rows.
std::vector<SelftestRow> run_selftest(const std::map<std::string, double>& tolerance_overrides = {});
int cmd_selftest(const std::map<std::string, double>& tolerance_overrides, std::ostream& out);

/// Loads a checkpoint and checks its architecture against the config.
Checkpoint load_matching_checkpoint(const std::filesystem::path& path, const RunConfig& config);

}  // namespace stablepde::cli
