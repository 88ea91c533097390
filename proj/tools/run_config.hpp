#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>

#include "stablepde/adversarial.hpp"
#include "stablepde/eval_report.hpp"
#include "stablepde/pde_suite.hpp"
#include "stablepde/training.hpp"

namespace stablepde::cli {

enum class TrainMode { stable, baseline };
std::string to_string(TrainMode m);

struct EvalOptions {
  int n_samples = 200;
  std::uint64_t seed = 1;
  int spectral_samples = 10;
  double spectral_tol = 1e-6;
  int spectral_max_iter = 500;
  int plot_samples = 3;
  ReferenceResolution resolution;

  bool operator==(const EvalOptions& o) const;
};

/// Everything a command needs, resolved against the problem defaults.
struct RunConfig {
  std::filesystem::path output_dir = "out";
  std::string experiment;  // defaults to the problem name
  TrainMode mode = TrainMode::stable;
  TrainConfig train;       // holds problem, arch sizes, attack and seed
  AttackConfig eval_attack;
  EvalOptions eval;

  [[nodiscard]] const ProblemSpec& problem() const { return train.problem; }
  [[nodiscard]] ArchSpec arch() const { return train.arch(); }
  /// Validates every section. Throws InvalidArgument naming the key.
  void validate() const;
  bool operator==(const RunConfig&) const = default;
};

/// INI text with sections run, problem, arch, train, attack, eval_attack,
/// eval. Only problem.kind is required; omitted keys take the defaults of
/// that kind. Unknown sections or keys are rejected.
RunConfig parse_config(std::istream& in);
RunConfig load_config(const std::filesystem::path& path);

/// Every key with its resolved value; parse_config reads it back to an
/// equal RunConfig.
void write_config(std::ostream& out, const RunConfig& config);
void save_config(const std::filesystem::path& path, const RunConfig& config);

}  // namespace stablepde::cli
