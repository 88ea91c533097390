#include <iostream>
#include <map>
#include <string>

#include <CLI11.hpp>

#include "commands.hpp"
#include "stablepde/errors.hpp"

namespace {

using namespace stablepde;
using namespace stablepde::cli;

std::map<std::string, double> parse_overrides(const std::vector<std::string>& items) {
  std::map<std::string, double> out;
  for (const auto& item : items) {
    const auto eq = item.find('=');
    if (eq == std::string::npos || eq == 0) throw InvalidArgument("--override expects name=tolerance, got " + item);
    std::size_t used = 0;
    double value = 0.0;
    try {
      value = std::stod(item.substr(eq + 1), &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != item.size() - eq - 1) throw InvalidArgument("--override: bad tolerance in " + item);
    out[item.substr(0, eq)] = value;
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Physics-informed operator learning with adversarial training"};
  app.require_subcommand(1);

  std::string config_path, baseline, stable, checkpoint;
  std::vector<std::string> overrides;

  auto* train = app.add_subcommand("train", "Train one model as configured by run.mode");
  train->add_option("-c,--config", config_path, "Run configuration (INI)")->required()->check(CLI::ExistingFile);

  auto* evaluate = app.add_subcommand("evaluate", "Compare a baseline and a stable checkpoint");
  evaluate->add_option("-c,--config", config_path, "Run configuration (INI)")->required()->check(CLI::ExistingFile);
  evaluate->add_option("--baseline", baseline, "Baseline checkpoint")->required()->check(CLI::ExistingFile);
  evaluate->add_option("--stable", stable, "Adversarially trained checkpoint")->required()->check(CLI::ExistingFile);

  std::vector<CLI::App*> single;
  for (auto [name, help] : {std::pair{"attack", "Attack fresh inputs against one checkpoint"},
                            std::pair{"jacobian", "Jacobian spectral norms of one checkpoint"},
                            std::pair{"generate-data", "Write base and robustness datasets for one checkpoint"}}) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("-c,--config", config_path, "Run configuration (INI)")->required()->check(CLI::ExistingFile);
    sub->add_option("--checkpoint", checkpoint, "Model checkpoint")->required()->check(CLI::ExistingFile);
    single.push_back(sub);
  }

  auto* selftest = app.add_subcommand("selftest", "Run the fast oracle checks");
  selftest->add_option("--override", overrides, "Replace a check's tolerance: name=value");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? exit_ok : exit_validation;
  }

  try {
    if (*selftest) return cmd_selftest(parse_overrides(overrides), std::cout);
    const RunConfig config = load_config(config_path);
    config.validate();
    if (*train) return cmd_train(config, std::cout);
    if (*evaluate) return cmd_evaluate(config, baseline, stable, std::cout);
    if (*single[0]) return cmd_attack(config, checkpoint, std::cout);
    if (*single[1]) return cmd_jacobian(config, checkpoint, std::cout);
    return cmd_generate_data(config, checkpoint, std::cout);
  } catch (const InvalidArgument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_validation;
  } catch (const ShapeError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_validation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_runtime;
  }
}
