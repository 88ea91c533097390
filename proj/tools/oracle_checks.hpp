#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "stablepde/operator_net.hpp"
#include "stablepde/pde_suite.hpp"

namespace stablepde::cli {

/// A measured quantity and the bound it must stay under.
struct Check {
  std::string name;
  double value = 0.0;
  double tolerance = 0.0;
  [[nodiscard]] bool pass() const { return value <= tolerance; }
};

/// Small random network for problem kind `kind` with shrunken sensor and
/// collocation counts and non-zero biases.
struct RandomInstance {
  ProblemSpec problem;
  ArchSpec arch;
  DeepONetParams params;
};
RandomInstance random_instance(ProblemKind kind, std::uint64_t seed);

/// Largest error of reverse-mode loss gradients against central differences
/// over `instances` random networks, relative to the gradient's max norm.
double parameter_gradient_error(int instances, std::uint64_t seed);
/// Same for gradients with respect to the input-function samples.
double input_gradient_error(int instances, std::uint64_t seed);
/// Largest relative error of second coordinate derivatives against the
/// three-point stencil (h = 1e-4); magnitudes below 1e-3 are compared at 1e-3.
double second_derivative_error(int instances, std::uint64_t seed);
/// Largest relative gap between power iteration (tol 1e-12) and the dense SVD of the network Jacobian.
double spectral_norm_gap(int instances, std::uint64_t seed);

/// Analytic-solution errors and convergence slopes of every reference solver.
/// Slope rows hold |slope - nominal| against the allowed window.
std::vector<Check> solver_checks();

/// Attack contracts on random data: worst ball violation, idempotence and
/// non-expansiveness defects, and the change made by a zero-radius attack.
std::vector<Check> projection_checks(int trials, std::uint64_t seed);

}  // namespace stablepde::cli
