#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>

#include <Eigen/Cholesky>
#include <Eigen/Core>

namespace stablepde {

enum class SamplerKind { grf, polynomial_deg3, bitrig, rescaled_grf, fixed };

std::string to_string(SamplerKind k);
SamplerKind sampler_from_string(const std::string& s);

struct SampleMeta {
  SamplerKind kind = SamplerKind::fixed;
  std::uint64_t seed = 0;
  double length_scale = 0.0;  // 0 when the sampler has none
};

/// An input function discretized on sensors x_1 < ... < x_m in [0, 1].
struct FunctionSample {
  Eigen::VectorXd sensor_xs;
  Eigen::VectorXd values;
  SampleMeta meta;
};

struct GrfSpec {
  double length_scale = 0.2;
  double variance = 1.0;
  double jitter = 1e-10;
};

/// m points 0, 1/(m-1), ..., 1.
Eigen::VectorXd uniform_sensors(int m);

/// Gaussian random field on fixed sensors with kernel
/// variance * exp(-(x_i - x_j)^2 / (2 l^2)). The Cholesky factor is computed
/// once; the jitter escalates x10 (from at least 1e-10) up to 1e-6 before
/// giving up with NumericalError. With jitter 0 a pivoted LDL^T square root
/// is tried first, so the factor is then a permuted triangle.
class GrfSampler {
 public:
  GrfSampler(const GrfSpec& spec, const Eigen::VectorXd& sensor_xs);

  [[nodiscard]] FunctionSample sample(std::uint64_t seed) const;
  /// One column per draw; column j uses seed `seeds[j]`.
  [[nodiscard]] Eigen::MatrixXd sample_values(std::span<const std::uint64_t> seeds) const;

  [[nodiscard]] const Eigen::MatrixXd& factor() const { return lower_; }
  [[nodiscard]] double jitter_used() const { return jitter_used_; }
  [[nodiscard]] const GrfSpec& spec() const { return spec_; }

 private:
  GrfSpec spec_;
  bool semidefinite_factor(const Eigen::MatrixXd& k);

  Eigen::VectorXd xs_;
  Eigen::MatrixXd lower_;
  double jitter_used_ = 0.0;
};

Eigen::MatrixXd rbf_kernel(const GrfSpec& spec, const Eigen::VectorXd& xs);

FunctionSample sample_grf(const GrfSpec& spec, const Eigen::VectorXd& sensor_xs, std::uint64_t seed);

struct CoeffRange {
  double lo = -1.0;
  double hi = 1.0;
};

/// c_0 + c_1 x + c_2 x^2 + c_3 x^3 with c_k ~ U(lo, hi).
FunctionSample sample_polynomial_deg3(const CoeffRange& range, const Eigen::VectorXd& sensor_xs,
                                      std::uint64_t seed);
Eigen::Vector4d polynomial_deg3_coefficients(const CoeffRange& range, std::uint64_t seed);
Eigen::VectorXd eval_polynomial(const Eigen::Vector4d& c, const Eigen::VectorXd& xs);

/// f(x, y) = sum_{r<=R, s<=S} c_rs sin(r pi x) sin(s pi y).
struct BitrigSample {
  Eigen::MatrixXd coefficients;  // R x S, entry (r-1, s-1)
  Eigen::VectorXd values;        // one per grid row
  std::uint64_t seed = 0;
};

BitrigSample sample_bitrig(int modes_r, int modes_s, const Eigen::MatrixXd& grid, std::uint64_t seed);
Eigen::VectorXd eval_bitrig(const Eigen::MatrixXd& coefficients, const Eigen::MatrixXd& points);

/// Affine map of values onto [lo, hi]; a constant sample maps to the midpoint.
FunctionSample rescale_to_range(const FunctionSample& sample, double lo, double hi);
Eigen::VectorXd rescale_to_range(const Eigen::VectorXd& values, double lo, double hi);

/// dim 1: i/n. dim 2: (i/n, radical_inverse_2(i)). i = 0..n-1.
Eigen::MatrixXd hammersley(int n, int dim);
double radical_inverse_base2(std::uint64_t i);

/// Exact star discrepancy of a 2-d point set in [0,1]^2 (O(n^3)).
double star_discrepancy_2d(const Eigen::MatrixXd& points);

/// Multiplies sample values by x(1 - x).
FunctionSample boundary_mask_profile(const FunctionSample& sample);

/// Dense P x m matrix W with (W f)_j the piecewise-linear interpolant of
/// sensor values f at query_j. Queries outside the sensor range clamp.
Eigen::MatrixXd linear_interpolation_matrix(const Eigen::VectorXd& sensor_xs,
                                            const Eigen::VectorXd& query);

/// Tensor sensor grid: axis_x (nx) by axis_y (ny), flattened as i * ny + j.
Eigen::MatrixXd tensor_grid(const Eigen::VectorXd& axis_x, const Eigen::VectorXd& axis_y);
Eigen::MatrixXd bilinear_interpolation_matrix(const Eigen::VectorXd& axis_x,
                                              const Eigen::VectorXd& axis_y,
                                              const Eigen::MatrixXd& query);

/// Deterministic per-sample seed from a base seed, a stream index and a slot.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream, std::uint64_t slot);

/// One row per sample: s0..s{m-1}, kind, seed, length_scale.
void write_samples_csv(const std::filesystem::path& path, std::span<const FunctionSample> samples);

}  // namespace stablepde
