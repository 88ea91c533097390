#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <numbers>
#include <vector>

#include "stablepde/csv.hpp"
#include "stablepde/errors.hpp"
#include "stablepde/function_spaces.hpp"

using namespace stablepde;

TEST(Grf, SameSeedSameValues) {
  const auto xs = uniform_sensors(100);
  const GrfSpec spec{0.2, 1.0, 1e-10};
  const auto a = sample_grf(spec, xs, 42);
  const auto b = sample_grf(spec, xs, 42);
  EXPECT_EQ(a.values, b.values);
  EXPECT_NE(a.values, sample_grf(spec, xs, 43).values);
  EXPECT_EQ(a.meta.kind, SamplerKind::grf);
  EXPECT_EQ(a.meta.seed, 42u);
}

TEST(Grf, InfiniteLengthScaleGivesConstantField) {
  const auto xs = uniform_sensors(100);
  // Without a nugget the fully correlated kernel is rank one up to rounding;
  // the sampler escalates to the smallest jitter that factors.
  const GrfSampler sampler(GrfSpec{1e6, 1.0, 0.0}, xs);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto v = sampler.sample(seed).values;
    EXPECT_LT(v.maxCoeff() - v.minCoeff(), 1e-6) << "seed " << seed << " jitter " << sampler.jitter_used();
  }
}

TEST(Grf, EmpiricalCovarianceMatchesKernel) {
  const auto xs = uniform_sensors(100);
  const GrfSpec spec{0.2, 1.0, 1e-10};
  const GrfSampler sampler(spec, xs);
  std::vector<std::uint64_t> seeds(5000);
  for (std::size_t i = 0; i < seeds.size(); ++i) seeds[i] = derive_seed(7, 0, i);
  const Eigen::MatrixXd draws = sampler.sample_values(seeds);  // m x N
  const Eigen::VectorXd mean = draws.rowwise().mean();
  const Eigen::MatrixXd centered = draws.colwise() - mean;
  const Eigen::MatrixXd cov = centered * centered.transpose() / static_cast<double>(seeds.size() - 1);

  Eigen::MatrixXd kernel(100, 100);
  for (int i = 0; i < 100; ++i)
    for (int j = 0; j < 100; ++j)
      kernel(i, j) = std::exp(-std::pow(xs[i] - xs[j], 2) / (2 * 0.2 * 0.2));

  EXPECT_LT((cov - kernel).cwiseAbs().maxCoeff(), 0.1);
  for (int i = 0; i < 100; ++i) {
    EXPECT_NEAR(cov(i, i), 1.0, 0.1) << "sensor " << i;
  }
}

TEST(Grf, RejectsBadSpecAndSensors) {
  const auto xs = uniform_sensors(10);
  EXPECT_THROW(GrfSampler(GrfSpec{0.0, 1.0, 1e-10}, xs), InvalidArgument);
  EXPECT_THROW(GrfSampler(GrfSpec{0.2, 1.0, -1.0}, xs), InvalidArgument);
  Eigen::VectorXd unsorted(3);
  unsorted << 0.0, 0.7, 0.3;
  EXPECT_THROW(GrfSampler(GrfSpec{}, unsorted), InvalidArgument);
}

TEST(Grf, LongLengthScaleFactorsWithEscalatedJitter) {
  const GrfSampler sampler(GrfSpec{1.4, 1.0, 1e-10}, uniform_sensors(100));
  EXPECT_GE(sampler.jitter_used(), 1e-10);
  EXPECT_LE(sampler.jitter_used(), 1e-6);
}

TEST(Polynomial, ZeroRangeGivesZeroFunction) {
  const auto s = sample_polynomial_deg3({0.0, 0.0}, uniform_sensors(50), 3);
  EXPECT_EQ(s.values, Eigen::VectorXd::Zero(50));
}

TEST(Polynomial, CubeIsExact) {
  const auto xs = uniform_sensors(50);
  const auto v = eval_polynomial(Eigen::Vector4d(0, 0, 0, 1), xs);
  for (int i = 0; i < 50; ++i) EXPECT_EQ(v[i], xs[i] * xs[i] * xs[i]);
}

TEST(Polynomial, SeedDeterminismAndRange) {
  const auto a = polynomial_deg3_coefficients({-1, 1}, 11);
  EXPECT_EQ(a, polynomial_deg3_coefficients({-1, 1}, 11));
  EXPECT_LE(a.cwiseAbs().maxCoeff(), 1.0);
  EXPECT_THROW(polynomial_deg3_coefficients({1, -1}, 0), InvalidArgument);
}

TEST(Bitrig, SingleModeAtCentre) {
  Eigen::MatrixXd c(1, 1);
  c << 1.0;
  Eigen::MatrixXd p(1, 2);
  p << 0.5, 0.5;
  EXPECT_NEAR(eval_bitrig(c, p)[0], 1.0, 1e-15);
}

TEST(Bitrig, VanishesOnBoundary) {
  Eigen::MatrixXd boundary(400, 2);
  for (int k = 0; k < 100; ++k) {
    const double t = k / 100.0;
    boundary.row(4 * k) << t, 0.0;
    boundary.row(4 * k + 1) << t, 1.0;
    boundary.row(4 * k + 2) << 0.0, t;
    boundary.row(4 * k + 3) << 1.0, t;
  }
  const auto s = sample_bitrig(10, 10, boundary, 5);
  EXPECT_LT(s.values.cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_EQ(s.coefficients.rows(), 10);
  EXPECT_EQ(sample_bitrig(10, 10, boundary, 5).coefficients, s.coefficients);
  EXPECT_THROW(sample_bitrig(0, 1, boundary, 5), InvalidArgument);
}

TEST(Rescale, MapsExtremes) {
  Eigen::VectorXd v(3);
  v << 0, 1, 2;
  const auto r = rescale_to_range(v, 1, 5);
  EXPECT_EQ(r, Eigen::Vector3d(1, 3, 5));
}

TEST(Rescale, ConstantGoesToMidpoint) {
  const auto r = rescale_to_range(Eigen::VectorXd::Constant(4, 2.5), 1, 5);
  EXPECT_EQ(r, Eigen::VectorXd::Constant(4, 3.0));
}

TEST(Rescale, Idempotent) {
  const auto s = sample_grf(GrfSpec{1.4, 1.0, 1e-10}, uniform_sensors(100), 9);
  const auto once = rescale_to_range(s, 1, 5);
  const auto twice = rescale_to_range(once, 1, 5);
  EXPECT_LT((once.values - twice.values).cwiseAbs().maxCoeff(), 1e-14);
  EXPECT_EQ(once.meta.kind, SamplerKind::rescaled_grf);
  EXPECT_EQ(once.values.minCoeff(), 1.0);
  EXPECT_EQ(once.values.maxCoeff(), 5.0);
}

TEST(Hammersley, FourPointsIn2d) {
  const auto p = hammersley(4, 2);
  Eigen::MatrixXd expected(4, 2);
  expected << 0, 0, 0.25, 0.5, 0.5, 0.25, 0.75, 0.75;
  EXPECT_EQ(p, expected);
}

TEST(Hammersley, TwoPointsIn1d) {
  const auto p = hammersley(2, 1);
  EXPECT_EQ(p(0, 0), 0.0);
  EXPECT_EQ(p(1, 0), 0.5);
}

TEST(Hammersley, HalfOpenUnitCube) {
  const auto p = hammersley(1000, 2);
  EXPECT_GE(p.minCoeff(), 0.0);
  EXPECT_LT(p.maxCoeff(), 1.0);
  EXPECT_THROW(hammersley(10, 3), InvalidArgument);
  EXPECT_THROW(hammersley(0, 1), InvalidArgument);
}

TEST(Hammersley, DiscrepancyDecreases) {
  EXPECT_LT(star_discrepancy_2d(hammersley(256, 2)), star_discrepancy_2d(hammersley(64, 2)));
}

TEST(Hammersley, DiscrepancyOfSinglePoint) {
  Eigen::MatrixXd p(1, 2);
  p << 0.5, 0.5;
  // closed box [0,0.5]^2 holds the point with volume 0.25; open box [0,1)^2 misses nothing
  EXPECT_NEAR(star_discrepancy_2d(p), 0.75, 1e-15);
}

TEST(BoundaryMask, EndpointsAndMidpoint) {
  FunctionSample s;
  s.sensor_xs = uniform_sensors(3);
  s.values = Eigen::Vector3d(2.0, 4.0, 6.0);
  const auto m = boundary_mask_profile(s);
  EXPECT_EQ(m.values, Eigen::Vector3d(0.0, 1.0, 0.0));
}

TEST(BoundaryMask, Linear) {
  FunctionSample a;
  a.sensor_xs = uniform_sensors(20);
  a.values = Eigen::VectorXd::LinSpaced(20, -1, 3);
  FunctionSample b = a;
  b.values = a.values.array().square();
  FunctionSample sum = a;
  sum.values = 2 * a.values + b.values;
  const auto lhs = boundary_mask_profile(sum).values;
  const auto rhs = (2 * boundary_mask_profile(a).values + boundary_mask_profile(b).values).eval();
  EXPECT_LT((lhs - rhs).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(Interpolation, ReproducesLinearFunctions) {
  const auto xs = uniform_sensors(11);
  const Eigen::VectorXd q = Eigen::VectorXd::LinSpaced(37, 0, 1);
  const auto w = linear_interpolation_matrix(xs, q);
  const Eigen::VectorXd f = (3 * xs.array() - 1).matrix();
  const Eigen::VectorXd expected = (3 * q.array() - 1).matrix();
  EXPECT_LT((w * f - expected).cwiseAbs().maxCoeff(), 1e-14);
  EXPECT_LT((w.rowwise().sum().array() - 1).abs().maxCoeff(), 1e-15);
}

TEST(Interpolation, BilinearReproducesBilinearFunctions) {
  const auto ax = uniform_sensors(7);
  const auto ay = uniform_sensors(5);
  const auto grid = tensor_grid(ax, ay);
  const Eigen::VectorXd f = (1 + 2 * grid.col(0).array() - grid.col(1).array() +
                             grid.col(0).array() * grid.col(1).array()).matrix();
  const auto q = hammersley(50, 2);
  const Eigen::VectorXd expected =
      (1 + 2 * q.col(0).array() - q.col(1).array() + q.col(0).array() * q.col(1).array()).matrix();
  EXPECT_LT((bilinear_interpolation_matrix(ax, ay, q) * f - expected).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(Seeds, DeriveSeedSeparatesSlotsAndStreams) {
  EXPECT_EQ(derive_seed(1, 2, 3), derive_seed(1, 2, 3));
  EXPECT_NE(derive_seed(1, 2, 3), derive_seed(1, 2, 4));
  EXPECT_NE(derive_seed(1, 2, 3), derive_seed(1, 3, 3));
}

TEST(SamplesCsv, ColumnsAndRoundTrip) {
  const auto xs = uniform_sensors(5);
  std::vector<FunctionSample> samples{sample_grf(GrfSpec{}, xs, 1), sample_polynomial_deg3({}, xs, 2)};
  const auto path = std::filesystem::temp_directory_path() / "stablepde_samples_test.csv";
  write_samples_csv(path, samples);
  const auto t = read_csv(path);
  const std::vector<std::string> header{"s0", "s1", "s2", "s3", "s4", "kind", "seed", "length_scale"};
  EXPECT_EQ(t.header, header);
  ASSERT_EQ(t.rows.size(), 2u);
  EXPECT_EQ(t.rows[1][5], "polynomial_deg3");
  EXPECT_EQ(std::stod(t.rows[0][3]), samples[0].values[3]);
  std::filesystem::remove(path);
}
