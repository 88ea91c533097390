#include "stablepde/function_spaces.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "stablepde/csv.hpp"
#include "stablepde/errors.hpp"

namespace stablepde {

std::string to_string(SamplerKind k) {
  switch (k) {
    case SamplerKind::grf: return "grf";
    case SamplerKind::polynomial_deg3: return "polynomial_deg3";
    case SamplerKind::bitrig: return "bitrig";
    case SamplerKind::rescaled_grf: return "rescaled_grf";
    case SamplerKind::fixed: return "fixed";
  }
  return "fixed";
}

SamplerKind sampler_from_string(const std::string& s) {
  for (SamplerKind k : {SamplerKind::grf, SamplerKind::polynomial_deg3, SamplerKind::bitrig, SamplerKind::rescaled_grf,
                        SamplerKind::fixed}) {
    if (to_string(k) == s) return k;
  }
  throw InvalidArgument("unknown sampler '" + s + "'");
}

Eigen::VectorXd uniform_sensors(int m) {
  if (m < 2) throw InvalidArgument("need at least two sensors");
  return Eigen::VectorXd::LinSpaced(m, 0.0, 1.0);
}

namespace {

void check_sensors(const Eigen::VectorXd& xs) {
  if (xs.size() == 0) throw InvalidArgument("empty sensor set");
  for (Eigen::Index i = 0; i < xs.size(); ++i) {
    if (!(xs[i] >= 0.0 && xs[i] <= 1.0)) throw InvalidArgument("sensor outside [0, 1]");
    if (i > 0 && !(xs[i] > xs[i - 1])) throw InvalidArgument("sensors must be strictly increasing");
  }
}

constexpr double kMaxJitter = 1e-6;
constexpr double kMinEscalatedJitter = 1e-10;

}  // namespace

Eigen::MatrixXd rbf_kernel(const GrfSpec& spec, const Eigen::VectorXd& xs) {
  const Eigen::Index m = xs.size();
  Eigen::MatrixXd k(m, m);
  const double denom = 2.0 * spec.length_scale * spec.length_scale;
  for (Eigen::Index i = 0; i < m; ++i) {
    for (Eigen::Index j = 0; j < m; ++j) {
      const double d = xs[i] - xs[j];
      k(i, j) = spec.variance * std::exp(-(d * d) / denom);
    }
  }
  return k;
}

GrfSampler::GrfSampler(const GrfSpec& spec, const Eigen::VectorXd& sensor_xs)
    : spec_(spec), xs_(sensor_xs) {
  if (!(spec.length_scale > 0.0)) throw InvalidArgument("GRF length scale must be positive");
  if (!(spec.variance > 0.0)) throw InvalidArgument("GRF variance must be positive");
  if (!(spec.jitter >= 0.0)) throw InvalidArgument("GRF jitter must be non-negative");
  check_sensors(sensor_xs);
  const Eigen::MatrixXd k = rbf_kernel(spec, sensor_xs);
  if (spec.jitter == 0.0 && semidefinite_factor(k)) return;
  double jitter = spec.jitter;
  for (;;) {
    Eigen::MatrixXd kj = k;
    kj.diagonal().array() += jitter;
    Eigen::LLT<Eigen::MatrixXd> llt(kj);
    if (llt.info() == Eigen::Success) {
      lower_ = llt.matrixL();
      jitter_used_ = jitter;
      return;
    }
    jitter = std::max(jitter * 10.0, kMinEscalatedJitter);
    if (jitter > kMaxJitter * (1.0 + 1e-12)) {
      throw NumericalError("GRF covariance is not positive definite even with jitter 1e-6 (l=" +
                           std::to_string(spec.length_scale) + ")");
    }
  }
}

bool GrfSampler::semidefinite_factor(const Eigen::MatrixXd& k) {
  // K = P^T L D L^T P with pivoting; the factor P^T L sqrt(D) is exact for
  // rank-deficient kernels where plain Cholesky needs a nugget.
  // Zero pivots make Eigen flag NumericalIssue, so accept by reconstruction.
  Eigen::LDLT<Eigen::MatrixXd> ldlt(k);
  const Eigen::VectorXd d = ldlt.vectorD();
  const double tol = 1e-12 * spec_.variance * static_cast<double>(k.rows());
  if (!d.allFinite() || d.minCoeff() < -tol) return false;
  // pivots at rounding level carry no signal; drop them
  const double floor = std::numeric_limits<double>::epsilon() * static_cast<double>(k.rows()) * d.maxCoeff();
  const Eigen::VectorXd root = (d.array() > floor).select(d.array().sqrt(), 0.0).matrix();
  const Eigen::MatrixXd l = ldlt.matrixL();
  Eigen::MatrixXd factor = ldlt.transpositionsP().transpose() * (l * root.asDiagonal());
  if ((factor * factor.transpose() - k).cwiseAbs().maxCoeff() > tol) return false;
  lower_ = std::move(factor);
  jitter_used_ = 0.0;
  return true;
}

Eigen::MatrixXd GrfSampler::sample_values(std::span<const std::uint64_t> seeds) const {
  const Eigen::Index m = xs_.size();
  Eigen::MatrixXd z(m, static_cast<Eigen::Index>(seeds.size()));
  for (std::size_t j = 0; j < seeds.size(); ++j) {
    std::mt19937_64 rng(seeds[j]);
    std::normal_distribution<double> normal;
    for (Eigen::Index i = 0; i < m; ++i) z(i, static_cast<Eigen::Index>(j)) = normal(rng);
  }
  return lower_ * z;
}

FunctionSample GrfSampler::sample(std::uint64_t seed) const {
  FunctionSample s;
  s.sensor_xs = xs_;
  const std::uint64_t seeds[1] = {seed};
  s.values = sample_values(seeds).col(0);
  s.meta = {SamplerKind::grf, seed, spec_.length_scale};
  return s;
}

FunctionSample sample_grf(const GrfSpec& spec, const Eigen::VectorXd& sensor_xs, std::uint64_t seed) {
  return GrfSampler(spec, sensor_xs).sample(seed);
}

Eigen::Vector4d polynomial_deg3_coefficients(const CoeffRange& range, std::uint64_t seed) {
  if (!(range.hi >= range.lo)) throw InvalidArgument("coefficient range inverted");
  Eigen::Vector4d c;
  if (range.hi == range.lo) {
    c.setConstant(range.lo);
    return c;
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(range.lo, range.hi);
  for (int k = 0; k < 4; ++k) c[k] = u(rng);
  return c;
}

Eigen::VectorXd eval_polynomial(const Eigen::Vector4d& c, const Eigen::VectorXd& xs) {
  // Horner
  return (((c[3] * xs.array() + c[2]) * xs.array() + c[1]) * xs.array() + c[0]).matrix();
}

FunctionSample sample_polynomial_deg3(const CoeffRange& range, const Eigen::VectorXd& sensor_xs,
                                      std::uint64_t seed) {
  check_sensors(sensor_xs);
  FunctionSample s;
  s.sensor_xs = sensor_xs;
  s.values = eval_polynomial(polynomial_deg3_coefficients(range, seed), sensor_xs);
  s.meta = {SamplerKind::polynomial_deg3, seed, 0.0};
  return s;
}

Eigen::VectorXd eval_bitrig(const Eigen::MatrixXd& coefficients, const Eigen::MatrixXd& points) {
  using std::numbers::pi;
  const Eigen::Index modes_r = coefficients.rows();
  const Eigen::Index modes_s = coefficients.cols();
  Eigen::VectorXd out = Eigen::VectorXd::Zero(points.rows());
  for (Eigen::Index p = 0; p < points.rows(); ++p) {
    double acc = 0.0;
    for (Eigen::Index r = 0; r < modes_r; ++r) {
      const double sx = std::sin(static_cast<double>(r + 1) * pi * points(p, 0));
      for (Eigen::Index s = 0; s < modes_s; ++s) {
        acc += coefficients(r, s) * sx * std::sin(static_cast<double>(s + 1) * pi * points(p, 1));
      }
    }
    out[p] = acc;
  }
  return out;
}

BitrigSample sample_bitrig(int modes_r, int modes_s, const Eigen::MatrixXd& grid, std::uint64_t seed) {
  if (modes_r < 1 || modes_s < 1) throw InvalidArgument("bi-trigonometric mode counts must be >= 1");
  if (grid.cols() != 2) throw InvalidArgument("bi-trigonometric grid must be 2-d");
  BitrigSample b;
  b.seed = seed;
  b.coefficients.resize(modes_r, modes_s);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  for (int r = 0; r < modes_r; ++r) {
    for (int s = 0; s < modes_s; ++s) b.coefficients(r, s) = normal(rng);
  }
  b.values = eval_bitrig(b.coefficients, grid);
  return b;
}

Eigen::VectorXd rescale_to_range(const Eigen::VectorXd& values, double lo, double hi) {
  if (!(hi > lo)) throw InvalidArgument("rescale_to_range needs hi > lo");
  const double vmin = values.minCoeff();
  const double vmax = values.maxCoeff();
  if (!(vmax > vmin)) return Eigen::VectorXd::Constant(values.size(), 0.5 * (lo + hi));
  const double scale = (hi - lo) / (vmax - vmin);
  Eigen::VectorXd out = ((values.array() - vmin) * scale + lo).matrix();
  // pin the extremes so a second pass is a no-op
  for (Eigen::Index i = 0; i < out.size(); ++i) {
    if (values[i] == vmin) out[i] = lo;
    if (values[i] == vmax) out[i] = hi;
  }
  return out;
}

FunctionSample rescale_to_range(const FunctionSample& sample, double lo, double hi) {
  FunctionSample s = sample;
  s.values = rescale_to_range(sample.values, lo, hi);
  if (s.meta.kind == SamplerKind::grf) s.meta.kind = SamplerKind::rescaled_grf;
  return s;
}

double radical_inverse_base2(std::uint64_t i) {
  double inv = 0.0;
  double digit = 0.5;
  while (i != 0) {
    if (i & 1u) inv += digit;
    digit *= 0.5;
    i >>= 1u;
  }
  return inv;
}

Eigen::MatrixXd hammersley(int n, int dim) {
  if (n < 1) throw InvalidArgument("hammersley needs n >= 1");
  if (dim != 1 && dim != 2) throw InvalidArgument("hammersley supports dim 1 or 2, got " + std::to_string(dim));
  Eigen::MatrixXd pts(n, dim);
  for (int i = 0; i < n; ++i) {
    pts(i, 0) = static_cast<double>(i) / n;
    if (dim == 2) pts(i, 1) = radical_inverse_base2(static_cast<std::uint64_t>(i));
  }
  return pts;
}

double star_discrepancy_2d(const Eigen::MatrixXd& points) {
  if (points.cols() != 2) throw InvalidArgument("star_discrepancy_2d needs 2-d points");
  const Eigen::Index n = points.rows();
  std::vector<double> us(points.col(0).data(), points.col(0).data() + n);
  std::vector<double> vs(points.col(1).data(), points.col(1).data() + n);
  us.push_back(1.0);
  vs.push_back(1.0);
  std::sort(us.begin(), us.end());
  std::sort(vs.begin(), vs.end());
  double worst = 0.0;
  // Local discrepancy attains its sup at box corners built from point
  // coordinates; check both open and closed boxes.
  for (double u : us) {
    for (double v : vs) {
      Eigen::Index open = 0;
      Eigen::Index closed = 0;
      for (Eigen::Index i = 0; i < n; ++i) {
        const double x = points(i, 0);
        const double y = points(i, 1);
        if (x < u && y < v) ++open;
        if (x <= u && y <= v) ++closed;
      }
      const double vol = u * v;
      worst = std::max(worst, vol - static_cast<double>(open) / n);
      worst = std::max(worst, static_cast<double>(closed) / n - vol);
    }
  }
  return worst;
}

FunctionSample boundary_mask_profile(const FunctionSample& sample) {
  FunctionSample s = sample;
  s.values = (sample.values.array() * sample.sensor_xs.array() * (1.0 - sample.sensor_xs.array())).matrix();
  return s;
}

namespace {

// Index of the left node of the cell containing q, and the weight of the right node.
std::pair<Eigen::Index, double> locate(const Eigen::VectorXd& xs, double q) {
  const Eigen::Index m = xs.size();
  if (m == 1 || q <= xs[0]) return {0, 0.0};
  if (q >= xs[m - 1]) return {m - 2, 1.0};
  const double* begin = xs.data();
  const double* it = std::upper_bound(begin, begin + m, q);
  const Eigen::Index right = it - begin;
  const Eigen::Index left = right - 1;
  const double w = (q - xs[left]) / (xs[right] - xs[left]);
  return {left, w};
}

}  // namespace

Eigen::MatrixXd linear_interpolation_matrix(const Eigen::VectorXd& sensor_xs, const Eigen::VectorXd& query) {
  const Eigen::Index m = sensor_xs.size();
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(query.size(), m);
  for (Eigen::Index j = 0; j < query.size(); ++j) {
    if (m == 1) {
      w(j, 0) = 1.0;
      continue;
    }
    const auto [left, t] = locate(sensor_xs, query[j]);
    w(j, left) += 1.0 - t;
    w(j, left + 1) += t;
  }
  return w;
}

Eigen::MatrixXd tensor_grid(const Eigen::VectorXd& axis_x, const Eigen::VectorXd& axis_y) {
  Eigen::MatrixXd g(axis_x.size() * axis_y.size(), 2);
  for (Eigen::Index i = 0; i < axis_x.size(); ++i) {
    for (Eigen::Index j = 0; j < axis_y.size(); ++j) {
      g(i * axis_y.size() + j, 0) = axis_x[i];
      g(i * axis_y.size() + j, 1) = axis_y[j];
    }
  }
  return g;
}

Eigen::MatrixXd bilinear_interpolation_matrix(const Eigen::VectorXd& axis_x, const Eigen::VectorXd& axis_y,
                                              const Eigen::MatrixXd& query) {
  if (axis_x.size() < 2 || axis_y.size() < 2) throw InvalidArgument("bilinear grid needs >= 2 nodes per axis");
  const Eigen::Index ny = axis_y.size();
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(query.rows(), axis_x.size() * ny);
  for (Eigen::Index p = 0; p < query.rows(); ++p) {
    const auto [i, tx] = locate(axis_x, query(p, 0));
    const auto [j, ty] = locate(axis_y, query(p, 1));
    w(p, i * ny + j) += (1 - tx) * (1 - ty);
    w(p, (i + 1) * ny + j) += tx * (1 - ty);
    w(p, i * ny + j + 1) += (1 - tx) * ty;
    w(p, (i + 1) * ny + j + 1) += tx * ty;
  }
  return w;
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream, std::uint64_t slot) {
  // splitmix64 finalizer over a simple combination
  auto mix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  return mix(mix(base ^ stream) + slot);
}

void write_samples_csv(const std::filesystem::path& path, std::span<const FunctionSample> samples) {
  if (samples.empty()) throw InvalidArgument("no samples to write");
  const Eigen::Index m = samples.front().values.size();
  std::vector<std::string> header;
  for (Eigen::Index i = 0; i < m; ++i) header.push_back("s" + std::to_string(i));
  header.insert(header.end(), {"kind", "seed", "length_scale"});
  CsvWriter csv(path, header);
  for (const auto& s : samples) {
    if (s.values.size() != m) throw ShapeError("samples have differing sensor counts");
    std::vector<std::string> row;
    for (Eigen::Index i = 0; i < m; ++i) row.push_back(CsvWriter::num(s.values[i]));
    row.push_back(to_string(s.meta.kind));
    row.push_back(std::to_string(s.meta.seed));
    row.push_back(CsvWriter::num(s.meta.length_scale));
    csv.write_row(row);
  }
}

}  // namespace stablepde
