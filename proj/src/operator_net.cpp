#include "stablepde/operator_net.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <random>

namespace stablepde {

std::string to_string(Transform t) {
  switch (t) {
    case Transform::none: return "none";
    case Transform::dirichlet_1d: return "dirichlet_1d";
    case Transform::dirichlet_2d_space: return "dirichlet_2d_space";
    case Transform::zero_ic_dirichlet_bc: return "zero_ic_dirichlet_bc";
  }
  return "none";
}

Transform transform_from_string(const std::string& s) {
  if (s == "none") return Transform::none;
  if (s == "dirichlet_1d") return Transform::dirichlet_1d;
  if (s == "dirichlet_2d_space") return Transform::dirichlet_2d_space;
  if (s == "zero_ic_dirichlet_bc") return Transform::zero_ic_dirichlet_bc;
  throw InvalidArgument("unknown transform '" + s + "'");
}

ArchSpec ArchSpec::deeponet(int sensors, int coord_dim, int width, int depth, Transform transform) {
  ArchSpec a;
  a.branch_widths.push_back(sensors);
  a.trunk_widths.push_back(coord_dim);
  for (int i = 0; i < depth; ++i) {
    a.branch_widths.push_back(width);
    a.trunk_widths.push_back(width);
  }
  a.transform = transform;
  return a;
}

void ArchSpec::validate() const {
  if (branch_widths.size() < 2 || trunk_widths.size() < 2) {
    throw InvalidArgument("branch and trunk need an input width and at least one layer");
  }
  for (int w : branch_widths) {
    if (w <= 0) throw InvalidArgument("branch width must be positive, got " + std::to_string(w));
  }
  for (int w : trunk_widths) {
    if (w <= 0) throw InvalidArgument("trunk width must be positive, got " + std::to_string(w));
  }
  if (branch_widths.back() != trunk_widths.back()) {
    throw InvalidArgument("branch output width " + std::to_string(branch_widths.back()) +
                          " differs from trunk output width " + std::to_string(trunk_widths.back()));
  }
  const int d = coord_dim();
  if (d > 2) throw InvalidArgument("coordinate dimension must be 1 or 2");
  if (transform == Transform::dirichlet_1d && d != 1) {
    throw InvalidArgument("dirichlet_1d transform needs 1-d coordinates");
  }
  if ((transform == Transform::dirichlet_2d_space || transform == Transform::zero_ic_dirichlet_bc) &&
      d != 2) {
    throw InvalidArgument(to_string(transform) + " transform needs 2-d coordinates");
  }
}

std::size_t DeepONetParams::parameter_count() const {
  std::size_t n = 1;
  for (const auto& l : branch) n += l.weight.size() + l.bias.size();
  for (const auto& l : trunk) n += l.weight.size() + l.bias.size();
  return n;
}

bool DeepONetParams::all_finite() const {
  auto ok = [](const DenseLayer& l) { return l.weight.allFinite() && l.bias.allFinite(); };
  for (const auto& l : branch) {
    if (!ok(l)) return false;
  }
  for (const auto& l : trunk) {
    if (!ok(l)) return false;
  }
  return std::isfinite(output_bias);
}

bool DeepONetParams::operator==(const DeepONetParams& o) const {
  auto same = [](const std::vector<DenseLayer>& a, const std::vector<DenseLayer>& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
      if (a[i].weight.rows() != b[i].weight.rows() || a[i].weight.cols() != b[i].weight.cols() ||
          a[i].bias.size() != b[i].bias.size()) {
        return false;
      }
      if (std::memcmp(a[i].weight.data(), b[i].weight.data(), sizeof(double) * a[i].weight.size()) != 0 ||
          std::memcmp(a[i].bias.data(), b[i].bias.data(), sizeof(double) * a[i].bias.size()) != 0) {
        return false;
      }
    }
    return true;
  };
  return same(branch, o.branch) && same(trunk, o.trunk) &&
         std::memcmp(&output_bias, &o.output_bias, sizeof(double)) == 0;
}

namespace {

std::vector<DenseLayer> make_layers(const std::vector<int>& widths, std::mt19937_64* rng) {
  std::vector<DenseLayer> layers;
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    const int fan_in = widths[i];
    const int fan_out = widths[i + 1];
    DenseLayer l;
    l.weight = Eigen::MatrixXd::Zero(fan_in, fan_out);
    l.bias = Eigen::RowVectorXd::Zero(fan_out);
    if (rng != nullptr) {
      std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / (fan_in + fan_out)));
      for (int r = 0; r < fan_in; ++r) {
        for (int c = 0; c < fan_out; ++c) l.weight(r, c) = normal(*rng);
      }
    }
    layers.push_back(std::move(l));
  }
  return layers;
}

}  // namespace

DeepONetParams init_params(const ArchSpec& arch, std::uint64_t seed) {
  arch.validate();
  std::mt19937_64 rng(seed);
  DeepONetParams p;
  p.branch = make_layers(arch.branch_widths, &rng);
  p.trunk = make_layers(arch.trunk_widths, &rng);
  p.output_bias = 0.0;
  return p;
}

DeepONetParams zero_params(const ArchSpec& arch) {
  arch.validate();
  DeepONetParams p;
  p.branch = make_layers(arch.branch_widths, nullptr);
  p.trunk = make_layers(arch.trunk_widths, nullptr);
  return p;
}

std::vector<std::string> block_names(const ArchSpec& arch) {
  std::vector<std::string> names;
  for (std::size_t i = 0; i + 1 < arch.branch_widths.size(); ++i) {
    names.push_back("branch." + std::to_string(i) + ".weight");
    names.push_back("branch." + std::to_string(i) + ".bias");
  }
  for (std::size_t i = 0; i + 1 < arch.trunk_widths.size(); ++i) {
    names.push_back("trunk." + std::to_string(i) + ".weight");
    names.push_back("trunk." + std::to_string(i) + ".bias");
  }
  names.push_back("output_bias");
  return names;
}

std::vector<std::size_t> block_offsets(const ArchSpec& arch) {
  std::vector<std::size_t> off{0};
  auto add = [&](std::size_t n) { off.push_back(off.back() + n); };
  for (std::size_t i = 0; i + 1 < arch.branch_widths.size(); ++i) {
    add(static_cast<std::size_t>(arch.branch_widths[i]) * arch.branch_widths[i + 1]);
    add(arch.branch_widths[i + 1]);
  }
  for (std::size_t i = 0; i + 1 < arch.trunk_widths.size(); ++i) {
    add(static_cast<std::size_t>(arch.trunk_widths[i]) * arch.trunk_widths[i + 1]);
    add(arch.trunk_widths[i + 1]);
  }
  add(1);
  return off;
}

Eigen::VectorXd flatten(const DeepONetParams& p) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(p.parameter_count()));
  Eigen::Index k = 0;
  auto put = [&](const auto& m) {
    out.segment(k, m.size()) = Eigen::Map<const Eigen::VectorXd>(m.data(), m.size());
    k += m.size();
  };
  for (const auto& l : p.branch) {
    put(l.weight);
    put(l.bias);
  }
  for (const auto& l : p.trunk) {
    put(l.weight);
    put(l.bias);
  }
  out[k] = p.output_bias;
  return out;
}

DeepONetParams unflatten(const ArchSpec& arch, const Eigen::VectorXd& flat) {
  DeepONetParams p = zero_params(arch);
  if (static_cast<std::size_t>(flat.size()) != p.parameter_count()) {
    throw ShapeError("unflatten: expected " + std::to_string(p.parameter_count()) + " values, got " +
                     std::to_string(flat.size()));
  }
  Eigen::Index k = 0;
  auto take = [&](auto& m) {
    Eigen::Map<Eigen::VectorXd>(m.data(), m.size()) = flat.segment(k, m.size());
    k += m.size();
  };
  for (auto& l : p.branch) {
    take(l.weight);
    take(l.bias);
  }
  for (auto& l : p.trunk) {
    take(l.weight);
    take(l.bias);
  }
  p.output_bias = flat[k];
  return p;
}

TransformMask transform_mask(Transform t, const Eigen::MatrixXd& coords) {
  const Eigen::Index n = coords.rows();
  TransformMask m;
  m.value = Eigen::VectorXd::Ones(n);
  for (auto& v : m.d1) v = Eigen::VectorXd::Zero(n);
  for (auto& v : m.d2) v = Eigen::VectorXd::Zero(n);
  switch (t) {
    case Transform::none:
      break;
    case Transform::dirichlet_1d:
      for (Eigen::Index i = 0; i < n; ++i) {
        const double y = coords(i, 0);
        m.value[i] = y * (1.0 - y);
        m.d1[0][i] = 1.0 - 2.0 * y;
        m.d2[0][i] = -2.0;
      }
      break;
    case Transform::dirichlet_2d_space:
      for (Eigen::Index i = 0; i < n; ++i) {
        const double x = coords(i, 0);
        const double y = coords(i, 1);
        const double gx = x * (1.0 - x);
        const double gy = y * (1.0 - y);
        m.value[i] = gx * gy;
        m.d1[0][i] = (1.0 - 2.0 * x) * gy;
        m.d1[1][i] = gx * (1.0 - 2.0 * y);
        m.d2[0][i] = -2.0 * gy;
        m.d2[1][i] = -2.0 * gx;
      }
      break;
    case Transform::zero_ic_dirichlet_bc:
      for (Eigen::Index i = 0; i < n; ++i) {
        const double x = coords(i, 0);
        const double tt = coords(i, 1);
        const double gx = x * (1.0 - x);
        m.value[i] = tt * gx;
        m.d1[0][i] = tt * (1.0 - 2.0 * x);
        m.d1[1][i] = gx;
        m.d2[0][i] = -2.0 * tt;
        m.d2[1][i] = 0.0;
      }
      break;
  }
  return m;
}

namespace {

void check_shapes(const ArchSpec& arch, Eigen::Index sensors, Eigen::Index dim, const char* who) {
  arch.validate();
  if (sensors != arch.sensor_count()) {
    throw ShapeError(std::string(who) + ": expected " + std::to_string(arch.sensor_count()) +
                     " sensor values, got " + std::to_string(sensors));
  }
  if (dim != arch.coord_dim()) {
    throw ShapeError(std::string(who) + ": expected " + std::to_string(arch.coord_dim()) +
                     "-d coordinates, got " + std::to_string(dim));
  }
}

}  // namespace

Eigen::MatrixXd forward(const ArchSpec& arch, const DeepONetParams& params,
                        const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& coords) {
  check_shapes(arch, inputs.cols(), coords.cols(), "forward");
  Tape<double> tape;
  auto net = record_params(tape, params, false);
  auto field = evaluate_field(arch, net, tape.constant(inputs), coords, JetRequest::none());
  return field.u.value();
}

Eigen::VectorXd forward(const ArchSpec& arch, const DeepONetParams& params, const Eigen::VectorXd& f,
                        const Eigen::MatrixXd& coords) {
  Eigen::MatrixXd row = f.transpose();
  return forward(arch, params, row, coords).row(0).transpose();
}

Eigen::MatrixXd raw_forward(const ArchSpec& arch, const DeepONetParams& params,
                            const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& coords) {
  ArchSpec plain = arch;
  plain.transform = Transform::none;
  return forward(plain, params, inputs, coords);
}

Eigen::VectorXd forward_grad_f(const ArchSpec& arch, const DeepONetParams& params,
                               const Eigen::VectorXd& f, const Eigen::MatrixXd& coords,
                               const Eigen::VectorXd& weights) {
  if (weights.size() != coords.rows()) throw ShapeError("forward_grad_f: one weight per coordinate row");
  Matrix<double> w = weights.transpose();
  return forward_grad_f(arch, params, f, coords, [&w](Tape<double>& tape, Var<double> u) {
    return sum(u * tape.constant(w));
  });
}

namespace {

diffkit::AxisDerivatives coordinate_derivatives(const ArchSpec& arch, const DeepONetParams& params,
                                                const Eigen::VectorXd& f,
                                                const Eigen::RowVectorXd& coord, int axis) {
  check_shapes(arch, f.size(), coord.size(), "coordinate derivative");
  if (axis < 0 || axis >= arch.coord_dim()) {
    throw InvalidArgument("axis " + std::to_string(axis) + " out of range");
  }
  // The transform mask depends on the coordinate, so it is rebuilt on the
  // dual tape from the coordinate leaf rather than taken as a constant.
  auto fn = [&](Tape<diffkit::DualD>& tape, Var<diffkit::DualD> y) {
    using S = diffkit::DualD;
    auto net = record_params(tape, params, false);
    auto b = branch_features(net, tape.constant(f.transpose().cast<S>()));
    Var<S> h = y;
    for (std::size_t i = 0; i < net.trunk_w.size(); ++i) {
      h = tanh(detail::add_row_bias(matmul(h, net.trunk_w[i]), net.trunk_b[i]));
    }
    auto u = matmul(b, h, false, true) + net.output_bias;
    auto column = [&](int c) {
      Matrix<S> sel = Matrix<S>::Zero(y.cols(), 1);
      sel(c, 0) = S(1.0);
      return matmul(y, tape.constant(std::move(sel)));
    };
    switch (arch.transform) {
      case Transform::none:
        return u;
      case Transform::dirichlet_1d: {
        auto x = column(0);
        return u * (x * (1.0 - x));
      }
      case Transform::dirichlet_2d_space: {
        auto x = column(0);
        auto z = column(1);
        return u * (x * (1.0 - x)) * (z * (1.0 - z));
      }
      case Transform::zero_ic_dirichlet_bc: {
        auto x = column(0);
        auto t = column(1);
        return u * (t * (x * (1.0 - x)));
      }
    }
    return u;
  };
  return diffkit::axis_derivatives(fn, coord, axis);
}

}  // namespace

double second_coordinate_derivative(const ArchSpec& arch, const DeepONetParams& params,
                                    const Eigen::VectorXd& f, const Eigen::RowVectorXd& coord,
                                    int axis) {
  return coordinate_derivatives(arch, params, f, coord, axis).second;
}

double first_coordinate_derivative(const ArchSpec& arch, const DeepONetParams& params,
                                   const Eigen::VectorXd& f, const Eigen::RowVectorXd& coord,
                                   int axis) {
  return coordinate_derivatives(arch, params, f, coord, axis).first;
}

OperatorMap::OperatorMap(const ArchSpec& arch, const DeepONetParams& params,
                         const Eigen::MatrixXd& coords)
    : arch_(arch), params_(&params) {
  check_shapes(arch, arch.sensor_count(), coords.cols(), "OperatorMap");
  Tape<double> tape;
  auto net = record_params(tape, params, false);
  trunk_ = trunk_features(net, coords, JetRequest::none()).value.value();
  mask_ = transform_mask(arch.transform, coords).value;
}

// ---------------------------------------------------------------------------
// Checkpoint IO

namespace {

constexpr char kMagic[8] = {'S', 'P', 'D', 'N', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw IoError("checkpoint truncated");
  return v;
}

void put_widths(std::ostream& os, const std::vector<int>& w) {
  put<std::uint32_t>(os, static_cast<std::uint32_t>(w.size()));
  for (int x : w) put<std::int32_t>(os, x);
}

std::vector<int> get_widths(std::istream& is) {
  const auto n = get<std::uint32_t>(is);
  if (n > 1024) throw IoError("checkpoint: implausible layer count");
  std::vector<int> w(n);
  for (auto& x : w) x = get<std::int32_t>(is);
  return w;
}

void put_array(std::ostream& os, const double* data, std::int64_t rows, std::int64_t cols) {
  put<std::int64_t>(os, rows);
  put<std::int64_t>(os, cols);
  os.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(sizeof(double) * rows * cols));
}

template <typename M>
void get_array(std::istream& is, M& m) {
  const auto rows = get<std::int64_t>(is);
  const auto cols = get<std::int64_t>(is);
  if (rows != m.rows() || cols != m.cols()) throw IoError("checkpoint: array shape does not match arch");
  is.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(sizeof(double) * rows * cols));
  if (!is) throw IoError("checkpoint truncated");
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  ckpt.arch.validate();
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  os.write(kMagic, sizeof(kMagic));
  put(os, kVersion);
  put<std::uint32_t>(os, static_cast<std::uint32_t>(ckpt.arch.activation));
  put<std::uint32_t>(os, static_cast<std::uint32_t>(ckpt.arch.transform));
  put_widths(os, ckpt.arch.branch_widths);
  put_widths(os, ckpt.arch.trunk_widths);
  put(os, ckpt.seed);
  put(os, ckpt.step);
  for (const auto* layers : {&ckpt.params.branch, &ckpt.params.trunk}) {
    for (const auto& l : *layers) {
      put_array(os, l.weight.data(), l.weight.rows(), l.weight.cols());
      put_array(os, l.bias.data(), l.bias.rows(), l.bias.cols());
    }
  }
  put(os, ckpt.params.output_bias);
  if (!os) throw IoError("failed writing " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint " + path.string());
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw IoError(path.string() + " is not a checkpoint");
  }
  if (get<std::uint32_t>(is) != kVersion) throw IoError("unsupported checkpoint version");
  Checkpoint c;
  const auto act = get<std::uint32_t>(is);
  const auto tr = get<std::uint32_t>(is);
  if (act != 0 || tr > 3) throw IoError("checkpoint: unknown activation or transform code");
  c.arch.activation = Activation::tanh;
  c.arch.transform = static_cast<Transform>(tr);
  c.arch.branch_widths = get_widths(is);
  c.arch.trunk_widths = get_widths(is);
  c.arch.validate();
  c.seed = get<std::uint64_t>(is);
  c.step = get<std::uint64_t>(is);
  c.params = zero_params(c.arch);
  for (auto* layers : {&c.params.branch, &c.params.trunk}) {
    for (auto& l : *layers) {
      get_array(is, l.weight);
      get_array(is, l.bias);
    }
  }
  c.params.output_bias = get<double>(is);
  return c;
}

}  // namespace stablepde
