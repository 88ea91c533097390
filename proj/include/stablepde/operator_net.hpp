#pragma once

#include <array>
#include <type_traits>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "stablepde/diffkit/jacobian.hpp"
#include "stablepde/diffkit/tape.hpp"
#include "stablepde/errors.hpp"

namespace stablepde {

using diffkit::Matrix;
using diffkit::Tape;
using diffkit::Var;

enum class Activation { tanh };

/// Output masks that vanish exactly on the constrained set.
enum class Transform {
  none,
  dirichlet_1d,          // y(1-y)
  dirichlet_2d_space,    // x(1-x) y(1-y)
  zero_ic_dirichlet_bc,  // t x(1-x), coordinates (x, t)
};

std::string to_string(Transform t);
Transform transform_from_string(const std::string& s);

struct ArchSpec {
  std::vector<int> branch_widths;  // first entry is the sensor count m
  std::vector<int> trunk_widths;   // first entry is the coordinate dimension
  Activation activation = Activation::tanh;
  Transform transform = Transform::none;

  /// Branch and trunk with `depth` hidden layers of `width` neurons each.
  static ArchSpec deeponet(int sensors, int coord_dim, int width = 128, int depth = 3,
                           Transform transform = Transform::none);

  [[nodiscard]] int sensor_count() const { return branch_widths.empty() ? 0 : branch_widths.front(); }
  [[nodiscard]] int coord_dim() const { return trunk_widths.empty() ? 0 : trunk_widths.front(); }
  [[nodiscard]] int latent_dim() const { return branch_widths.empty() ? 0 : branch_widths.back(); }

  /// Throws InvalidArgument when widths are non-positive, the latent widths
  /// differ, or the transform does not fit the coordinate dimension.
  void validate() const;

  bool operator==(const ArchSpec&) const = default;
};

struct DenseLayer {
  Eigen::MatrixXd weight;  // fan_in x fan_out
  Eigen::RowVectorXd bias;
};

struct DeepONetParams {
  std::vector<DenseLayer> branch;
  std::vector<DenseLayer> trunk;
  double output_bias = 0.0;

  [[nodiscard]] std::size_t parameter_count() const;
  /// Every entry finite.
  [[nodiscard]] bool all_finite() const;
  bool operator==(const DeepONetParams& o) const;
};

/// Glorot-normal weights, zero biases, zero output bias.
DeepONetParams init_params(const ArchSpec& arch, std::uint64_t seed);

/// Zero-filled parameters with the layer shapes of `arch`.
DeepONetParams zero_params(const ArchSpec& arch);

/// Flat view used by the optimizer. Block order: branch layers (weight, bias),
/// trunk layers (weight, bias), output bias.
Eigen::VectorXd flatten(const DeepONetParams& p);
DeepONetParams unflatten(const ArchSpec& arch, const Eigen::VectorXd& flat);
std::vector<std::string> block_names(const ArchSpec& arch);
std::vector<std::size_t> block_offsets(const ArchSpec& arch);  // size = blocks + 1

// ---------------------------------------------------------------------------
// Recording the network on a tape.

template <typename S>
struct NetVars {
  std::vector<Var<S>> branch_w, branch_b, trunk_w, trunk_b;
  Var<S> output_bias;

  /// Same ordering as block_names().
  [[nodiscard]] std::vector<Var<S>> blocks() const {
    std::vector<Var<S>> out;
    for (std::size_t i = 0; i < branch_w.size(); ++i) {
      out.push_back(branch_w[i]);
      out.push_back(branch_b[i]);
    }
    for (std::size_t i = 0; i < trunk_w.size(); ++i) {
      out.push_back(trunk_w[i]);
      out.push_back(trunk_b[i]);
    }
    out.push_back(output_bias);
    return out;
  }
};

/// Records parameters as leaves (trainable) or constants.
template <typename S>
NetVars<S> record_params(Tape<S>& tape, const DeepONetParams& p, bool trainable) {
  auto put = [&](const auto& m) {
    Matrix<S> v = m.template cast<S>();
    return trainable ? tape.leaf(std::move(v)) : tape.constant(std::move(v));
  };
  NetVars<S> vars;
  for (const auto& l : p.branch) {
    vars.branch_w.push_back(put(l.weight));
    vars.branch_b.push_back(put(l.bias));
  }
  for (const auto& l : p.trunk) {
    vars.trunk_w.push_back(put(l.weight));
    vars.trunk_b.push_back(put(l.bias));
  }
  Eigen::Matrix<double, 1, 1> b0;
  b0(0, 0) = p.output_bias;
  vars.output_bias = put(b0);
  return vars;
}

namespace detail {

template <typename S>
Var<S> add_row_bias(Var<S> z, Var<S> bias) {
  auto& tape = *z.tape();
  auto ones = tape.constant(Matrix<S>::Ones(z.rows(), 1));
  return z + matmul(ones, bias);
}

}  // namespace detail

/// Branch net on sensor samples. `inputs` is N x m, or m x 1 when
/// `column_input` is set (one function). Hidden layers use tanh, the last
/// layer is linear. Returns N x p.
template <typename S>
Var<S> branch_features(const NetVars<S>& net, Var<S> inputs, bool column_input = false) {
  Var<S> h = inputs;
  const std::size_t n = net.branch_w.size();
  for (std::size_t i = 0; i < n; ++i) {
    Var<S> z = detail::add_row_bias(matmul(h, net.branch_w[i], column_input && i == 0, false),
                                    net.branch_b[i]);
    h = (i + 1 < n) ? tanh(z) : z;
  }
  return h;
}

/// Which coordinate derivatives a trunk evaluation must carry.
struct JetRequest {
  std::array<bool, 2> first{false, false};
  std::array<bool, 2> second{false, false};

  static JetRequest none() { return {}; }
  JetRequest& with_first(int axis) {
    first.at(axis) = true;
    return *this;
  }
  JetRequest& with_second(int axis) {
    first.at(axis) = true;
    second.at(axis) = true;
    return *this;
  }
};

/// Trunk features and their exact coordinate derivatives, propagated as a
/// second-order jet through every layer. All entries are P x p.
template <typename S>
struct TrunkJet {
  Var<S> value;
  std::array<Var<S>, 2> d1;
  std::array<Var<S>, 2> d2;
};

template <typename S>
TrunkJet<S> trunk_features(const NetVars<S>& net, const Eigen::MatrixXd& coords, JetRequest req) {
  auto& tape = *net.output_bias.tape();
  const Eigen::Index rows = coords.rows();
  const Eigen::Index dim = coords.cols();
  TrunkJet<S> jet;
  Var<S> h = tape.constant(coords.cast<S>());
  std::array<Var<S>, 2> h1, h2;
  for (int a = 0; a < dim; ++a) {
    if (!req.first[a]) continue;
    Matrix<S> e = Matrix<S>::Zero(rows, dim);
    e.col(a).setConstant(S(1));
    h1[a] = tape.constant(std::move(e));
  }
  for (std::size_t i = 0; i < net.trunk_w.size(); ++i) {
    const auto& w = net.trunk_w[i];
    Var<S> z = detail::add_row_bias(matmul(h, w), net.trunk_b[i]);
    Var<S> s = tanh(z);
    Var<S> slope = 1.0 - square(s);
    std::array<Var<S>, 2> n1, n2;
    for (int a = 0; a < dim; ++a) {
      if (!req.first[a]) continue;
      Var<S> z1 = matmul(h1[a], w);
      n1[a] = slope * z1;
      if (req.second[a]) {
        // (tanh z)'' = (1 - s^2) z'' - 2 s s' z'
        Var<S> curvature = -2.0 * (s * n1[a] * z1);
        n2[a] = h2[a].valid() ? slope * matmul(h2[a], w) + curvature : curvature;
      }
    }
    h = s;
    h1 = n1;
    h2 = n2;
  }
  jet.value = h;
  jet.d1 = h1;
  jet.d2 = h2;
  return jet;
}

/// Transform mask values and partial derivatives at each coordinate row.
struct TransformMask {
  Eigen::VectorXd value;
  std::array<Eigen::VectorXd, 2> d1;
  std::array<Eigen::VectorXd, 2> d2;
};
TransformMask transform_mask(Transform t, const Eigen::MatrixXd& coords);

/// Network output u, and requested derivatives, on an N x P grid of
/// (function, point) pairs: u = (B T^T + b0) * g(y).
template <typename S>
struct Field {
  Var<S> u;
  std::array<Var<S>, 2> du;
  std::array<Var<S>, 2> d2u;
};

template <typename S>
Field<S> combine(const ArchSpec& arch, const NetVars<S>& net, Var<S> branch, const TrunkJet<S>& trunk,
                 const Eigen::MatrixXd& coords) {
  auto& tape = *branch.tape();
  Field<S> raw;
  raw.u = matmul(branch, trunk.value, false, true) + net.output_bias;
  for (int a = 0; a < 2; ++a) {
    if (trunk.d1[a].valid()) raw.du[a] = matmul(branch, trunk.d1[a], false, true);
    if (trunk.d2[a].valid()) raw.d2u[a] = matmul(branch, trunk.d2[a], false, true);
  }
  if (arch.transform == Transform::none) return raw;

  const auto mask = transform_mask(arch.transform, coords);
  const Eigen::Index n = branch.rows();
  auto spread = [&](const Eigen::VectorXd& v) {
    Matrix<S> m = v.transpose().replicate(n, 1).template cast<S>();
    return tape.constant(std::move(m));
  };
  Field<S> out;
  out.u = raw.u * spread(mask.value);
  for (int a = 0; a < 2; ++a) {
    if (!raw.du[a].valid()) continue;
    Var<S> g = spread(mask.value);
    Var<S> ga = spread(mask.d1[a]);
    out.du[a] = raw.du[a] * g + raw.u * ga;
    if (raw.d2u[a].valid()) {
      Var<S> gaa = spread(mask.d2[a]);
      out.d2u[a] = raw.d2u[a] * g + 2.0 * (raw.du[a] * ga) + raw.u * gaa;
    }
  }
  return out;
}

/// Full network evaluation on N functions x P points.
template <typename S>
Field<S> evaluate_field(const ArchSpec& arch, const NetVars<S>& net, Var<S> inputs,
                        const Eigen::MatrixXd& coords, JetRequest req) {
  auto b = branch_features(net, inputs);
  auto t = trunk_features(net, coords, req);
  return combine(arch, net, b, t, coords);
}

// ---------------------------------------------------------------------------
// Plain evaluation.

/// u for each (function row, coordinate row): N x P.
Eigen::MatrixXd forward(const ArchSpec& arch, const DeepONetParams& params,
                        const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& coords);

/// Single-function convenience.
Eigen::VectorXd forward(const ArchSpec& arch, const DeepONetParams& params,
                        const Eigen::VectorXd& f, const Eigen::MatrixXd& coords);

/// Pre-transform output  sum_k b_k t_k + b0.
Eigen::MatrixXd raw_forward(const ArchSpec& arch, const DeepONetParams& params,
                            const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& coords);

/// Gradient w.r.t. f of sum_j weights_j u(f)(y_j).
Eigen::VectorXd forward_grad_f(const ArchSpec& arch, const DeepONetParams& params,
                               const Eigen::VectorXd& f, const Eigen::MatrixXd& coords,
                               const Eigen::VectorXd& weights);

/// Gradient w.r.t. f of an arbitrary scalar functional of the 1 x P output row,
/// recorded on the tape by `functional(tape, u)`.
template <typename Functional>
  requires(!std::is_base_of_v<Eigen::EigenBase<std::decay_t<Functional>>, std::decay_t<Functional>>)
Eigen::VectorXd forward_grad_f(const ArchSpec& arch, const DeepONetParams& params,
                               const Eigen::VectorXd& f, const Eigen::MatrixXd& coords,
                               Functional&& functional) {
  arch.validate();
  if (f.size() != arch.sensor_count()) throw ShapeError("forward_grad_f: sensor count mismatch");
  if (coords.cols() != arch.coord_dim()) throw ShapeError("forward_grad_f: coordinate dimension mismatch");
  Tape<double> tape;
  auto net = record_params(tape, params, false);
  auto leaf = tape.leaf(Matrix<double>(f.transpose()));
  auto field = evaluate_field(arch, net, leaf, coords, JetRequest::none());
  auto value = functional(tape, field.u);
  auto g = tape.grad(value, {leaf});
  return g[0].transpose();
}

/// d²u/dy_axis² at one coordinate, forward-over-reverse.
double second_coordinate_derivative(const ArchSpec& arch, const DeepONetParams& params,
                                    const Eigen::VectorXd& f, const Eigen::RowVectorXd& coord,
                                    int axis);

/// du/dy_axis at one coordinate.
double first_coordinate_derivative(const ArchSpec& arch, const DeepONetParams& params,
                                   const Eigen::VectorXd& f, const Eigen::RowVectorXd& coord,
                                   int axis);

/// The discretized operator f (m x 1) -> u on fixed coordinates (P x 1), with
/// the trunk features precomputed. Callable on any tape scalar, so it plugs
/// directly into diffkit::jvp / vjp.
class OperatorMap {
 public:
  OperatorMap(const ArchSpec& arch, const DeepONetParams& params, const Eigen::MatrixXd& coords);

  template <typename S>
  Var<S> operator()(Tape<S>& tape, Var<S> f) const {
    auto net = record_params(tape, *params_, false);
    auto b = branch_features(net, f, true);  // 1 x p
    auto t = tape.constant(trunk_.cast<S>());
    auto u = matmul(t, b, false, true) + net.output_bias;  // P x 1
    if (arch_.transform == Transform::none) return u;
    return u * tape.constant(mask_.cast<S>());
  }

  [[nodiscard]] Eigen::Index input_size() const { return arch_.sensor_count(); }
  [[nodiscard]] Eigen::Index output_size() const { return trunk_.rows(); }

 private:
  ArchSpec arch_;
  const DeepONetParams* params_;
  Eigen::MatrixXd trunk_;  // P x p
  Eigen::VectorXd mask_;
};

// ---------------------------------------------------------------------------
// Checkpoints.

struct Checkpoint {
  ArchSpec arch;
  DeepONetParams params;
  std::uint64_t seed = 0;
  std::uint64_t step = 0;
};

/// Binary, little-endian, self-describing: magic, version, arch, seed, step,
/// then every parameter array with its shape. Round trip is bit-exact.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace stablepde
