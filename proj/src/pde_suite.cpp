#include "stablepde/pde_suite.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "stablepde/errors.hpp"

namespace stablepde {

namespace {

constexpr std::array<std::pair<ProblemKind, const char*>, 8> kProblemNames{{
    {ProblemKind::antiderivative, "antiderivative"},
    {ProblemKind::poisson1d, "poisson1d"},
    {ProblemKind::poisson2d, "poisson2d"},
    {ProblemKind::helmholtz_neumann, "helmholtz_neumann"},
    {ProblemKind::heat_ic, "heat_ic"},
    {ProblemKind::heat_source, "heat_source"},
    {ProblemKind::diffrec_source, "diffrec_source"},
    {ProblemKind::diffrec_coeff, "diffrec_coeff"},
}};

bool parabolic(ProblemKind k) {
  return k == ProblemKind::heat_ic || k == ProblemKind::heat_source || k == ProblemKind::diffrec_source ||
         k == ProblemKind::diffrec_coeff;
}

Eigen::MatrixXd interior_points(int n, int dim) {
  // drop i = 0 (the origin) so every point is strictly inside
  Eigen::MatrixXd h = hammersley(n + 1, dim);
  return h.bottomRows(n);
}

Eigen::VectorXd grid01(int n) { return Eigen::VectorXd::LinSpaced(n, 0.0, 1.0); }

void require(bool ok, const std::string& message) {
  if (!ok) throw InvalidArgument(message);
}

Var<double> spread_row(Tape<double>& tape, const Eigen::RowVectorXd& row, Eigen::Index rows) {
  return tape.constant(row.replicate(rows, 1));
}

}  // namespace

std::string to_string(ProblemKind k) {
  for (const auto& [kind, name] : kProblemNames)
    if (kind == k) return name;
  return "unknown";
}

ProblemKind problem_from_string(const std::string& s) {
  for (const auto& [kind, name] : kProblemNames)
    if (s == name) return kind;
  throw InvalidArgument("unknown problem '" + s + "'");
}

std::vector<ProblemKind> all_problems() {
  std::vector<ProblemKind> out;
  for (const auto& entry : kProblemNames) out.push_back(entry.first);
  return out;
}

bool InputSpace::operator==(const InputSpace& o) const {
  return sampler == o.sampler && grf.length_scale == o.grf.length_scale && grf.variance == o.grf.variance &&
         grf.jitter == o.grf.jitter && coefficients.lo == o.coefficients.lo &&
         coefficients.hi == o.coefficients.hi && modes == o.modes && range_lo == o.range_lo &&
         range_hi == o.range_hi;
}

ProblemSpec ProblemSpec::defaults(ProblemKind kind) {
  ProblemSpec p;
  p.kind = kind;
  p.sensor_count = 100;
  p.input.sampler = SamplerKind::grf;
  p.input.grf = GrfSpec{0.2, 1.0, 1e-10};
  switch (kind) {
    case ProblemKind::antiderivative:
      p.sensor_count = 50;
      p.counts = {20, 0, 1};
      break;
    case ProblemKind::poisson1d:
      p.counts = {100, 2, 0};
      p.input.sampler = SamplerKind::polynomial_deg3;
      break;
    case ProblemKind::poisson2d:
      p.sensor_grid_side = 31;
      p.sensor_count = 31 * 31;
      p.counts = {10000, 400, 0};
      p.input.sampler = SamplerKind::bitrig;
      p.input.modes = 10;
      p.transform = Transform::dirichlet_2d_space;
      break;
    case ProblemKind::helmholtz_neumann:
      p.constants = {{"shift", 2.0}};
      p.counts = {100, 2, 0};
      break;
    case ProblemKind::heat_ic:
      p.constants = {{"alpha", 0.01}};
      p.counts = {200, 40, 20};
      p.input.grf.length_scale = 1.0;
      break;
    case ProblemKind::heat_source:
      p.constants = {{"alpha", 0.01}};
      p.counts = {200, 40, 20};
      p.transform = Transform::zero_ic_dirichlet_bc;
      break;
    case ProblemKind::diffrec_source:
      p.constants = {{"diffusion", 0.01}, {"reaction", 0.01}};
      p.counts = {200, 40, 20};
      p.transform = Transform::zero_ic_dirichlet_bc;
      break;
    case ProblemKind::diffrec_coeff:
      p.constants = {{"diffusion", 0.01}};
      p.counts = {200, 40, 20};
      p.input.sampler = SamplerKind::rescaled_grf;
      p.input.grf.length_scale = 1.4;
      p.input.range_lo = 1.0;
      p.input.range_hi = 5.0;
      p.transform = Transform::zero_ic_dirichlet_bc;
      break;
  }
  return p;
}

double ProblemSpec::constant(const std::string& name) const {
  auto it = constants.find(name);
  if (it == constants.end()) throw InvalidArgument(to_string(kind) + " has no constant '" + name + "'");
  return it->second;
}

int ProblemSpec::coord_dim() const { return kind == ProblemKind::antiderivative || kind == ProblemKind::poisson1d ||
                                                    kind == ProblemKind::helmholtz_neumann
                                                ? 1
                                                : 2; }

bool ProblemSpec::time_dependent() const { return parabolic(kind); }

std::vector<std::string> ProblemSpec::required_constants(ProblemKind kind) {
  switch (kind) {
    case ProblemKind::helmholtz_neumann: return {"shift"};
    case ProblemKind::heat_ic:
    case ProblemKind::heat_source: return {"alpha"};
    case ProblemKind::diffrec_source: return {"diffusion", "reaction"};
    case ProblemKind::diffrec_coeff: return {"diffusion"};
    default: return {};
  }
}

std::vector<Transform> ProblemSpec::allowed_transforms(ProblemKind kind) {
  switch (kind) {
    case ProblemKind::poisson1d: return {Transform::none, Transform::dirichlet_1d};
    case ProblemKind::poisson2d: return {Transform::none, Transform::dirichlet_2d_space};
    case ProblemKind::heat_source:
    case ProblemKind::diffrec_source:
    case ProblemKind::diffrec_coeff: return {Transform::none, Transform::zero_ic_dirichlet_bc};
    default: return {Transform::none};
  }
}

void ProblemSpec::validate() const {
  const std::string name = to_string(kind);
  const auto required = required_constants(kind);
  for (const auto& key : required) {
    require(constants.count(key) == 1, "problem." + key + " is required for " + name);
  }
  for (const auto& [key, value] : constants) {
    require(std::find(required.begin(), required.end(), key) != required.end(),
            "problem." + key + " does not apply to " + name);
    require(std::isfinite(value), "problem." + key + " must be finite");
    if (key == "alpha" || key == "diffusion" || key == "shift") require(value > 0.0, "problem." + key + " must be > 0");
  }
  if (kind == ProblemKind::poisson2d) {
    require(sensor_grid_side >= 2, "problem.sensor_grid_side must be >= 2");
    require(sensor_count == sensor_grid_side * sensor_grid_side,
            "problem.sensors must equal sensor_grid_side squared for poisson2d");
    require(input.sampler == SamplerKind::bitrig, "problem.sampler must be bitrig for poisson2d");
    require(input.modes >= 1, "problem.modes must be >= 1");
  } else {
    require(sensor_grid_side == 0, "problem.sensor_grid_side applies to poisson2d only");
    require(sensor_count >= 2, "problem.sensors must be >= 2");
    require(input.sampler == SamplerKind::grf || input.sampler == SamplerKind::polynomial_deg3 ||
                input.sampler == SamplerKind::rescaled_grf,
            "problem.sampler must be grf, polynomial_deg3 or rescaled_grf for " + name);
  }
  if (input.sampler == SamplerKind::grf || input.sampler == SamplerKind::rescaled_grf) {
    require(input.grf.length_scale > 0.0, "problem.length_scale must be > 0");
    require(input.grf.variance > 0.0, "problem.variance must be > 0");
    require(input.grf.jitter >= 0.0, "problem.jitter must be >= 0");
  }
  if (input.sampler == SamplerKind::rescaled_grf) require(input.range_hi > input.range_lo, "problem.range_hi must exceed range_lo");
  if (input.sampler == SamplerKind::polynomial_deg3) {
    require(input.coefficients.hi >= input.coefficients.lo, "problem.coeff_hi must be >= coeff_lo");
  }
  const auto allowed = allowed_transforms(kind);
  require(std::find(allowed.begin(), allowed.end(), transform) != allowed.end(),
          "problem.transform " + to_string(transform) + " is not valid for " + name);

  require(counts.interior >= 1, "problem.interior must be >= 1");
  const LossTerms terms = active_terms(*this);
  if (terms.bc) {
    if (kind == ProblemKind::poisson2d) {
      require(counts.boundary >= 4 && counts.boundary % 4 == 0, "problem.boundary must be a positive multiple of 4");
    } else {
      require(counts.boundary >= 2 && counts.boundary % 2 == 0, "problem.boundary must be a positive even number");
    }
  }
  if (terms.ic) {
    require(counts.initial >= (parabolic(kind) ? 2 : 1),
            std::string("problem.initial must be >= ") + (parabolic(kind) ? "2" : "1"));
  }
}

ArchSpec ProblemSpec::arch(int width, int depth) const {
  return ArchSpec::deeponet(sensor_count, coord_dim(), width, depth, transform);
}

LossTerms active_terms(const ProblemSpec& p) {
  switch (p.kind) {
    case ProblemKind::antiderivative: return {false, true};
    case ProblemKind::poisson1d:
    case ProblemKind::poisson2d: return {p.transform == Transform::none, false};
    case ProblemKind::helmholtz_neumann: return {true, false};
    case ProblemKind::heat_ic: return {true, true};
    default: {
      const bool soft = p.transform == Transform::none;
      return {soft, soft};
    }
  }
}

Eigen::VectorXd sensor_axis(const ProblemSpec& p) {
  return grid01(p.kind == ProblemKind::poisson2d ? p.sensor_grid_side : p.sensor_count);
}

Eigen::MatrixXd sensor_points(const ProblemSpec& p) {
  const Eigen::VectorXd axis = sensor_axis(p);
  if (p.kind == ProblemKind::poisson2d) return tensor_grid(axis, axis);
  return axis;
}

CollocationSet make_collocation(const ProblemSpec& p, std::uint64_t seed) {
  p.validate();
  CollocationSet set;
  set.seed = seed;
  const int dim = p.coord_dim();
  set.interior = interior_points(p.counts.interior, dim);
  const LossTerms terms = active_terms(p);

  if (terms.bc) {
    const int nb = p.counts.boundary;
    set.boundary.resize(nb, dim);
    if (dim == 1) {
      for (int i = 0; i < nb; ++i) set.boundary(i, 0) = (i % 2 == 0) ? 0.0 : 1.0;
      if (p.kind == ProblemKind::helmholtz_neumann) {
        set.boundary_normal.resize(nb);
        for (int i = 0; i < nb; ++i) set.boundary_normal[i] = (i % 2 == 0) ? -1.0 : 1.0;
      }
    } else if (p.kind == ProblemKind::poisson2d) {
      const int per_edge = nb / 4;
      for (int i = 0; i < per_edge; ++i) {
        const double s = static_cast<double>(i) / per_edge;
        set.boundary.row(4 * i) << s, 0.0;
        set.boundary.row(4 * i + 1) << 1.0, s;
        set.boundary.row(4 * i + 2) << 1.0 - s, 1.0;
        set.boundary.row(4 * i + 3) << 0.0, 1.0 - s;
      }
    } else {
      const int per_side = nb / 2;
      const Eigen::VectorXd t = grid01(per_side);
      for (int i = 0; i < per_side; ++i) {
        set.boundary.row(2 * i) << 0.0, t[i];
        set.boundary.row(2 * i + 1) << 1.0, t[i];
      }
    }
  }
  if (terms.ic) {
    if (dim == 1) {
      set.initial = Eigen::MatrixXd::Zero(p.counts.initial, 1);
    } else {
      set.initial.resize(p.counts.initial, 2);
      set.initial.col(0) = grid01(p.counts.initial);
      set.initial.col(1).setZero();
    }
  }
  return set;
}

Eigen::MatrixXd evaluation_grid(const ProblemSpec& p) {
  switch (p.kind) {
    case ProblemKind::antiderivative: return grid01(50);
    case ProblemKind::poisson1d:
    case ProblemKind::helmholtz_neumann: return grid01(100);
    case ProblemKind::heat_ic: {
      Eigen::MatrixXd g(100, 2);
      g.col(0) = grid01(100);
      g.col(1).setOnes();
      return g;
    }
    default: return tensor_grid(grid01(100), grid01(100));
  }
}

std::vector<std::string> grid_columns(const ProblemSpec& p) {
  if (p.coord_dim() == 1) return {"x"};
  if (p.kind == ProblemKind::poisson2d) return {"x", "y"};
  return {"x", "t"};
}

Eigen::MatrixXd input_interpolation(const ProblemSpec& p, const Eigen::MatrixXd& points) {
  const Eigen::VectorXd axis = sensor_axis(p);
  if (p.kind == ProblemKind::poisson2d) return bilinear_interpolation_matrix(axis, axis, points);
  return linear_interpolation_matrix(axis, points.col(0));
}

LossPlan::LossPlan(ProblemSpec problem, ArchSpec arch, CollocationSet set)
    : problem_(std::move(problem)), arch_(std::move(arch)), set_(std::move(set)) {
  problem_.validate();
  arch_.validate();
  if (arch_.sensor_count() != problem_.sensor_count) throw ShapeError("arch sensor count does not match problem");
  if (arch_.coord_dim() != problem_.coord_dim()) throw ShapeError("arch coordinate dimension does not match problem");
  if (arch_.transform != problem_.transform) throw InvalidArgument("arch transform does not match problem");
  terms_ = active_terms(problem_);
  if (set_.interior.rows() == 0) throw InvalidArgument("collocation set has no interior points");
  if (terms_.bc && set_.boundary.rows() == 0) throw InvalidArgument("collocation set lacks boundary points");
  if (terms_.ic && set_.initial.rows() == 0) throw InvalidArgument("collocation set lacks initial points");
  if (problem_.kind == ProblemKind::helmholtz_neumann && set_.boundary_normal.size() != set_.boundary.rows()) {
    throw InvalidArgument("Neumann boundary points need one normal sign each");
  }
  interior_interp_t = input_interpolation(problem_, set_.interior).transpose();
  if (problem_.kind == ProblemKind::heat_ic) initial_interp_t = input_interpolation(problem_, set_.initial).transpose();
  if (problem_.kind == ProblemKind::diffrec_coeff) {
    fixed_source = (std::numbers::pi * set_.interior.col(0).array()).sin().matrix().transpose();
  }
}

namespace {

JetRequest residual_request(ProblemKind kind) {
  JetRequest r;
  switch (kind) {
    case ProblemKind::antiderivative: r.with_first(0); break;
    case ProblemKind::poisson1d:
    case ProblemKind::helmholtz_neumann: r.with_second(0); break;
    case ProblemKind::poisson2d: r.with_second(0).with_second(1); break;
    default: r.with_first(1).with_second(0); break;
  }
  return r;
}

}  // namespace

JetRequest LossPlan::interior_request() const { return residual_request(problem_.kind); }

namespace {

JetRequest boundary_request(const ProblemSpec& p) {
  JetRequest r;
  if (p.kind == ProblemKind::helmholtz_neumann) r.with_first(0);
  return r;
}

TrunkCache::Jet freeze(const TrunkJet<double>& jet) {
  TrunkCache::Jet out;
  out.value = jet.value.value();
  for (int a = 0; a < 2; ++a) {
    if (jet.d1[a].valid()) out.d1[a] = jet.d1[a].value();
    if (jet.d2[a].valid()) out.d2[a] = jet.d2[a].value();
  }
  return out;
}

TrunkJet<double> thaw(Tape<double>& tape, const TrunkCache::Jet& jet) {
  TrunkJet<double> out;
  out.value = tape.constant(jet.value);
  for (int a = 0; a < 2; ++a) {
    if (jet.d1[a].size() > 0) out.d1[a] = tape.constant(jet.d1[a]);
    if (jet.d2[a].size() > 0) out.d2[a] = tape.constant(jet.d2[a]);
  }
  return out;
}

void check_domain(const Eigen::MatrixXd& points) {
  if (points.size() > 0 && (points.minCoeff() < 0.0 || points.maxCoeff() > 1.0)) {
    throw InvalidArgument("collocation point outside the unit domain");
  }
}

}  // namespace

TrunkCache make_trunk_cache(const LossPlan& plan, const DeepONetParams& params) {
  Tape<double> tape;
  auto net = record_params(tape, params, false);
  TrunkCache cache;
  const auto& set = plan.set();
  cache.interior = freeze(trunk_features(net, set.interior, plan.interior_request()));
  if (plan.terms().bc) cache.boundary = freeze(trunk_features(net, set.boundary, boundary_request(plan.problem())));
  if (plan.terms().ic) cache.initial = freeze(trunk_features(net, set.initial, JetRequest::none()));
  return cache;
}

Var<double> residual(const ProblemSpec& p, const Field<double>& field, Var<double> input, const Eigen::MatrixXd& points) {
  check_domain(points);
  auto need = [&](const Var<double>& v, const char* what) {
    if (!v.valid()) throw InvalidArgument(std::string("residual for ") + to_string(p.kind) + " needs " + what);
    return v;
  };
  switch (p.kind) {
    case ProblemKind::antiderivative:
      return need(field.du[0], "u_x") - input;
    case ProblemKind::poisson1d:
      return -1.0 * need(field.d2u[0], "u_xx") - input;
    case ProblemKind::poisson2d:
      return -1.0 * (need(field.d2u[0], "u_xx") + need(field.d2u[1], "u_yy")) - input;
    case ProblemKind::helmholtz_neumann:
      return -1.0 * need(field.d2u[0], "u_xx") + p.constant("shift") * field.u - input;
    case ProblemKind::heat_ic:
      return need(field.du[1], "u_t") - p.constant("alpha") * need(field.d2u[0], "u_xx");
    case ProblemKind::heat_source:
      return need(field.du[1], "u_t") - p.constant("alpha") * need(field.d2u[0], "u_xx") - input;
    case ProblemKind::diffrec_source:
      return need(field.du[1], "u_t") - p.constant("diffusion") * need(field.d2u[0], "u_xx") -
             p.constant("reaction") * square(field.u) - input;
    case ProblemKind::diffrec_coeff: {
      auto& tape = *field.u.tape();
      const Eigen::RowVectorXd source = (std::numbers::pi * points.col(0).array()).sin().matrix().transpose();
      return need(field.du[1], "u_t") - p.constant("diffusion") * need(field.d2u[0], "u_xx") +
             input * square(field.u) - spread_row(tape, source, field.u.rows());
    }
  }
  throw InvalidArgument("unhandled problem kind");
}

LossVars record_loss(const LossPlan& plan, const NetVars<double>& net, Var<double> inputs, const TrunkCache* cache) {
  auto& tape = *inputs.tape();
  const auto& p = plan.problem();
  const auto& arch = plan.arch();
  const auto& set = plan.set();
  if (inputs.cols() != p.sensor_count) throw ShapeError("record_loss: input width does not match sensor count");
  const Eigen::Index n = inputs.rows();

  auto branch = branch_features(net, inputs);
  auto interior_jet = cache ? thaw(tape, cache->interior) : trunk_features(net, set.interior, plan.interior_request());
  auto field = combine(arch, net, branch, interior_jet, set.interior);

  Var<double> input_at;
  if (p.kind != ProblemKind::heat_ic) input_at = matmul(inputs, tape.constant(plan.interior_interp_t));
  auto r = residual(p, field, input_at, set.interior);

  LossVars out;
  out.physics = mean(square(r));
  const auto zero = tape.scalar(0.0);
  out.bc = zero;
  out.ic = zero;

  if (plan.terms().bc) {
    auto jet = cache ? thaw(tape, cache->boundary) : trunk_features(net, set.boundary, boundary_request(p));
    auto b = combine(arch, net, branch, jet, set.boundary);
    if (p.kind == ProblemKind::helmholtz_neumann) {
      auto normal = spread_row(tape, set.boundary_normal.transpose(), n);
      out.bc = mean(square(b.du[0] * normal));
    } else {
      out.bc = mean(square(b.u));
    }
  }
  if (plan.terms().ic) {
    auto jet = cache ? thaw(tape, cache->initial) : trunk_features(net, set.initial, JetRequest::none());
    auto u0 = combine(arch, net, branch, jet, set.initial).u;
    if (p.kind == ProblemKind::heat_ic) {
      out.ic = mean(square(u0 - matmul(inputs, tape.constant(plan.initial_interp_t))));
    } else {
      out.ic = mean(square(u0));
    }
  }
  out.total = out.physics + out.bc + out.ic;
  return out;
}

LossBreakdown breakdown(const LossVars& v) {
  LossBreakdown b;
  b.physics = v.physics.value()(0, 0);
  b.bc = v.bc.value()(0, 0);
  b.ic = v.ic.value()(0, 0);
  b.total = v.total.value()(0, 0);
  return b;
}

Eigen::VectorXd physics_residual(const ProblemSpec& p, const ArchSpec& arch, const DeepONetParams& params,
                                 const Eigen::VectorXd& f, const Eigen::MatrixXd& points) {
  p.validate();
  if (f.size() != p.sensor_count) throw ShapeError("physics_residual: input length does not match sensor count");
  if (points.cols() != p.coord_dim()) throw ShapeError("physics_residual: coordinate dimension mismatch");
  check_domain(points);
  Tape<double> tape;
  auto net = record_params(tape, params, false);
  auto in = tape.constant(f.transpose());
  auto field = evaluate_field(arch, net, in, points, residual_request(p.kind));
  Var<double> input_at = matmul(in, tape.constant(input_interpolation(p, points).transpose()));
  return residual(p, field, input_at, points).value().row(0).transpose();
}

LossBreakdown assemble_loss(const LossPlan& plan, const DeepONetParams& params, const Eigen::MatrixXd& inputs) {
  if (inputs.rows() == 0) throw InvalidArgument("assemble_loss: empty batch");
  Tape<double> tape;
  auto net = record_params(tape, params, false);
  return breakdown(record_loss(plan, net, tape.constant(inputs)));
}

LossBreakdown assemble_loss(const DeepONetParams& params, std::span<const BatchItem> batch) {
  if (batch.empty()) throw InvalidArgument("assemble_loss: empty batch");
  std::vector<const LossPlan*> plans;
  for (const auto& item : batch) {
    if (!item.plan) throw InvalidArgument("assemble_loss: batch item without a collocation plan");
    if (std::find(plans.begin(), plans.end(), item.plan) == plans.end()) plans.push_back(item.plan);
  }
  LossBreakdown acc;
  for (const LossPlan* plan : plans) {
    std::vector<const Eigen::VectorXd*> rows;
    for (const auto& item : batch)
      if (item.plan == plan) rows.push_back(&item.f);
    Eigen::MatrixXd inputs(static_cast<Eigen::Index>(rows.size()), plan->problem().sensor_count);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (rows[i]->size() != inputs.cols()) throw ShapeError("assemble_loss: input length does not match sensor count");
      inputs.row(static_cast<Eigen::Index>(i)) = rows[i]->transpose();
    }
    const LossBreakdown part = assemble_loss(*plan, params, inputs);
    if (plans.size() == 1) return part;
    const double w = static_cast<double>(rows.size()) / static_cast<double>(batch.size());
    acc.physics += w * part.physics;
    acc.bc += w * part.bc;
    acc.ic += w * part.ic;
  }
  acc.total = acc.physics + acc.bc + acc.ic;
  return acc;
}

InputSampler::InputSampler(const ProblemSpec& problem) : problem_(problem) {
  problem_.validate();
  sensors_ = sensor_points(problem_);
  if (problem_.input.sampler == SamplerKind::grf || problem_.input.sampler == SamplerKind::rescaled_grf) {
    grf_.emplace(problem_.input.grf, sensor_axis(problem_));
  }
}

Eigen::VectorXd InputSampler::draw(std::uint64_t seed) const {
  switch (problem_.input.sampler) {
    case SamplerKind::grf: return grf_->sample(seed).values;
    case SamplerKind::rescaled_grf:
      return rescale_to_range(grf_->sample(seed).values, problem_.input.range_lo, problem_.input.range_hi);
    case SamplerKind::polynomial_deg3:
      return eval_polynomial(polynomial_deg3_coefficients(problem_.input.coefficients, seed), sensors_.col(0));
    case SamplerKind::bitrig: return sample_bitrig(problem_.input.modes, problem_.input.modes, sensors_, seed).values;
    case SamplerKind::fixed: break;
  }
  throw InvalidArgument("problem sampler cannot draw functions");
}

Eigen::MatrixXd InputSampler::batch(std::uint64_t batch_seed, int n) const {
  if (n < 1) throw InvalidArgument("batch size must be >= 1");
  Eigen::MatrixXd out(n, problem_.sensor_count);
  for (int i = 0; i < n; ++i) out.row(i) = draw(derive_seed(batch_seed, 0, static_cast<std::uint64_t>(i))).transpose();
  return out;
}

Eigen::MatrixXd InputSampler::bitrig_coefficients(std::uint64_t seed) const {
  if (problem_.input.sampler != SamplerKind::bitrig) throw InvalidArgument("problem does not use bi-trigonometric inputs");
  return sample_bitrig(problem_.input.modes, problem_.input.modes, sensors_.topRows(1), seed).coefficients;
}

}  // namespace stablepde
