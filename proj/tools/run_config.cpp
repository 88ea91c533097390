#include "run_config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "stablepde/errors.hpp"

namespace stablepde::cli {

namespace pt = boost::property_tree;

std::string to_string(TrainMode m) { return m == TrainMode::stable ? "stable" : "baseline"; }

bool EvalOptions::operator==(const EvalOptions& o) const {
  return n_samples == o.n_samples && seed == o.seed && spectral_samples == o.spectral_samples &&
         spectral_tol == o.spectral_tol && spectral_max_iter == o.spectral_max_iter &&
         plot_samples == o.plot_samples && resolution.nx_1d == o.resolution.nx_1d &&
         resolution.nx == o.resolution.nx && resolution.nt == o.resolution.nt;
}

void RunConfig::validate() const {
  if (output_dir.empty()) throw InvalidArgument("run.output_dir must not be empty");
  if (experiment.empty()) throw InvalidArgument("run.experiment must not be empty");
  train.validate();
  eval_attack.validate();
  auto require = [](bool ok, const char* message) {
    if (!ok) throw InvalidArgument(message);
  };
  require(eval.n_samples >= 1, "eval.n_samples must be >= 1");
  require(eval.spectral_samples >= 0, "eval.spectral_samples must be >= 0");
  require(eval.spectral_tol > 0, "eval.spectral_tol must be > 0");
  require(eval.spectral_max_iter >= 1, "eval.spectral_max_iter must be >= 1");
  require(eval.plot_samples >= 0, "eval.plot_samples must be >= 0");
  require(eval.resolution.nx_1d >= 3, "eval.nx_1d must be >= 3");
  require(eval.resolution.nx >= 3, "eval.nx must be >= 3");
  require(eval.resolution.nt >= 2, "eval.nt must be >= 2");
}

namespace {

std::string fmt(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}
std::string fmt(int v) { return std::to_string(v); }
std::string fmt(std::uint64_t v) { return std::to_string(v); }
std::string fmt(bool v) { return v ? "true" : "false"; }

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  T value{};
  const char* end = text.data() + text.size();
  const auto r = std::from_chars(text.data(), end, value);
  if (r.ec != std::errc() || r.ptr != end) {
    throw InvalidArgument(key + ": cannot parse '" + text + "' as a number");
  }
  return value;
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0") return false;
  throw InvalidArgument(key + ": expected true or false, got '" + text + "'");
}

struct Field {
  std::string name;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string& key, const std::string& text)> set;
  std::function<bool(const RunConfig&)> applies = [](const RunConfig&) { return true; };
};

// Field bound to the member that `ref` selects; `ref` must accept both
// const and mutable configs.
template <typename T, typename Ref>
Field bind(std::string name, Ref ref) {
  Field f;
  f.name = std::move(name);
  f.get = [ref](const RunConfig& c) { return fmt(static_cast<T>(ref(c))); };
  f.set = [ref](RunConfig& c, const std::string& key, const std::string& text) {
    if constexpr (std::is_same_v<T, bool>) {
      ref(c) = parse_bool(key, text);
    } else {
      ref(c) = parse_number<T>(key, text);
    }
  };
  return f;
}

Field text_field(std::string name, std::function<std::string(const RunConfig&)> get,
                 std::function<void(RunConfig&, const std::string&)> set) {
  Field f;
  f.name = std::move(name);
  f.get = std::move(get);
  f.set = [set](RunConfig& c, const std::string&, const std::string& text) { set(c, text); };
  return f;
}

Field constant_field(const std::string& name) {
  Field f;
  f.name = name;
  f.get = [name](const RunConfig& c) { return fmt(c.train.problem.constant(name)); };
  f.set = [name](RunConfig& c, const std::string& key, const std::string& text) {
    c.train.problem.constants[name] = parse_number<double>(key, text);
  };
  f.applies = [name](const RunConfig& c) {
    const auto req = ProblemSpec::required_constants(c.train.problem.kind);
    return std::find(req.begin(), req.end(), name) != req.end();
  };
  return f;
}

template <typename Select>
std::vector<Field> attack_fields(Select a, bool with_warm_start) {
  std::vector<Field> f{
      bind<double>("epsilon", [a](auto& c) -> auto& { return a(c).epsilon; }),
      bind<double>("step_alpha", [a](auto& c) -> auto& { return a(c).step_alpha; }),
      bind<int>("n_iter", [a](auto& c) -> auto& { return a(c).n_iter; }),
      text_field(
          "norm", [a](const RunConfig& c) { return to_string(a(c).norm); },
          [a](RunConfig& c, const std::string& s) { a(c).norm = attack_norm_from_string(s); }),
      bind<bool>("relative", [a](auto& c) -> auto& { return a(c).relative; }),
  };
  if (with_warm_start) f.push_back(bind<bool>("warm_start", [a](auto& c) -> auto& { return a(c).warm_start; }));
  return f;
}

struct Section {
  std::string name;
  std::vector<Field> fields;
};

std::vector<Section> schema() {
  std::vector<Section> s;
  s.push_back({"run",
               {text_field(
                    "output_dir", [](const RunConfig& c) { return c.output_dir.string(); },
                    [](RunConfig& c, const std::string& v) { c.output_dir = v; }),
                text_field(
                    "experiment", [](const RunConfig& c) { return c.experiment; },
                    [](RunConfig& c, const std::string& v) { c.experiment = v; }),
                text_field(
                    "mode", [](const RunConfig& c) { return to_string(c.mode); },
                    [](RunConfig& c, const std::string& v) {
                      if (v == "stable") c.mode = TrainMode::stable;
                      else if (v == "baseline") c.mode = TrainMode::baseline;
                      else throw InvalidArgument("run.mode must be stable or baseline, got '" + v + "'");
                    }),
                bind<std::uint64_t>("seed", [](auto& c) -> auto& { return c.train.seed; })}});

  std::vector<Field> pf{
      text_field(
          "kind", [](const RunConfig& c) { return to_string(c.train.problem.kind); },
          [](RunConfig&, const std::string&) {}),  // applied before every other key
      bind<int>("sensors", [](auto& c) -> auto& { return c.train.problem.sensor_count; }),
      bind<int>("sensor_grid_side", [](auto& c) -> auto& { return c.train.problem.sensor_grid_side; }),
      text_field(
          "transform", [](const RunConfig& c) { return to_string(c.train.problem.transform); },
          [](RunConfig& c, const std::string& v) { c.train.problem.transform = transform_from_string(v); }),
      bind<int>("interior", [](auto& c) -> auto& { return c.train.problem.counts.interior; }),
      bind<int>("boundary", [](auto& c) -> auto& { return c.train.problem.counts.boundary; }),
      bind<int>("initial", [](auto& c) -> auto& { return c.train.problem.counts.initial; }),
      text_field(
          "sampler", [](const RunConfig& c) { return to_string(c.train.problem.input.sampler); },
          [](RunConfig& c, const std::string& v) { c.train.problem.input.sampler = sampler_from_string(v); }),
      bind<double>("length_scale", [](auto& c) -> auto& { return c.train.problem.input.grf.length_scale; }),
      bind<double>("variance", [](auto& c) -> auto& { return c.train.problem.input.grf.variance; }),
      bind<double>("jitter", [](auto& c) -> auto& { return c.train.problem.input.grf.jitter; }),
      bind<double>("coeff_lo", [](auto& c) -> auto& { return c.train.problem.input.coefficients.lo; }),
      bind<double>("coeff_hi", [](auto& c) -> auto& { return c.train.problem.input.coefficients.hi; }),
      bind<int>("modes", [](auto& c) -> auto& { return c.train.problem.input.modes; }),
      bind<double>("range_lo", [](auto& c) -> auto& { return c.train.problem.input.range_lo; }),
      bind<double>("range_hi", [](auto& c) -> auto& { return c.train.problem.input.range_hi; }),
  };
  for (const char* k : {"alpha", "diffusion", "reaction", "shift"}) pf.push_back(constant_field(k));
  s.push_back({"problem", std::move(pf)});

  s.push_back({"arch",
               {bind<int>("width", [](auto& c) -> auto& { return c.train.width; }),
                bind<int>("depth", [](auto& c) -> auto& { return c.train.depth; })}});
  s.push_back({"train",
               {bind<int>("steps", [](auto& c) -> auto& { return c.train.steps; }),
                bind<int>("batch_size", [](auto& c) -> auto& { return c.train.batch_size; }),
                bind<double>("learning_rate", [](auto& c) -> auto& { return c.train.adam.learning_rate; }),
                bind<double>("beta1", [](auto& c) -> auto& { return c.train.adam.beta1; }),
                bind<double>("beta2", [](auto& c) -> auto& { return c.train.adam.beta2; }),
                bind<double>("adam_eps", [](auto& c) -> auto& { return c.train.adam.eps; }),
                bind<double>("warmup_fraction", [](auto& c) -> auto& { return c.train.warmup_fraction; }),
                bind<int>("cadence", [](auto& c) -> auto& { return c.train.cadence; }),
                bind<int>("checkpoint_every", [](auto& c) -> auto& { return c.train.checkpoint_every; })}});
  s.push_back({"attack", attack_fields([](auto& c) -> auto& { return c.train.attack; }, true)});
  s.push_back({"eval_attack", attack_fields([](auto& c) -> auto& { return c.eval_attack; }, false)});
  s.push_back({"eval",
               {bind<int>("n_samples", [](auto& c) -> auto& { return c.eval.n_samples; }),
                bind<std::uint64_t>("seed", [](auto& c) -> auto& { return c.eval.seed; }),
                bind<int>("spectral_samples", [](auto& c) -> auto& { return c.eval.spectral_samples; }),
                bind<double>("spectral_tol", [](auto& c) -> auto& { return c.eval.spectral_tol; }),
                bind<int>("spectral_max_iter", [](auto& c) -> auto& { return c.eval.spectral_max_iter; }),
                bind<int>("plot_samples", [](auto& c) -> auto& { return c.eval.plot_samples; }),
                bind<int>("nx_1d", [](auto& c) -> auto& { return c.eval.resolution.nx_1d; }),
                bind<int>("nx", [](auto& c) -> auto& { return c.eval.resolution.nx; }),
                bind<int>("nt", [](auto& c) -> auto& { return c.eval.resolution.nt; })}});
  return s;
}

}  // namespace

RunConfig parse_config(std::istream& in) {
  pt::ptree tree;
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw InvalidArgument("config: " + e.message() + " at line " + std::to_string(e.line()));
  }
  const auto sections = schema();
  for (const auto& [name, node] : tree) {
    const auto sec = std::find_if(sections.begin(), sections.end(), [&](const Section& s) { return s.name == name; });
    if (sec == sections.end()) {
      if (node.empty()) throw InvalidArgument("config: key '" + name + "' must sit inside a section");
      throw InvalidArgument("config: unknown section [" + name + "]");
    }
    for (const auto& [key, value] : node) {
      const bool known = std::any_of(sec->fields.begin(), sec->fields.end(), [&](const Field& f) { return f.name == key; });
      if (!known) throw InvalidArgument("config: unknown key " + name + "." + key);
    }
  }

  const auto kind = tree.get_optional<std::string>("problem.kind");
  if (!kind) throw InvalidArgument("problem.kind is required");
  RunConfig c;
  try {
    c.train.problem = ProblemSpec::defaults(problem_from_string(*kind));
  } catch (const InvalidArgument& e) {
    throw InvalidArgument(std::string("problem.kind: ") + e.what());
  }
  c.experiment = *kind;
  c.eval_attack.warm_start = false;

  for (const auto& sec : sections) {
    const auto node = tree.get_child_optional(sec.name);
    if (!node) continue;
    for (const auto& f : sec.fields) {
      if (sec.name == "problem" && f.name == "kind") continue;
      const auto value = node->get_optional<std::string>(f.name);
      if (!value) continue;
      const std::string key = sec.name + "." + f.name;
      if (!f.applies(c)) throw InvalidArgument(key + " does not apply to " + *kind);
      try {
        f.set(c, key, *value);
      } catch (const InvalidArgument& e) {
        const std::string what = e.what();
        throw InvalidArgument(what.find(key) == std::string::npos ? key + ": " + what : what);
      }
    }
  }
  if (tree.get_optional<std::string>("problem.sensor_grid_side") && !tree.get_optional<std::string>("problem.sensors")) {
    c.train.problem.sensor_count = c.train.problem.sensor_grid_side * c.train.problem.sensor_grid_side;
  }
  c.validate();
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  return parse_config(in);
}

void write_config(std::ostream& out, const RunConfig& config) {
  bool first = true;
  for (const auto& sec : schema()) {
    out << (first ? "" : "\n") << "[" << sec.name << "]\n";
    first = false;
    for (const auto& f : sec.fields) {
      if (f.applies(config)) out << f.name << " = " << f.get(config) << "\n";
    }
  }
}

void save_config(const std::filesystem::path& path, const RunConfig& config) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  write_config(out, config);
}

}  // namespace stablepde::cli
