#include "fksteer/config.hpp"

#include <cmath>
#include <set>

#include "fksteer/io.hpp"
#include "fksteer/rng.hpp"

namespace fksteer {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

[[noreturn]] void fail(const std::string& where, const std::string& msg) {
  throw Error(ErrorKind::Config, where + ": " + msg);
}

// Reads members of one JSON object and rejects keys nobody asked for.
class Section {
 public:
  Section(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) fail(where_, "expected an object");
  }

  ~Section() noexcept(false) {
    if (std::uncaught_exceptions() > 0) return;
    for (const auto& [key, _] : j_.items())
      if (!seen_.count(key)) fail(where_ + "." + key, "unknown key");
  }

  bool has(const std::string& key) {
    seen_.insert(key);
    return j_.contains(key) && !j_.at(key).is_null();
  }

  const json& at(const std::string& key) {
    seen_.insert(key);
    return j_.at(key);
  }

  std::string path(const std::string& key) const { return where_ + "." + key; }

  template <class T>
  void get(const std::string& key, T& out) {
    if (!has(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception&) {
      fail(path(key), "wrong type");
    }
  }

  void get_count(const std::string& key, std::size_t& out) {
    if (!has(key)) return;
    const json& v = j_.at(key);
    if (!v.is_number_integer() || v.get<long long>() < 0) fail(path(key), "expected a non-negative integer");
    out = v.get<std::size_t>();
  }

  void get_seed(const std::string& key, std::uint64_t& out) {
    if (!has(key)) return;
    const json& v = j_.at(key);
    if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<long long>() < 0))
      fail(path(key), "expected a non-negative integer seed");
    out = v.get<std::uint64_t>();
  }

  void get_real(const std::string& key, double& out) {
    if (!has(key)) return;
    const json& v = j_.at(key);
    if (!v.is_number()) fail(path(key), "expected a number");
    out = v.get<double>();
    if (!std::isfinite(out)) fail(path(key), "must be finite");
  }

 private:
  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

bool is_seed(const json& v) {
  return v.is_number_unsigned() || (v.is_number_integer() && v.get<long long>() >= 0);
}

std::vector<std::uint64_t> parse_seeds(const json& v, const std::string& where) {
  std::vector<std::uint64_t> seeds;
  if (is_seed(v)) {
    seeds.push_back(v.get<std::uint64_t>());
  } else if (v.is_array()) {
    for (const auto& s : v) {
      if (!is_seed(s)) fail(where, "seeds must be non-negative integers");
      seeds.push_back(s.get<std::uint64_t>());
    }
  } else {
    fail(where, "expected a seed or a list of seeds");
  }
  if (seeds.empty()) fail(where, "at least one seed is required");
  return seeds;
}

fs::path resolve(const fs::path& base, const std::string& p) {
  fs::path path(p);
  if (path.is_relative() && !base.empty()) path = base / path;
  return path;
}

}  // namespace

RunConfig parse_config(const json& root_in, const fs::path& base_dir) {
  const json& root = (root_in.is_object() && root_in.contains("config") &&
                      root_in.contains("config_hash"))
                         ? root_in.at("config")
                         : root_in;
  RunConfig c;
  c.base_dir = base_dir;
  Section top(root, "config");

  if (top.has("schedule")) {
    Section s(top.at("schedule"), "schedule");
    s.get_real("sigma_min", c.schedule.sigma_min);
    s.get_real("sigma_max", c.schedule.sigma_max);
    s.get_real("rho", c.schedule.rho);
    s.get_real("churn", c.schedule.churn);
    s.get_count("steps", c.steps);
  }
  try {
    c.schedule.validate();
  } catch (const Error& e) {
    fail("schedule", e.what());
  }
  if (c.steps < 2) fail("schedule.steps", "must be at least 2");

  if (top.has("target")) {
    Section t(top.at("target"), "target");
    t.get_real("gamma", c.gamma);
    if (t.has("gmm")) {
      Section g(t.at("gmm"), "target.gmm");
      g.get_count("components", c.gmm.components);
      g.get_count("dim", c.gmm.dim);
      g.get_real("half_width", c.gmm.half_width);
      g.get_real("variance", c.gmm.variance);
      g.get_seed("seed", c.gmm.seed);
      if (g.has("means_csv")) {
        std::string p;
        g.get("means_csv", p);
        c.gmm.means_csv = p;
      }
      g.get("weights", c.gmm.weights);
    }
    if (t.has("reward")) {
      RewardConfig r;
      Section rs(t.at("reward"), "target.reward");
      rs.get("center", r.center);
      rs.get_seed("center_seed", r.center_seed);
      rs.get_real("center_std", r.center_std);
      rs.get_real("scale", r.scale);
      if (!(r.scale > 0.0)) fail("target.reward.scale", "must be positive");
      if (!(r.center_std >= 0.0)) fail("target.reward.center_std", "must be non-negative");
      c.reward = r;
    }
  }
  if (!(c.gamma >= 1.0)) fail("target.gamma", "must be >= 1");
  if (c.gmm.components == 0) fail("target.gmm.components", "must be positive");
  if (c.gmm.dim == 0) fail("target.gmm.dim", "must be positive");
  if (!(c.gmm.variance > 0.0)) fail("target.gmm.variance", "must be positive");

  if (top.has("engine")) {
    Section e(top.at("engine"), "engine");
    if (e.has("method")) {
      std::string m;
      e.get("method", m);
      c.engine.method = parse_method(m);
    }
    e.get_count("particles", c.engine.particles);
    e.get_real("ess_threshold", c.engine.ess_threshold);
    if (e.has("resample_period")) {
      std::size_t k = 0;
      e.get_count("resample_period", k);
      c.engine.resample_period = k;
    }
    if (e.has("seeds")) c.seeds = parse_seeds(e.at("seeds"), "engine.seeds");
    e.get("deterministic", c.engine.deterministic);
    e.get_real("ridge", c.engine.ridge);
    e.get_count("hutchinson_probes", c.engine.hutchinson_probes);
    e.get("force_hutchinson", c.engine.force_hutchinson);
    e.get("ecg_score_norm", c.engine.ecg_score_norm);
    e.get_count("ecg_score_projections", c.engine.ecg_score_projections);
    e.get_real("nonfinite_tolerance", c.engine.nonfinite_tolerance);
    e.get_count("rounds", c.rounds);
  }
  c.engine.steps = c.steps;
  try {
    c.engine.validate();
  } catch (const Error& e) {
    fail("engine", e.what());
  }
  if (c.rounds == 0) fail("engine.rounds", "must be at least 1");
  if (c.rounds > 1 && !is_controlled(c.engine.method))
    fail("engine.rounds", "refinement needs a controlled method");

  if (top.has("metrics")) {
    Section m(top.at("metrics"), "metrics");
    m.get("enabled", c.metrics.enabled);
    m.get_count("rff_features", c.metrics.rff_features);
    m.get_real("rff_bandwidth", c.metrics.rff_bandwidth);
    m.get_seed("rff_seed", c.metrics.rff_seed);
    m.get_count("swd_projections", c.metrics.swd_projections);
    m.get_seed("swd_seed", c.metrics.swd_seed);
  }
  static const std::set<std::string> known{"delta_nll", "mmd2", "swd", "mean_l2", "cov_f"};
  for (const auto& name : c.metrics.enabled)
    if (!known.count(name)) fail("metrics.enabled", "unknown metric '" + name + "'");
  if (c.metrics.rff_features == 0 || c.metrics.rff_features % 2)
    fail("metrics.rff_features", "must be even and positive");
  if (!(c.metrics.rff_bandwidth > 0.0)) fail("metrics.rff_bandwidth", "must be positive");
  if (c.metrics.swd_projections == 0) fail("metrics.swd_projections", "must be positive");

  if (top.has("reference")) {
    Section r(top.at("reference"), "reference");
    r.get("kind", c.reference.kind);
    if (r.has("csv")) {
      std::string p;
      r.get("csv", p);
      c.reference.csv = p;
    }
    r.get_count("samples", c.reference.samples);
    r.get_seed("seed", c.reference.seed);
    if (r.has("dw4")) {
      Section d(r.at("dw4"), "reference.dw4");
      auto& w = c.reference.dw4;
      d.get_real("a", w.a);
      d.get_real("b", w.b);
      d.get_real("c", w.c);
      d.get_real("d0", w.d0);
      d.get_real("harmonic", w.harmonic);
      d.get_real("temperature", w.temperature);
    }
    if (r.has("langevin")) {
      Section l(r.at("langevin"), "reference.langevin");
      auto& L = c.reference.langevin;
      l.get_real("dt", L.dt);
      l.get_real("friction", L.friction);
      l.get_count("burn_in", L.burn_in);
      l.get_count("thin", L.thin);
      l.get_real("energy_ceiling", L.energy_ceiling);
    }
  }
  static const std::set<std::string> kinds{"auto", "rejection", "posterior", "csv", "baoab"};
  if (!kinds.count(c.reference.kind)) fail("reference.kind", "unknown kind '" + c.reference.kind + "'");
  if (c.reference.kind == "csv" && !c.reference.csv) fail("reference.csv", "required for kind csv");
  if (c.reference.kind == "posterior" && (!c.reward || c.gamma != 1.0))
    fail("reference.kind", "posterior reference needs a reward and gamma = 1");
  if (c.reference.samples == 0) fail("reference.samples", "must be positive");
  if (c.reference.kind == "baoab") {
    try {
      c.reference.dw4.validate();
      c.reference.langevin.temperature = c.reference.dw4.temperature;
      c.reference.langevin.validate();
    } catch (const Error& e) {
      fail("reference", e.what());
    }
  }

  if (top.has("compare")) {
    Section cm(top.at("compare"), "compare");
    if (cm.has("methods")) {
      std::vector<std::string> names;
      cm.get("methods", names);
      if (names.empty()) fail("compare.methods", "must list at least one method");
      c.compare_methods.clear();
      for (const auto& n : names) c.compare_methods.push_back(parse_method(n));
    }
  }

  if (top.has("output")) {
    std::string o;
    top.get("output", o);
    c.output = o;
  }

  // Referenced files must exist before anything is run.
  if (c.gmm.means_csv && !fs::exists(resolve(base_dir, *c.gmm.means_csv)))
    fail("target.gmm.means_csv", "file not found: " + *c.gmm.means_csv);
  if (c.reference.csv && !fs::exists(resolve(base_dir, *c.reference.csv)))
    fail("reference.csv", "file not found: " + *c.reference.csv);
  if (!c.gmm.weights.empty() && c.gmm.weights.size() != c.gmm.components && !c.gmm.means_csv)
    fail("target.gmm.weights", "length must equal components");
  if (c.reward && !c.reward->center.empty() && c.reward->center.size() != c.gmm.dim && !c.gmm.means_csv)
    fail("target.reward.center", "length must equal the GMM dimension");
  return c;
}

RunConfig load_config(const fs::path& path) {
  return parse_config(read_json(path), path.parent_path());
}

json to_json(const RunConfig& c) {
  json j;
  j["schedule"] = {{"sigma_min", c.schedule.sigma_min},
                   {"sigma_max", c.schedule.sigma_max},
                   {"rho", c.schedule.rho},
                   {"churn", c.schedule.churn},
                   {"steps", c.steps}};
  json gmm = {{"components", c.gmm.components},
              {"dim", c.gmm.dim},
              {"half_width", c.gmm.half_width},
              {"variance", c.gmm.variance},
              {"seed", c.gmm.seed}};
  if (c.gmm.means_csv) gmm["means_csv"] = resolve(c.base_dir, *c.gmm.means_csv).string();
  if (!c.gmm.weights.empty()) gmm["weights"] = c.gmm.weights;
  j["target"] = {{"gamma", c.gamma}, {"gmm", gmm}};
  if (c.reward) {
    json r = {{"center_seed", c.reward->center_seed},
              {"center_std", c.reward->center_std},
              {"scale", c.reward->scale}};
    if (!c.reward->center.empty()) r["center"] = c.reward->center;
    j["target"]["reward"] = r;
  }
  json e = {{"method", to_string(c.engine.method)},
            {"particles", c.engine.particles},
            {"ess_threshold", c.engine.ess_threshold},
            {"seeds", c.seeds},
            {"deterministic", c.engine.deterministic},
            {"ridge", c.engine.ridge},
            {"hutchinson_probes", c.engine.hutchinson_probes},
            {"force_hutchinson", c.engine.force_hutchinson},
            {"ecg_score_norm", c.engine.ecg_score_norm},
            {"ecg_score_projections", c.engine.ecg_score_projections},
            {"nonfinite_tolerance", c.engine.nonfinite_tolerance},
            {"rounds", c.rounds}};
  if (c.engine.resample_period) e["resample_period"] = *c.engine.resample_period;
  j["engine"] = e;
  j["metrics"] = {{"enabled", c.metrics.enabled},
                  {"rff_features", c.metrics.rff_features},
                  {"rff_bandwidth", c.metrics.rff_bandwidth},
                  {"rff_seed", c.metrics.rff_seed},
                  {"swd_projections", c.metrics.swd_projections},
                  {"swd_seed", c.metrics.swd_seed}};
  json ref = {{"kind", c.reference.kind},
              {"samples", c.reference.samples},
              {"seed", c.reference.seed}};
  if (c.reference.csv) ref["csv"] = resolve(c.base_dir, *c.reference.csv).string();
  if (c.reference.kind == "baoab") {
    const auto& w = c.reference.dw4;
    const auto& L = c.reference.langevin;
    ref["dw4"] = {{"a", w.a}, {"b", w.b}, {"c", w.c}, {"d0", w.d0},
                  {"harmonic", w.harmonic}, {"temperature", w.temperature}};
    ref["langevin"] = {{"dt", L.dt}, {"friction", L.friction}, {"burn_in", L.burn_in},
                       {"thin", L.thin}, {"energy_ceiling", L.energy_ceiling}};
  }
  j["reference"] = ref;
  std::vector<std::string> methods;
  for (Method m : c.compare_methods) methods.emplace_back(to_string(m));
  j["compare"] = {{"methods", methods}};
  if (c.output) j["output"] = *c.output;
  return j;
}

std::string config_hash(const RunConfig& c) {
  json j = to_json(c);
  j.erase("output");
  j["engine"].erase("seeds");
  return hex64(fnv1a64(j.dump()));
}

GmmSpec build_gmm(const RunConfig& c) {
  GmmSpec spec;
  if (c.gmm.means_csv) {
    spec.means = read_matrix_csv(resolve(c.base_dir, *c.gmm.means_csv));
    spec.component_variance = c.gmm.variance;
    const auto K = static_cast<std::size_t>(spec.means.rows());
    spec.weights = c.gmm.weights.empty() ? std::vector<double>(K, 1.0 / static_cast<double>(K))
                                         : c.gmm.weights;
  } else {
    spec = GmmSpec::uniform_means(c.gmm.components, c.gmm.dim, c.gmm.half_width,
                                  c.gmm.variance, c.gmm.seed);
    if (!c.gmm.weights.empty()) spec.weights = c.gmm.weights;
  }
  try {
    spec.validate();
  } catch (const Error& e) {
    fail("target.gmm", e.what());
  }
  return spec;
}

std::optional<QuadraticReward> build_reward(const RunConfig& c) {
  if (!c.reward) return std::nullopt;
  const std::size_t d = build_gmm(c).dim();
  QuadraticReward r;
  r.scale = c.reward->scale;
  if (!c.reward->center.empty()) {
    if (c.reward->center.size() != d) fail("target.reward.center", "length must equal the GMM dimension");
    r.center = Eigen::Map<const Vector>(c.reward->center.data(), static_cast<Eigen::Index>(d));
  } else {
    r.center.resize(static_cast<Eigen::Index>(d));
    StreamRng rng(c.reward->center_seed, StreamPurpose::Problem, 1);
    for (Eigen::Index j = 0; j < r.center.size(); ++j) r.center[j] = c.reward->center_std * rng.normal();
  }
  return r;
}

TargetSpec build_target(const RunConfig& c) {
  TargetSpec t;
  t.base = std::make_shared<GmmScoreModel>(build_gmm(c));
  t.gamma = c.gamma;
  t.reward = build_reward(c);
  t.reward_schedule.horizon = c.schedule.horizon();
  t.validate();
  return t;
}

EngineConfig engine_config_for(const RunConfig& c, Method method, std::uint64_t seed) {
  EngineConfig e = c.engine;
  e.method = method;
  e.seed = seed;
  e.steps = c.steps;
  return e;
}

}  // namespace fksteer
