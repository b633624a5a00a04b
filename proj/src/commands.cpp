#include "fksteer/commands.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <regex>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "fksteer/io.hpp"
#include "fksteer/reference.hpp"

namespace fksteer {

namespace fs = std::filesystem;
using nlohmann::json;

RunConfig resolve_config(const fs::path& config_path, const CliOptions& opts) {
  json j = read_json(config_path);
  if (j.is_object() && j.contains("config") && j.contains("config_hash")) j = j.at("config");
  if (opts.seeds) {
    if (opts.seeds->empty()) throw Error(ErrorKind::Config, "--seeds: at least one seed is required");
    j["engine"]["seeds"] = *opts.seeds;
  }
  if (opts.deterministic) j["engine"]["deterministic"] = *opts.deterministic;
  return parse_config(j, config_path.parent_path());
}

fs::path output_dir(const RunConfig& c, const fs::path& config_path, const CliOptions& opts) {
  if (opts.out) return *opts.out;
  if (c.output) {
    fs::path p(*c.output);
    return p.is_relative() ? c.base_dir / p : p;
  }
  std::string stem = config_path.stem().string();
  if (stem == "run_meta") stem = config_path.parent_path().filename().string() + "_rerun";
  if (const char* root = std::getenv("FKSTEER_OUTPUT_ROOT"); root && *root) return fs::path(root) / stem;
  return fs::path("runs") / stem;
}

// ---------------------------------------------------------------------------

std::string reference_key(const RunConfig& c) {
  json j = to_json(c);
  json key = {{"target", j["target"]}, {"reference", j["reference"]}};
  key["reference"].erase("seed");
  return hex64(fnv1a64(key.dump()));
}

WeightedSamples reference_samples(const RunConfig& c, const TargetSpec& target,
                                  const std::optional<fs::path>& cache_dir, bool* cache_hit) {
  if (cache_hit) *cache_hit = false;
  const auto& rc = c.reference;
  if (rc.kind == "csv") return read_samples_csv(fs::path(*rc.csv).is_relative() ? c.base_dir / *rc.csv : fs::path(*rc.csv));

  fs::path cached;
  if (cache_dir) {
    cached = *cache_dir / ("reference_" + reference_key(c) + "_" + std::to_string(rc.seed) + ".csv");
    if (fs::exists(cached)) {
      if (cache_hit) *cache_hit = true;
      return read_samples_csv(cached);
    }
  }

  RowMatrix pts;
  if (rc.kind == "baoab") {
    LangevinConfig L = rc.langevin;
    L.temperature = rc.dw4.temperature;
    L.seed = rc.seed;
    pts = baoab_sample(dw4_langevin(rc.dw4), L, rc.samples);
  } else {
    const GmmSpec gmm = build_gmm(c);
    const bool posterior =
        rc.kind == "posterior" || (rc.kind == "auto" && target.has_reward() && c.gamma == 1.0);
    if (posterior) {
      pts = sample_gmm(posterior_gmm(gmm, *target.reward), rc.samples, rc.seed);
    } else {
      RejectionStats stats;
      pts = sample_annealed_gmm(gmm, c.gamma, rc.samples, rc.seed,
                                target.reward ? &*target.reward : nullptr, &stats);
      std::cerr << "reference: rejection acceptance rate " << stats.acceptance_rate() << "\n";
      if (!stats.warning.empty()) std::cerr << "warning: " << stats.warning << "\n";
    }
  }
  WeightedSamples out = WeightedSamples::uniform(std::move(pts));
  if (cache_dir) {
    fs::create_directories(*cache_dir);
    write_samples_csv(cached, out.points, out.weights);
  }
  return out;
}

double mid_trajectory_median(const RunTrace& trace, bool var_phi) {
  const std::size_t M = trace.rows.size();
  std::vector<double> v;
  for (std::size_t k = M / 4; k < 3 * M / 4; ++k)
    v.push_back(var_phi ? trace.rows[k].var_phi : trace.rows[k].var_g);
  if (v.empty()) return 0.0;
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  const double upper = v[mid];
  if (v.size() % 2) return upper;
  const double lower = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lower + upper);
}

json compute_metrics(const RunConfig& c, const TargetSpec& target, const WeightedSamples& samples,
                     const WeightedSamples& reference, const RunTrace& trace) {
  json m;
  const auto enabled = [&](const char* name) {
    return std::find(c.metrics.enabled.begin(), c.metrics.enabled.end(), name) !=
           c.metrics.enabled.end();
  };
  if (enabled("delta_nll"))
    m["delta_nll"] = delta_nll(samples, reference, [&](std::span<const double> x) {
      return target.unnormalized_log_target(x);
    });
  if (enabled("mmd2"))
    m["mmd2"] = mmd_rff(samples, reference, c.metrics.rff_bandwidth, c.metrics.rff_features,
                        c.metrics.rff_seed);
  if (enabled("swd"))
    m["swd"] = sliced_wasserstein(samples, reference, c.metrics.swd_projections, c.metrics.swd_seed);
  if (enabled("mean_l2") || enabled("cov_f")) {
    const SummaryStats s = summary_stats(samples, reference);
    if (enabled("mean_l2")) m["mean_l2"] = s.mean_l2;
    if (enabled("cov_f")) m["cov_f"] = s.cov_frobenius;
  }
  std::size_t resamples = 0, low_ess = 0;
  double ess_min = 1.0;
  for (const auto& r : trace.rows) {
    resamples += r.resampled ? 1 : 0;
    low_ess += r.ess < 0.5 ? 1 : 0;
    ess_min = std::min(ess_min, r.ess);
  }
  m["ess_final"] = trace.rows.empty() ? 1.0 : trace.rows.back().ess;
  m["ess_min"] = ess_min;
  m["steps_ess_below_half"] = low_ess;
  m["resample_count"] = resamples;
  m["var_phi_mid_median"] = mid_trajectory_median(trace, true);
  m["var_g_mid_median"] = mid_trajectory_median(trace, false);
  return m;
}

json aggregate_metrics(const std::vector<json>& reports) {
  std::map<std::string, std::vector<double>> cols;
  for (const auto& r : reports)
    for (const auto& [k, v] : r.items())
      if (v.is_number()) cols[k].push_back(v.get<double>());
  json out = json::object();
  for (const auto& [k, v] : cols) {
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    const double sd = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0;
    out[k] = {{"mean", mean}, {"std", sd}, {"n", v.size()}};
  }
  return out;
}

json design_flags(const RunConfig& c) {
  return {{"forward_process", "variance-exploding, zero forward drift"},
          {"beta_schedule", "linear, beta = t / t_M"},
          {"moment_centering", "empirical weighted centering of g and h"},
          {"ridge", c.engine.ridge},
          {"ridge_scaling", "ridge * trace(A) / n"},
          {"solve_fallback", "zero control on failed factorisation"},
          {"resampling", "systematic"},
          {"ess_threshold", c.engine.ess_threshold},
          {"weight_normalisation", "log-sum-exp with max subtraction"},
          {"integrator", "Euler-Maruyama on the grid's left endpoints"},
          {"final_denoise_step", false},
          {"laplacian", c.engine.force_hutchinson ? "hutchinson (rademacher)" : "analytic"},
          {"hutchinson_probes", c.engine.hutchinson_probes},
          {"refinement_seeds", "common random numbers across rounds"},
          {"mmd_reported", "raw squared MMD (random Fourier features)"},
          {"delta_nll", "difference of unnormalised weighted NLLs"},
          {"ordered_reductions", true}};
}

namespace {

void apply_threads(const CliOptions& opts) {
#ifdef _OPENMP
  if (opts.threads && *opts.threads > 0) omp_set_num_threads(*opts.threads);
#else
  (void)opts;
#endif
}

void check_gmm_reference(const RunConfig& c) {
  if (c.reference.kind == "baoab")
    throw Error(ErrorKind::Config,
                "reference.kind: baoab references are only produced by the reference command");
}

json run_meta(const RunConfig& c, const std::string& command) {
  return {{"command", command},
          {"config", to_json(c)},
          {"config_hash", config_hash(c)},
          {"version", kVersion},
          {"design", design_flags(c)}};
}

const std::vector<std::string> kTableMetrics{"delta_nll", "mmd2", "swd", "mean_l2", "cov_f"};

void write_aggregate_csv(const fs::path& path, const std::vector<std::pair<std::string, json>>& rows) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  out << "method";
  for (const auto& m : kTableMetrics) out << ',' << m << "_mean," << m << "_std";
  out << ",n\n";
  for (const auto& [name, agg] : rows) {
    out << name;
    std::size_t n = 0;
    for (const auto& m : kTableMetrics) {
      if (agg.contains(m)) {
        out << ',' << format_double(agg[m]["mean"].get<double>()) << ','
            << format_double(agg[m]["std"].get<double>());
        n = agg[m]["n"].get<std::size_t>();
      } else {
        out << ",,";
      }
    }
    out << ',' << n << '\n';
  }
}

struct MethodOutcome {
  std::vector<json> reports;
  std::vector<RunTrace> traces;
};

MethodOutcome run_method(const RunConfig& c, const TargetSpec& target, Method method,
                         const WeightedSamples& reference, const fs::path& dir) {
  fs::create_directories(dir);
  MethodOutcome outcome;
  for (std::uint64_t seed : c.seeds) {
    Engine engine(engine_config_for(c, method, seed), c.schedule, target);
    RunResult result;
    if (c.rounds > 1) {
      auto rounds = engine.refine(c.rounds);
      for (std::size_t r = 0; r < rounds.size(); ++r)
        write_trace_jsonl(dir / ("trace_" + std::to_string(seed) + "_round" + std::to_string(r + 1) + ".jsonl"),
                          rounds[r].trace);
      result = std::move(rounds.back());
    } else {
      result = engine.run();
    }
    for (const auto& w : result.trace.warnings) std::cerr << "warning: seed " << seed << ": " << w << "\n";
    write_samples_csv(dir / ("final_samples_" + std::to_string(seed) + ".csv"),
                      result.ensemble.positions, result.weights);
    write_trace_jsonl(dir / ("trace_" + std::to_string(seed) + ".jsonl"), result.trace);
    WeightedSamples samples{result.ensemble.positions, result.weights};
    json report = compute_metrics(c, target, samples, reference, result.trace);
    write_json(dir / ("metrics_" + std::to_string(seed) + ".json"), report);
    std::cerr << to_string(method) << " seed " << seed << ": " << report.dump() << " ("
              << result.trace.wall_seconds << " s)\n";
    outcome.reports.push_back(std::move(report));
    outcome.traces.push_back(std::move(result.trace));
  }
  return outcome;
}

}  // namespace

int cmd_run(const fs::path& config_path, const CliOptions& opts) {
  apply_threads(opts);
  const RunConfig c = resolve_config(config_path, opts);
  check_gmm_reference(c);
  const TargetSpec target = build_target(c);
  for (std::uint64_t seed : c.seeds) Engine(engine_config_for(c, c.engine.method, seed), c.schedule, target);
  const fs::path dir = output_dir(c, config_path, opts);

  const WeightedSamples reference = reference_samples(c, target, dir / "reference");
  fs::create_directories(dir);
  write_json(dir / "run_meta.json", run_meta(c, "run"));
  const MethodOutcome o = run_method(c, target, c.engine.method, reference, dir);
  write_aggregate_csv(dir / "aggregate.csv", {{to_string(c.engine.method), aggregate_metrics(o.reports)}});
  return 0;
}

int cmd_compare(const fs::path& config_path, const CliOptions& opts) {
  apply_threads(opts);
  const RunConfig c = resolve_config(config_path, opts);
  check_gmm_reference(c);
  const TargetSpec target = build_target(c);
  for (Method m : c.compare_methods)
    for (std::uint64_t seed : c.seeds) Engine(engine_config_for(c, m, seed), c.schedule, target);
  const fs::path dir = output_dir(c, config_path, opts);

  const WeightedSamples reference = reference_samples(c, target, dir / "reference");
  fs::create_directories(dir);
  write_json(dir / "run_meta.json", run_meta(c, "compare"));

  std::vector<std::pair<std::string, json>> rows;
  std::ofstream traces(dir / "compare_traces.csv", std::ios::trunc);
  if (!traces) throw Error(ErrorKind::Io, "cannot write compare_traces.csv");
  traces << "method,seed,step,t,sigma,ess,var_phi,var_g,resampled\n";
  for (Method m : c.compare_methods) {
    RunConfig cm = c;
    if (!is_controlled(m)) cm.rounds = 1;
    const MethodOutcome o = run_method(cm, target, m, reference, dir / to_string(m));
    rows.emplace_back(to_string(m), aggregate_metrics(o.reports));
    for (std::size_t s = 0; s < o.traces.size(); ++s)
      for (const auto& r : o.traces[s].rows)
        traces << to_string(m) << ',' << c.seeds[s] << ',' << r.step << ',' << format_double(r.t)
               << ',' << format_double(r.sigma) << ',' << format_double(r.ess) << ','
               << format_double(r.var_phi) << ',' << format_double(r.var_g) << ','
               << (r.resampled ? 1 : 0) << '\n';
  }
  write_aggregate_csv(dir / "compare_table.csv", rows);
  return 0;
}

int cmd_reference(const fs::path& config_path, const CliOptions& opts) {
  apply_threads(opts);
  const RunConfig c = resolve_config(config_path, opts);
  if (c.reference.kind == "csv")
    throw Error(ErrorKind::Config, "reference.kind: csv references are inputs, not outputs");
  const fs::path dir = output_dir(c, config_path, opts);
  std::optional<TargetSpec> target;
  if (c.reference.kind != "baoab") target = build_target(c);
  bool hit = false;
  const WeightedSamples ref =
      c.reference.kind == "baoab"
          ? reference_samples(c, TargetSpec{}, dir, &hit)
          : reference_samples(c, *target, dir, &hit);
  std::cerr << (hit ? "reference cache hit: " : "reference written: ") << ref.size() << " samples in "
            << (dir / ("reference_" + reference_key(c) + "_" + std::to_string(c.reference.seed) + ".csv")).string()
            << "\n";
  return 0;
}

int cmd_aggregate(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw Error(ErrorKind::Config, "aggregate: not a directory: " + dir.string());
  const std::regex pattern("metrics_([0-9]+)\\.json");
  std::map<std::string, std::vector<json>> groups;
  std::vector<fs::path> files;
  for (const auto& entry : fs::recursive_directory_iterator(dir))
    if (entry.is_regular_file() && std::regex_match(entry.path().filename().string(), pattern))
      files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  if (files.empty()) throw Error(ErrorKind::Config, "aggregate: no metrics_<seed>.json under " + dir.string());
  for (const auto& f : files) {
    const fs::path parent = f.parent_path();
    const std::string name = parent == dir ? dir.filename().string() : parent.filename().string();
    groups[name].push_back(read_json(f));
  }
  std::vector<std::pair<std::string, json>> rows;
  for (const auto& [name, reports] : groups) rows.emplace_back(name, aggregate_metrics(reports));
  write_aggregate_csv(dir / "aggregate.csv", rows);
  std::cerr << "aggregate: " << files.size() << " reports in " << rows.size() << " groups\n";
  return 0;
}

int exit_code_for(const Error& e) {
  switch (e.kind()) {
    case ErrorKind::Config:
    case ErrorKind::InvalidSchedule:
    case ErrorKind::RewardAbsent:
    case ErrorKind::DimensionMismatch:
      return 2;
    case ErrorKind::NonFiniteInput:
    case ErrorKind::NonFiniteDrift:
    case ErrorKind::Divergence:
      return 3;
    case ErrorKind::Io:
      return 4;
  }
  return 1;
}

}  // namespace fksteer
