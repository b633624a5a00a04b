#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "fksteer/reference.hpp"
#include "fksteer/schedule.hpp"
#include "fksteer/smc.hpp"
#include "fksteer/targets.hpp"

namespace fksteer {

struct GmmConfig {
  std::size_t components = 40;
  std::size_t dim = 30;
  double half_width = 40.0;
  double variance = 50.0;
  std::uint64_t seed = 0;
  std::optional<std::string> means_csv;
  std::vector<double> weights;  // empty: uniform
};

struct RewardConfig {
  std::vector<double> center;  // empty: drawn from N(0, center_std^2 I)
  std::uint64_t center_seed = 1;
  double center_std = 10.0;
  double scale = 100.0;
};

struct ReferenceConfig {
  // auto | rejection | posterior | csv | baoab
  std::string kind = "auto";
  std::optional<std::string> csv;
  std::size_t samples = 8192;
  std::uint64_t seed = 20240601;
  // baoab only
  DoubleWellSpec dw4;
  LangevinConfig langevin;
};

struct MetricsConfig {
  std::vector<std::string> enabled{"delta_nll", "mmd2", "swd", "mean_l2", "cov_f"};
  std::size_t rff_features = 2048;
  double rff_bandwidth = 20.0;
  std::uint64_t rff_seed = 7;
  std::size_t swd_projections = 10;
  std::uint64_t swd_seed = 11;
};

struct RunConfig {
  DiffusionSchedule schedule;
  std::size_t steps = 500;
  GmmConfig gmm;
  double gamma = 1.0;
  std::optional<RewardConfig> reward;
  EngineConfig engine;
  std::vector<std::uint64_t> seeds{0};
  std::size_t rounds = 1;
  MetricsConfig metrics;
  ReferenceConfig reference;
  std::vector<Method> compare_methods{Method::PG,  Method::GSMC, Method::VCG,
                                      Method::VCG_SMC, Method::ECG, Method::ECG_SMC};
  std::optional<std::string> output;
  std::filesystem::path base_dir;  // relative paths in the config resolve against this
};

/// Parses a config tree, filling defaults. Throws Error(Config) with the
/// offending key on unknown keys, wrong types or invalid values. A saved
/// run_meta.json (with a "config" member) is accepted as well.
RunConfig parse_config(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
RunConfig load_config(const std::filesystem::path& path);

/// Fully resolved config; parse_config(to_json(c)) reproduces c.
nlohmann::json to_json(const RunConfig& c);

/// Hash of the resolved config.
std::string config_hash(const RunConfig& c);

GmmSpec build_gmm(const RunConfig& c);
std::optional<QuadraticReward> build_reward(const RunConfig& c);
TargetSpec build_target(const RunConfig& c);
EngineConfig engine_config_for(const RunConfig& c, Method method, std::uint64_t seed);

}  // namespace fksteer
