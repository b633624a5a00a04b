#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "fksteer/config.hpp"
#include "fksteer/metrics.hpp"
#include "fksteer/smc.hpp"

namespace fksteer {

inline constexpr const char* kVersion = "0.1.0";

struct CliOptions {
  std::optional<std::filesystem::path> out;
  std::optional<std::vector<std::uint64_t>> seeds;
  std::optional<int> threads;
  std::optional<bool> deterministic;
};

/// Config with command-line overrides applied and re-validated.
RunConfig resolve_config(const std::filesystem::path& config_path, const CliOptions& opts);

/// --out, then the config's `output`, then $FKSTEER_OUTPUT_ROOT/<config stem>,
/// then ./runs/<config stem>.
std::filesystem::path output_dir(const RunConfig& c, const std::filesystem::path& config_path,
                                 const CliOptions& opts);

/// Reference samples for the configured target. With a cache directory the
/// set is stored as reference_<hash>_<seed>.csv and reused when present.
WeightedSamples reference_samples(const RunConfig& c, const TargetSpec& target,
                                  const std::optional<std::filesystem::path>& cache_dir = {},
                                  bool* cache_hit = nullptr);
std::string reference_key(const RunConfig& c);

/// Flat metric report (no timings, so it is deterministic).
nlohmann::json compute_metrics(const RunConfig& c, const TargetSpec& target,
                               const WeightedSamples& samples, const WeightedSamples& reference,
                               const RunTrace& trace);

/// {metric: {mean, std, n}} over per-seed reports; std is the sample std.
nlohmann::json aggregate_metrics(const std::vector<nlohmann::json>& reports);

/// Median over steps [M/4, 3M/4) of a trace column.
double mid_trajectory_median(const RunTrace& trace, bool var_phi);

nlohmann::json design_flags(const RunConfig& c);

int cmd_run(const std::filesystem::path& config_path, const CliOptions& opts);
int cmd_compare(const std::filesystem::path& config_path, const CliOptions& opts);
int cmd_reference(const std::filesystem::path& config_path, const CliOptions& opts);
int cmd_aggregate(const std::filesystem::path& dir);

/// 2 for config errors, 3 for numeric failures, 4 for I/O, 1 otherwise.
int exit_code_for(const Error& e);

}  // namespace fksteer
