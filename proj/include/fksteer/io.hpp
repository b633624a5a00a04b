#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>

#include <json.hpp>

#include "fksteer/common.hpp"
#include "fksteer/metrics.hpp"
#include "fksteer/smc.hpp"

namespace fksteer {

/// 64-bit FNV-1a.
std::uint64_t fnv1a64(std::string_view bytes);
std::string hex64(std::uint64_t v);

/// Shortest round-trip representation of a double.
std::string format_double(double v);

/// d position columns x0..x{d-1} followed by a `weight` column.
void write_samples_csv(const std::filesystem::path& path, const RowMatrix& points,
                       std::span<const double> weights);

/// Reads a sample CSV with a header row. A trailing `weight` column is used
/// as weights (renormalised); without it the weights are uniform.
WeightedSamples read_samples_csv(const std::filesystem::path& path);

/// Plain numeric CSV (optional header), one row per line.
RowMatrix read_matrix_csv(const std::filesystem::path& path);

nlohmann::json trace_row_json(const TraceRow& row);
void write_trace_jsonl(const std::filesystem::path& path, const RunTrace& trace);

void write_json(const std::filesystem::path& path, const nlohmann::json& j);
nlohmann::json read_json(const std::filesystem::path& path);

}  // namespace fksteer
