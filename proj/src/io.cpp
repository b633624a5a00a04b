#include "fksteer/io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <vector>

namespace fksteer {

namespace fs = std::filesystem;

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i, v >>= 4) s[static_cast<std::size_t>(i)] = digits[v & 0xf];
  return s;
}

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

namespace {

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  return out;
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, sep)) out.push_back(cell);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

bool parse_number(const std::string& s, double& v) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  if (b == e) return false;
  const auto res = std::from_chars(s.data() + b, s.data() + e, v);
  return res.ec == std::errc() && res.ptr == s.data() + e;
}

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
};

Table read_table(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot read " + path.string());
  Table t;
  std::string line;
  bool first = true;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = split(line, ',');
    std::vector<double> row(cells.size());
    bool numeric = true;
    for (std::size_t i = 0; i < cells.size(); ++i) numeric = numeric && parse_number(cells[i], row[i]);
    if (!numeric) {
      if (first) {
        t.header = cells;
        first = false;
        continue;
      }
      throw Error(ErrorKind::Io, path.string() + ":" + std::to_string(lineno) + ": non-numeric row");
    }
    first = false;
    if (!t.rows.empty() && row.size() != t.rows.front().size())
      throw Error(ErrorKind::Io, path.string() + ":" + std::to_string(lineno) + ": ragged row");
    t.rows.push_back(std::move(row));
  }
  return t;
}

}  // namespace

void write_samples_csv(const fs::path& path, const RowMatrix& points,
                       std::span<const double> weights) {
  auto out = open_out(path);
  for (Eigen::Index j = 0; j < points.cols(); ++j) out << 'x' << j << ',';
  out << "weight\n";
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    for (Eigen::Index j = 0; j < points.cols(); ++j) out << format_double(points(i, j)) << ',';
    out << format_double(weights[static_cast<std::size_t>(i)]) << '\n';
  }
  if (!out) throw Error(ErrorKind::Io, "write failed for " + path.string());
}

WeightedSamples read_samples_csv(const fs::path& path) {
  const Table t = read_table(path);
  if (t.rows.empty()) throw Error(ErrorKind::Io, path.string() + ": no samples");
  const bool has_weight = !t.header.empty() && t.header.back() == "weight";
  const std::size_t cols = t.rows.front().size();
  const std::size_t d = has_weight ? cols - 1 : cols;
  WeightedSamples s;
  s.points.resize(static_cast<Eigen::Index>(t.rows.size()), static_cast<Eigen::Index>(d));
  s.weights.resize(t.rows.size());
  double total = 0.0;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    for (std::size_t j = 0; j < d; ++j) s.points(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = t.rows[i][j];
    s.weights[i] = has_weight ? t.rows[i][d] : 1.0;
    total += s.weights[i];
  }
  for (double& w : s.weights) w /= total;
  return s;
}

RowMatrix read_matrix_csv(const fs::path& path) {
  const Table t = read_table(path);
  if (t.rows.empty()) throw Error(ErrorKind::Io, path.string() + ": empty matrix");
  RowMatrix m(static_cast<Eigen::Index>(t.rows.size()), static_cast<Eigen::Index>(t.rows[0].size()));
  for (std::size_t i = 0; i < t.rows.size(); ++i)
    for (std::size_t j = 0; j < t.rows[i].size(); ++j)
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = t.rows[i][j];
  return m;
}

nlohmann::json trace_row_json(const TraceRow& row) {
  nlohmann::json j;
  j["step"] = row.step;
  j["t"] = row.t;
  j["sigma"] = row.sigma;
  j["ess"] = row.ess;
  j["var_phi"] = row.var_phi;
  j["var_g"] = row.var_g;
  j["theta"] = std::vector<double>(row.theta.data(), row.theta.data() + row.theta.size());
  j["resampled"] = row.resampled;
  if (row.control_fallback) j["control_fallback"] = true;
  if (row.nonfinite) j["nonfinite"] = row.nonfinite;
  return j;
}

void write_trace_jsonl(const fs::path& path, const RunTrace& trace) {
  auto out = open_out(path);
  for (const auto& row : trace.rows) out << trace_row_json(row).dump() << '\n';
  if (!out) throw Error(ErrorKind::Io, "write failed for " + path.string());
}

void write_json(const fs::path& path, const nlohmann::json& j) {
  auto out = open_out(path);
  out << j.dump(2) << '\n';
  if (!out) throw Error(ErrorKind::Io, "write failed for " + path.string());
}

nlohmann::json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot read " + path.string());
  try {
    return nlohmann::json::parse(in, nullptr, true, /*ignore_comments=*/true);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorKind::Config, path.string() + ": " + e.what());
  }
}

}  // namespace fksteer
