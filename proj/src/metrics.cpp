#include "fksteer/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "fksteer/rng.hpp"

namespace fksteer {

WeightedSamples WeightedSamples::uniform(RowMatrix points) {
  WeightedSamples s;
  const auto n = static_cast<std::size_t>(points.rows());
  s.points = std::move(points);
  s.weights.assign(n, n ? 1.0 / static_cast<double>(n) : 0.0);
  return s;
}

void WeightedSamples::validate() const {
  if (weights.size() != size())
    throw Error(ErrorKind::DimensionMismatch, "weights and points differ in count");
  double total = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w))
      throw Error(ErrorKind::NonFiniteInput, "sample weights must be finite and non-negative");
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-9)
    throw Error(ErrorKind::NonFiniteInput, "sample weights must sum to 1");
}

namespace {

void check_pair(const WeightedSamples& a, const WeightedSamples& b) {
  a.validate();
  b.validate();
  if (a.dim() != b.dim()) throw Error(ErrorKind::DimensionMismatch, "sample dimensions differ");
}

std::vector<double> project(const WeightedSamples& s, std::span<const double> dir) {
  std::vector<double> out(s.size());
  for (std::size_t i = 0; i < s.size(); ++i)
    out[i] = dot(row_span(s.points, static_cast<Eigen::Index>(i)), dir);
  return out;
}

struct Sorted {
  std::vector<double> v, w;
};

Sorted sorted_pairs(std::span<const double> v, std::span<const double> w) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t i, std::size_t j) { return v[i] < v[j]; });
  Sorted s;
  s.v.reserve(v.size());
  s.w.reserve(v.size());
  for (std::size_t i : idx) {
    if (w[i] <= 0.0) continue;
    s.v.push_back(v[i]);
    s.w.push_back(w[i]);
  }
  return s;
}

}  // namespace

double delta_nll(const WeightedSamples& samples, const WeightedSamples& reference,
                 const LogDensityFn& log_q) {
  samples.validate();
  reference.validate();
  auto nll = [&](const WeightedSamples& s) {
    double acc = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i)
      if (s.weights[i] > 0.0)
        acc -= s.weights[i] * log_q(row_span(s.points, static_cast<Eigen::Index>(i)));
    return acc;
  };
  return nll(samples) - nll(reference);
}

double mmd_rff(const WeightedSamples& a, const WeightedSamples& b, double bandwidth,
               std::size_t features, std::uint64_t seed) {
  check_pair(a, b);
  if (features == 0 || features % 2 != 0)
    throw Error(ErrorKind::Config, "feature count must be even and positive");
  if (!(bandwidth > 0.0)) throw Error(ErrorKind::Config, "bandwidth must be positive");
  const std::size_t d = a.dim();
  const std::size_t m = features / 2;
  RowMatrix omega(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(d));
  StreamRng rng(seed, StreamPurpose::Features);
  for (Eigen::Index i = 0; i < omega.rows(); ++i)
    for (Eigen::Index j = 0; j < omega.cols(); ++j) omega(i, j) = rng.normal() / bandwidth;

  auto embed = [&](const WeightedSamples& s) {
    std::vector<double> c(m, 0.0), sn(m, 0.0);
    for (std::size_t p = 0; p < s.size(); ++p) {
      const double w = s.weights[p];
      if (w == 0.0) continue;
      const auto x = row_span(s.points, static_cast<Eigen::Index>(p));
      for (std::size_t i = 0; i < m; ++i) {
        const double proj = dot(row_span(omega, static_cast<Eigen::Index>(i)), x);
        c[i] += w * std::cos(proj);
        sn[i] += w * std::sin(proj);
      }
    }
    return std::pair{c, sn};
  };
  const auto [ca, sa] = embed(a);
  const auto [cb, sb] = embed(b);
  double acc = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const double dc = ca[i] - cb[i];
    const double ds = sa[i] - sb[i];
    acc += dc * dc + ds * ds;
  }
  return acc / static_cast<double>(m);
}

double w2_squared_1d(std::span<const double> va, std::span<const double> wa,
                     std::span<const double> vb, std::span<const double> wb) {
  const Sorted a = sorted_pairs(va, wa);
  const Sorted b = sorted_pairs(vb, wb);
  if (a.v.empty() || b.v.empty()) return 0.0;
  const double ta = std::accumulate(a.w.begin(), a.w.end(), 0.0);
  const double tb = std::accumulate(b.w.begin(), b.w.end(), 0.0);
  // Walk both quantile functions on the merged CDF breakpoints.
  std::size_t i = 0, j = 0;
  double ra = a.w[0] / ta, rb = b.w[0] / tb;  // remaining mass of the current atoms
  double total = 0.0;
  while (i < a.v.size() && j < b.v.size()) {
    const double mass = std::min(ra, rb);
    const double diff = a.v[i] - b.v[j];
    total += mass * diff * diff;
    ra -= mass;
    rb -= mass;
    if (ra <= 1e-15) {
      if (++i < a.v.size()) ra = a.w[i] / ta;
    }
    if (rb <= 1e-15) {
      if (++j < b.v.size()) rb = b.w[j] / tb;
    }
  }
  return total;
}

double w1_1d(std::span<const double> va, std::span<const double> wa,
             std::span<const double> vb, std::span<const double> wb) {
  const Sorted a = sorted_pairs(va, wa);
  const Sorted b = sorted_pairs(vb, wb);
  if (a.v.empty() || b.v.empty()) return 0.0;
  const double ta = std::accumulate(a.w.begin(), a.w.end(), 0.0);
  const double tb = std::accumulate(b.w.begin(), b.w.end(), 0.0);
  // Integrate |F_a - F_b| between consecutive merged support points.
  std::size_t i = 0, j = 0;
  double fa = 0.0, fb = 0.0, total = 0.0;
  double x = std::min(a.v[0], b.v[0]);
  while (i < a.v.size() || j < b.v.size()) {
    const double next_a = i < a.v.size() ? a.v[i] : std::numeric_limits<double>::infinity();
    const double next_b = j < b.v.size() ? b.v[j] : std::numeric_limits<double>::infinity();
    const double next = std::min(next_a, next_b);
    total += std::abs(fa - fb) * (next - x);
    x = next;
    while (i < a.v.size() && a.v[i] == next) fa += a.w[i++] / ta;
    while (j < b.v.size() && b.v[j] == next) fb += b.w[j++] / tb;
  }
  return total;
}

double sliced_wasserstein(const WeightedSamples& a, const WeightedSamples& b,
                          std::size_t projections, std::uint64_t seed) {
  check_pair(a, b);
  if (projections == 0) throw Error(ErrorKind::Config, "need at least one projection");
  const std::size_t d = a.dim();
  StreamRng rng(seed, StreamPurpose::Projections);
  std::vector<double> dir(d);
  double acc = 0.0;
  for (std::size_t p = 0; p < projections; ++p) {
    double norm = 0.0;
    do {
      for (double& x : dir) x = rng.normal();
      norm = std::sqrt(squared_norm(dir));
    } while (norm == 0.0);
    for (double& x : dir) x /= norm;
    acc += w2_squared_1d(project(a, dir), a.weights, project(b, dir), b.weights);
  }
  return std::sqrt(acc / static_cast<double>(projections));
}

Rdf rdf(const WeightedSamples& configs, std::size_t n_particles, std::size_t spatial_dim,
        std::size_t bins) {
  configs.validate();
  if (n_particles < 2 || n_particles * spatial_dim != configs.dim())
    throw Error(ErrorKind::DimensionMismatch, "configuration layout does not match dimension");
  const std::size_t pairs = n_particles * (n_particles - 1) / 2;
  Rdf out;
  out.distances.reserve(configs.size() * pairs);
  out.weights.reserve(configs.size() * pairs);
  for (std::size_t c = 0; c < configs.size(); ++c) {
    const auto x = row_span(configs.points, static_cast<Eigen::Index>(c));
    const double w = configs.weights[c] / static_cast<double>(pairs);
    for (std::size_t i = 0; i < n_particles; ++i)
      for (std::size_t j = i + 1; j < n_particles; ++j) {
        double d2 = 0.0;
        for (std::size_t a = 0; a < spatial_dim; ++a) {
          const double diff = x[i * spatial_dim + a] - x[j * spatial_dim + a];
          d2 += diff * diff;
        }
        out.distances.push_back(std::sqrt(d2));
        out.weights.push_back(w);
      }
  }
  if (bins > 0) {
    const double hi = out.distances.empty()
                          ? 1.0
                          : *std::max_element(out.distances.begin(), out.distances.end());
    const double width = hi > 0.0 ? hi / static_cast<double>(bins) : 1.0;
    out.bin_edges.resize(bins + 1);
    for (std::size_t b = 0; b <= bins; ++b) out.bin_edges[b] = width * static_cast<double>(b);
    out.histogram.assign(bins, 0.0);
    for (std::size_t k = 0; k < out.distances.size(); ++k) {
      auto b = static_cast<std::size_t>(out.distances[k] / width);
      out.histogram[std::min(b, bins - 1)] += out.weights[k];
    }
  }
  return out;
}

Vector weighted_mean(const WeightedSamples& s) {
  Vector m = Vector::Zero(static_cast<Eigen::Index>(s.dim()));
  for (std::size_t i = 0; i < s.size(); ++i)
    m += s.weights[i] * s.points.row(static_cast<Eigen::Index>(i)).transpose();
  return m;
}

Eigen::MatrixXd weighted_covariance(const WeightedSamples& s) {
  const Vector m = weighted_mean(s);
  const auto d = static_cast<Eigen::Index>(s.dim());
  Eigen::MatrixXd c = Eigen::MatrixXd::Zero(d, d);
  for (std::size_t i = 0; i < s.size(); ++i) {
    const Vector dx = s.points.row(static_cast<Eigen::Index>(i)).transpose() - m;
    c.selfadjointView<Eigen::Lower>().rankUpdate(dx, s.weights[i]);
  }
  return c.selfadjointView<Eigen::Lower>();
}

SummaryStats summary_stats(const WeightedSamples& a, const WeightedSamples& reference) {
  check_pair(a, reference);
  SummaryStats out;
  out.mean_l2 = (weighted_mean(a) - weighted_mean(reference)).norm();
  out.cov_frobenius = (weighted_covariance(a) - weighted_covariance(reference)).norm();
  return out;
}

}  // namespace fksteer
