#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "fksteer/common.hpp"

namespace fksteer {

struct WeightedSamples {
  RowMatrix points;             // N x d
  std::vector<double> weights;  // sum to 1

  static WeightedSamples uniform(RowMatrix points);
  std::size_t size() const { return static_cast<std::size_t>(points.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(points.cols()); }
  void validate() const;
};

using LogDensityFn = std::function<double(std::span<const double>)>;

/// Weighted NLL of `samples` minus that of `reference` under the same
/// unnormalised log-density.
double delta_nll(const WeightedSamples& samples, const WeightedSamples& reference,
                 const LogDensityFn& log_q);

/// Squared MMD between two weighted sets under the RBF kernel
/// exp(-|x-y|^2 / (2 bandwidth^2)), via `features` random Fourier features
/// (features/2 frequencies, cos and sin each).
double mmd_rff(const WeightedSamples& a, const WeightedSamples& b, double bandwidth,
               std::size_t features, std::uint64_t seed);

/// sqrt of the mean squared 1-D W2 over `projections` random unit directions.
double sliced_wasserstein(const WeightedSamples& a, const WeightedSamples& b,
                          std::size_t projections, std::uint64_t seed);

/// Squared 2-Wasserstein distance between weighted 1-D samples.
double w2_squared_1d(std::span<const double> va, std::span<const double> wa,
                     std::span<const double> vb, std::span<const double> wb);

/// 1-Wasserstein distance between weighted 1-D samples.
double w1_1d(std::span<const double> va, std::span<const double> wa,
             std::span<const double> vb, std::span<const double> wb);

/// Weighted pair-distance distribution of particle configurations.
struct Rdf {
  std::vector<double> distances;
  std::vector<double> weights;    // sum to 1
  std::vector<double> bin_edges;  // bins + 1, plotting only
  std::vector<double> histogram;  // probability mass per bin
};

Rdf rdf(const WeightedSamples& configs, std::size_t n_particles, std::size_t spatial_dim,
        std::size_t bins = 256);

struct SummaryStats {
  double mean_l2 = 0.0;
  double cov_frobenius = 0.0;
};

SummaryStats summary_stats(const WeightedSamples& a, const WeightedSamples& reference);

Vector weighted_mean(const WeightedSamples& s);
Eigen::MatrixXd weighted_covariance(const WeightedSamples& s);

}  // namespace fksteer
