#pragma once

#include <cstddef>
#include <vector>

namespace fksteer {

/// Variance-exploding diffusion schedule, parameterised in backward time.
///
/// The forward noise level equals forward time (sigma(s) = s) with zero
/// forward drift, so U_s^2 = d(sigma^2)/ds = 2s. Backward time t runs from
/// 0 (sigma = sigma_max) towards sigma_max - sigma_min.
struct DiffusionSchedule {
  double sigma_min = 0.005;
  double sigma_max = 50.0;
  double rho = 7.0;
  // Ratio V_t / U_t. 1 is the reverse SDE; 0 is the probability-flow limit.
  double churn = 1.0;

  /// Throws Error(InvalidSchedule) on inconsistent parameters.
  void validate() const;

  /// Backward noise level sigma_t = sigma_max - t.
  double noise_level(double t) const;
  /// Forward diffusion coefficient at matching forward time, sqrt(2 sigma_t).
  double diffusion(double t) const;
  /// Backward-process noise V_t = churn * U_t.
  double backward_noise(double t) const;
  /// Final backward time, sigma_max - sigma_min.
  double horizon() const { return sigma_max - sigma_min; }
};

struct TimeGrid {
  std::vector<double> steps;  // t_0 .. t_M

  std::size_t intervals() const { return steps.empty() ? 0 : steps.size() - 1; }
  double dt(std::size_t k) const { return steps[k + 1] - steps[k]; }
};

/// rho-power spaced grid in noise level between sigma_max and sigma_min,
/// mapped to backward time. Requires intervals >= 2.
TimeGrid build_time_grid(const DiffusionSchedule& schedule, std::size_t intervals);

}  // namespace fksteer
