#include "fksteer/schedule.hpp"

#include <cmath>
#include <string>

#include "fksteer/common.hpp"

namespace fksteer {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidSchedule: return "invalid-schedule";
    case ErrorKind::RewardAbsent: return "reward-absent";
    case ErrorKind::DimensionMismatch: return "dimension-mismatch";
    case ErrorKind::NonFiniteInput: return "non-finite-input";
    case ErrorKind::NonFiniteDrift: return "non-finite-drift";
    case ErrorKind::Divergence: return "divergence";
    case ErrorKind::Config: return "config";
    case ErrorKind::Io: return "io";
  }
  return "unknown";
}

void DiffusionSchedule::validate() const {
  if (!(sigma_min > 0.0) || !std::isfinite(sigma_max))
    throw Error(ErrorKind::InvalidSchedule, "sigma_min must be positive and sigma_max finite");
  if (!(sigma_min < sigma_max))
    throw Error(ErrorKind::InvalidSchedule,
                "sigma_min (" + std::to_string(sigma_min) + ") must be below sigma_max (" +
                    std::to_string(sigma_max) + ")");
  if (!(rho > 0.0)) throw Error(ErrorKind::InvalidSchedule, "rho must be positive");
  if (!(churn >= 0.0)) throw Error(ErrorKind::InvalidSchedule, "churn must be non-negative");
}

double DiffusionSchedule::noise_level(double t) const { return sigma_max - t; }

double DiffusionSchedule::diffusion(double t) const {
  return std::sqrt(2.0 * noise_level(t));
}

double DiffusionSchedule::backward_noise(double t) const { return churn * diffusion(t); }

TimeGrid build_time_grid(const DiffusionSchedule& schedule, std::size_t intervals) {
  schedule.validate();
  if (intervals < 2)
    throw Error(ErrorKind::InvalidSchedule, "time grid needs at least 2 intervals");

  const double inv_rho = 1.0 / schedule.rho;
  const double hi = std::pow(schedule.sigma_max, inv_rho);
  const double lo = std::pow(schedule.sigma_min, inv_rho);

  TimeGrid grid;
  grid.steps.resize(intervals + 1);
  for (std::size_t k = 0; k <= intervals; ++k) {
    const double frac = static_cast<double>(k) / static_cast<double>(intervals);
    grid.steps[k] = schedule.sigma_max - std::pow(hi + frac * (lo - hi), schedule.rho);
  }
  // Pin the endpoints; pow round-off would otherwise leave them a few ulps off.
  grid.steps.front() = 0.0;
  grid.steps.back() = schedule.horizon();
  return grid;
}

}  // namespace fksteer
