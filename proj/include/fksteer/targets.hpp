#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fksteer/common.hpp"

namespace fksteer {

// ---------------------------------------------------------------------------
// Base distributions
// ---------------------------------------------------------------------------

/// Isotropic Gaussian mixture: sum_i w_i N(mu_i, v I).
struct GmmSpec {
  RowMatrix means;  // K x d
  std::vector<double> weights;
  double component_variance = 50.0;

  std::size_t components() const { return static_cast<std::size_t>(means.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(means.cols()); }

  void validate() const;

  /// K components with means drawn from Unif([-half_width, half_width])^d.
  static GmmSpec uniform_means(std::size_t components, std::size_t dim, double half_width,
                               double component_variance, std::uint64_t seed);
  static GmmSpec single(const Vector& mean, double component_variance);
};

/// Derivatives of log p at one point, filled in a single pass.
struct ScoreEval {
  std::optional<double> log_density;
  std::optional<double> laplacian;  // Laplacian of log p (divergence of the score)
};

/// Pluggable noised-base model, evaluated at backward noise level sigma.
/// Only the score is mandatory; log-density and Laplacian are optional
/// capabilities that unlock ECG's log-density basis and the analytic
/// divergence path.
class ScoreModel {
 public:
  virtual ~ScoreModel() = default;

  virtual std::size_t dim() const = 0;
  virtual void score(double sigma, std::span<const double> x, std::span<double> out) const = 0;

  virtual bool has_log_density() const { return false; }
  virtual bool has_laplacian() const { return false; }

  virtual double log_density(double sigma, std::span<const double> x) const;
  virtual double score_laplacian(double sigma, std::span<const double> x) const;

  /// Score plus whichever optional quantities the model provides.
  virtual ScoreEval evaluate(double sigma, std::span<const double> x,
                             std::span<double> score_out) const;

  /// Hessian of log p times v. Default: central differences of the score.
  virtual void hessian_vector(double sigma, std::span<const double> x,
                              std::span<const double> v, std::span<double> out) const;
};

/// Closed-form GMM convolved with N(0, sigma^2 I).
class GmmScoreModel final : public ScoreModel {
 public:
  explicit GmmScoreModel(GmmSpec spec);

  const GmmSpec& spec() const { return spec_; }

  std::size_t dim() const override { return spec_.dim(); }
  void score(double sigma, std::span<const double> x, std::span<double> out) const override;
  bool has_log_density() const override { return true; }
  bool has_laplacian() const override { return true; }
  double log_density(double sigma, std::span<const double> x) const override;
  double score_laplacian(double sigma, std::span<const double> x) const override;
  ScoreEval evaluate(double sigma, std::span<const double> x,
                     std::span<double> score_out) const override;
  void hessian_vector(double sigma, std::span<const double> x, std::span<const double> v,
                      std::span<double> out) const override;

  /// Posterior component responsibilities pi_i(x) at noise level sigma.
  std::vector<double> responsibilities(double sigma, std::span<const double> x) const;

 private:
  // Fills resp with softmax-normalised responsibilities and returns log p.
  double responsibilities_into(double sigma, std::span<const double> x,
                               std::span<double> resp) const;

  GmmSpec spec_;
  std::vector<double> log_weights_;
};

double gmm_diffused_logpdf(const GmmSpec& gmm, double sigma, std::span<const double> x);
Vector gmm_diffused_score(const GmmSpec& gmm, double sigma, std::span<const double> x);
double gmm_diffused_score_laplacian(const GmmSpec& gmm, double sigma, std::span<const double> x);

// ---------------------------------------------------------------------------
// Rewards and the target path
// ---------------------------------------------------------------------------

/// r(x) = -|x - center|^2 / (2 scale).
struct QuadraticReward {
  Vector center;
  double scale = 100.0;

  void validate() const;
  double value(std::span<const double> x) const;
  void grad(std::span<const double> x, std::span<double> out) const;
  double laplacian() const { return -static_cast<double>(center.size()) / scale; }
};

enum class RewardScheduleKind { Linear };

/// beta_t interpolating the reward from 0 at t = 0 to 1 at t = horizon.
struct RewardSchedule {
  RewardScheduleKind kind = RewardScheduleKind::Linear;
  double horizon = 1.0;

  double beta(double t) const;
  double beta_dot(double t) const;
};

/// Target path q_t ∝ p_t^gamma exp(beta_t r).
struct TargetSpec {
  std::shared_ptr<const ScoreModel> base;
  double gamma = 1.0;
  std::optional<QuadraticReward> reward;
  RewardSchedule reward_schedule;

  void validate() const;
  std::size_t dim() const { return base->dim(); }
  bool has_reward() const { return reward.has_value(); }

  double reward_value(double t, std::span<const double> x) const;
  void reward_grad(double t, std::span<const double> x, std::span<double> out) const;
  double reward_laplacian(double t) const;
  double reward_time_derivative(double t, std::span<const double> x) const;

  /// gamma log p_0(x) + r(x), the unnormalised log-density of the final target.
  /// Requires a base with a log-density.
  double unnormalized_log_target(std::span<const double> x) const;
};

// ---------------------------------------------------------------------------
// Double-well (DW-4)
// ---------------------------------------------------------------------------

struct DoubleWellSpec {
  double a = 0.0;
  double b = -4.0;
  double c = 0.9;
  double d0 = 4.0;
  double harmonic = 0.05;  // lambda
  double temperature = 1.0;
  std::size_t n_particles = 4;
  std::size_t spatial_dim = 2;

  void validate() const;
  std::size_t dim() const { return n_particles * spatial_dim; }
};

/// H_DW(x) + (lambda/2) sum_i |r_i - rbar|^2, without the 1/T factor.
double dw4_potential(const DoubleWellSpec& spec, std::span<const double> x);
/// -grad of dw4_potential.
void dw4_potential_force(const DoubleWellSpec& spec, std::span<const double> x,
                         std::span<double> out);

/// Reduced energy dw4_potential / T.
double dw4_energy(const DoubleWellSpec& spec, std::span<const double> x);
/// -grad dw4_energy.
void dw4_force(const DoubleWellSpec& spec, std::span<const double> x, std::span<double> out);

}  // namespace fksteer
