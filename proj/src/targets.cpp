#include "fksteer/targets.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "fksteer/rng.hpp"

namespace fksteer {

// ---------------------------------------------------------------------------
// GmmSpec

void GmmSpec::validate() const {
  if (means.rows() == 0 || means.cols() == 0)
    throw Error(ErrorKind::Config, "GMM needs at least one component of positive dimension");
  if (weights.size() != components())
    throw Error(ErrorKind::DimensionMismatch, "GMM weight count does not match component count");
  double total = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0)) throw Error(ErrorKind::Config, "GMM weights must be non-negative");
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-12) throw Error(ErrorKind::Config, "GMM weights must sum to 1");
  if (!(component_variance > 0.0))
    throw Error(ErrorKind::Config, "GMM component variance must be positive");
  if (!means.allFinite()) throw Error(ErrorKind::NonFiniteInput, "GMM means must be finite");
}

GmmSpec GmmSpec::uniform_means(std::size_t components, std::size_t dim, double half_width,
                               double component_variance, std::uint64_t seed) {
  GmmSpec spec;
  spec.means.resize(static_cast<Eigen::Index>(components), static_cast<Eigen::Index>(dim));
  StreamRng rng(seed, StreamPurpose::Problem, 0);
  for (Eigen::Index i = 0; i < spec.means.rows(); ++i)
    for (Eigen::Index j = 0; j < spec.means.cols(); ++j)
      spec.means(i, j) = -half_width + 2.0 * half_width * rng.uniform();
  spec.weights.assign(components, 1.0 / static_cast<double>(components));
  spec.component_variance = component_variance;
  return spec;
}

GmmSpec GmmSpec::single(const Vector& mean, double component_variance) {
  GmmSpec spec;
  spec.means = mean.transpose();
  spec.weights = {1.0};
  spec.component_variance = component_variance;
  return spec;
}

// ---------------------------------------------------------------------------
// ScoreModel defaults

double ScoreModel::log_density(double, std::span<const double>) const {
  throw std::logic_error("score model does not provide a log-density");
}

double ScoreModel::score_laplacian(double sigma, std::span<const double> x) const {
  // Exact trace through d Hessian-vector products.
  const std::size_t d = dim();
  std::vector<double> e(d, 0.0), hv(d);
  double trace = 0.0;
  for (std::size_t j = 0; j < d; ++j) {
    e[j] = 1.0;
    hessian_vector(sigma, x, e, hv);
    trace += hv[j];
    e[j] = 0.0;
  }
  return trace;
}

ScoreEval ScoreModel::evaluate(double sigma, std::span<const double> x,
                               std::span<double> score_out) const {
  score(sigma, x, score_out);
  ScoreEval out;
  if (has_log_density()) out.log_density = log_density(sigma, x);
  if (has_laplacian()) out.laplacian = score_laplacian(sigma, x);
  return out;
}

void ScoreModel::hessian_vector(double sigma, std::span<const double> x,
                                std::span<const double> v, std::span<double> out) const {
  const std::size_t d = dim();
  const double vnorm = std::sqrt(squared_norm(v));
  if (vnorm == 0.0) {
    std::fill(out.begin(), out.end(), 0.0);
    return;
  }
  const double eps = 1e-4 * (1.0 + std::sqrt(squared_norm(x))) / vnorm;
  std::vector<double> xp(d), xm(d), sp(d), sm(d);
  for (std::size_t j = 0; j < d; ++j) {
    xp[j] = x[j] + eps * v[j];
    xm[j] = x[j] - eps * v[j];
  }
  score(sigma, xp, sp);
  score(sigma, xm, sm);
  for (std::size_t j = 0; j < d; ++j) out[j] = (sp[j] - sm[j]) / (2.0 * eps);
}

// ---------------------------------------------------------------------------
// GmmScoreModel

GmmScoreModel::GmmScoreModel(GmmSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  log_weights_.resize(spec_.components());
  for (std::size_t i = 0; i < log_weights_.size(); ++i)
    log_weights_[i] = spec_.weights[i] > 0.0 ? std::log(spec_.weights[i])
                                             : -std::numeric_limits<double>::infinity();
}

double GmmScoreModel::responsibilities_into(double sigma, std::span<const double> x,
                                            std::span<double> resp) const {
  const std::size_t K = spec_.components();
  const std::size_t d = spec_.dim();
  const double var = spec_.component_variance + sigma * sigma;
  const double inv2var = 0.5 / var;
  const double* mu = spec_.means.data();

  double max_logit = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < K; ++i) {
    const double* m = mu + i * d;
    double dist2 = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double diff = x[j] - m[j];
      dist2 += diff * diff;
    }
    resp[i] = log_weights_[i] - dist2 * inv2var;
    max_logit = std::max(max_logit, resp[i]);
  }
  double z = 0.0;
  for (std::size_t i = 0; i < K; ++i) {
    resp[i] = std::exp(resp[i] - max_logit);
    z += resp[i];
  }
  const double inv_z = 1.0 / z;
  for (std::size_t i = 0; i < K; ++i) resp[i] *= inv_z;
  const double log_norm =
      -0.5 * static_cast<double>(d) * std::log(2.0 * std::numbers::pi * var);
  return log_norm + max_logit + std::log(z);
}

std::vector<double> GmmScoreModel::responsibilities(double sigma,
                                                    std::span<const double> x) const {
  std::vector<double> resp(spec_.components());
  responsibilities_into(sigma, x, resp);
  return resp;
}

double GmmScoreModel::log_density(double sigma, std::span<const double> x) const {
  std::vector<double> resp(spec_.components());
  return responsibilities_into(sigma, x, resp);
}

void GmmScoreModel::score(double sigma, std::span<const double> x,
                          std::span<double> out) const {
  evaluate(sigma, x, out);
}

double GmmScoreModel::score_laplacian(double sigma, std::span<const double> x) const {
  std::vector<double> s(spec_.dim());
  return *evaluate(sigma, x, s).laplacian;
}

ScoreEval GmmScoreModel::evaluate(double sigma, std::span<const double> x,
                                  std::span<double> score_out) const {
  const std::size_t K = spec_.components();
  const std::size_t d = spec_.dim();
  const double var = spec_.component_variance + sigma * sigma;
  const double* mu = spec_.means.data();

  // Small fixed buffer for the common case; heap only for large mixtures.
  double stack_resp[64];
  std::vector<double> heap_resp;
  std::span<double> resp;
  if (K <= 64) {
    resp = std::span<double>(stack_resp, K);
  } else {
    heap_resp.resize(K);
    resp = heap_resp;
  }
  const double logp = responsibilities_into(sigma, x, resp);

  // score = (sum_i pi_i mu_i - x) / var
  std::fill(score_out.begin(), score_out.end(), 0.0);
  double weighted_dist2 = 0.0;
  for (std::size_t i = 0; i < K; ++i) {
    const double p = resp[i];
    if (p == 0.0) continue;
    const double* m = mu + i * d;
    double dist2 = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      score_out[j] += p * m[j];
      const double diff = x[j] - m[j];
      dist2 += diff * diff;
    }
    weighted_dist2 += p * dist2;
  }
  const double inv_var = 1.0 / var;
  for (std::size_t j = 0; j < d; ++j) score_out[j] = (score_out[j] - x[j]) * inv_var;

  // Mixture identity: sum_i pi_i (lap log N_i + |grad log N_i|^2) - |score|^2.
  const double laplacian = -static_cast<double>(d) * inv_var +
                           weighted_dist2 * inv_var * inv_var - squared_norm(score_out);
  return ScoreEval{logp, laplacian};
}

void GmmScoreModel::hessian_vector(double sigma, std::span<const double> x,
                                   std::span<const double> v, std::span<double> out) const {
  // H = -I/var + sum_i pi_i a_i a_i^T - s s^T with a_i = (mu_i - x)/var.
  const std::size_t K = spec_.components();
  const std::size_t d = spec_.dim();
  const double var = spec_.component_variance + sigma * sigma;
  const double inv_var = 1.0 / var;
  std::vector<double> resp(K), s(d, 0.0);
  responsibilities_into(sigma, x, resp);
  for (std::size_t j = 0; j < d; ++j) out[j] = -v[j] * inv_var;
  for (std::size_t i = 0; i < K; ++i) {
    const double* m = spec_.means.data() + i * d;
    double av = 0.0;
    for (std::size_t j = 0; j < d; ++j) av += (m[j] - x[j]) * v[j];
    av *= inv_var;
    for (std::size_t j = 0; j < d; ++j) {
      const double a = (m[j] - x[j]) * inv_var;
      out[j] += resp[i] * a * av;
      s[j] += resp[i] * a;
    }
  }
  const double sv = dot(s, v);
  for (std::size_t j = 0; j < d; ++j) out[j] -= s[j] * sv;
}

double gmm_diffused_logpdf(const GmmSpec& gmm, double sigma, std::span<const double> x) {
  return GmmScoreModel(gmm).log_density(sigma, x);
}

Vector gmm_diffused_score(const GmmSpec& gmm, double sigma, std::span<const double> x) {
  Vector out(static_cast<Eigen::Index>(gmm.dim()));
  GmmScoreModel(gmm).score(sigma, x, {out.data(), gmm.dim()});
  return out;
}

double gmm_diffused_score_laplacian(const GmmSpec& gmm, double sigma,
                                    std::span<const double> x) {
  return GmmScoreModel(gmm).score_laplacian(sigma, x);
}

// ---------------------------------------------------------------------------
// Rewards

void QuadraticReward::validate() const {
  if (!(scale > 0.0)) throw Error(ErrorKind::Config, "reward scale must be positive");
  if (center.size() == 0) throw Error(ErrorKind::Config, "reward center is empty");
}

double QuadraticReward::value(std::span<const double> x) const {
  double d2 = 0.0;
  for (std::size_t j = 0; j < x.size(); ++j) {
    const double diff = x[j] - center[static_cast<Eigen::Index>(j)];
    d2 += diff * diff;
  }
  return -0.5 * d2 / scale;
}

void QuadraticReward::grad(std::span<const double> x, std::span<double> out) const {
  for (std::size_t j = 0; j < x.size(); ++j)
    out[j] = -(x[j] - center[static_cast<Eigen::Index>(j)]) / scale;
}

double RewardSchedule::beta(double t) const {
  return std::clamp(t / horizon, 0.0, 1.0);
}

double RewardSchedule::beta_dot(double) const { return 1.0 / horizon; }

void TargetSpec::validate() const {
  if (!base) throw Error(ErrorKind::Config, "target has no base model");
  if (!(gamma >= 1.0)) throw Error(ErrorKind::Config, "annealing factor gamma must be >= 1");
  if (!(reward_schedule.horizon > 0.0))
    throw Error(ErrorKind::Config, "reward schedule horizon must be positive");
  if (reward) {
    reward->validate();
    if (static_cast<std::size_t>(reward->center.size()) != base->dim())
      throw Error(ErrorKind::DimensionMismatch, "reward center dimension does not match base");
  }
}

namespace {
const QuadraticReward& require_reward(const TargetSpec& target) {
  if (!target.reward)
    throw Error(ErrorKind::RewardAbsent, "reward requested on a pure-annealing target");
  return *target.reward;
}
}  // namespace

double TargetSpec::reward_value(double t, std::span<const double> x) const {
  const auto& r = require_reward(*this);
  const double beta = reward_schedule.beta(t);
  return beta == 0.0 ? 0.0 : beta * r.value(x);
}

void TargetSpec::reward_grad(double t, std::span<const double> x, std::span<double> out) const {
  const auto& r = require_reward(*this);
  const double beta = reward_schedule.beta(t);
  r.grad(x, out);
  for (double& g : out) g *= beta;
}

double TargetSpec::reward_laplacian(double t) const {
  const auto& r = require_reward(*this);
  return reward_schedule.beta(t) * r.laplacian();
}

double TargetSpec::reward_time_derivative(double t, std::span<const double> x) const {
  const auto& r = require_reward(*this);
  return reward_schedule.beta_dot(t) * r.value(x);
}

double TargetSpec::unnormalized_log_target(std::span<const double> x) const {
  double v = gamma * base->log_density(0.0, x);
  if (reward) v += reward->value(x);
  return v;
}

// ---------------------------------------------------------------------------
// DW-4

void DoubleWellSpec::validate() const {
  if (!(c > 0.0)) throw Error(ErrorKind::Config, "double-well quartic coefficient must be > 0");
  if (!(temperature > 0.0)) throw Error(ErrorKind::Config, "temperature must be positive");
  if (n_particles < 2 || spatial_dim == 0)
    throw Error(ErrorKind::Config, "double-well needs >= 2 particles in >= 1 dimension");
}

namespace {
void check_dw4_dim(const DoubleWellSpec& spec, std::size_t n) {
  if (n != spec.dim())
    throw Error(ErrorKind::DimensionMismatch, "double-well configuration has wrong length");
}
}  // namespace

double dw4_potential(const DoubleWellSpec& spec, std::span<const double> x) {
  check_dw4_dim(spec, x.size());
  const std::size_t n = spec.n_particles;
  const std::size_t D = spec.spatial_dim;
  double pair = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      double r2 = 0.0;
      for (std::size_t k = 0; k < D; ++k) {
        const double diff = x[i * D + k] - x[j * D + k];
        r2 += diff * diff;
      }
      const double s = std::sqrt(r2) - spec.d0;
      const double s2 = s * s;
      pair += spec.a * s + spec.b * s2 + spec.c * s2 * s2;
    }
  }
  std::vector<double> centroid(D, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < D; ++k) centroid[k] += x[i * D + k] / static_cast<double>(n);
  double spread = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < D; ++k) {
      const double diff = x[i * D + k] - centroid[k];
      spread += diff * diff;
    }
  return 0.5 * pair + 0.5 * spec.harmonic * spread;
}

void dw4_potential_force(const DoubleWellSpec& spec, std::span<const double> x,
                         std::span<double> out) {
  check_dw4_dim(spec, x.size());
  const std::size_t n = spec.n_particles;
  const std::size_t D = spec.spatial_dim;
  std::fill(out.begin(), out.end(), 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      double r2 = 0.0;
      for (std::size_t k = 0; k < D; ++k) {
        const double diff = x[i * D + k] - x[j * D + k];
        r2 += diff * diff;
      }
      const double dist = std::sqrt(r2);
      if (dist == 0.0) continue;
      const double s = dist - spec.d0;
      // d/d(dist) of 0.5 (a s + b s^2 + c s^4)
      const double dpair = 0.5 * (spec.a + 2.0 * spec.b * s + 4.0 * spec.c * s * s * s);
      for (std::size_t k = 0; k < D; ++k) {
        const double unit = (x[i * D + k] - x[j * D + k]) / dist;
        out[i * D + k] -= dpair * unit;
        out[j * D + k] += dpair * unit;
      }
    }
  }
  std::vector<double> centroid(D, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < D; ++k) centroid[k] += x[i * D + k] / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < D; ++k) out[i * D + k] -= spec.harmonic * (x[i * D + k] - centroid[k]);
}

double dw4_energy(const DoubleWellSpec& spec, std::span<const double> x) {
  return dw4_potential(spec, x) / spec.temperature;
}

void dw4_force(const DoubleWellSpec& spec, std::span<const double> x, std::span<double> out) {
  dw4_potential_force(spec, x, out);
  for (double& f : out) f /= spec.temperature;
}

}  // namespace fksteer
