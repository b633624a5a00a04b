#include "fksteer/reference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "fksteer/rng.hpp"

namespace fksteer {

namespace {

double log_sum_exp(std::span<const double> v) {
  double mx = -std::numeric_limits<double>::infinity();
  for (double x : v) mx = std::max(mx, x);
  if (!std::isfinite(mx)) return mx;
  double s = 0.0;
  for (double x : v) s += std::exp(x - mx);
  return mx + std::log(s);
}

}  // namespace

RowMatrix sample_annealed_gmm(const GmmSpec& gmm, double gamma, std::size_t n,
                              std::uint64_t seed, const QuadraticReward* reward,
                              RejectionStats* stats, std::size_t max_proposals) {
  gmm.validate();
  if (!(gamma >= 1.0)) throw Error(ErrorKind::Config, "annealing factor must be >= 1");
  if (reward) reward->validate();
  const std::size_t K = gmm.components();
  const std::size_t d = gmm.dim();
  const double v = gmm.component_variance;
  const double vp = v / gamma;  // proposal variance
  const double dd = static_cast<double>(d);
  const double two_pi = 2.0 * std::numbers::pi;

  // log C_gamma + log max_i(K w_i)
  const double log_c = -0.5 * dd * gamma * std::log(two_pi * v) + 0.5 * dd * std::log(two_pi * vp);
  const double wmax = *std::max_element(gmm.weights.begin(), gmm.weights.end());
  const double log_envelope = log_c + std::log(static_cast<double>(K) * wmax);

  std::vector<double> log_w(K);
  for (std::size_t i = 0; i < K; ++i)
    log_w[i] = gmm.weights[i] > 0.0 ? std::log(gmm.weights[i])
                                    : -std::numeric_limits<double>::infinity();
  const double log_norm_p = -0.5 * dd * std::log(two_pi * v);
  const double log_norm_q = -0.5 * dd * std::log(two_pi * vp) - std::log(static_cast<double>(K));

  RejectionStats local;
  RejectionStats& st = stats ? *stats : local;
  st = RejectionStats{};

  RowMatrix out(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  StreamRng rng(seed, StreamPurpose::Reference);
  std::vector<double> x(d), lp(K), lq(K);
  std::size_t filled = 0;
  while (filled < n) {
    if (st.proposed >= max_proposals)
      throw Error(ErrorKind::Divergence, "rejection sampler exhausted its proposal budget (rate " +
                                             std::to_string(st.acceptance_rate()) + ")");
    const std::size_t comp = std::min<std::size_t>(K - 1, static_cast<std::size_t>(rng.uniform() * K));
    const double sd = std::sqrt(vp);
    for (std::size_t j = 0; j < d; ++j) x[j] = gmm.means(comp, j) + sd * rng.normal();
    for (std::size_t i = 0; i < K; ++i) {
      double dist2 = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        const double diff = x[j] - gmm.means(i, j);
        dist2 += diff * diff;
      }
      lp[i] = log_w[i] - 0.5 * dist2 / v;
      lq[i] = -0.5 * dist2 / vp;
    }
    double log_target = gamma * (log_norm_p + log_sum_exp(lp));
    if (reward) log_target += reward->value(x);
    const double log_prop = log_norm_q + log_sum_exp(lq);
    const double log_ratio = log_target - (log_envelope + log_prop);
    ++st.proposed;
    st.max_log_ratio = std::max(st.max_log_ratio, log_ratio);
    if (log_ratio > 1e-9)
      throw std::logic_error("rejection envelope violated: log ratio " + std::to_string(log_ratio));
    if (std::log(rng.uniform()) < log_ratio) {
      for (std::size_t j = 0; j < d; ++j) out(static_cast<Eigen::Index>(filled), j) = x[j];
      ++filled;
      ++st.accepted;
    }
  }
  if (st.acceptance_rate() < 1e-6)
    st.warning = "rejection acceptance rate collapsed to " + std::to_string(st.acceptance_rate());
  return out;
}

GmmSpec posterior_gmm(const GmmSpec& gmm, const QuadraticReward& reward) {
  gmm.validate();
  reward.validate();
  if (static_cast<std::size_t>(reward.center.size()) != gmm.dim())
    throw Error(ErrorKind::DimensionMismatch, "reward centre and GMM dimension differ");
  const double v = gmm.component_variance;
  const double sr = reward.scale;
  const double post_var = 1.0 / (1.0 / sr + 1.0 / v);
  const std::size_t K = gmm.components();

  GmmSpec out;
  out.component_variance = post_var;
  out.means.resize(gmm.means.rows(), gmm.means.cols());
  std::vector<double> logw(K);
  for (std::size_t i = 0; i < K; ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    double dist2 = 0.0;
    for (Eigen::Index j = 0; j < gmm.means.cols(); ++j) {
      const double mu = gmm.means(ii, j);
      out.means(ii, j) = post_var * (mu / v + reward.center[j] / sr);
      dist2 += (mu - reward.center[j]) * (mu - reward.center[j]);
    }
    logw[i] = (gmm.weights[i] > 0.0 ? std::log(gmm.weights[i])
                                    : -std::numeric_limits<double>::infinity()) -
              0.5 * dist2 / (sr + v);
  }
  const double lse = log_sum_exp(logw);
  out.weights.resize(K);
  for (std::size_t i = 0; i < K; ++i) out.weights[i] = std::exp(logw[i] - lse);
  return out;
}

RowMatrix sample_gmm(const GmmSpec& gmm, std::size_t n, std::uint64_t seed) {
  gmm.validate();
  const std::size_t K = gmm.components();
  const std::size_t d = gmm.dim();
  std::vector<double> cdf(K);
  double acc = 0.0;
  for (std::size_t i = 0; i < K; ++i) cdf[i] = (acc += gmm.weights[i]);
  const double sd = std::sqrt(gmm.component_variance);
  RowMatrix out(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  StreamRng rng(seed, StreamPurpose::Reference, 1);
  for (std::size_t s = 0; s < n; ++s) {
    const double u = rng.uniform() * acc;
    const auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
    const auto comp = static_cast<Eigen::Index>(std::min<std::size_t>(K - 1, it - cdf.begin()));
    for (std::size_t j = 0; j < d; ++j)
      out(static_cast<Eigen::Index>(s), j) = gmm.means(comp, j) + sd * rng.normal();
  }
  return out;
}

// ---------------------------------------------------------------------------

void LangevinConfig::validate() const {
  if (!(dt > 0.0)) throw Error(ErrorKind::Config, "langevin dt must be positive");
  if (!(friction > 0.0)) throw Error(ErrorKind::Config, "langevin friction must be positive");
  if (!(temperature > 0.0)) throw Error(ErrorKind::Config, "temperature must be positive");
  if (thin == 0) throw Error(ErrorKind::Config, "thin must be positive");
}

namespace {

// Subtract the per-axis mean over particles.
void project_com(std::span<double> v, std::size_t n_particles, std::size_t spatial_dim) {
  for (std::size_t a = 0; a < spatial_dim; ++a) {
    double m = 0.0;
    for (std::size_t i = 0; i < n_particles; ++i) m += v[i * spatial_dim + a];
    m /= static_cast<double>(n_particles);
    for (std::size_t i = 0; i < n_particles; ++i) v[i * spatial_dim + a] -= m;
  }
}

}  // namespace

RowMatrix baoab_sample(const LangevinPotential& potential, const LangevinConfig& config,
                       std::size_t n, RowMatrix* velocities) {
  config.validate();
  const std::size_t d = potential.dim;
  if (potential.n_particles * potential.spatial_dim != d)
    throw Error(ErrorKind::DimensionMismatch, "langevin particle layout does not match dim");
  const bool com = config.remove_com && potential.translation_invariant && potential.n_particles > 1;
  StreamRng rng(config.seed, StreamPurpose::Langevin);

  // Perturbed cubic-ish lattice, centred.
  std::vector<double> x(d), v(d), f(d);
  const auto side = static_cast<std::size_t>(
      std::ceil(std::pow(static_cast<double>(potential.n_particles),
                         1.0 / static_cast<double>(potential.spatial_dim)) - 1e-9));
  for (std::size_t i = 0; i < potential.n_particles; ++i) {
    std::size_t idx = i;
    for (std::size_t a = 0; a < potential.spatial_dim; ++a) {
      const std::size_t c = idx % std::max<std::size_t>(side, 1);
      idx /= std::max<std::size_t>(side, 1);
      x[i * potential.spatial_dim + a] =
          config.lattice_spacing * static_cast<double>(c) + config.lattice_jitter * rng.normal();
    }
  }
  if (com) project_com(x, potential.n_particles, potential.spatial_dim);
  else if (!potential.translation_invariant) std::fill(x.begin(), x.end(), 0.0);

  const double sqrt_t = std::sqrt(config.temperature);
  for (double& vi : v) vi = sqrt_t * rng.normal();
  if (com) project_com(v, potential.n_particles, potential.spatial_dim);

  const double h = config.dt;
  const double c1 = std::exp(-config.friction * h);
  const double c2 = std::sqrt(config.temperature * (1.0 - std::exp(-2.0 * config.friction * h)));
  std::vector<double> z(d);

  potential.force(x, f);
  auto advance = [&]() {
    for (std::size_t j = 0; j < d; ++j) v[j] += 0.5 * h * f[j];
    for (std::size_t j = 0; j < d; ++j) x[j] += 0.5 * h * v[j];
    for (std::size_t j = 0; j < d; ++j) z[j] = rng.normal();
    if (com) project_com(z, potential.n_particles, potential.spatial_dim);
    for (std::size_t j = 0; j < d; ++j) v[j] = c1 * v[j] + c2 * z[j];
    for (std::size_t j = 0; j < d; ++j) x[j] += 0.5 * h * v[j];
    potential.force(x, f);
    for (std::size_t j = 0; j < d; ++j) v[j] += 0.5 * h * f[j];
  };
  auto check = [&](std::size_t step) {
    const double e = potential.energy(x);
    if (!std::isfinite(e) || e > config.energy_ceiling)
      throw Error(ErrorKind::Divergence,
                  "langevin energy " + std::to_string(e) + " above ceiling at step " +
                      std::to_string(step));
  };

  for (std::size_t s = 0; s < config.burn_in; ++s) {
    advance();
    if (s % 1000 == 0) check(s);
  }
  RowMatrix out(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  if (velocities) velocities->resize(out.rows(), out.cols());
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t s = 0; s < config.thin; ++s) advance();
    check(config.burn_in + (i + 1) * config.thin);
    const auto row = static_cast<Eigen::Index>(i);
    for (std::size_t j = 0; j < d; ++j) out(row, j) = x[j];
    if (velocities)
      for (std::size_t j = 0; j < d; ++j) (*velocities)(row, j) = v[j];
  }
  return out;
}

LangevinPotential dw4_langevin(const DoubleWellSpec& spec) {
  spec.validate();
  LangevinPotential p;
  p.dim = spec.dim();
  p.n_particles = spec.n_particles;
  p.spatial_dim = spec.spatial_dim;
  p.translation_invariant = true;
  p.energy = [spec](std::span<const double> x) { return dw4_potential(spec, x); };
  p.force = [spec](std::span<const double> x, std::span<double> out) {
    dw4_potential_force(spec, x, out);
  };
  return p;
}

LangevinPotential harmonic_langevin(std::size_t dim) {
  LangevinPotential p;
  p.dim = dim;
  p.n_particles = 1;
  p.spatial_dim = dim;
  p.energy = [](std::span<const double> x) { return 0.5 * squared_norm(x); };
  p.force = [](std::span<const double> x, std::span<double> out) {
    for (std::size_t j = 0; j < x.size(); ++j) out[j] = -x[j];
  };
  return p;
}

LangevinPotential free_langevin(std::size_t dim) {
  LangevinPotential p;
  p.dim = dim;
  p.n_particles = 1;
  p.spatial_dim = dim;
  p.energy = [](std::span<const double>) { return 0.0; };
  p.force = [](std::span<const double>, std::span<double> out) {
    std::fill(out.begin(), out.end(), 0.0);
  };
  return p;
}

}  // namespace fksteer
