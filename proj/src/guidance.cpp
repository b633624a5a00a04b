#include "fksteer/guidance.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace fksteer {

void guided_drift(const GuidanceContext& ctx, std::span<double> out) {
  const double coef =
      0.5 * (ctx.diffusion * ctx.diffusion + ctx.backward_noise * ctx.backward_noise);
  const std::size_t d = ctx.score.size();
  for (std::size_t j = 0; j < d; ++j) out[j] = coef * ctx.gamma * ctx.score[j];
  if (ctx.reward)
    for (std::size_t j = 0; j < d; ++j) out[j] += coef * ctx.reward->grad[j];
  if (!ctx.forward_drift.empty())
    for (std::size_t j = 0; j < d; ++j) out[j] -= ctx.forward_drift[j];
}

double potential_G(const GuidanceContext& ctx) {
  const double u2 = ctx.diffusion * ctx.diffusion;
  const double gamma = ctx.gamma;
  const double score2 = squared_norm(ctx.score);

  double g = -(1.0 - gamma) * ctx.forward_drift_divergence;
  g += 0.5 * u2 * (-gamma * (1.0 - gamma) * score2);
  if (ctx.reward) {
    const auto& r = *ctx.reward;
    g += r.time_derivative + 0.5 * u2 * r.laplacian;
    double cross = 0.0;
    for (std::size_t j = 0; j < r.grad.size(); ++j) {
      double v = gamma * u2 * ctx.score[j] + 0.5 * u2 * r.grad[j];
      if (!ctx.forward_drift.empty()) v -= ctx.forward_drift[j];
      cross += r.grad[j] * v;
    }
    g += cross;
  }
  return g;
}

// ---------------------------------------------------------------------------

std::vector<BasisKind> active_bases(const TargetSpec& target, const BasisOptions& options) {
  std::vector<BasisKind> kinds;
  if (target.has_reward()) kinds.push_back(BasisKind::Reward);
  if (!options.energy_mode || target.base->has_log_density()) kinds.push_back(BasisKind::Score);
  // The forward drift is identically zero for the variance-exploding process,
  // so BasisKind::ForwardDrift is never active here.
  if (options.energy_mode) {
    if (options.score_norm) kinds.push_back(BasisKind::ScoreNorm);
    for (std::size_t i = 0; i < options.score_projections; ++i)
      kinds.push_back(BasisKind::ScoreProjection);
  }
  return kinds;
}

void BasisEval::resize(std::size_t count, std::size_t dim) {
  n = count;
  d = dim;
  fields.assign(n * d, 0.0);
  divergences.assign(n, 0.0);
  potentials.assign(n, 0.0);
}

namespace {

// Directional derivative of the score Laplacian, v . grad(lap log p).
double laplacian_slope(const ScoreModel& model, double sigma, std::span<const double> x,
                       std::span<const double> v) {
  const double vnorm = std::sqrt(squared_norm(v));
  if (vnorm == 0.0) return 0.0;
  const double eps = 1e-4 * (1.0 + std::sqrt(squared_norm(x))) / vnorm;
  std::vector<double> xp(x.size()), xm(x.size());
  for (std::size_t j = 0; j < x.size(); ++j) {
    xp[j] = x[j] + eps * v[j];
    xm[j] = x[j] - eps * v[j];
  }
  return (model.score_laplacian(sigma, xp) - model.score_laplacian(sigma, xm)) / (2.0 * eps);
}

}  // namespace

void evaluate_bases(std::span<const BasisKind> kinds, const GuidanceContext& ctx,
                    const BasisExtras& extras, BasisEval& out) {
  const std::size_t d = ctx.score.size();
  if (out.n != kinds.size() || out.d != d) out.resize(kinds.size(), d);

  std::size_t projection = 0;
  for (std::size_t i = 0; i < kinds.size(); ++i) {
    auto field = out.field(i);
    switch (kinds[i]) {
      case BasisKind::Reward: {
        if (!ctx.reward) throw Error(ErrorKind::RewardAbsent, "reward basis without a reward");
        std::copy(ctx.reward->grad.begin(), ctx.reward->grad.end(), field.begin());
        out.divergences[i] = ctx.reward->laplacian;
        out.potentials[i] = ctx.reward->value;
        break;
      }
      case BasisKind::Score: {
        std::copy(ctx.score.begin(), ctx.score.end(), field.begin());
        out.divergences[i] = ctx.score_laplacian;
        out.potentials[i] = ctx.log_density.value_or(0.0);
        break;
      }
      case BasisKind::ForwardDrift: {
        if (ctx.forward_drift.empty()) {
          std::fill(field.begin(), field.end(), 0.0);
        } else {
          std::copy(ctx.forward_drift.begin(), ctx.forward_drift.end(), field.begin());
        }
        out.divergences[i] = ctx.forward_drift_divergence;
        out.potentials[i] = 0.0;
        break;
      }
      case BasisKind::ScoreNorm: {
        if (!extras.model) throw std::logic_error("score-norm basis needs the score model");
        const ScoreModel& model = *extras.model;
        // grad |s|^2 = 2 H s; div = 2 |H|_F^2 + 2 s . grad(lap log p)
        model.hessian_vector(ctx.sigma, extras.x, ctx.score, field);
        for (double& f : field) f *= 2.0;
        std::vector<double> e(d, 0.0), col(d);
        double frob = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
          e[j] = 1.0;
          model.hessian_vector(ctx.sigma, extras.x, e, col);
          frob += squared_norm(col);
          e[j] = 0.0;
        }
        out.divergences[i] =
            2.0 * frob + 2.0 * laplacian_slope(model, ctx.sigma, extras.x, ctx.score);
        out.potentials[i] = squared_norm(ctx.score);
        break;
      }
      case BasisKind::ScoreProjection: {
        if (!extras.model || !extras.projections ||
            projection >= static_cast<std::size_t>(extras.projections->rows()))
          throw std::logic_error("score-projection basis needs the model and directions");
        const auto xi = row_span(*extras.projections, static_cast<Eigen::Index>(projection++));
        extras.model->hessian_vector(ctx.sigma, extras.x, xi, field);
        out.divergences[i] = laplacian_slope(*extras.model, ctx.sigma, extras.x, xi);
        out.potentials[i] = dot(ctx.score, xi);
        break;
      }
      case BasisKind::Constant: {
        if (extras.constant.size() != d)
          throw Error(ErrorKind::DimensionMismatch, "constant basis has wrong dimension");
        std::copy(extras.constant.begin(), extras.constant.end(), field.begin());
        out.divergences[i] = 0.0;
        out.potentials[i] = 0.0;
        break;
      }
    }
  }
}

void basis_control_potentials(const GuidanceContext& ctx, const BasisEval& basis,
                              std::span<double> out) {
  const std::size_t d = basis.d;
  for (std::size_t i = 0; i < basis.n; ++i) {
    const double* f = basis.fields.data() + i * d;
    double h = basis.divergences[i];
    if (ctx.reward) {
      for (std::size_t j = 0; j < d; ++j) h += (ctx.gamma * ctx.score[j] + ctx.reward->grad[j]) * f[j];
    } else {
      double sf = 0.0;
      for (std::size_t j = 0; j < d; ++j) sf += ctx.score[j] * f[j];
      h += ctx.gamma * sf;
    }
    out[i] = h;
  }
}

double control_potential_h(const GuidanceContext& ctx, const BasisEval& basis,
                           std::span<const double> theta) {
  if (theta.size() != basis.n)
    throw Error(ErrorKind::DimensionMismatch, "theta has " + std::to_string(theta.size()) +
                                                  " entries for " + std::to_string(basis.n) +
                                                  " bases");
  std::vector<double> h(basis.n);
  basis_control_potentials(ctx, basis, h);
  double total = 0.0;
  for (std::size_t i = 0; i < basis.n; ++i) total += theta[i] * h[i];
  return total;
}

double hutchinson_laplacian(const ScoreFunction& score, std::span<const double> x,
                            std::size_t probes, StreamRng& rng) {
  if (probes == 0) throw std::invalid_argument("hutchinson_laplacian needs at least one probe");
  const std::size_t d = x.size();
  const double h = 1e-4 * (1.0 + std::sqrt(squared_norm(x)));
  std::vector<double> xi(d), xp(d), xm(d), sp(d), sm(d);
  double total = 0.0;
  for (std::size_t p = 0; p < probes; ++p) {
    for (std::size_t j = 0; j < d; ++j) {
      xi[j] = rng.rademacher();
      xp[j] = x[j] + h * xi[j];
      xm[j] = x[j] - h * xi[j];
    }
    score(xp, sp);
    score(xm, sm);
    double quad = 0.0;
    for (std::size_t j = 0; j < d; ++j) quad += xi[j] * (sp[j] - sm[j]);
    total += quad / (2.0 * h);
  }
  return total / static_cast<double>(probes);
}

}  // namespace fksteer
