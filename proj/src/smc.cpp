#include "fksteer/smc.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <limits>
#include <string>
#include <utility>

namespace fksteer {

const char* to_string(Method method) {
  switch (method) {
    case Method::PG: return "PG";
    case Method::GSMC: return "GSMC";
    case Method::VCG: return "VCG";
    case Method::VCG_SMC: return "VCG_SMC";
    case Method::ECG: return "ECG";
    case Method::ECG_SMC: return "ECG_SMC";
  }
  return "?";
}

Method parse_method(const std::string& name) {
  std::string key;
  for (char ch : name) {
    if (ch == '-' || ch == '_' || ch == ' ') continue;
    key.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(ch))));
  }
  if (key == "PG") return Method::PG;
  if (key == "GSMC") return Method::GSMC;
  if (key == "VCG") return Method::VCG;
  if (key == "VCGSMC") return Method::VCG_SMC;
  if (key == "ECG") return Method::ECG;
  if (key == "ECGSMC") return Method::ECG_SMC;
  throw Error(ErrorKind::Config, "unknown method '" + name + "'");
}

bool is_weighted(Method m) { return m != Method::PG; }
bool is_controlled(Method m) { return m != Method::PG && m != Method::GSMC; }
bool is_resampling(Method m) {
  return m == Method::GSMC || m == Method::VCG_SMC || m == Method::ECG_SMC;
}

void EngineConfig::validate() const {
  if (particles < 2) throw Error(ErrorKind::Config, "need at least 2 particles");
  if (steps < 2) throw Error(ErrorKind::Config, "need at least 2 steps");
  if (!(ess_threshold > 0.0 && ess_threshold <= 1.0))
    throw Error(ErrorKind::Config, "ess_threshold must lie in (0, 1]");
  if (resample_period && *resample_period == 0)
    throw Error(ErrorKind::Config, "resample_period must be positive");
  if (!(ridge >= 0.0)) throw Error(ErrorKind::Config, "ridge must be non-negative");
  if (!(nonfinite_tolerance >= 0.0 && nonfinite_tolerance <= 1.0))
    throw Error(ErrorKind::Config, "nonfinite_tolerance must lie in [0, 1]");
  if (force_hutchinson && hutchinson_probes == 0)
    throw Error(ErrorKind::Config, "hutchinson needs at least one probe");
}

std::vector<double> ParticleEnsemble::weights() const {
  std::vector<double> w(log_weights.size());
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = std::exp(log_weights[i]);
  return w;
}

// ---------------------------------------------------------------------------

ParticleEnsemble init_ensemble(const EngineConfig& config, const DiffusionSchedule& schedule,
                               const TargetSpec& target) {
  const std::size_t N = config.particles;
  const std::size_t d = target.dim();
  ParticleEnsemble ens;
  ens.seed = config.seed;
  ens.positions.resize(static_cast<Eigen::Index>(N), static_cast<Eigen::Index>(d));
  ens.log_weights.assign(N, -std::log(static_cast<double>(N)));
  for (std::size_t i = 0; i < N; ++i) {
    StreamRng rng(config.seed, StreamPurpose::Init, i);
    auto row = row_span(ens.positions, static_cast<Eigen::Index>(i));
    for (double& v : row) v = schedule.sigma_max * rng.normal();
  }
  return ens;
}

double normalize_log_weights(std::span<double> log_weights) {
  double mx = -std::numeric_limits<double>::infinity();
  for (double l : log_weights) mx = std::max(mx, l);
  if (!std::isfinite(mx))
    throw Error(ErrorKind::Divergence, "all particle weights vanished or overflowed");
  double sum = 0.0;
  for (double l : log_weights) sum += std::exp(l - mx);
  // Shift by the max first: log-weights can reach 1e15 and mx + log(sum)
  // would round away the small correction.
  const double log_sum = std::log(sum);
  for (double& l : log_weights) l = (l - mx) - log_sum;
  return mx + log_sum;
}

double ess_fraction(std::span<const double> log_weights) {
  double s2 = 0.0;
  for (double l : log_weights) {
    const double w = std::exp(l);
    s2 += w * w;
  }
  return 1.0 / (static_cast<double>(log_weights.size()) * s2);
}

std::vector<std::size_t> systematic_parents(std::span<const double> weights, double u) {
  const std::size_t N = weights.size();
  std::vector<std::size_t> parents(N);
  const double stride = 1.0 / static_cast<double>(N);
  double cdf = weights[0];
  std::size_t j = 0;
  for (std::size_t i = 0; i < N; ++i) {
    const double point = u + static_cast<double>(i) * stride;
    while (point > cdf && j + 1 < N) cdf += weights[++j];
    parents[i] = j;
  }
  return parents;
}

std::vector<std::size_t> resample_systematic(ParticleEnsemble& ensemble, StreamRng& rng) {
  const std::size_t N = ensemble.size();
  const auto w = ensemble.weights();
  const double u = rng.uniform() / static_cast<double>(N);
  auto parents = systematic_parents(w, u);
  RowMatrix next(ensemble.positions.rows(), ensemble.positions.cols());
  for (std::size_t i = 0; i < N; ++i)
    next.row(static_cast<Eigen::Index>(i)) =
        ensemble.positions.row(static_cast<Eigen::Index>(parents[i]));
  ensemble.positions.swap(next);
  std::fill(ensemble.log_weights.begin(), ensemble.log_weights.end(),
            -std::log(static_cast<double>(N)));
  return parents;
}

// ---------------------------------------------------------------------------

struct Engine::Workspace {
  RowMatrix score, drift, reward_grad;
  std::vector<double> G;
  RowMatrix h, s, fields;
  std::vector<char> ok;

  void resize(std::size_t N, std::size_t d, std::size_t n) {
    const auto rN = static_cast<Eigen::Index>(N);
    score.resize(rN, static_cast<Eigen::Index>(d));
    drift.resize(rN, static_cast<Eigen::Index>(d));
    reward_grad.resize(rN, static_cast<Eigen::Index>(d));
    G.assign(N, 0.0);
    h.resize(rN, static_cast<Eigen::Index>(n));
    s.resize(rN, static_cast<Eigen::Index>(n));
    fields.resize(rN, static_cast<Eigen::Index>(n * d));
    ok.assign(N, 1);
  }
};

Engine::Engine(EngineConfig config, DiffusionSchedule schedule, TargetSpec target)
    : config_(std::move(config)), schedule_(schedule), target_(std::move(target)) {
  config_.validate();
  schedule_.validate();
  target_.validate();
  grid_ = build_time_grid(schedule_, config_.steps);
  if (is_controlled(config_.method)) {
    BasisOptions opts;
    opts.energy_mode = config_.method == Method::ECG || config_.method == Method::ECG_SMC;
    opts.score_norm = config_.ecg_score_norm;
    opts.score_projections = config_.ecg_score_projections;
    bases_ = active_bases(target_, opts);
    if (opts.energy_mode && opts.score_projections > 0) {
      const std::size_t d = target_.dim();
      projections_.resize(static_cast<Eigen::Index>(opts.score_projections),
                          static_cast<Eigen::Index>(d));
      StreamRng rng(config_.seed, StreamPurpose::Basis);
      for (Eigen::Index i = 0; i < projections_.rows(); ++i) {
        for (Eigen::Index j = 0; j < projections_.cols(); ++j) projections_(i, j) = rng.normal();
        projections_.row(i).normalize();
      }
    }
  }
}

TraceRow Engine::step(ParticleEnsemble& ens, std::size_t k, const Vector* theta_prev,
                      bool solve, Workspace& ws) const {
  const std::size_t N = ens.size();
  const std::size_t d = ens.dim();
  const std::size_t n = bases_.size();
  const Method method = config_.method;
  const bool weighted = is_weighted(method);
  const bool controlled = is_controlled(method) && n > 0;
  const bool ecg = method == Method::ECG || method == Method::ECG_SMC;

  const double t = grid_.steps[k];
  const double dt = grid_.dt(k);
  const double sigma = schedule_.noise_level(t);
  const double U = schedule_.diffusion(t);
  const double V = schedule_.backward_noise(t);
  const ScoreModel& base = *target_.base;
  const bool analytic_lap = base.has_laplacian() && !config_.force_hutchinson;

  double rlap = 0.0;
  if (target_.has_reward()) rlap = target_.reward_laplacian(t);

  // (1)-(2): per-particle context, drift, potential and basis values.
#pragma omp parallel
  {
    BasisEval basis;
    BasisExtras extras;
    extras.model = &base;
    extras.projections = projections_.rows() > 0 ? &projections_ : nullptr;
    std::vector<double> hbuf(n);
    const ScoreFunction score_fn = [&](std::span<const double> y, std::span<double> out) {
      base.score(sigma, y, out);
    };

#pragma omp for schedule(static)
    for (std::size_t p = 0; p < N; ++p) {
      const auto ip = static_cast<Eigen::Index>(p);
      const auto x = row_span(std::as_const(ens.positions), ip);
      auto score = row_span(ws.score, ip);
      const ScoreEval ev = base.evaluate(sigma, x, score);

      GuidanceContext ctx;
      ctx.sigma = sigma;
      ctx.diffusion = U;
      ctx.backward_noise = V;
      ctx.gamma = target_.gamma;
      ctx.score = score;
      ctx.log_density = ev.log_density;
      if (controlled) {
        if (analytic_lap) {
          ctx.score_laplacian = *ev.laplacian;
        } else {
          StreamRng hrng(config_.seed, StreamPurpose::Hutchinson, k, p);
          ctx.score_laplacian =
              hutchinson_laplacian(score_fn, x, std::max<std::size_t>(1, config_.hutchinson_probes), hrng);
        }
      }
      if (target_.has_reward()) {
        auto rg = row_span(ws.reward_grad, ip);
        target_.reward_grad(t, x, rg);
        ctx.reward = RewardPack{target_.reward_value(t, x),
                                target_.reward_time_derivative(t, x), rlap, rg};
      }

      ws.G[p] = config_.zero_potential ? 0.0 : potential_G(ctx);
      auto drift = row_span(ws.drift, ip);
      guided_drift(ctx, drift);

      bool good = std::isfinite(ws.G[p]);
      for (double v : drift) good = good && std::isfinite(v);

      if (controlled) {
        extras.x = x;
        evaluate_bases(bases_, ctx, extras, basis);
        basis_control_potentials(ctx, basis, hbuf);
        for (std::size_t i = 0; i < n; ++i) {
          ws.h(ip, static_cast<Eigen::Index>(i)) = hbuf[i];
          ws.s(ip, static_cast<Eigen::Index>(i)) = basis.potentials[i];
          good = good && std::isfinite(hbuf[i]) && std::isfinite(basis.potentials[i]);
        }
        auto f = row_span(ws.fields, ip);
        std::copy(basis.fields.begin(), basis.fields.end(), f.begin());
        for (double v : f) good = good && std::isfinite(v);
      }
      ws.ok[p] = good ? 1 : 0;
    }
  }

  TraceRow row;
  row.step = k;
  row.t = t;
  row.sigma = sigma;

  // Non-finite particles are dropped from the weighted set and frozen in place.
  for (std::size_t p = 0; p < N; ++p) {
    if (ws.ok[p]) continue;
    ++row.nonfinite;
    const auto ip = static_cast<Eigen::Index>(p);
    ws.G[p] = 0.0;
    ws.drift.row(ip).setZero();
    if (controlled) {
      ws.h.row(ip).setZero();
      ws.s.row(ip).setZero();
      ws.fields.row(ip).setZero();
    }
    ens.log_weights[p] = -std::numeric_limits<double>::infinity();
  }
  if (static_cast<double>(row.nonfinite) > config_.nonfinite_tolerance * static_cast<double>(N))
    throw Error(ErrorKind::NonFiniteDrift,
                "step " + std::to_string(k) + ": " + std::to_string(row.nonfinite) + " of " +
                    std::to_string(N) + " particles produced non-finite drift or potential");
  if (row.nonfinite > 0) normalize_log_weights(ens.log_weights);

  const std::vector<double> w = ens.weights();

  // Control coefficients from the pre-move ensemble.
  Vector prev = Vector::Zero(static_cast<Eigen::Index>(controlled ? n : 0));
  if (controlled && theta_prev && theta_prev->size() == prev.size()) prev = *theta_prev;
  Vector theta_new = Vector::Zero(prev.size());
  if (controlled && solve && !config_.force_zero_control) {
    std::vector<double> g_eff(ws.G);
    if (prev.size() > 0 && !prev.isZero(0.0))
      for (std::size_t p = 0; p < N; ++p) g_eff[p] += ws.h.row(static_cast<Eigen::Index>(p)).dot(prev);
    ControlSystem sys = ecg ? assemble_ecg(w, g_eff, ws.s, ws.fields) : assemble_vcg(w, g_eff, ws.h);
    sys.ridge = config_.ridge;
    SolveResult res = solve_regularized(sys);
    theta_new = res.theta;
    row.control_fallback = res.fallback;
  }
  Vector theta = config_.force_zero_control ? Vector::Zero(prev.size()) : Vector(prev + theta_new);
  row.theta = theta;
  row.theta_new = theta_new;

  row.var_g = weighted_residual_variance(w, ws.G, ws.h, Vector());
  row.var_phi = controlled ? weighted_residual_variance(w, ws.G, ws.h, theta) : row.var_g;

  // (3) reweight.
  if (weighted) {
    for (std::size_t p = 0; p < N; ++p) {
      if (!ws.ok[p]) continue;
      double phi = ws.G[p];
      if (controlled) phi += ws.h.row(static_cast<Eigen::Index>(p)).dot(theta);
      ens.log_weights[p] += phi * dt;
    }
    normalize_log_weights(ens.log_weights);
  }

  // (4) move.
  const double noise = V * std::sqrt(dt);
#pragma omp parallel for schedule(static)
  for (std::size_t p = 0; p < N; ++p) {
    if (!ws.ok[p]) continue;
    const auto ip = static_cast<Eigen::Index>(p);
    auto x = row_span(ens.positions, ip);
    const auto drift = row_span(std::as_const(ws.drift), ip);
    StreamRng rng(config_.seed, StreamPurpose::Move, k, p);
    for (std::size_t j = 0; j < d; ++j) {
      double v = drift[j];
      if (controlled)
        for (std::size_t i = 0; i < n; ++i)
          v += theta[static_cast<Eigen::Index>(i)] *
               ws.fields(ip, static_cast<Eigen::Index>(i * d + j));
      x[j] += v * dt + noise * rng.normal();
    }
  }

  // (5) diagnostics and resampling.
  row.ess = weighted ? ess_fraction(ens.log_weights) : 1.0;
  if (is_resampling(method) && !config_.disable_resampling) {
    const bool periodic = config_.resample_period && (k + 1) % *config_.resample_period == 0;
    if (row.ess < config_.ess_threshold || periodic) {
      StreamRng rng(config_.seed, StreamPurpose::Resample, k);
      auto parents = resample_systematic(ens, rng);
      row.resampled = true;
      if (config_.record_parents) row.parents = std::move(parents);
    }
  }
  ens.step_index = k + 1;
  return row;
}

RunResult Engine::run(const ThetaPlan& plan) const {
  const auto start = std::chrono::steady_clock::now();
  RunResult out;
  out.ensemble = init_ensemble(config_, schedule_, target_);
  Workspace ws;
  ws.resize(config_.particles, target_.dim(), bases_.size());
  const std::size_t M = grid_.intervals();
  out.trace.rows.reserve(M);
  for (std::size_t k = 0; k < M; ++k) {
    const Vector* prev = nullptr;
    if (plan.cumulative && k < plan.cumulative->size()) prev = &(*plan.cumulative)[k];
    out.trace.rows.push_back(step(out.ensemble, k, prev, plan.solve, ws));
    const TraceRow& row = out.trace.rows.back();
    if (row.control_fallback)
      out.trace.warnings.push_back("step " + std::to_string(k) + ": control fallback to zero");
    if (row.nonfinite > 0)
      out.trace.warnings.push_back("step " + std::to_string(k) + ": " +
                                   std::to_string(row.nonfinite) + " non-finite particles dropped");
  }
  // PG never touches its log-weights, so this is the uniform vector.
  out.weights = out.ensemble.weights();
  out.trace.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

std::vector<RunResult> Engine::refine(std::size_t rounds, ControlState* state) const {
  if (rounds == 0) throw Error(ErrorKind::Config, "refinement needs at least one round");
  ControlState local(grid_.intervals());
  ControlState& st = state ? *state : local;
  if (st.cumulative.size() != grid_.intervals()) st = ControlState(grid_.intervals());
  std::vector<RunResult> results;
  results.reserve(rounds);
  for (std::size_t r = 0; r < rounds; ++r) {
    ThetaPlan plan;
    plan.cumulative = &st.cumulative;
    plan.solve = true;
    results.push_back(run(plan));
    const auto& rows = results.back().trace.rows;
    for (std::size_t k = 0; k < rows.size(); ++k) st.round[k] = rows[k].theta_new;
    st.absorb();
  }
  return results;
}

}  // namespace fksteer
