#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fksteer/common.hpp"
#include "fksteer/control.hpp"
#include "fksteer/guidance.hpp"
#include "fksteer/rng.hpp"
#include "fksteer/schedule.hpp"
#include "fksteer/targets.hpp"

namespace fksteer {

enum class Method { PG, GSMC, VCG, VCG_SMC, ECG, ECG_SMC };

const char* to_string(Method method);
/// Accepts the canonical names (PG, GSMC, VCG, VCG_SMC, ECG, ECG_SMC) and
/// their lowercase / dashed spellings. Throws Error(Config) otherwise.
Method parse_method(const std::string& name);

bool is_weighted(Method m);
bool is_controlled(Method m);
bool is_resampling(Method m);

struct EngineConfig {
  Method method = Method::VCG_SMC;
  std::size_t particles = 8192;
  std::size_t steps = 500;
  double ess_threshold = 0.9;
  std::optional<std::size_t> resample_period;
  std::uint64_t seed = 0;
  bool deterministic = true;
  double ridge = 1e-6;
  // 0 uses the analytic Laplacian when the base provides one.
  std::size_t hutchinson_probes = 8;
  bool force_hutchinson = false;
  bool ecg_score_norm = false;
  std::size_t ecg_score_projections = 0;
  double nonfinite_tolerance = 0.01;

  // Overrides used by the method-lattice checks.
  bool force_zero_control = false;
  bool zero_potential = false;
  bool disable_resampling = false;
  bool record_parents = false;

  void validate() const;
};

struct ParticleEnsemble {
  RowMatrix positions;               // N x d
  std::vector<double> log_weights;   // logsumexp == 0
  std::size_t step_index = 0;
  std::uint64_t seed = 0;

  std::size_t size() const { return log_weights.size(); }
  std::size_t dim() const { return static_cast<std::size_t>(positions.cols()); }
  std::vector<double> weights() const;
};

struct TraceRow {
  std::size_t step = 0;
  double t = 0.0;
  double sigma = 0.0;
  double ess = 1.0;       // fraction, before any resampling at this step
  double var_phi = 0.0;   // weighted variance of g + h theta
  double var_g = 0.0;     // weighted variance of g alone
  Vector theta;           // coefficients applied at this step
  Vector theta_new;       // coefficients solved at this step (refinement round)
  bool resampled = false;
  bool control_fallback = false;
  std::size_t nonfinite = 0;
  std::vector<std::size_t> parents;  // only with record_parents
};

struct RunTrace {
  std::vector<TraceRow> rows;
  std::vector<std::string> warnings;
  double wall_seconds = 0.0;
};

struct RunResult {
  ParticleEnsemble ensemble;
  RunTrace trace;
  /// Final normalised weights; uniform for PG.
  std::vector<double> weights;
};

/// Positions ~ N(0, sigma_max^2 I), log-weights -log N.
ParticleEnsemble init_ensemble(const EngineConfig& config, const DiffusionSchedule& schedule,
                               const TargetSpec& target);

/// 1 / (N sum w^2) for normalised log-weights.
double ess_fraction(std::span<const double> log_weights);

/// Shifts log-weights so that logsumexp == 0; returns the removed constant.
double normalize_log_weights(std::span<double> log_weights);

/// Systematic resampling parents for weights summing to one, with the
/// single uniform u in [0, 1/N).
std::vector<std::size_t> systematic_parents(std::span<const double> weights, double u);

/// Resamples in place and resets the weights; returns the parents.
std::vector<std::size_t> resample_systematic(ParticleEnsemble& ensemble, StreamRng& rng);

/// How the control coefficients are obtained at each step.
struct ThetaPlan {
  // Absorbed coefficients per step (empty vector: none yet).
  const std::vector<Vector>* cumulative = nullptr;
  // When false the cumulative coefficients are replayed and nothing is solved.
  bool solve = true;
};

class Engine {
 public:
  Engine(EngineConfig config, DiffusionSchedule schedule, TargetSpec target);

  const EngineConfig& config() const { return config_; }
  const TimeGrid& grid() const { return grid_; }
  const std::vector<BasisKind>& bases() const { return bases_; }

  RunResult run(const ThetaPlan& plan = {}) const;

  /// Iterative refinement: `rounds` full passes with common random numbers;
  /// each round absorbs its solved coefficients into the cumulative state.
  std::vector<RunResult> refine(std::size_t rounds, ControlState* state = nullptr) const;

 private:
  struct Workspace;

  TraceRow step(ParticleEnsemble& ens, std::size_t k, const Vector* theta_prev, bool solve,
                Workspace& ws) const;

  EngineConfig config_;
  DiffusionSchedule schedule_;
  TargetSpec target_;
  TimeGrid grid_;
  std::vector<BasisKind> bases_;
  RowMatrix projections_;
};

}  // namespace fksteer
