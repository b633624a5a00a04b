#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "fksteer/common.hpp"
#include "fksteer/rng.hpp"
#include "fksteer/targets.hpp"

namespace fksteer {

/// Reward quantities at (t, x): r_t, its time derivative, Laplacian and gradient.
struct RewardPack {
  double value = 0.0;
  double time_derivative = 0.0;
  double laplacian = 0.0;
  std::span<const double> grad;
};

/// Everything the drift and the potentials need at one (t, x).
struct GuidanceContext {
  double sigma = 0.0;
  double diffusion = 0.0;       // U_t
  double backward_noise = 0.0;  // V_t
  double gamma = 1.0;
  std::span<const double> score;
  double score_laplacian = 0.0;
  std::optional<double> log_density;
  std::optional<RewardPack> reward;
  // Backward-time forward drift and its divergence. Empty means identically zero,
  // which is the case for the variance-exploding schedule.
  std::span<const double> forward_drift;
  double forward_drift_divergence = 0.0;
};

/// v~ = -u + ((U^2 + V^2)/2) (gamma score + grad r_t).
void guided_drift(const GuidanceContext& ctx, std::span<double> out);

/// Uncentered reweighting potential G_t. Centering is left to weight
/// normalisation in the particle engine.
double potential_G(const GuidanceContext& ctx);

// ---------------------------------------------------------------------------
// Control bases

enum class BasisKind {
  Reward,           // field grad r_t, divergence lap r_t, potential r_t
  Score,            // field score, divergence lap log p, potential log p
  ForwardDrift,     // field u_t, divergence div u_t (never active under VE)
  ScoreNorm,        // potential |score|^2 (ECG fallback)
  ScoreProjection,  // potential score . xi (ECG fallback)
  Constant,         // constant field, test-only
};

struct BasisOptions {
  bool energy_mode = false;  // ECG: scalar potentials are required
  bool score_norm = false;
  std::size_t score_projections = 0;
};

/// Active bases for a target. Reward bases are dropped for pure annealing and
/// the forward-drift basis is dropped when u == 0. In energy mode the
/// log-density basis needs a base that provides log p.
std::vector<BasisKind> active_bases(const TargetSpec& target, const BasisOptions& options);

/// Per-point basis evaluation. For VCG the fields are the vector bases s_i;
/// for ECG they are gradients of the scalar bases s^i. Divergences are of the
/// fields in both cases.
struct BasisEval {
  std::size_t n = 0;
  std::size_t d = 0;
  std::vector<double> fields;       // n x d
  std::vector<double> divergences;  // n
  std::vector<double> potentials;   // n (scalar basis values; zero where undefined)

  void resize(std::size_t count, std::size_t dim);
  std::span<const double> field(std::size_t i) const { return {fields.data() + i * d, d}; }
  std::span<double> field(std::size_t i) { return {fields.data() + i * d, d}; }
};

/// Extra inputs for the fallback and test-only bases.
struct BasisExtras {
  const ScoreModel* model = nullptr;      // ScoreNorm / ScoreProjection
  const RowMatrix* projections = nullptr;  // one unit direction per row
  std::span<const double> x;
  std::span<const double> constant;       // Constant
};

void evaluate_bases(std::span<const BasisKind> kinds, const GuidanceContext& ctx,
                    const BasisExtras& extras, BasisEval& out);

/// h_i = (gamma score + grad r_t) . s_i + div s_i, one entry per basis.
void basis_control_potentials(const GuidanceContext& ctx, const BasisEval& basis,
                              std::span<double> out);

/// h(x; b) for b = sum_i theta_i s_i. Throws Error(DimensionMismatch) when
/// theta does not match the basis count.
double control_potential_h(const GuidanceContext& ctx, const BasisEval& basis,
                           std::span<const double> theta);

// ---------------------------------------------------------------------------

using ScoreFunction = std::function<void(std::span<const double>, std::span<double>)>;

/// Unbiased Hutchinson estimate of div(score) at x with Rademacher probes.
/// Jacobian-vector products use central differences of the score with step
/// 1e-4 (1 + |x|).
double hutchinson_laplacian(const ScoreFunction& score, std::span<const double> x,
                            std::size_t probes, StreamRng& rng);

}  // namespace fksteer
