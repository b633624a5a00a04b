#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "fksteer/common.hpp"

namespace fksteer {

enum class ControlMode { VCG, ECG };

/// Small n x n system A theta = c assembled from a weighted particle set.
struct ControlSystem {
  Eigen::MatrixXd A;
  Vector c;
  Vector theta;
  ControlMode mode = ControlMode::VCG;
  double ridge = 1e-6;

  std::size_t size() const { return static_cast<std::size_t>(c.size()); }
};

/// VCG normal equations from weighted, empirically centred moments.
/// weights: N normalised weights; g: N potentials; h: N x n control potentials.
ControlSystem assemble_vcg(std::span<const double> weights, std::span<const double> g,
                           const RowMatrix& h);

/// ECG Ritz system. s: N x n scalar bases; grad_s: N x (n*d) with the
/// gradient of basis i for particle p stored at columns [i*d, (i+1)*d).
ControlSystem assemble_ecg(std::span<const double> weights, std::span<const double> g,
                           const RowMatrix& s, const RowMatrix& grad_s);

struct SolveResult {
  Vector theta;
  bool fallback = false;  // true when theta was zeroed
  std::string warning;
};

/// theta = (A + ridge tr(A)/n I)^-1 c by Cholesky. Degenerate systems fall
/// back to theta = 0 with a warning instead of failing the run.
SolveResult solve_regularized(ControlSystem& sys);

/// Weighted variance of g + h theta (theta may be empty, meaning zero).
double weighted_residual_variance(std::span<const double> weights, std::span<const double> g,
                                  const RowMatrix& h, const Vector& theta);

/// Per-step coefficients across refinement rounds.
struct ControlState {
  std::vector<Vector> round;       // newest round, one vector per step
  std::vector<Vector> cumulative;  // sum over all absorbed rounds

  explicit ControlState(std::size_t steps = 0) : round(steps), cumulative(steps) {}

  /// Adds the current round into the cumulative coefficients.
  void absorb();
};

}  // namespace fksteer
