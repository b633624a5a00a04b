#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>

#include "fksteer/common.hpp"
#include "fksteer/targets.hpp"

namespace fksteer {

struct RejectionStats {
  std::size_t proposed = 0;
  std::size_t accepted = 0;
  double max_log_ratio = -1e300;  // largest log acceptance ratio seen; must stay <= 0
  std::string warning;

  double acceptance_rate() const {
    return proposed ? static_cast<double>(accepted) / static_cast<double>(proposed) : 0.0;
  }
};

/// Exact i.i.d. samples from p_0^gamma (optionally times exp(r)) by rejection
/// against the equal-weight mixture of N(mu_i, v/gamma I). Throws
/// std::logic_error if the envelope is ever violated and Error(Divergence)
/// after max_proposals without finishing.
RowMatrix sample_annealed_gmm(const GmmSpec& gmm, double gamma, std::size_t n,
                              std::uint64_t seed, const QuadraticReward* reward = nullptr,
                              RejectionStats* stats = nullptr,
                              std::size_t max_proposals = 4'000'000'000ULL);

/// Closed-form posterior of the GMM under the quadratic likelihood exp(r).
GmmSpec posterior_gmm(const GmmSpec& gmm, const QuadraticReward& reward);

/// Direct samples from a GMM.
RowMatrix sample_gmm(const GmmSpec& gmm, std::size_t n, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Underdamped Langevin (BAOAB), unit masses.

struct LangevinPotential {
  std::size_t dim = 0;
  std::size_t n_particles = 1;  // for the lattice initialisation
  std::size_t spatial_dim = 1;
  bool translation_invariant = false;
  std::function<double(std::span<const double>)> energy;                   // U(x)
  std::function<void(std::span<const double>, std::span<double>)> force;  // -grad U
};

struct LangevinConfig {
  double dt = 1e-3;
  double friction = 0.5;
  double temperature = 1.0;
  std::size_t burn_in = 100'000;
  std::size_t thin = 100;
  std::uint64_t seed = 0;
  double energy_ceiling = 1e8;
  double lattice_spacing = 4.0;
  double lattice_jitter = 0.1;
  // Keep the centre of mass fixed (only meaningful for translation-invariant U).
  bool remove_com = true;

  void validate() const;
};

/// n configurations from one chain: burn-in, then one sample every `thin` steps.
/// `velocities`, when given, receives the matching velocity snapshots.
RowMatrix baoab_sample(const LangevinPotential& potential, const LangevinConfig& config,
                       std::size_t n, RowMatrix* velocities = nullptr);

LangevinPotential dw4_langevin(const DoubleWellSpec& spec);
/// U = |x|^2 / 2 in `dim` dimensions.
LangevinPotential harmonic_langevin(std::size_t dim);
/// U = 0.
LangevinPotential free_langevin(std::size_t dim);

}  // namespace fksteer
