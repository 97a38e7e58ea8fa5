#pragma once

// Convergence harnesses for the BRA correction loop. These back the
// `simulate-bra` and `selfcheck` commands and the acceptance suite.

#include "cascs/allocator.hpp"

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

namespace cascs {

struct PropertyReport {
  std::string name;
  std::int64_t cases = 0;
  std::int64_t violations = 0;
  std::string first_violation;

  bool ok() const { return violations == 0; }
  void fail(std::string what) {
    if (violations++ == 0) first_violation = std::move(what);
  }
};

/// Random uniform-descent instances: l in [2, max_blocks], K in [1, max_bound],
/// q in [0, K], Q_0 drawn uniformly from [0, K] as reals.
struct DescentInstanceSpace {
  int instances = 10000;
  int max_blocks = 100;
  int max_bound = 1024;
  int max_steps = 4096;
  std::uint64_t seed = 1;
};

/// Order preservation and non-increasing pairwise gaps between consecutive
/// integer states of uniform descent.
PropertyReport check_shape_convergence(const DescentInstanceSpace& space);

/// |n - f(n - delta)| <= round(|delta|) for all n in {0..K} and delta on a grid
/// of step 1/denominator over [-K-2, K+2].
PropertyReport check_error_bound_exhaustive(int bound_k, int denominator);

/// Same inequality on random (n, delta) pairs.
PropertyReport check_error_bound_sampled(int bound_k, std::int64_t samples, std::uint64_t seed);

/// round(delta) <= 2 delta for delta >= 0, with equality exactly at {0, 1/2}.
/// delta ranges over k / denominator, k = 0 .. max * denominator.
PropertyReport check_round_bound(int denominator, int max_value);

/// |delta_{t+1}| <= |delta_t| along uniform descent.
PropertyReport check_error_monotone(const DescentInstanceSpace& space);

/// Uniform descent alone reaches a fixed point with delta in (-1/2, 1/2].
PropertyReport check_fixed_point_bound(const DescentInstanceSpace& space);

struct MultinomialPhaseReport {
  std::int64_t trials = 0;
  std::int64_t trials_in_phase = 0;  ///< runs that needed the random correction
  std::int64_t sign_flips = 0;
  std::int64_t increases = 0;          ///< |delta| grew
  std::int64_t stalls = 0;             ///< |delta| unchanged (clip absorbed the step)
  double mean_phase_iterations = 0.0;
};

/// Tracks sign(delta) and |delta| across the random-correction phase of full
/// BRA runs started from random real initial states.
MultinomialPhaseReport check_multinomial_phase(int blocks, std::int64_t trials, int budget_q, int bound_k,
                                               std::uint64_t seed);

struct ConvergenceCurves {
  int blocks = 0;
  std::int64_t trials = 0;
  int budget_q = 0;
  int bound_k = 0;
  std::int64_t converged_within_limit = 0;
  int iteration_limit = 16;
  int max_iterations = 0;
  std::vector<std::int64_t> iteration_histogram;  ///< index = iterations used
  /// Per iteration t = 1..horizon (index t - 1); finished runs contribute 0.
  std::vector<double> mean_delta;
  std::vector<double> mean_abs_delta;
  /// MSE(Q_{t+1}, Q_t).
  std::vector<double> mean_mse;
  std::vector<double> active_fraction;

  bool all_within_limit() const { return converged_within_limit == trials; }
  /// mean |delta_t| non-increasing from iteration `from` on (1-based).
  bool abs_delta_monotone_from(int from) const;
  /// 1-based iterations t > from where mean MSE exceeds the value at t - 1.
  std::vector<int> mse_increases_after(int from) const;
};

/// Full BRA correction runs from `trials` random initial states, Q_0 entries
/// uniform in [0, K].
ConvergenceCurves simulate_convergence(int blocks, std::int64_t trials, int budget_q, int bound_k, std::uint64_t seed,
                                       int horizon = 20, int iteration_limit = 16);

void write_curves_csv(const ConvergenceCurves& curves, std::ostream& out);

}  // namespace cascs
