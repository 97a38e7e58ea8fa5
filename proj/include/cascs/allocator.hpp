#pragma once

#include "cascs/types.hpp"

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

namespace cascs {

using Rng = std::mt19937_64;

/// Per-pixel importance scores over an H x W image. Any finite values; BRA
/// normalizes them with a global softmax.
struct SaliencyMap {
  Image scores;
  int height() const { return static_cast<int>(scores.rows()); }
  int width() const { return static_cast<int>(scores.cols()); }
};

/// Per-block measurement counts q_i on the (H/B) x (W/B) grid. Storage index
/// (r, c) is block row r, block column c; flat block order is row-major.
struct MeasurementSizeMap {
  IntGrid sizes;
  int block_size = 0;
  int budget_q = 0;  ///< target average measurement count
  int bound_k = 0;   ///< per-block upper bound

  int blocks() const { return static_cast<int>(sizes.size()); }
  std::int64_t total() const { return sizes.sum(); }
  /// Flat row-major accessor.
  std::int64_t at(int block) const;
};

/// Per-block CS ratios r_i = q_i / B^2.
struct RatioMap {
  Eigen::MatrixXd ratios;
  int block_size = 0;
  int budget_q = 0;
  int bound_k = 0;

  int grid_rows() const { return static_cast<int>(ratios.rows()); }
  int grid_cols() const { return static_cast<int>(ratios.cols()); }
};

RatioMap to_ratio_map(const MeasurementSizeMap& sizes);

/// Recovers integer counts from ratios (round(r_i * B^2)).
MeasurementSizeMap to_size_map(const RatioMap& ratios);

enum class Correction { none, uniform_descent, multinomial };
std::string to_string(Correction c);

struct BraIteration {
  IntGrid sizes;             ///< Q after round(clip(.)) in this iteration
  std::int64_t excess = 0;   ///< sum(Q) - q*l, i.e. delta * l
  double delta = 0.0;        ///< average(Q) - q
  Correction method = Correction::none;  ///< correction applied after the check
};

struct BraTrace {
  std::vector<BraIteration> iterations;
  int count() const { return static_cast<int>(iterations.size()); }
};

struct BraResult {
  RatioMap ratios;
  MeasurementSizeMap sizes;
  BraTrace trace;
};

inline constexpr int kUniformDescentSteps = 10;
inline constexpr int kBraIterationCap = 10000;

/// Local standard deviation in a window x window neighbourhood, reflect padded.
SaliencyMap default_saliency(const Image& image, int window = 7);

/// Pluggable saliency detector; the default wraps default_saliency.
using SaliencyDetector = std::function<SaliencyMap(const Image&)>;
SaliencyDetector local_std_detector(int window = 7);

/// round(clip_{0,K}(x)), rounding half away from zero.
std::int64_t clip_round(double x, std::int64_t bound_k);

/// Global softmax over all pixels followed by B x B sum pooling. The result
/// sums to 1 over the block grid.
Eigen::MatrixXd block_weights(const SaliencyMap& s, int block_size);

/// The correction loop alone, starting from a real-valued initial map.
/// Returns the final integer map; the trace is appended to `trace`.
IntGrid bra_correct(const Eigen::MatrixXd& initial, int budget_q, int bound_k, Rng& rng, BraTrace& trace,
                    int uniform_steps = kUniformDescentSteps);

/// Block ratio aggregation: softmax, sum pooling, then iterative correction
/// until the average measurement count is exactly q and every q_i is in [0, K].
BraResult bra(const SaliencyMap& s, int block_size, int budget_q, int bound_k, std::uint64_t seed,
              int uniform_steps = kUniformDescentSteps);

struct UniformDescentTrace {
  std::vector<IntGrid> states;   ///< Q_1, Q_2, ... (post rounding)
  std::vector<double> deltas;    ///< delta_t for each state
  bool fixed_point = false;      ///< Q stopped changing (or delta hit 0)
  double terminal_delta = 0.0;
  int steps() const { return static_cast<int>(states.size()); }
};

/// Runs only the uniform-descent correction until Q stops changing or
/// max_steps states have been produced.
UniformDescentTrace uniform_descent_only(const Eigen::MatrixXd& initial, int budget_q, int bound_k, int max_steps);

/// Removes (delta > 0) or adds (delta < 0) |delta * l| units spread
/// multinomially with uniform probabilities over the l blocks. Throws
/// InvariantError when delta * l is not an integer or delta is zero.
IntGrid multinomial_correction(const IntGrid& sizes, double delta, Rng& rng);

/// Integer form used by BRA: `excess` = delta * l.
IntGrid multinomial_correction_exact(const IntGrid& sizes, std::int64_t excess, Rng& rng);

/// Repeats each r_i over its B x B block.
Eigen::MatrixXd expand_ratio_map(const RatioMap& r);

}  // namespace cascs
