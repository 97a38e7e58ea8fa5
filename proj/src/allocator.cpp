#include "cascs/allocator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>

namespace cascs {

namespace {

// numpy-style "reflect": ... c b | a b c d | c b ...
Eigen::Index reflect(Eigen::Index i, Eigen::Index n) {
  if (n == 1) return 0;
  const Eigen::Index period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

void check_grid(const SaliencyMap& s, int block_size) {
  if (block_size <= 0) throw ShapeError("block size must be positive");
  if (s.scores.size() == 0) throw ShapeError("empty saliency map");
  if (s.height() % block_size != 0 || s.width() % block_size != 0)
    throw ShapeError("saliency map " + std::to_string(s.height()) + "x" + std::to_string(s.width()) +
                     " is not divisible by block size " + std::to_string(block_size));
  if (!s.scores.allFinite()) throw RangeError("saliency map has non-finite entries");
}

}  // namespace

std::int64_t MeasurementSizeMap::at(int block) const {
  const auto cols = sizes.cols();
  return sizes(block / cols, block % cols);
}

RatioMap to_ratio_map(const MeasurementSizeMap& sizes) {
  const double n = static_cast<double>(sizes.block_size) * sizes.block_size;
  return {sizes.sizes.cast<double>() / n, sizes.block_size, sizes.budget_q, sizes.bound_k};
}

MeasurementSizeMap to_size_map(const RatioMap& ratios) {
  const double n = static_cast<double>(ratios.block_size) * ratios.block_size;
  IntGrid q = (ratios.ratios.array() * n).round().cast<std::int64_t>().matrix();
  return {q, ratios.block_size, ratios.budget_q, ratios.bound_k};
}

std::string to_string(Correction c) {
  switch (c) {
    case Correction::none:
      return "none";
    case Correction::uniform_descent:
      return "uniform";
    case Correction::multinomial:
      return "multinomial";
  }
  return "?";
}

SaliencyMap default_saliency(const Image& image, int window) {
  if (image.size() == 0) throw ShapeError("default_saliency: empty image");
  if (window <= 0 || window % 2 == 0) throw RangeError("default_saliency: window must be odd and positive");
  const Eigen::Index h = image.rows();
  const Eigen::Index w = image.cols();
  const int radius = window / 2;
  const double count = static_cast<double>(window) * window;
  Image out(h, w);
  for (Eigen::Index c = 0; c < w; ++c) {
    for (Eigen::Index r = 0; r < h; ++r) {
      // Shifted by the centre value so flat neighbourhoods give exactly 0.
      const double centre = image(r, c);
      double sum = 0.0;
      double sum_sq = 0.0;
      for (int dc = -radius; dc <= radius; ++dc) {
        const auto cc = reflect(c + dc, w);
        for (int dr = -radius; dr <= radius; ++dr) {
          const double d = image(reflect(r + dr, h), cc) - centre;
          sum += d;
          sum_sq += d * d;
        }
      }
      const double mean = sum / count;
      out(r, c) = std::sqrt(std::max(0.0, sum_sq / count - mean * mean));
    }
  }
  return {std::move(out)};
}

SaliencyDetector local_std_detector(int window) {
  return [window](const Image& image) { return default_saliency(image, window); };
}

std::int64_t clip_round(double x, std::int64_t bound_k) {
  if (std::isnan(x)) throw RangeError("clip_round: NaN input");
  const double clipped = std::clamp(x, 0.0, static_cast<double>(bound_k));
  return static_cast<std::int64_t>(std::round(clipped));
}

Eigen::MatrixXd block_weights(const SaliencyMap& s, int block_size) {
  check_grid(s, block_size);
  const double peak = s.scores.maxCoeff();
  const Eigen::MatrixXd e = (s.scores.array() - peak).exp().matrix();
  const double z = e.sum();
  const auto gr = s.height() / block_size;
  const auto gc = s.width() / block_size;
  Eigen::MatrixXd weights(gr, gc);
  for (int r = 0; r < gr; ++r)
    for (int c = 0; c < gc; ++c)
      weights(r, c) = e.block(r * block_size, c * block_size, block_size, block_size).sum() / z;
  return weights;
}

IntGrid multinomial_correction_exact(const IntGrid& sizes, std::int64_t excess, Rng& rng) {
  if (excess == 0) throw InvariantError("multinomial correction called with zero error");
  const auto l = sizes.size();
  const auto cols = sizes.cols();
  IntGrid out = sizes;
  const std::int64_t sign = excess > 0 ? 1 : -1;
  std::uniform_int_distribution<Eigen::Index> pick(0, l - 1);
  for (std::int64_t k = 0; k < std::abs(excess); ++k) {
    const auto b = pick(rng);
    out(b / cols, b % cols) -= sign;
  }
  return out;
}

IntGrid multinomial_correction(const IntGrid& sizes, double delta, Rng& rng) {
  const double scaled = delta * static_cast<double>(sizes.size());
  const double rounded = std::round(scaled);
  if (std::abs(scaled - rounded) > 1e-9)
    throw InvariantError("multinomial correction: delta * l = " + std::to_string(scaled) + " is not an integer");
  return multinomial_correction_exact(sizes, static_cast<std::int64_t>(rounded), rng);
}

IntGrid bra_correct(const Eigen::MatrixXd& initial, int budget_q, int bound_k, Rng& rng, BraTrace& trace,
                    int uniform_steps) {
  const auto l = static_cast<std::int64_t>(initial.size());
  if (l == 0) throw ShapeError("bra: empty block grid");
  const std::int64_t target = static_cast<std::int64_t>(budget_q) * l;
  Eigen::MatrixXd current = initial;
  for (int i = 1; i <= kBraIterationCap; ++i) {
    IntGrid q = current.unaryExpr([bound_k](double x) { return clip_round(x, bound_k); });
    BraIteration it;
    it.sizes = q;
    it.excess = q.sum() - target;
    it.delta = static_cast<double>(it.excess) / static_cast<double>(l);
    if (it.excess == 0) {
      trace.iterations.push_back(std::move(it));
      return q;
    }
    if (i <= uniform_steps) {
      it.method = Correction::uniform_descent;
      current = q.cast<double>().array() - it.delta;
    } else {
      it.method = Correction::multinomial;
      current = multinomial_correction_exact(q, it.excess, rng).cast<double>();
    }
    trace.iterations.push_back(std::move(it));
  }
  throw Error("bra: no convergence after " + std::to_string(kBraIterationCap) + " iterations");
}

BraResult bra(const SaliencyMap& s, int block_size, int budget_q, int bound_k, std::uint64_t seed,
              int uniform_steps) {
  check_grid(s, block_size);
  const int n = block_size * block_size;
  if (bound_k < 0 || bound_k > n)
    throw BudgetError("bra: bound K=" + std::to_string(bound_k) + " outside [0, " + std::to_string(n) + "]");
  if (budget_q < 0 || budget_q > bound_k)
    throw BudgetError("bra: budget q=" + std::to_string(budget_q) + " outside [0, K=" + std::to_string(bound_k) + "]");
  const Eigen::MatrixXd w = block_weights(s, block_size);
  const double l = static_cast<double>(w.size());
  const Eigen::MatrixXd initial = w * (static_cast<double>(budget_q) * l);
  Rng rng(seed);
  BraResult out;
  IntGrid q = bra_correct(initial, budget_q, bound_k, rng, out.trace, uniform_steps);
  out.sizes = {std::move(q), block_size, budget_q, bound_k};
  out.ratios = to_ratio_map(out.sizes);
  return out;
}

UniformDescentTrace uniform_descent_only(const Eigen::MatrixXd& initial, int budget_q, int bound_k, int max_steps) {
  const auto l = static_cast<std::int64_t>(initial.size());
  if (l == 0) throw ShapeError("uniform descent: empty block grid");
  const std::int64_t target = static_cast<std::int64_t>(budget_q) * l;
  UniformDescentTrace out;
  Eigen::MatrixXd current = initial;
  for (int step = 0; step < max_steps; ++step) {
    IntGrid q = current.unaryExpr([bound_k](double x) { return clip_round(x, bound_k); });
    const std::int64_t excess = q.sum() - target;
    const double delta = static_cast<double>(excess) / static_cast<double>(l);
    const bool unchanged = !out.states.empty() && q == out.states.back();
    out.states.push_back(q);
    out.deltas.push_back(delta);
    if (excess == 0 || unchanged) {
      out.fixed_point = true;
      out.terminal_delta = delta;
      return out;
    }
    current = q.cast<double>().array() - delta;
  }
  out.terminal_delta = out.deltas.empty() ? 0.0 : out.deltas.back();
  return out;
}

Eigen::MatrixXd expand_ratio_map(const RatioMap& r) {
  const int b = r.block_size;
  Eigen::MatrixXd out(r.grid_rows() * b, r.grid_cols() * b);
  for (int gr = 0; gr < r.grid_rows(); ++gr)
    for (int gc = 0; gc < r.grid_cols(); ++gc) out.block(gr * b, gc * b, b, b).setConstant(r.ratios(gr, gc));
  return out;
}

}  // namespace cascs
