#include "cascs/bra_analysis.hpp"

#include <cmath>
#include <cstdlib>
#include <sstream>

namespace cascs {

namespace {

struct DescentInstance {
  Eigen::MatrixXd initial;
  int budget_q;
  int bound_k;
};

DescentInstance draw_instance(const DescentInstanceSpace& space, Rng& rng) {
  std::uniform_int_distribution<int> blocks(2, std::max(2, space.max_blocks));
  std::uniform_int_distribution<int> bound(1, std::max(1, space.max_bound));
  const int l = blocks(rng);
  const int k = bound(rng);
  std::uniform_int_distribution<int> budget(0, k);
  const int q = budget(rng);
  std::uniform_real_distribution<double> entry(0.0, static_cast<double>(k));
  Eigen::MatrixXd initial(l, 1);
  for (int i = 0; i < l; ++i) initial(i) = entry(rng);
  return {std::move(initial), q, k};
}

std::string describe(const DescentInstance& inst, int step) {
  std::ostringstream os;
  os << "l=" << inst.initial.size() << " q=" << inst.budget_q << " K=" << inst.bound_k << " step=" << step;
  return os.str();
}

}  // namespace

PropertyReport check_shape_convergence(const DescentInstanceSpace& space) {
  PropertyReport rep;
  rep.name = "order preservation and gap monotonicity";
  Rng rng(space.seed);
  for (int n = 0; n < space.instances; ++n) {
    const auto inst = draw_instance(space, rng);
    const auto trace = uniform_descent_only(inst.initial, inst.budget_q, inst.bound_k, space.max_steps);
    for (int t = 0; t + 1 < trace.steps(); ++t) {
      const auto& a = trace.states[static_cast<std::size_t>(t)];
      const auto& b = trace.states[static_cast<std::size_t>(t + 1)];
      const auto l = a.size();
      for (Eigen::Index i = 0; i < l; ++i)
        for (Eigen::Index j = i + 1; j < l; ++j) {
          ++rep.cases;
          const bool order_ok = (a(i) >= a(j) ? b(i) >= b(j) : true) && (a(j) >= a(i) ? b(j) >= b(i) : true);
          const bool gap_ok = std::abs(a(i) - a(j)) >= std::abs(b(i) - b(j));
          if (!order_ok || !gap_ok) rep.fail(describe(inst, t));
        }
    }
  }
  return rep;
}

PropertyReport check_error_bound_exhaustive(int bound_k, int denominator) {
  PropertyReport rep;
  rep.name = "|n - f(n - delta)| <= round(|delta|), K=" + std::to_string(bound_k);
  const std::int64_t lo = -static_cast<std::int64_t>(bound_k + 2) * denominator;
  const std::int64_t hi = static_cast<std::int64_t>(bound_k + 2) * denominator;
  for (int n = 0; n <= bound_k; ++n)
    for (std::int64_t k = lo; k <= hi; ++k) {
      const double delta = static_cast<double>(k) / denominator;
      ++rep.cases;
      const auto lhs = std::abs(n - clip_round(n - delta, bound_k));
      const auto rhs = static_cast<std::int64_t>(std::round(std::abs(delta)));
      if (lhs > rhs) rep.fail("n=" + std::to_string(n) + " delta=" + std::to_string(delta));
    }
  return rep;
}

PropertyReport check_error_bound_sampled(int bound_k, std::int64_t samples, std::uint64_t seed) {
  PropertyReport rep;
  rep.name = "|n - f(n - delta)| <= round(|delta|) sampled, K=" + std::to_string(bound_k);
  Rng rng(seed);
  std::uniform_int_distribution<int> pick_n(0, bound_k);
  std::uniform_real_distribution<double> pick_delta(-bound_k - 2.0, bound_k + 2.0);
  for (std::int64_t s = 0; s < samples; ++s) {
    const int n = pick_n(rng);
    // Half the samples sit exactly on half-integers, where rounding ties live.
    double delta = pick_delta(rng);
    if (s % 2 == 1) delta = std::floor(delta) + 0.5;
    ++rep.cases;
    const auto lhs = std::abs(n - clip_round(n - delta, bound_k));
    const auto rhs = static_cast<std::int64_t>(std::round(std::abs(delta)));
    if (lhs > rhs) rep.fail("n=" + std::to_string(n) + " delta=" + std::to_string(delta));
  }
  return rep;
}

PropertyReport check_round_bound(int denominator, int max_value) {
  PropertyReport rep;
  rep.name = "round(delta) <= 2 delta";
  const std::int64_t top = static_cast<std::int64_t>(max_value) * denominator;
  for (std::int64_t k = 0; k <= top; ++k) {
    ++rep.cases;
    // Exact rational comparison: round(k/d) <= 2k/d  <=>  d*round(k/d) <= 2k.
    const std::int64_t rounded = (2 * k + denominator) / (2 * denominator);  // half away from zero, k >= 0
    const std::int64_t lhs = denominator * rounded;
    const bool at_special = k == 0 || 2 * k == denominator;
    if (lhs > 2 * k) rep.fail("k/d=" + std::to_string(k) + "/" + std::to_string(denominator) + " exceeds bound");
    if ((lhs == 2 * k) != at_special)
      rep.fail("k/d=" + std::to_string(k) + "/" + std::to_string(denominator) + " equality mismatch");
    // Cross-check the library rounding on the same point.
    if (clip_round(static_cast<double>(k) / denominator, max_value + 1) != rounded)
      rep.fail("clip_round disagrees at " + std::to_string(k) + "/" + std::to_string(denominator));
  }
  return rep;
}

PropertyReport check_error_monotone(const DescentInstanceSpace& space) {
  PropertyReport rep;
  rep.name = "|delta_{t+1}| <= |delta_t|";
  Rng rng(space.seed);
  for (int n = 0; n < space.instances; ++n) {
    const auto inst = draw_instance(space, rng);
    const auto trace = uniform_descent_only(inst.initial, inst.budget_q, inst.bound_k, space.max_steps);
    for (std::size_t t = 0; t + 1 < trace.deltas.size(); ++t) {
      ++rep.cases;
      if (std::abs(trace.deltas[t + 1]) > std::abs(trace.deltas[t])) rep.fail(describe(inst, static_cast<int>(t)));
    }
  }
  return rep;
}

PropertyReport check_fixed_point_bound(const DescentInstanceSpace& space) {
  PropertyReport rep;
  rep.name = "uniform descent fixed point with delta in (-1/2, 1/2]";
  Rng rng(space.seed);
  for (int n = 0; n < space.instances; ++n) {
    const auto inst = draw_instance(space, rng);
    const auto trace = uniform_descent_only(inst.initial, inst.budget_q, inst.bound_k, space.max_steps);
    ++rep.cases;
    const double d = trace.terminal_delta;
    if (!trace.fixed_point)
      rep.fail(describe(inst, trace.steps()) + " no fixed point");
    else if (!(d > -0.5 && d <= 0.5))
      rep.fail(describe(inst, trace.steps()) + " delta=" + std::to_string(d));
  }
  return rep;
}

MultinomialPhaseReport check_multinomial_phase(int blocks, std::int64_t trials, int budget_q, int bound_k,
                                               std::uint64_t seed) {
  MultinomialPhaseReport rep;
  rep.trials = trials;
  Rng rng(seed);
  std::uniform_real_distribution<double> entry(0.0, static_cast<double>(bound_k));
  std::int64_t phase_iterations = 0;
  Eigen::MatrixXd initial(blocks, 1);
  for (std::int64_t n = 0; n < trials; ++n) {
    for (int i = 0; i < blocks; ++i) initial(i) = entry(rng);
    BraTrace trace;
    bra_correct(initial, budget_q, bound_k, rng, trace);
    const auto& its = trace.iterations;
    std::size_t first = its.size();
    for (std::size_t t = 0; t < its.size(); ++t)
      if (its[t].method == Correction::multinomial) {
        first = t;
        break;
      }
    if (first == its.size()) continue;
    ++rep.trials_in_phase;
    const auto sign = its[first].excess > 0 ? 1 : -1;
    for (std::size_t t = first; t + 1 < its.size(); ++t) {
      ++phase_iterations;
      const auto next = its[t + 1].excess;
      if (next != 0 && (next > 0 ? 1 : -1) != sign) ++rep.sign_flips;
      if (std::abs(next) > std::abs(its[t].excess)) ++rep.increases;
      if (std::abs(next) == std::abs(its[t].excess)) ++rep.stalls;
    }
  }
  if (rep.trials_in_phase > 0)
    rep.mean_phase_iterations = static_cast<double>(phase_iterations) / static_cast<double>(rep.trials_in_phase);
  return rep;
}

bool ConvergenceCurves::abs_delta_monotone_from(int from) const {
  for (std::size_t t = static_cast<std::size_t>(std::max(1, from)); t < mean_abs_delta.size(); ++t)
    if (mean_abs_delta[t] > mean_abs_delta[t - 1]) return false;
  return true;
}

std::vector<int> ConvergenceCurves::mse_increases_after(int from) const {
  std::vector<int> out;
  for (std::size_t t = static_cast<std::size_t>(std::max(1, from)); t < mean_mse.size(); ++t)
    if (mean_mse[t] > mean_mse[t - 1]) out.push_back(static_cast<int>(t) + 1);
  return out;
}

ConvergenceCurves simulate_convergence(int blocks, std::int64_t trials, int budget_q, int bound_k, std::uint64_t seed,
                                       int horizon, int iteration_limit) {
  ConvergenceCurves c;
  c.blocks = blocks;
  c.trials = trials;
  c.budget_q = budget_q;
  c.bound_k = bound_k;
  c.iteration_limit = iteration_limit;
  const auto h = static_cast<std::size_t>(horizon);
  c.mean_delta.assign(h, 0.0);
  c.mean_abs_delta.assign(h, 0.0);
  c.mean_mse.assign(h, 0.0);
  c.active_fraction.assign(h, 0.0);
  Rng rng(seed);
  std::uniform_real_distribution<double> entry(0.0, static_cast<double>(bound_k));
  Eigen::MatrixXd initial(blocks, 1);
  for (std::int64_t n = 0; n < trials; ++n) {
    for (int i = 0; i < blocks; ++i) initial(i) = entry(rng);
    BraTrace trace;
    bra_correct(initial, budget_q, bound_k, rng, trace);
    const int used = trace.count();
    c.max_iterations = std::max(c.max_iterations, used);
    if (used <= iteration_limit) ++c.converged_within_limit;
    if (c.iteration_histogram.size() <= static_cast<std::size_t>(used))
      c.iteration_histogram.resize(static_cast<std::size_t>(used) + 1, 0);
    ++c.iteration_histogram[static_cast<std::size_t>(used)];
    for (std::size_t t = 0; t < h && t < trace.iterations.size(); ++t) {
      const auto& it = trace.iterations[t];
      c.mean_delta[t] += it.delta;
      c.mean_abs_delta[t] += std::abs(it.delta);
      if (it.excess != 0) c.active_fraction[t] += 1.0;
      if (t + 1 < trace.iterations.size()) {
        const auto diff = (trace.iterations[t + 1].sizes - it.sizes).cast<double>();
        c.mean_mse[t] += diff.squaredNorm() / static_cast<double>(blocks);
      }
    }
  }
  const double denom = trials > 0 ? static_cast<double>(trials) : 1.0;
  for (std::size_t t = 0; t < h; ++t) {
    c.mean_delta[t] /= denom;
    c.mean_abs_delta[t] /= denom;
    c.mean_mse[t] /= denom;
    c.active_fraction[t] /= denom;
  }
  return c;
}

void write_curves_csv(const ConvergenceCurves& c, std::ostream& out) {
  out << "blocks,iteration,mean_delta,mean_abs_delta,mean_mse,active_fraction\n";
  out.precision(12);
  for (std::size_t t = 0; t < c.mean_delta.size(); ++t)
    out << c.blocks << ',' << (t + 1) << ',' << c.mean_delta[t] << ',' << c.mean_abs_delta[t] << ','
        << c.mean_mse[t] << ',' << c.active_fraction[t] << '\n';
}

}  // namespace cascs
