// Survival heads: discrete-time hazards and Cox proportional hazards.
// Targets, losses with analytic gradients, Breslow baseline and curves.
#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "core.hpp"
#include "types.hpp"

namespace survfuse {

// ---------------------------------------------------------------------------
// Survival curves

/// Right-continuous step function: S(t) is the value at the last time <= t.
/// Construction enforces S(0) = 1, non-increasing values inside [0, 1].
class SurvivalCurve {
 public:
  SurvivalCurve() : times_{0.0}, values_{1.0} {}

  SurvivalCurve(std::vector<double> times, std::vector<double> values)
      : times_(std::move(times)), values_(std::move(values)) {
    if (times_.empty() || times_.size() != values_.size())
      throw ValidationError("SurvivalCurve: times and values must be non-empty and aligned");
    if (times_.front() != 0.0 || values_.front() != 1.0) throw ValidationError("SurvivalCurve: must start at S(0) = 1");
    for (std::size_t i = 1; i < times_.size(); ++i) {
      if (!(times_[i] > times_[i - 1])) throw ValidationError("SurvivalCurve: times must be strictly increasing");
      if (!(values_[i] <= values_[i - 1])) throw ValidationError("SurvivalCurve: values must be non-increasing");
    }
    if (!(values_.back() >= 0.0)) throw ValidationError("SurvivalCurve: values must lie in [0,1]");
  }

  double operator()(double t) const {
    if (t < 0.0) return 1.0;
    const auto it = std::upper_bound(times_.begin(), times_.end(), t);
    return values_[static_cast<std::size_t>(it - times_.begin()) - 1];
  }

  const std::vector<double>& times() const { return times_; }
  const std::vector<double>& values() const { return values_; }

 private:
  std::vector<double> times_;
  std::vector<double> values_;
};

inline std::string curves_to_csv(std::span<const std::string> ids, std::span<const SurvivalCurve> curves) {
  std::string out = "id,t,S\n";
  for (std::size_t i = 0; i < curves.size(); ++i)
    for (std::size_t k = 0; k < curves[i].times().size(); ++k)
      out += ids[i] + "," + format_double(curves[i].times()[k]) + "," + format_double(curves[i].values()[k]) + "\n";
  return out;
}

// ---------------------------------------------------------------------------
// Time grid and discrete targets

/// Bin edges 0 = t_0 < t_1 < ... < t_B.
struct TimeGrid {
  std::vector<double> edges;

  std::size_t bins() const { return edges.size() - 1; }

  /// 1-based bin b with t_{b-1} < t <= t_b.
  std::size_t bin_of(double t) const {
    if (!(t > 0.0) || t > edges.back())
      throw ValidationError("time " + format_double(t) + " outside the grid (0, " + format_double(edges.back()) + "]");
    return static_cast<std::size_t>(std::lower_bound(edges.begin() + 1, edges.end(), t) - edges.begin());
  }

  static TimeGrid validated(std::vector<double> edges) {
    if (edges.size() < 2 || edges.front() != 0.0) throw ValidationError("TimeGrid: need edges starting at 0");
    for (std::size_t i = 1; i < edges.size(); ++i)
      if (!(edges[i] > edges[i - 1])) throw ValidationError("TimeGrid: edges must be strictly increasing");
    return TimeGrid{std::move(edges)};
  }
};

inline TimeGrid equal_width_grid(std::size_t bins, double horizon) {
  if (bins == 0 || !(horizon > 0.0)) throw ValidationError("equal_width_grid: need bins >= 1 and horizon > 0");
  std::vector<double> e(bins + 1);
  for (std::size_t b = 0; b <= bins; ++b) e[b] = horizon * static_cast<double>(b) / static_cast<double>(bins);
  e.back() = horizon;
  return TimeGrid::validated(std::move(e));
}

/// Interior edges at event-time quantiles; duplicate quantiles are merged, so
/// the grid may end up with fewer than `bins` bins.
inline TimeGrid quantile_grid(std::size_t bins, std::span<const Outcome> outcomes, double horizon) {
  std::vector<double> ev;
  for (const auto& o : outcomes)
    if (o.event && o.time < horizon) ev.push_back(o.time);
  if (ev.empty() || bins < 2) return equal_width_grid(std::max<std::size_t>(bins, 1), horizon);
  std::sort(ev.begin(), ev.end());
  std::vector<double> e{0.0};
  for (std::size_t b = 1; b < bins; ++b) {
    const double q = static_cast<double>(b) / static_cast<double>(bins) * static_cast<double>(ev.size() - 1);
    const double v = ev[static_cast<std::size_t>(std::floor(q))];
    if (v > e.back() && v < horizon) e.push_back(v);
  }
  e.push_back(horizon);
  return TimeGrid::validated(std::move(e));
}

/// y(i,b) = 1{e_i, t_{b-1} < t_i <= t_b}; a(i,b) = 1 while subject i is still
/// at risk at the start of bin b.
struct DiscreteTargets {
  Matrix y;
  Matrix a;
};

inline DiscreteTargets build_discrete_targets(std::span<const Outcome> outcomes, const TimeGrid& grid) {
  const std::size_t B = grid.bins();
  DiscreteTargets t{Matrix(outcomes.size(), B), Matrix(outcomes.size(), B)};
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    const std::size_t bin = grid.bin_of(outcomes[i].time);  // 1-based
    for (std::size_t b = 0; b < bin; ++b) t.a(i, b) = 1.0;
    if (outcomes[i].event) t.y(i, bin - 1) = 1.0;
  }
  return t;
}

// ---------------------------------------------------------------------------
// Discrete-time head

inline constexpr double kProbClamp = 1e-12;

struct MatrixLoss {
  double value = 0.0;
  Matrix grad;
};

struct VectorLoss {
  double value = 0.0;
  std::vector<double> grad;
};

/// Masked Bernoulli loss sum a*BCE(sigmoid(o), y) / sum a, probabilities
/// clipped to [1e-12, 1 - 1e-12]. Clipped cells get zero gradient.
inline MatrixLoss discrete_loss(const Matrix& logits, const DiscreteTargets& targets) {
  if (!logits.same_shape(targets.y) || !logits.same_shape(targets.a))
    throw ValidationError("discrete_loss: logits and targets must be N x B");
  double mask_sum = 0.0;
  for (double a : targets.a.data) mask_sum += a;
  if (mask_sum == 0.0) throw ValidationError("discrete_loss: no at-risk cells");
  MatrixLoss out;
  out.grad = Matrix(logits.rows, logits.cols);
  for (std::size_t k = 0; k < logits.data.size(); ++k) {
    const double a = targets.a.data[k];
    if (a == 0.0) continue;
    const double y = targets.y.data[k];
    const double raw = sigmoid(logits.data[k]);
    const double p = std::clamp(raw, kProbClamp, 1.0 - kProbClamp);
    out.value += a * -(y * std::log(p) + (1.0 - y) * std::log(1.0 - p));
    if (p == raw) out.grad.data[k] = a * (p - y) / mask_sum;
  }
  out.value /= mask_sum;
  return out;
}

/// S(t_b) = prod_{k<=b} (1 - sigmoid(o_k)) on the grid edges.
inline SurvivalCurve discrete_curve(std::span<const double> logits, const TimeGrid& grid) {
  if (logits.size() != grid.bins()) throw ValidationError("discrete_curve: logits length must equal bin count");
  std::vector<double> v(grid.edges.size());
  v[0] = 1.0;
  for (std::size_t b = 0; b < logits.size(); ++b) {
    if (!std::isfinite(logits[b]) && logits[b] != -std::numeric_limits<double>::infinity())
      throw ValidationError("discrete_curve: non-finite logit");
    v[b + 1] = v[b] * (1.0 - sigmoid(logits[b]));
  }
  return SurvivalCurve(grid.edges, std::move(v));
}

// ---------------------------------------------------------------------------
// Cox head

namespace detail {
inline std::vector<std::size_t> order_by_time(std::span<const Outcome> o, bool descending) {
  std::vector<std::size_t> idx(o.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return descending ? o[a].time > o[b].time : o[a].time < o[b].time;
  });
  return idx;
}
}  // namespace detail

/// Negative partial log-likelihood with Breslow ties (risk set t_j >= t_i):
///   -(1/E) sum_{i: e_i} (g_i - log sum_{j: t_j >= t_i} exp(g_j))
inline VectorLoss cox_loss(std::span<const double> scores, std::span<const Outcome> outcomes) {
  const std::size_t n = scores.size();
  if (outcomes.size() != n) throw ValidationError("cox_loss: scores and outcomes differ in length");
  double events = 0.0;
  for (const auto& o : outcomes) events += o.event ? 1.0 : 0.0;
  if (events == 0.0) throw ValidationError("cox_loss: no events");

  constexpr double kNegInf = -std::numeric_limits<double>::infinity();
  // Descending sweep: log risk-set sum at each subject's time.
  const auto desc = detail::order_by_time(outcomes, true);
  std::vector<double> log_risk(n, 0.0);
  double acc = kNegInf;
  VectorLoss out;
  for (std::size_t p = 0; p < n;) {
    std::size_t q = p;
    while (q < n && outcomes[desc[q]].time == outcomes[desc[p]].time) acc = log_add_exp(acc, scores[desc[q++]]);
    for (std::size_t k = p; k < q; ++k) {
      log_risk[desc[k]] = acc;
      if (outcomes[desc[k]].event) out.value -= scores[desc[k]] - acc;
    }
    p = q;
  }
  out.value /= events;

  // Ascending sweep: log sum over events i with t_i <= t_k of 1/R_i.
  const auto asc = detail::order_by_time(outcomes, false);
  out.grad.assign(n, 0.0);
  double log_c = kNegInf;
  for (std::size_t p = 0; p < n;) {
    std::size_t q = p;
    while (q < n && outcomes[asc[q]].time == outcomes[asc[p]].time) {
      if (outcomes[asc[q]].event) log_c = log_add_exp(log_c, -log_risk[asc[q]]);
      ++q;
    }
    for (std::size_t k = p; k < q; ++k) {
      const std::size_t i = asc[k];
      const double e = outcomes[i].event ? 1.0 : 0.0;
      out.grad[i] = -(e - std::exp(scores[i] + log_c)) / events;
    }
    p = q;
  }
  return out;
}

/// Cumulative baseline hazard at the ordered distinct event times.
struct BreslowBaseline {
  std::vector<double> times;
  std::vector<double> increments;
  std::vector<double> cumulative;
};

/// Increment d_k / sum_{j: t_j >= tau_k} exp(g_j) at each distinct event time.
inline BreslowBaseline breslow_baseline(std::span<const double> scores, std::span<const Outcome> outcomes) {
  const std::size_t n = scores.size();
  if (outcomes.size() != n) throw ValidationError("breslow_baseline: scores and outcomes differ in length");
  const auto asc = detail::order_by_time(outcomes, false);
  std::vector<double> suffix(n + 1, 0.0);
  for (std::size_t k = n; k-- > 0;) suffix[k] = suffix[k + 1] + std::exp(scores[asc[k]]);
  BreslowBaseline b;
  double cum = 0.0;
  for (std::size_t p = 0; p < n;) {
    std::size_t q = p;
    double deaths = 0.0;
    while (q < n && outcomes[asc[q]].time == outcomes[asc[p]].time) deaths += outcomes[asc[q++]].event ? 1.0 : 0.0;
    if (deaths > 0.0) {
      const double inc = deaths / suffix[p];
      cum += inc;
      b.times.push_back(outcomes[asc[p]].time);
      b.increments.push_back(inc);
      b.cumulative.push_back(cum);
    }
    p = q;
  }
  if (b.times.empty()) throw ValidationError("breslow_baseline: no events");
  return b;
}

/// S(t | g) = exp(-H0(t) e^g), stepping at the baseline event times.
inline SurvivalCurve cox_curve(double score, const BreslowBaseline& base) {
  if (base.times.empty()) throw ValidationError("cox_curve: empty baseline");
  std::vector<double> t{0.0}, v{1.0};
  const double risk = std::exp(score);
  for (std::size_t k = 0; k < base.times.size(); ++k) {
    t.push_back(base.times[k]);
    v.push_back(std::exp(-base.cumulative[k] * risk));
  }
  return SurvivalCurve(std::move(t), std::move(v));
}

}  // namespace survfuse
