// Evaluation: censoring Kaplan-Meier, time-dependent concordance and the
// IPCW integrated Brier score.
#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <span>
#include <vector>

#include "core.hpp"
#include "survival.hpp"
#include "types.hpp"

namespace survfuse {

/// Kaplan-Meier estimate of the censoring survival function G.
/// Right-continuous; left_limit(t) gives G(t-).
class CensoringKM {
 public:
  CensoringKM() = default;
  CensoringKM(std::vector<double> jump_times, std::vector<double> values)
      : times_(std::move(jump_times)), values_(std::move(values)) {}

  double operator()(double t) const {
    const auto it = std::upper_bound(times_.begin(), times_.end(), t);
    return it == times_.begin() ? 1.0 : values_[static_cast<std::size_t>(it - times_.begin()) - 1];
  }

  double left_limit(double t) const {
    const auto it = std::lower_bound(times_.begin(), times_.end(), t);
    return it == times_.begin() ? 1.0 : values_[static_cast<std::size_t>(it - times_.begin()) - 1];
  }

  const std::vector<double>& jump_times() const { return times_; }
  const std::vector<double>& values() const { return values_; }

 private:
  std::vector<double> times_;
  std::vector<double> values_;
};

/// Product-limit estimator with the censorings (1 - e) as the events. At a
/// tied time every subject with t_j >= tau is in the risk set.
inline CensoringKM censoring_km(std::span<const Outcome> outcomes) {
  if (outcomes.empty()) throw ValidationError("censoring_km: no outcomes");
  std::vector<std::size_t> idx(outcomes.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return outcomes[a].time < outcomes[b].time; });
  std::vector<double> times, values;
  double g = 1.0;
  const std::size_t n = idx.size();
  for (std::size_t p = 0; p < n;) {
    std::size_t q = p;
    double censored = 0.0;
    while (q < n && outcomes[idx[q]].time == outcomes[idx[p]].time) censored += outcomes[idx[q++]].event ? 0.0 : 1.0;
    if (censored > 0.0) {
      g *= 1.0 - censored / static_cast<double>(n - p);
      times.push_back(outcomes[idx[p]].time);
      values.push_back(g);
    }
    p = q;
  }
  return CensoringKM(std::move(times), std::move(values));
}

struct ConcordanceResult {
  double value = 0.0;
  std::uint64_t comparable = 0;
  std::uint64_t concordant = 0;
  std::uint64_t tied = 0;
};

/// Time-dependent concordance: among pairs with t_i < t_j and e_i = 1, the
/// fraction with S_i(t_i) < S_j(t_i), ties counting one half.
inline ConcordanceResult c_td_detail(std::span<const SurvivalCurve> curves, std::span<const Outcome> outcomes) {
  const std::size_t n = curves.size();
  if (outcomes.size() != n) throw ValidationError("c_td: curves and outcomes differ in length");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return outcomes[a].time < outcomes[b].time; });
  ConcordanceResult r;
  for (std::size_t p = 0; p < n; ++p) {
    const std::size_t i = order[p];
    if (!outcomes[i].event) continue;
    const double ti = outcomes[i].time;
    const double si = curves[i](ti);
    // later subjects start after the block of equal times
    std::size_t q = p + 1;
    while (q < n && outcomes[order[q]].time == ti) ++q;
    for (; q < n; ++q) {
      const double sj = curves[order[q]](ti);
      ++r.comparable;
      if (si < sj) ++r.concordant;
      else if (si == sj) ++r.tied;
    }
  }
  if (r.comparable == 0) throw ValidationError("c_td: no comparable pairs");
  r.value = static_cast<double>(2 * r.concordant + r.tied) / static_cast<double>(2 * r.comparable);
  return r;
}

inline double c_td(std::span<const SurvivalCurve> curves, std::span<const Outcome> outcomes) {
  return c_td_detail(curves, outcomes).value;
}

struct IbsResult {
  double value = 0.0;
  std::size_t dropped_terms = 0;  // terms with a zero IPCW denominator
};

/// Integrated Brier score with IPCW, composite midpoint rule over
/// `subintervals` pieces of [0, t_max], t_max = max observed time.
inline IbsResult ibs_detail(std::span<const SurvivalCurve> curves, std::span<const Outcome> outcomes,
                            std::size_t subintervals = 512, const CensoringKM* km = nullptr) {
  const std::size_t n = curves.size();
  if (outcomes.size() != n || n == 0) throw ValidationError("ibs: curves and outcomes must be non-empty and aligned");
  if (subintervals == 0) throw ValidationError("ibs: need at least one subinterval");
  CensoringKM own;
  if (!km) {
    own = censoring_km(outcomes);
    km = &own;
  }
  double t_max = 0.0;
  for (const auto& o : outcomes) t_max = std::max(t_max, o.time);
  std::vector<double> g_event(n);
  for (std::size_t i = 0; i < n; ++i) g_event[i] = km->left_limit(outcomes[i].time);

  IbsResult res;
  const double h = t_max / static_cast<double>(subintervals);
  double acc = 0.0;
  for (std::size_t m = 0; m < subintervals; ++m) {
    const double t = (static_cast<double>(m) + 0.5) * h;
    const double g_t = (*km)(t);
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double s = curves[i](t);
      if (outcomes[i].time <= t && outcomes[i].event) {
        if (g_event[i] > 0.0) sum += s * s / g_event[i];
        else ++res.dropped_terms;
      } else if (outcomes[i].time > t) {
        if (g_t > 0.0) sum += (1.0 - s) * (1.0 - s) / g_t;
        else ++res.dropped_terms;
      }
    }
    acc += sum / static_cast<double>(n);
  }
  res.value = acc / static_cast<double>(subintervals);
  if (res.dropped_terms > 0) warn("ibs: dropped " + std::to_string(res.dropped_terms) + " terms with zero censoring weight");
  return res;
}

inline double ibs(std::span<const SurvivalCurve> curves, std::span<const Outcome> outcomes, std::size_t subintervals = 512) {
  return ibs_detail(curves, outcomes, subintervals).value;
}

}  // namespace survfuse
