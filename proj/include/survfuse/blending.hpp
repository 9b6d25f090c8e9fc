// Verbalized survival curves and their convex blend with the hidden-state
// curve, including the validation search for the blend weight.
#pragma once

#include <cmath>
#include <optional>
#include <span>
#include <vector>

#include "core.hpp"
#include "metrics.hpp"
#include "survival.hpp"

namespace survfuse {

/// Percent used in place of 0 before taking logs.
inline constexpr double kPercentFloor = 0.5;

/// Exponential curve through S(3) = percent / 100, evaluated at `times`
/// (which must start at 0).
inline SurvivalCurve verbalized_curve(double percent, std::span<const double> times) {
  if (!(percent >= 0.0 && percent <= 100.0)) throw ValidationError("verbalized_curve: percent outside [0,100]");
  if (percent < kPercentFloor) {
    warn("verbalized_curve: percent " + format_double(percent) + " floored to 0.5 before log");
    percent = kPercentFloor;
  }
  const double rate = -std::log(percent / 100.0) / 3.0;
  std::vector<double> v(times.size());
  for (std::size_t k = 0; k < times.size(); ++k) v[k] = std::exp(-rate * times[k]);
  return SurvivalCurve(std::vector<double>(times.begin(), times.end()), std::move(v));
}

/// (1 - lambda) S + lambda S_v on a shared time axis.
inline SurvivalCurve combine(const SurvivalCurve& hidden, const SurvivalCurve& verbal, double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw ValidationError("combine: lambda outside [0,1]");
  if (hidden.times() != verbal.times()) throw ValidationError("combine: curves are on different time grids");
  if (lambda == 0.0) return hidden;
  if (lambda == 1.0) return verbal;
  std::vector<double> v(hidden.values().size());
  for (std::size_t k = 0; k < v.size(); ++k) v[k] = (1.0 - lambda) * hidden.values()[k] + lambda * verbal.values()[k];
  v.front() = 1.0;
  return SurvivalCurve(hidden.times(), std::move(v));
}

/// Pointwise mean of curves sharing one time axis.
inline SurvivalCurve mean_curve(std::span<const SurvivalCurve> curves) {
  if (curves.empty()) throw ValidationError("mean_curve: no curves");
  std::vector<double> v(curves.front().values().size(), 0.0);
  for (const auto& c : curves) {
    if (c.times() != curves.front().times()) throw ValidationError("mean_curve: curves are on different time grids");
    for (std::size_t k = 0; k < v.size(); ++k) v[k] += c.values()[k];
  }
  for (auto& x : v) x /= static_cast<double>(curves.size());
  v.front() = 1.0;
  for (std::size_t k = 1; k < v.size(); ++k) v[k] = std::min(v[k], v[k - 1]);
  return SurvivalCurve(curves.front().times(), std::move(v));
}

/// Inputs for the combined and verbalized-only channels when some samples
/// have no verbalized probability: the combined channel falls back to the
/// hidden-state curve, the verbalized channel to the mean verbalized curve.
struct BlendInputs {
  std::vector<SurvivalCurve> combined_verbal;  // curve to blend with (hidden itself when missing)
  std::vector<SurvivalCurve> verbal_eval;      // curve for verbalized-only evaluation
  std::size_t missing = 0;
  bool verbal_available = true;                // false when no sample had a probability
};

inline BlendInputs handle_missing(std::span<const SurvivalCurve> hidden,
                                  std::span<const std::optional<SurvivalCurve>> verbal) {
  if (hidden.size() != verbal.size()) throw ValidationError("handle_missing: length mismatch");
  BlendInputs out;
  std::vector<SurvivalCurve> present;
  for (const auto& v : verbal)
    if (v) present.push_back(*v);
  std::optional<SurvivalCurve> mean;
  if (!present.empty()) mean = mean_curve(present);
  else {
    out.verbal_available = false;
    warn("handle_missing: no extractable verbalized probability, verbalized evaluation skipped");
  }
  for (std::size_t i = 0; i < hidden.size(); ++i) {
    if (verbal[i]) {
      out.combined_verbal.push_back(*verbal[i]);
      out.verbal_eval.push_back(*verbal[i]);
    } else {
      ++out.missing;
      out.combined_verbal.push_back(hidden[i]);
      if (mean) out.verbal_eval.push_back(*mean);
    }
  }
  return out;
}

/// {0, 0.05, ..., 1}.
inline std::vector<double> default_lambda_grid() {
  std::vector<double> g;
  for (int k = 0; k <= 20; ++k) g.push_back(k / 20.0);
  return g;
}

struct LambdaSelection {
  double lambda = 0.0;
  double c_td = 0.0;
  std::vector<double> scores;  // C^td at every grid point
};

/// argmax over the grid of validation C^td of the blended curves; ties go
/// to the smallest lambda.
inline LambdaSelection select_lambda(std::span<const SurvivalCurve> hidden, std::span<const SurvivalCurve> verbal,
                                     std::span<const Outcome> outcomes, std::vector<double> grid = default_lambda_grid()) {
  if (grid.empty()) throw ValidationError("select_lambda: empty grid");
  std::sort(grid.begin(), grid.end());
  for (double l : grid)
    if (!(l >= 0.0 && l <= 1.0)) throw ValidationError("select_lambda: grid values must lie in [0,1]");
  if (hidden.size() != verbal.size()) throw ValidationError("select_lambda: length mismatch");
  LambdaSelection best;
  bool first = true;
  for (double l : grid) {
    std::vector<SurvivalCurve> comb;
    comb.reserve(hidden.size());
    for (std::size_t i = 0; i < hidden.size(); ++i) comb.push_back(combine(hidden[i], verbal[i], l));
    const double c = c_td(comb, outcomes);
    best.scores.push_back(c);
    if (first || c > best.c_td) {
      best.lambda = l;
      best.c_td = c;
      first = false;
    }
  }
  return best;
}

}  // namespace survfuse
