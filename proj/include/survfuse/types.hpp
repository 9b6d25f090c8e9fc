#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

namespace survfuse {

/// Right-censored outcome. `time` is follow-up in years.
struct Outcome {
  double time = 0.0;
  bool event = false;

  friend bool operator==(const Outcome&, const Outcome&) = default;
};

/// Horizons (years) at which the teacher is asked for survival probabilities.
inline constexpr std::array<double, 3> kTeacherHorizons = {1.0, 3.0, 5.0};

/// Teacher output for one sample, as ingested and after parsing.
struct TeacherRecord {
  std::string id;
  std::array<std::optional<std::string>, 3> responses;  // y1, y3, y5
  std::string explanation;

  // Filled by the distillation parser.
  std::array<std::optional<double>, 3> extracted;  // straight from the text
  std::array<double, 3> completed{};               // after interpolation / imputation
  std::optional<double> rate;                      // exponential fit
  std::optional<int> percent;                      // rounded 3-year %, multiple of 5

  bool any_extracted() const {
    for (const auto& p : extracted)
      if (p) return true;
    return false;
  }
};

}  // namespace survfuse
