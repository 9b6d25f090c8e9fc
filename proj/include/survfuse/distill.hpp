// Teacher-to-student distillation: parsing verbalized probabilities out of
// teacher text, parametric survival fits over the 1/3/5-year answers, target
// sequence construction, span-weighted text loss and calibration masking.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <regex>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "core.hpp"
#include "types.hpp"

namespace survfuse {

// ---------------------------------------------------------------------------
// Probability extraction

namespace detail {

struct NumberMatch {
  double value;
  bool percent;  // directly followed by optional whitespace and '%'
};

inline std::vector<NumberMatch> scan_numbers(std::string_view text) {
  // Numbers, optionally followed by a '%' sign or a time unit. Numbers naming a
  // duration ("3-year", "5 years", "12 months") are never probabilities.
  static const std::regex kNumber(
      R"((\d+(?:\.\d+)?|\.\d+)(\s*%|[\s-]*(?:years?|yrs?|months?|days?)\b)?)",
      std::regex::icase);
  std::vector<NumberMatch> out;
  const std::string s(text);
  for (auto it = std::sregex_iterator(s.begin(), s.end(), kNumber); it != std::sregex_iterator(); ++it) {
    const auto& m = *it;
    const std::string suffix = m[2].matched ? m[2].str() : std::string();
    const bool pct = !suffix.empty() && suffix.back() == '%';
    if (!suffix.empty() && !pct) continue;
    // Skip digits glued to a preceding letter or digit group ("T2", "pT3a").
    const auto pos = static_cast<std::size_t>(m.position(0));
    if (pos > 0 && std::isalpha(static_cast<unsigned char>(s[pos - 1]))) continue;
    out.push_back({std::stod(m[1].str()), pct});
  }
  return out;
}

}  // namespace detail

/// Pulls a survival probability out of free text, scaled to [0, 1].
///
/// Preference order, last match winning inside each class: a number in
/// [0, 100] directly followed by '%', then a bare decimal in [0, 1], then a
/// bare number in (1, 100] read as a percentage.
inline std::optional<double> extract_probability(std::string_view text) {
  const auto numbers = detail::scan_numbers(text);
  std::optional<double> pct, unit, bare_pct;
  for (const auto& n : numbers) {
    if (n.percent) {
      if (n.value >= 0.0 && n.value <= 100.0) pct = n.value / 100.0;
    } else if (n.value >= 0.0 && n.value <= 1.0) {
      unit = n.value;
    } else if (n.value > 1.0 && n.value <= 100.0) {
      bare_pct = n.value / 100.0;
    }
  }
  if (pct) return pct;
  if (unit) return unit;
  return bare_pct;
}

// ---------------------------------------------------------------------------
// Parametric fits

enum class CurveFamily { kExponential, kWeibull, kLogLogistic };

inline std::string to_string(CurveFamily f) {
  switch (f) {
    case CurveFamily::kExponential: return "exponential";
    case CurveFamily::kWeibull: return "weibull";
    case CurveFamily::kLogLogistic: return "loglogistic";
  }
  return "?";
}

inline CurveFamily parse_family(std::string_view s) {
  if (s == "exponential") return CurveFamily::kExponential;
  if (s == "weibull") return CurveFamily::kWeibull;
  if (s == "loglogistic" || s == "log-logistic") return CurveFamily::kLogLogistic;
  throw ValidationError("unknown curve family: " + std::string(s));
}

struct SurvivalPoint {
  double t;
  double s;
};

/// Fitted parametric survival curve.
///   exponential   S(t) = exp(-rate t)
///   weibull       S(t) = exp(-(t/scale)^shape)
///   log-logistic  S(t) = 1 / (1 + (t/scale)^shape)
struct ParametricFit {
  CurveFamily family = CurveFamily::kExponential;
  double rate = 0.0;
  double shape = 1.0;
  double scale = 1.0;
  int clamped_points = 0;

  double survival(double t) const {
    if (t <= 0.0) return 1.0;
    switch (family) {
      case CurveFamily::kExponential: return std::exp(-rate * t);
      case CurveFamily::kWeibull: return std::exp(-std::pow(t / scale, shape));
      case CurveFamily::kLogLogistic: return 1.0 / (1.0 + std::pow(t / scale, shape));
    }
    return 1.0;
  }
};

inline constexpr double kFitEpsilon = 1e-6;

/// Least-squares fit of a survival family to (t, S) points via its
/// linearising transform. Exponential goes through the origin.
inline ParametricFit fit_parametric(std::span<const SurvivalPoint> points, CurveFamily family) {
  ParametricFit fit;
  fit.family = family;
  if (points.empty()) throw ValidationError("fit_parametric: no points");
  for (const auto& p : points) {
    if (!(p.t > 0.0) || !std::isfinite(p.t)) throw ValidationError("fit_parametric: times must be positive");
    if (!(p.s >= 0.0 && p.s <= 1.0)) throw ValidationError("fit_parametric: survival values must lie in [0,1]");
  }
  auto clamp_s = [&](double s, bool two_sided) {
    const double lo = kFitEpsilon, hi = two_sided ? 1.0 - kFitEpsilon : 1.0;
    if (s < lo || s > hi) {
      ++fit.clamped_points;
      return std::clamp(s, lo, hi);
    }
    return s;
  };

  if (family == CurveFamily::kExponential) {
    double num = 0.0, den = 0.0;
    for (const auto& p : points) {
      const double s = clamp_s(p.s, false);
      num += p.t * (-std::log(s));
      den += p.t * p.t;
    }
    fit.rate = num / den;
    if (fit.clamped_points > 0) info("fit_parametric: survival value 0 clamped to 1e-6");
    return fit;
  }

  // y = slope * ln t + intercept
  std::vector<double> xs, ys;
  for (const auto& p : points) {
    const double s = clamp_s(p.s, true);
    xs.push_back(std::log(p.t));
    ys.push_back(family == CurveFamily::kWeibull ? std::log(-std::log(s)) : std::log((1.0 - s) / s));
  }
  if (fit.clamped_points > 0) info("fit_parametric: survival values clamped into [1e-6, 1-1e-6]");
  const auto n = static_cast<double>(xs.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    sxy += (xs[i] - mx) * (ys[i] - my);
  }
  if (xs.size() < 2 || sxx <= 0.0)
    throw ValidationError("fit_parametric: " + to_string(family) + " needs at least two distinct times");
  const double slope = sxy / sxx;
  const double intercept = my - slope * mx;
  if (!(slope > 0.0)) throw ValidationError("fit_parametric: non-positive fitted shape (survival not decreasing)");
  fit.shape = slope;
  fit.scale = std::exp(-intercept / slope);
  return fit;
}

/// S(3) under the fit as a percentage rounded to the nearest multiple of 5,
/// ties away from zero.
inline int three_year_percent(const ParametricFit& fit) {
  const double pct = std::clamp(fit.survival(3.0) * 100.0, 0.0, 100.0);
  // The 1e-9 slack makes values like 0.975*100 land on their decimal tie.
  const double q = std::floor(pct / 5.0 + 0.5 + 1e-9);
  return static_cast<int>(std::clamp(q * 5.0, 0.0, 100.0));
}

/// Fills in missing horizon probabilities. With at least one extracted value
/// an exponential curve is fitted to the present points and evaluated at the
/// missing horizons; with none, the per-horizon means are used. The result is
/// clipped to [0,1] and made non-increasing in time.
inline std::array<double, 3> complete_horizons(const std::array<std::optional<double>, 3>& p,
                                               const std::array<double, 3>& means) {
  std::array<double, 3> out{};
  std::vector<SurvivalPoint> present;
  for (std::size_t k = 0; k < 3; ++k)
    if (p[k]) present.push_back({kTeacherHorizons[k], *p[k]});

  if (present.empty()) {
    out = means;
  } else {
    const auto fit = fit_parametric(present, CurveFamily::kExponential);
    for (std::size_t k = 0; k < 3; ++k) out[k] = p[k] ? *p[k] : fit.survival(kTeacherHorizons[k]);
  }
  for (std::size_t k = 0; k < 3; ++k) {
    out[k] = std::clamp(out[k], 0.0, 1.0);
    if (k > 0) out[k] = std::min(out[k], out[k - 1]);
  }
  return out;
}

/// Per-horizon mean of the extracted probabilities across `records`
/// (typically the training split). Horizons nobody answered fall back to 0.5.
inline std::array<double, 3> horizon_means(std::span<const TeacherRecord* const> records) {
  std::array<double, 3> sum{}, count{};
  for (const auto* r : records)
    for (std::size_t k = 0; k < 3; ++k)
      if (r->extracted[k]) {
        sum[k] += *r->extracted[k];
        count[k] += 1.0;
      }
  std::array<double, 3> out{};
  for (std::size_t k = 0; k < 3; ++k) out[k] = count[k] > 0 ? sum[k] / count[k] : 0.5;
  return out;
}

inline void extract_record(TeacherRecord& r) {
  for (std::size_t k = 0; k < 3; ++k)
    r.extracted[k] = r.responses[k] ? extract_probability(*r.responses[k]) : std::nullopt;
}

/// Runs completion, the parametric fit and 5% rounding on an extracted
/// record. `rate` is only set for the exponential family.
inline void finalize_record(TeacherRecord& r, const std::array<double, 3>& means,
                            CurveFamily family = CurveFamily::kExponential) {
  r.completed = complete_horizons(r.extracted, means);
  std::vector<SurvivalPoint> pts;
  for (std::size_t k = 0; k < 3; ++k) pts.push_back({kTeacherHorizons[k], r.completed[k]});
  const auto fit = fit_parametric(pts, family);
  if (family == CurveFamily::kExponential) r.rate = fit.rate;
  else r.rate.reset();
  r.percent = three_year_percent(fit);
}

// ---------------------------------------------------------------------------
// Teacher JSONL

inline TeacherRecord teacher_record_from_json(const nlohmann::json& j) {
  TeacherRecord r;
  if (!j.is_object() || !j.contains("id") || !j["id"].is_string())
    throw ValidationError("teacher record without string \"id\"");
  r.id = j["id"].get<std::string>();
  static constexpr const char* kKeys[] = {"y1", "y3", "y5"};
  if (j.contains("responses")) {
    const auto& resp = j["responses"];
    if (!resp.is_object()) throw ValidationError("teacher record " + r.id + ": \"responses\" must be an object");
    for (std::size_t k = 0; k < 3; ++k) {
      if (!resp.contains(kKeys[k]) || resp[kKeys[k]].is_null()) continue;
      if (!resp[kKeys[k]].is_string())
        throw ValidationError("teacher record " + r.id + ": response " + kKeys[k] + " must be string or null");
      r.responses[k] = resp[kKeys[k]].get<std::string>();
    }
  }
  if (j.contains("explanation") && j["explanation"].is_string()) r.explanation = j["explanation"].get<std::string>();
  return r;
}

inline nlohmann::json teacher_record_to_json(const TeacherRecord& r) {
  nlohmann::json resp = nlohmann::json::object();
  static constexpr const char* kKeys[] = {"y1", "y3", "y5"};
  for (std::size_t k = 0; k < 3; ++k) resp[kKeys[k]] = r.responses[k] ? nlohmann::json(*r.responses[k]) : nlohmann::json();
  return {{"id", r.id}, {"responses", resp}, {"explanation", r.explanation}};
}

inline std::vector<TeacherRecord> read_teacher_jsonl(const std::string& path) {
  std::istringstream in(read_file(path));
  std::vector<TeacherRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    try {
      out.push_back(teacher_record_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError(path + ":" + std::to_string(lineno) + ": " + e.what());
    } catch (const ValidationError& e) {
      throw ValidationError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Target sequence

inline constexpr std::string_view kVprobOpen = "«VPROB»";
inline constexpr std::string_view kVprobClose = "«END_VPROB»";

/// Half-open byte range [begin, end).
struct Span {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t size() const { return end - begin; }
  bool overlaps(std::size_t b, std::size_t e) const { return b < end && begin < e; }
  friend bool operator==(const Span&, const Span&) = default;
};

struct TargetSequence {
  std::string text;
  Span vprob;    // from the opening delimiter through the closing one
  Span number;   // the digits of the percentage
};

inline TargetSequence build_target_sequence(std::string_view explanation, int percent) {
  if (percent < 0 || percent > 100) throw ValidationError("build_target_sequence: percent outside [0,100]");
  if (explanation.find(kVprobOpen) != std::string_view::npos ||
      explanation.find(kVprobClose) != std::string_view::npos)
    throw ValidationError("build_target_sequence: explanation contains a VPROB delimiter");
  TargetSequence t;
  t.text.append(explanation);
  t.text.push_back(' ');
  t.vprob.begin = t.text.size();
  t.text.append(kVprobOpen);
  t.text.append("\n\n The estimated 3-year survival probability is: ");
  t.number.begin = t.text.size();
  t.text.append(std::to_string(percent));
  t.number.end = t.text.size();
  t.text.append("%. ");
  t.text.append(kVprobClose);
  t.vprob.end = t.text.size();
  return t;
}

/// Byte offsets of whitespace-separated tokens.
inline std::vector<Span> whitespace_tokens(std::string_view s) {
  std::vector<Span> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    if (i >= s.size()) break;
    const std::size_t b = i;
    while (i < s.size() && !std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    out.push_back({b, i});
  }
  return out;
}

struct TokenMasks {
  std::vector<bool> vprob;
  std::vector<bool> number;
};

/// Flags tokens whose byte range overlaps the VPROB sentence / the number.
inline TokenMasks token_masks(const TargetSequence& target, std::span<const Span> offsets) {
  TokenMasks m;
  std::size_t prev_end = 0;
  for (const auto& tok : offsets) {
    if (tok.begin > tok.end || tok.begin < prev_end || tok.end > target.text.size())
      throw ValidationError("token_masks: token offsets are not monotone");
    prev_end = tok.end;
    m.vprob.push_back(target.vprob.overlaps(tok.begin, tok.end));
    m.number.push_back(target.number.overlaps(tok.begin, tok.end));
  }
  return m;
}

struct TextLoss {
  double value = 0.0;
  std::vector<double> grad;  // dL / d nll_k
};

/// Span-weighted sequence loss
///   L = L_full + (w - 1) L_vprob + (w_num - 1) L_num
/// where every part sums token NLLs over its span and divides by the total
/// token count, i.e. per-token weights 1, w and w + w_num - 1.
inline TextLoss weighted_text_loss(std::span<const double> nll, const std::vector<bool>& vprob_mask,
                                   const std::vector<bool>& num_mask, double w = 2.0, double w_num = 5.0) {
  if (nll.empty()) throw ValidationError("weighted_text_loss: empty sequence");
  if (vprob_mask.size() != nll.size() || num_mask.size() != nll.size())
    throw ValidationError("weighted_text_loss: mask length mismatch");
  const auto n = static_cast<double>(nll.size());
  double full = 0.0, vprob = 0.0, num = 0.0;
  TextLoss out;
  out.grad.resize(nll.size());
  for (std::size_t k = 0; k < nll.size(); ++k) {
    full += nll[k];
    if (vprob_mask[k]) vprob += nll[k];
    if (num_mask[k]) num += nll[k];
    out.grad[k] = (1.0 + (vprob_mask[k] ? w - 1.0 : 0.0) + (num_mask[k] ? w_num - 1.0 : 0.0)) / n;
  }
  out.value = full / n + (w - 1.0) * (vprob / n) + (w_num - 1.0) * (num / n);
  return out;
}

// ---------------------------------------------------------------------------
// Calibration correction

/// False when the teacher's 3-year percentage contradicts what the outcome
/// says about the horizon: a death before it with percent > threshold, or
/// follow-up reaching it with percent < threshold. Censoring before the
/// horizon leaves the status unknown and the sample included.
inline bool calibration_mask(double percent, const Outcome& outcome, double horizon = 3.0, double threshold = 50.0) {
  const bool died_before = outcome.event && outcome.time < horizon;
  const bool reached = outcome.time >= horizon;
  if (died_before && percent > threshold) return false;
  if (reached && percent < threshold) return false;
  return true;
}

inline nlohmann::json target_to_json(const std::string& id, const TargetSequence& t, bool included) {
  return {{"id", id},
          {"target", t.text},
          {"vprob_span", {t.vprob.begin, t.vprob.end}},
          {"num_span", {t.number.begin, t.number.end}},
          {"text_loss_included", included}};
}

}  // namespace survfuse
