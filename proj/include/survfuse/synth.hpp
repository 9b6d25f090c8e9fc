// Synthetic multimodal right-censored cohorts with known ground truth.
//
// Covariates are standard normal, gene expression is a noisy linear image of
// a low-dimensional latent, and token hidden states share one risk direction.
// Each modality contributes an independent log-hazard component; event times
// are exponential (or Weibull) given the summed risk. A simulated teacher
// answers at 1/3/5 years with a logit-space miscalibration shift.
#pragma once

#include <cmath>
#include <filesystem>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "cohort.hpp"
#include "core.hpp"
#include "distill.hpp"
#include "survival.hpp"

namespace survfuse {

enum class EventModel { kExponential, kWeibull };

struct GeneratorSpec {
  std::size_t n = 2000;
  std::size_t cov_dim = 8;
  std::size_t ge_dim = 64;
  std::size_t ge_latent_dim = 6;
  std::size_t tokens = 12;     // max tokens per report; each report has [tokens/2, tokens]
  std::size_t text_dim = 16;

  // Standard deviation of each modality's log-hazard contribution.
  double w_cov = 0.8;
  double w_ge = 0.8;
  double w_text = 0.8;

  double base_hazard = 0.15;    // per year
  double censoring_rate = 0.05; // per year, 0 disables random censoring
  double horizon = 5.0;
  EventModel event_model = EventModel::kExponential;
  double weibull_shape = 1.5;

  double ge_noise = 0.5;
  double ge_missing_rate = 0.0;
  double token_signal = 1.5;
  double token_noise = 1.0;

  double teacher_shift = 0.0;     // added to logit S(t); > 0 is over-optimistic
  double teacher_noise = 0.3;     // logit-space noise sd
  double teacher_missing = 0.1;   // per-response probability of no number

  std::uint64_t seed = 7;
};

inline GeneratorSpec parse_generator_spec(std::string_view text, const std::string& source = "spec") {
  GeneratorSpec s;
  using Setter = std::function<void(const std::string&)>;
  auto num = [&](double& field) -> Setter {
    return [&field, source](const std::string& v) {
      if (!parse_double(v, field)) throw ValidationError(source + ": expected a number, got \"" + v + "\"");
    };
  };
  auto count = [&](std::size_t& field) -> Setter {
    return [&field, source](const std::string& v) {
      double d = 0.0;
      if (!parse_double(v, d) || d < 0 || d != std::floor(d))
        throw ValidationError(source + ": expected a non-negative integer, got \"" + v + "\"");
      field = static_cast<std::size_t>(d);
    };
  };
  std::map<std::string, Setter> setters = {
      {"n", count(s.n)},
      {"cov_dim", count(s.cov_dim)},
      {"ge_dim", count(s.ge_dim)},
      {"ge_latent_dim", count(s.ge_latent_dim)},
      {"tokens", count(s.tokens)},
      {"text_dim", count(s.text_dim)},
      {"w_cov", num(s.w_cov)},
      {"w_ge", num(s.w_ge)},
      {"w_text", num(s.w_text)},
      {"base_hazard", num(s.base_hazard)},
      {"censoring_rate", num(s.censoring_rate)},
      {"horizon", num(s.horizon)},
      {"weibull_shape", num(s.weibull_shape)},
      {"ge_noise", num(s.ge_noise)},
      {"ge_missing_rate", num(s.ge_missing_rate)},
      {"token_signal", num(s.token_signal)},
      {"token_noise", num(s.token_noise)},
      {"teacher_shift", num(s.teacher_shift)},
      {"teacher_noise", num(s.teacher_noise)},
      {"teacher_missing", num(s.teacher_missing)},
      {"event_model",
       [&s](const std::string& v) {
         if (v == "exponential") s.event_model = EventModel::kExponential;
         else if (v == "weibull") s.event_model = EventModel::kWeibull;
         else throw ValidationError("event_model must be exponential or weibull");
       }},
      {"seed",
       [&s, source](const std::string& v) {
         try {
           s.seed = std::stoull(v);
         } catch (...) {
           throw ValidationError(source + ": bad seed \"" + v + "\"");
         }
       }},
  };
  for (const auto& [k, v] : parse_key_values(text, source)) {
    auto it = setters.find(k);
    if (it == setters.end()) throw ValidationError(source + ": unknown key " + k);
    it->second(v);
  }
  if (s.n < 3) throw ValidationError("generator: n must be >= 3");
  if (!(s.base_hazard > 0.0) || s.censoring_rate < 0.0 || !(s.horizon > 0.0))
    throw ValidationError("generator: rates must be positive");
  if (s.teacher_missing < 0.0 || s.teacher_missing > 1.0) throw ValidationError("generator: teacher_missing must lie in [0,1]");
  if (s.cov_dim == 0 || s.ge_dim == 0 || s.ge_latent_dim == 0 || s.tokens == 0 || s.text_dim == 0)
    throw ValidationError("generator: dimensions must be positive");
  return s;
}

/// Per-sample ground truth.
struct SampleTruth {
  double risk_cov = 0.0;
  double risk_ge = 0.0;
  double risk_text = 0.0;
};

struct SyntheticCohort {
  GeneratorSpec spec;
  Cohort cohort;
  std::vector<SampleTruth> truth;
};

namespace detail {

inline std::vector<double> random_unit(std::size_t d, Rng& rng) {
  std::vector<double> v(d);
  double norm = 0.0;
  for (auto& x : v) {
    x = rng.normal();
    norm += x * x;
  }
  norm = std::sqrt(norm);
  for (auto& x : v) x /= norm;
  return v;
}

inline std::string teacher_response(double p, std::size_t style) {
  const int pct = static_cast<int>(std::lround(p * 100.0));
  switch (style % 3) {
    case 0: return std::to_string(pct) + "%";
    case 1: return "The estimated survival probability is " + std::to_string(pct) + "%.";
    default: return "Survival probability: " + std::to_string(pct) + " %";
  }
}

}  // namespace detail

inline double truth_log_hazard(const GeneratorSpec& spec, const SampleTruth& t, bool cov = true, bool ge = true,
                               bool text = true) {
  return std::log(spec.base_hazard) + (cov ? t.risk_cov : 0.0) + (ge ? t.risk_ge : 0.0) + (text ? t.risk_text : 0.0);
}

inline double truth_survival(const GeneratorSpec& spec, double log_hazard, double t) {
  const double tt = spec.event_model == EventModel::kWeibull ? std::pow(t, spec.weibull_shape) : t;
  return std::exp(-std::exp(log_hazard) * tt);
}

/// Draws a cohort. Hidden states are rounded to float precision so the
/// in-memory cohort equals what the binary files hold.
inline SyntheticCohort generate(const GeneratorSpec& spec) {
  SyntheticCohort out;
  out.spec = spec;
  Rng structure(derive_seed(spec.seed, "synth.structure"));
  const auto beta_cov = detail::random_unit(spec.cov_dim, structure);
  const auto beta_latent = detail::random_unit(spec.ge_latent_dim, structure);
  const auto text_dir = detail::random_unit(spec.text_dim, structure);
  Matrix loading(spec.ge_dim, spec.ge_latent_dim);
  for (auto& x : loading.data) x = structure.normal() / std::sqrt(static_cast<double>(spec.ge_latent_dim));

  Rng rng(derive_seed(spec.seed, "synth.samples"));
  Rng teacher_rng(derive_seed(spec.seed, "synth.teacher"));
  auto& cohort = out.cohort;
  for (std::size_t c = 0; c < spec.cov_dim; ++c) cohort.cov_names.push_back("c" + std::to_string(c + 1));
  cohort.ge_dim = spec.ge_dim;
  cohort.text_dim = spec.text_dim;

  const std::size_t width = std::to_string(spec.n).size();
  for (std::size_t i = 0; i < spec.n; ++i) {
    Sample s;
    std::string num = std::to_string(i + 1);
    s.id = "S" + std::string(width - num.size(), '0') + num;
    SampleTruth truth;

    s.cov.resize(spec.cov_dim);
    double lin = 0.0;
    for (std::size_t c = 0; c < spec.cov_dim; ++c) {
      s.cov[c] = rng.normal();
      lin += beta_cov[c] * s.cov[c];
    }
    truth.risk_cov = spec.w_cov * lin;

    std::vector<double> u(spec.ge_latent_dim);
    lin = 0.0;
    for (std::size_t k = 0; k < u.size(); ++k) {
      u[k] = rng.normal();
      lin += beta_latent[k] * u[k];
    }
    truth.risk_ge = spec.w_ge * lin;
    s.ge.resize(spec.ge_dim);
    for (std::size_t g = 0; g < spec.ge_dim; ++g) {
      double v = spec.ge_noise * rng.normal();
      for (std::size_t k = 0; k < u.size(); ++k) v += loading(g, k) * u[k];
      s.ge[g] = v;
    }
    for (auto& v : s.ge)
      if (spec.ge_missing_rate > 0.0 && rng.bernoulli(spec.ge_missing_rate)) v = 0.0;

    const double text_latent = rng.normal();
    truth.risk_text = spec.w_text * text_latent;
    const std::size_t L = spec.tokens / 2 + rng.index(spec.tokens - spec.tokens / 2 + 1);
    Matrix h(std::max<std::size_t>(L, 1), spec.text_dim);
    for (std::size_t r = 0; r < h.rows; ++r)
      for (std::size_t k = 0; k < spec.text_dim; ++k)
        h(r, k) = static_cast<float>(spec.token_signal * text_latent * text_dir[k] + spec.token_noise * rng.normal());
    s.text_hidden = std::move(h);

    const double log_h = truth_log_hazard(spec, truth);
    double event_time = rng.exponential(std::exp(log_h));
    if (spec.event_model == EventModel::kWeibull) event_time = std::pow(event_time, 1.0 / spec.weibull_shape);
    const double censor_time =
        spec.censoring_rate > 0.0 ? rng.exponential(spec.censoring_rate) : std::numeric_limits<double>::infinity();
    Outcome o = event_time <= censor_time ? Outcome{event_time, true} : Outcome{censor_time, false};
    s.outcome = administrative_censor(o, spec.horizon);

    TeacherRecord tr;
    tr.id = s.id;
    double p3 = 0.5;
    for (std::size_t k = 0; k < 3; ++k) {
      const double S = std::clamp(truth_survival(spec, log_h, kTeacherHorizons[k]), 1e-6, 1.0 - 1e-6);
      const double logit = std::log(S / (1.0 - S)) + spec.teacher_shift + spec.teacher_noise * teacher_rng.normal();
      const double p = sigmoid(logit);
      if (k == 1) p3 = p;
      if (teacher_rng.bernoulli(spec.teacher_missing)) tr.responses[k] = "I cannot provide an estimate.";
      else tr.responses[k] = detail::teacher_response(p, i + k);
    }
    const char* outlook = p3 > 0.7 ? "favorable" : (p3 > 0.4 ? "intermediate" : "adverse");
    tr.explanation = "The report describes " + std::string(outlook) + " features for this patient.";
    s.teacher = std::move(tr);

    cohort.samples.push_back(std::move(s));
    out.truth.push_back(truth);
  }
  return out;
}

/// Exact S(t|x) at `times` (starting at 0), optionally using only the risk
/// of a subset of modalities.
inline std::vector<SurvivalCurve> oracle_curves(const SyntheticCohort& synth, std::span<const std::size_t> samples,
                                                std::span<const double> times, bool cov = true, bool ge = true,
                                                bool text = true) {
  std::vector<SurvivalCurve> out;
  out.reserve(samples.size());
  for (std::size_t i : samples) {
    const double lh = truth_log_hazard(synth.spec, synth.truth[i], cov, ge, text);
    std::vector<double> v(times.size());
    for (std::size_t k = 0; k < times.size(); ++k) v[k] = truth_survival(synth.spec, lh, times[k]);
    v.front() = 1.0;
    out.emplace_back(std::vector<double>(times.begin(), times.end()), std::move(v));
  }
  return out;
}

/// Writes covariates.csv, ge.csv, hidden.svhs, teacher.jsonl, outcomes.csv
/// and truth.csv into `dir`.
inline void write_synthetic(const SyntheticCohort& synth, const std::string& dir) {
  std::filesystem::create_directories(dir);
  const auto& c = synth.cohort;
  std::string cov = "id", ge = "id", teacher, truth = "id,log_hazard,risk_cov,risk_ge,risk_text\n";
  for (const auto& n : c.cov_names) cov += "," + n;
  for (std::size_t g = 0; g < c.ge_dim; ++g) ge += ",g" + std::to_string(g + 1);
  cov += "\n";
  ge += "\n";
  std::vector<IdMatrix> hidden;
  std::vector<std::string> ids;
  std::vector<Outcome> outs;
  for (std::size_t i = 0; i < c.size(); ++i) {
    const auto& s = c.samples[i];
    cov += s.id;
    for (double x : s.cov) cov += "," + format_double(x);
    cov += "\n";
    ge += s.id;
    for (double x : s.ge) ge += "," + (x == 0.0 && synth.spec.ge_missing_rate > 0.0 ? std::string() : format_double(x));
    ge += "\n";
    hidden.push_back({s.id, *s.text_hidden});
    teacher += teacher_record_to_json(*s.teacher).dump() + "\n";
    ids.push_back(s.id);
    outs.push_back(s.outcome);
    const auto& t = synth.truth[i];
    truth += s.id + "," + format_double(truth_log_hazard(synth.spec, t)) + "," + format_double(t.risk_cov) + "," +
             format_double(t.risk_ge) + "," + format_double(t.risk_text) + "\n";
  }
  write_file(dir + "/covariates.csv", cov);
  write_file(dir + "/ge.csv", ge);
  write_hidden_states(dir + "/hidden.svhs", hidden);
  write_file(dir + "/teacher.jsonl", teacher);
  write_outcomes_csv(dir + "/outcomes.csv", ids, outs);
  write_file(dir + "/truth.csv", truth);
}

}  // namespace survfuse
