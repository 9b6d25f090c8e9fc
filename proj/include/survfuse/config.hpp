// Run configuration: a flat key = value file whose keys are the field names
// below. Relative data paths resolve against the config file's directory.
#pragma once

#include <algorithm>
#include <array>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <type_traits>
#include <vector>

#include <json.hpp>

#include "cohort.hpp"
#include "core.hpp"

namespace survfuse {

enum class HeadKind { kDiscrete, kCox };
enum class FusionKind { kEarly, kLate, kNone };
enum class GridKind { kEqualWidth, kQuantile };

inline std::string to_string(HeadKind h) { return h == HeadKind::kDiscrete ? "discrete" : "coxph"; }
inline std::string to_string(FusionKind f) {
  switch (f) {
    case FusionKind::kEarly: return "early";
    case FusionKind::kLate: return "late";
    default: return "none";
  }
}
inline std::string to_string(GridKind g) { return g == GridKind::kEqualWidth ? "equal" : "quantile"; }

struct RunConfig {
  std::string name = "run";
  HeadKind head = HeadKind::kDiscrete;
  FusionKind fusion = FusionKind::kLate;
  std::set<Modality> modalities = {Modality::kText, Modality::kCov, Modality::kGe};
  bool pretrain = false;
  bool calibration_correction = false;
  std::optional<double> alpha;  // defaults by head: 1e-8 coxph, 1e-9 discrete
  std::optional<double> beta;   // 5.0 coxph, 1.0 discrete
  std::size_t bins = 30;
  GridKind grid = GridKind::kEqualWidth;
  std::size_t batch_size = 16;
  std::size_t epochs = 30;
  std::size_t patience = 5;
  std::uint64_t seed = 0;
  std::vector<double> lambda_grid = default_lambda_grid_values();

  // data: either a bundle directory or raw file paths
  std::string bundle;
  std::string covariates, ge, hidden_states, teacher, outcomes;
  std::array<double, 3> split_ratios = {0.70, 0.10, 0.20};
  std::uint64_t split_seed = 0;
  double horizon_years = 5.0;

  // optimisation
  double lr_head = 1e-3;
  double lr_gates = 1e-4;
  double lr_ae = 1e-3;
  double lr_text = 1e-3;
  double weight_decay = 0.01;
  std::vector<std::size_t> hidden_layers = {100, 100, 100};
  double dropout = 0.3;
  std::vector<std::size_t> ae_layers = {64, 32};  // production preset: 4096,2048,1024,512,256
  std::size_t latent_dim = 16;                    // production preset: 128
  double ae_dropout = 0.3;
  std::size_t text_proj_dim = 32;

  // pre-training of the cov / ge heads (late fusion only)
  std::size_t pretrain_batch_size = 512;
  std::size_t pretrain_epochs = 1000;
  bool freeze_pretrained = false;
  bool ae_warm_start = true;

  // text loss
  double text_weight = 2.0;
  double number_weight = 5.0;

  std::size_t ibs_subintervals = 512;

  double alpha_value() const { return alpha.value_or(head == HeadKind::kCox ? 1e-8 : 1e-9); }
  double beta_value() const { return beta.value_or(head == HeadKind::kCox ? 5.0 : 1.0); }
  bool has(Modality m) const { return modalities.count(m) > 0; }
  std::size_t head_width() const { return head == HeadKind::kDiscrete ? bins : 1; }

  static std::vector<double> default_lambda_grid_values() {
    std::vector<double> g;
    for (int k = 0; k <= 20; ++k) g.push_back(k / 20.0);
    return g;
  }
};

namespace detail {

inline bool parse_bool(const std::string& v, const std::string& key) {
  if (v == "true" || v == "1" || v == "on" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "off" || v == "no") return false;
  throw ValidationError(key + ": expected true or false, got \"" + v + "\"");
}

inline std::size_t parse_count(const std::string& v, const std::string& key) {
  double d = 0.0;
  if (!parse_double(v, d) || d < 0 || d != std::floor(d) || d > 1e15)
    throw ValidationError(key + ": expected a non-negative integer, got \"" + v + "\"");
  return static_cast<std::size_t>(d);
}

inline double parse_number(const std::string& v, const std::string& key) {
  double d = 0.0;
  if (!parse_double(v, d)) throw ValidationError(key + ": expected a number, got \"" + v + "\"");
  return d;
}

inline std::vector<double> parse_number_list(const std::string& v, const std::string& key) {
  std::vector<double> out;
  for (const auto& part : split(v, ',')) out.push_back(parse_number(trim(part), key));
  return out;
}

inline std::vector<std::size_t> parse_count_list(const std::string& v, const std::string& key) {
  std::vector<std::size_t> out;
  if (trim(v).empty() || trim(v) == "none") return out;
  for (const auto& part : split(v, ',')) out.push_back(parse_count(trim(part), key));
  return out;
}

template <typename T>
std::string join(const std::vector<T>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ",";
    if constexpr (std::is_floating_point_v<T>) s += format_double(v[i]);
    else s += std::to_string(v[i]);
  }
  return s;
}

}  // namespace detail

/// Throws ValidationError on any violated invariant.
inline void validate(const RunConfig& c) {
  if (c.modalities.empty()) throw ValidationError("config: at least one modality is required");
  if (c.fusion == FusionKind::kNone && c.modalities.size() != 1)
    throw ValidationError("config: fusion = none requires exactly one modality");
  if (c.alpha_value() < 0.0 || c.beta_value() < 0.0) throw ValidationError("config: alpha and beta must be >= 0");
  if (c.batch_size == 0 || c.pretrain_batch_size == 0) throw ValidationError("config: batch_size must be >= 1");
  if (c.patience > c.epochs) throw ValidationError("config: patience must not exceed epochs");
  if (c.head == HeadKind::kDiscrete && c.bins == 0) throw ValidationError("config: bins must be >= 1");
  if (c.pretrain && c.fusion != FusionKind::kLate) throw ValidationError("config: pretrain requires late fusion");
  if (c.lambda_grid.empty()) throw ValidationError("config: empty lambda_grid");
  for (double l : c.lambda_grid)
    if (!(l >= 0.0 && l <= 1.0)) throw ValidationError("config: lambda_grid values must lie in [0,1]");
  if (std::find(c.lambda_grid.begin(), c.lambda_grid.end(), 0.0) == c.lambda_grid.end() ||
      std::find(c.lambda_grid.begin(), c.lambda_grid.end(), 1.0) == c.lambda_grid.end())
    throw ValidationError("config: lambda_grid must contain 0 and 1");
  for (double r : {c.lr_head, c.lr_gates, c.lr_ae, c.lr_text, c.weight_decay})
    if (!(r >= 0.0)) throw ValidationError("config: learning rates and weight_decay must be >= 0");
  if (!(c.dropout >= 0.0 && c.dropout < 1.0) || !(c.ae_dropout >= 0.0 && c.ae_dropout < 1.0))
    throw ValidationError("config: dropout must lie in [0,1)");
  if (c.latent_dim == 0 || c.text_proj_dim == 0) throw ValidationError("config: latent_dim and text_proj_dim must be >= 1");
  if (c.ibs_subintervals == 0) throw ValidationError("config: ibs_subintervals must be >= 1");
  if (c.bundle.empty() && c.outcomes.empty() && !(c.covariates.empty() && c.ge.empty() && c.hidden_states.empty()))
    throw ValidationError("config: raw data paths need an outcomes file");
}

/// `base_dir` anchors relative paths; pass "" to leave them untouched.
inline RunConfig parse_run_config(std::string_view text, const std::string& source = "config",
                                  const std::string& base_dir = "") {
  RunConfig c;
  auto path = [&](std::string& field) {
    return [&field, &base_dir](const std::string& v) {
      std::filesystem::path p(v);
      field = (base_dir.empty() || p.is_absolute() || v.empty()) ? v : (std::filesystem::path(base_dir) / p).string();
    };
  };
  using detail::parse_bool, detail::parse_count, detail::parse_number;
  std::map<std::string, std::function<void(const std::string&)>> setters = {
      {"name", [&](const std::string& v) { c.name = v; }},
      {"head",
       [&](const std::string& v) {
         if (v == "discrete") c.head = HeadKind::kDiscrete;
         else if (v == "coxph" || v == "cox") c.head = HeadKind::kCox;
         else throw ValidationError("head: expected discrete or coxph, got \"" + v + "\"");
       }},
      {"fusion",
       [&](const std::string& v) {
         if (v == "early") c.fusion = FusionKind::kEarly;
         else if (v == "late") c.fusion = FusionKind::kLate;
         else if (v == "none") c.fusion = FusionKind::kNone;
         else throw ValidationError("fusion: expected early, late or none, got \"" + v + "\"");
       }},
      {"modalities",
       [&](const std::string& v) {
         c.modalities.clear();
         for (const auto& m : split(v, ',')) c.modalities.insert(parse_modality(trim(m)));
       }},
      {"pretrain", [&](const std::string& v) { c.pretrain = parse_bool(v, "pretrain"); }},
      {"calibration_correction",
       [&](const std::string& v) { c.calibration_correction = parse_bool(v, "calibration_correction"); }},
      {"alpha", [&](const std::string& v) { c.alpha = parse_number(v, "alpha"); }},
      {"beta", [&](const std::string& v) { c.beta = parse_number(v, "beta"); }},
      {"bins", [&](const std::string& v) { c.bins = parse_count(v, "bins"); }},
      {"grid",
       [&](const std::string& v) {
         if (v == "equal") c.grid = GridKind::kEqualWidth;
         else if (v == "quantile") c.grid = GridKind::kQuantile;
         else throw ValidationError("grid: expected equal or quantile");
       }},
      {"batch_size", [&](const std::string& v) { c.batch_size = parse_count(v, "batch_size"); }},
      {"epochs", [&](const std::string& v) { c.epochs = parse_count(v, "epochs"); }},
      {"patience", [&](const std::string& v) { c.patience = parse_count(v, "patience"); }},
      {"seed", [&](const std::string& v) { c.seed = parse_count(v, "seed"); }},
      {"lambda_grid",
       [&](const std::string& v) {
         c.lambda_grid = v == "default" ? RunConfig::default_lambda_grid_values() : detail::parse_number_list(v, "lambda_grid");
       }},
      {"bundle", path(c.bundle)},
      {"covariates", path(c.covariates)},
      {"ge", path(c.ge)},
      {"hidden_states", path(c.hidden_states)},
      {"teacher", path(c.teacher)},
      {"outcomes", path(c.outcomes)},
      {"split_ratios",
       [&](const std::string& v) {
         const auto r = detail::parse_number_list(v, "split_ratios");
         if (r.size() != 3) throw ValidationError("split_ratios: expected three numbers");
         c.split_ratios = {r[0], r[1], r[2]};
       }},
      {"split_seed", [&](const std::string& v) { c.split_seed = parse_count(v, "split_seed"); }},
      {"horizon_years", [&](const std::string& v) { c.horizon_years = parse_number(v, "horizon_years"); }},
      {"lr_head", [&](const std::string& v) { c.lr_head = parse_number(v, "lr_head"); }},
      {"lr_gates", [&](const std::string& v) { c.lr_gates = parse_number(v, "lr_gates"); }},
      {"lr_ae", [&](const std::string& v) { c.lr_ae = parse_number(v, "lr_ae"); }},
      {"lr_text", [&](const std::string& v) { c.lr_text = parse_number(v, "lr_text"); }},
      {"weight_decay", [&](const std::string& v) { c.weight_decay = parse_number(v, "weight_decay"); }},
      {"hidden_layers", [&](const std::string& v) { c.hidden_layers = detail::parse_count_list(v, "hidden_layers"); }},
      {"dropout", [&](const std::string& v) { c.dropout = parse_number(v, "dropout"); }},
      {"ae_layers", [&](const std::string& v) { c.ae_layers = detail::parse_count_list(v, "ae_layers"); }},
      {"latent_dim", [&](const std::string& v) { c.latent_dim = parse_count(v, "latent_dim"); }},
      {"ae_dropout", [&](const std::string& v) { c.ae_dropout = parse_number(v, "ae_dropout"); }},
      {"text_proj_dim", [&](const std::string& v) { c.text_proj_dim = parse_count(v, "text_proj_dim"); }},
      {"pretrain_batch_size", [&](const std::string& v) { c.pretrain_batch_size = parse_count(v, "pretrain_batch_size"); }},
      {"pretrain_epochs", [&](const std::string& v) { c.pretrain_epochs = parse_count(v, "pretrain_epochs"); }},
      {"freeze_pretrained", [&](const std::string& v) { c.freeze_pretrained = parse_bool(v, "freeze_pretrained"); }},
      {"ae_warm_start", [&](const std::string& v) { c.ae_warm_start = parse_bool(v, "ae_warm_start"); }},
      {"text_weight", [&](const std::string& v) { c.text_weight = parse_number(v, "text_weight"); }},
      {"number_weight", [&](const std::string& v) { c.number_weight = parse_number(v, "number_weight"); }},
      {"ibs_subintervals", [&](const std::string& v) { c.ibs_subintervals = parse_count(v, "ibs_subintervals"); }},
  };
  for (const auto& [k, v] : parse_key_values(text, source)) {
    auto it = setters.find(k);
    if (it == setters.end()) throw ValidationError(source + ": unknown key \"" + k + "\"");
    try {
      it->second(v);
    } catch (const ValidationError& e) {
      throw ValidationError(source + ": " + e.what());
    }
  }
  if (c.fusion == FusionKind::kLate && c.modalities.size() == 1) c.fusion = FusionKind::kNone;
  validate(c);
  return c;
}

inline RunConfig read_run_config(const std::string& path) {
  if (!std::filesystem::exists(path)) throw ValidationError("config file not found: " + path);
  const auto dir = std::filesystem::absolute(path).parent_path().string();
  return parse_run_config(read_file(path), path, dir);
}

/// Canonical key = value text; parsing it gives back an equal config.
inline std::string format_run_config(const RunConfig& c) {
  std::string mods;
  for (Modality m : {Modality::kText, Modality::kCov, Modality::kGe})
    if (c.has(m)) mods += (mods.empty() ? "" : ",") + to_string(m);
  std::vector<std::pair<std::string, std::string>> kv = {
      {"name", c.name},
      {"head", to_string(c.head)},
      {"fusion", to_string(c.fusion)},
      {"modalities", mods},
      {"pretrain", c.pretrain ? "true" : "false"},
      {"calibration_correction", c.calibration_correction ? "true" : "false"},
      {"alpha", format_double(c.alpha_value())},
      {"beta", format_double(c.beta_value())},
      {"bins", std::to_string(c.bins)},
      {"grid", to_string(c.grid)},
      {"batch_size", std::to_string(c.batch_size)},
      {"epochs", std::to_string(c.epochs)},
      {"patience", std::to_string(c.patience)},
      {"seed", std::to_string(c.seed)},
      {"lambda_grid", detail::join(c.lambda_grid)},
      {"bundle", c.bundle},
      {"covariates", c.covariates},
      {"ge", c.ge},
      {"hidden_states", c.hidden_states},
      {"teacher", c.teacher},
      {"outcomes", c.outcomes},
      {"split_ratios", detail::join(std::vector<double>(c.split_ratios.begin(), c.split_ratios.end()))},
      {"split_seed", std::to_string(c.split_seed)},
      {"horizon_years", format_double(c.horizon_years)},
      {"lr_head", format_double(c.lr_head)},
      {"lr_gates", format_double(c.lr_gates)},
      {"lr_ae", format_double(c.lr_ae)},
      {"lr_text", format_double(c.lr_text)},
      {"weight_decay", format_double(c.weight_decay)},
      {"hidden_layers", c.hidden_layers.empty() ? "none" : detail::join(c.hidden_layers)},
      {"dropout", format_double(c.dropout)},
      {"ae_layers", c.ae_layers.empty() ? "none" : detail::join(c.ae_layers)},
      {"latent_dim", std::to_string(c.latent_dim)},
      {"ae_dropout", format_double(c.ae_dropout)},
      {"text_proj_dim", std::to_string(c.text_proj_dim)},
      {"pretrain_batch_size", std::to_string(c.pretrain_batch_size)},
      {"pretrain_epochs", std::to_string(c.pretrain_epochs)},
      {"freeze_pretrained", c.freeze_pretrained ? "true" : "false"},
      {"ae_warm_start", c.ae_warm_start ? "true" : "false"},
      {"text_weight", format_double(c.text_weight)},
      {"number_weight", format_double(c.number_weight)},
      {"ibs_subintervals", std::to_string(c.ibs_subintervals)},
  };
  std::string out;
  for (const auto& [k, v] : kv)
    if (!v.empty()) out += k + " = " + v + "\n";
  return out;
}

}  // namespace survfuse
