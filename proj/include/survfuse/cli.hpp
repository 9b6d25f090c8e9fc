// Command-line entry point. Every subcommand writes a manifest next to its
// outputs (config copy, seeds, version, timing, input/output hashes).
//
// Exit codes: 0 success, 1 validation or usage error, 2 runtime failure.
#pragma once

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "blending.hpp"
#include "cohort.hpp"
#include "config.hpp"
#include "core.hpp"
#include "distill.hpp"
#include "pooling.hpp"
#include "survival.hpp"
#include "synth.hpp"
#include "train.hpp"

namespace survfuse {

namespace fs = std::filesystem;

inline std::string file_hash(const std::string& path) { return hex64(fnv1a64(read_file(path))); }

/// Manifest accumulated during one CLI run.
class RunManifest {
 public:
  explicit RunManifest(std::string command) : start_(std::chrono::steady_clock::now()) {
    j_["command"] = std::move(command);
    j_["survfuse_version"] = kVersion;
    const char* threads = std::getenv("SURVFUSE_THREADS");
    const char* log = std::getenv("SURVFUSE_LOG");
    j_["env"] = {{"SURVFUSE_THREADS", threads ? threads : ""}, {"SURVFUSE_LOG", log ? log : ""}};
    j_["inputs"] = nlohmann::json::object();
    j_["outputs"] = nlohmann::json::object();
  }

  void input(const std::string& path) {
    if (fs::is_regular_file(path)) j_["inputs"][path] = file_hash(path);
  }
  void output(const std::string& path) { j_["outputs"][fs::path(path).filename().string()] = file_hash(path); }
  nlohmann::json& operator[](const char* key) { return j_[key]; }

  void write(const std::string& path) {
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    j_["wall_seconds"] = secs;
    write_file(path, j_.dump(2) + "\n");
  }

 private:
  nlohmann::json j_;
  std::chrono::steady_clock::time_point start_;
};

namespace cli {

inline void add_bundle_inputs(RunManifest& m, const RunConfig& c) {
  if (!c.bundle.empty()) {
    for (const char* f : {"manifest.json", "outcomes.csv", "covariates.csv", "ge.csv", "text.svhs", "text.svpv",
                          "teacher.jsonl", "split.csv"})
      m.input(c.bundle + "/" + f);
  }
  for (const auto* p : {&c.covariates, &c.ge, &c.hidden_states, &c.teacher, &c.outcomes})
    if (!p->empty()) m.input(*p);
}

inline int simulate(const std::string& spec_path, const std::string& out) {
  const auto spec = parse_generator_spec(read_file(spec_path), spec_path);
  RunManifest m("simulate");
  m.input(spec_path);
  m["spec"] = read_file(spec_path);
  m["seed"] = spec.seed;
  const auto synth = generate(spec);
  write_synthetic(synth, out);
  for (const char* f : {"covariates.csv", "ge.csv", "hidden.svhs", "teacher.jsonl", "outcomes.csv", "truth.csv"})
    m.output(out + "/" + f);
  m.write(out + "/manifest.json");
  return 0;
}

struct IngestConfig {
  CohortPaths paths;
  CohortSchema schema;
  std::array<double, 3> split_ratios = {0.70, 0.10, 0.20};
  std::uint64_t split_seed = 0;
  bool pool_text = false;
  std::string out;
};

inline IngestConfig parse_ingest_config(const std::string& path) {
  if (!fs::exists(path)) throw ValidationError("config file not found: " + path);
  const auto base = fs::absolute(path).parent_path();
  auto resolve = [&](const std::string& v) { return v.empty() || fs::path(v).is_absolute() ? v : (base / v).string(); };
  IngestConfig c;
  for (const auto& [k, v] : parse_key_values(read_file(path), path)) {
    if (k == "covariates") c.paths.covariates = resolve(v);
    else if (k == "ge") c.paths.ge = resolve(v);
    else if (k == "hidden_states") c.paths.hidden_states = resolve(v);
    else if (k == "teacher") c.paths.teacher = resolve(v);
    else if (k == "outcomes") c.paths.outcomes = resolve(v);
    else if (k == "out") c.out = resolve(v);
    else if (k == "modalities") {
      for (const auto& part : split(v, ',')) c.schema.required.insert(parse_modality(trim(part)));
    } else if (k == "horizon_years") c.schema.horizon_years = detail::parse_number(v, k);
    else if (k == "strict_cancer_types") c.schema.strict_cancer_types = detail::parse_bool(v, k);
    else if (k == "split_seed") c.split_seed = detail::parse_count(v, k);
    else if (k == "split_ratios") {
      const auto r = detail::parse_number_list(v, k);
      if (r.size() != 3) throw ValidationError(path + ": split_ratios needs three numbers");
      c.split_ratios = {r[0], r[1], r[2]};
    } else if (k == "pool_text") c.pool_text = detail::parse_bool(v, k);
    else throw ValidationError(path + ": unknown key \"" + k + "\"");
  }
  if (c.paths.outcomes.empty()) throw ValidationError(path + ": outcomes is required");
  return c;
}

inline int ingest(const std::string& config_path, std::string out) {
  auto c = parse_ingest_config(config_path);
  if (out.empty()) out = c.out;
  if (out.empty()) throw ValidationError("ingest: no output directory (use --out or the out key)");
  RunManifest m("ingest");
  m["config"] = read_file(config_path);
  m["split_seed"] = c.split_seed;
  m.input(config_path);
  for (const auto* p : {&c.paths.covariates, &c.paths.ge, &c.paths.hidden_states, &c.paths.teacher, &c.paths.outcomes})
    if (!p->empty()) m.input(*p);
  LoadStats stats;
  Cohort cohort = load_cohort(c.paths, c.schema, &stats);
  const auto split = split_cohort(cohort.size(), c.split_ratios, c.split_seed);
  if (cohort.raw_covariates) encode_cohort_covariates(cohort, split, c.schema.strict_cancer_types);
  std::size_t l_min = 0, l_max = 0, l_sum = 0, with_text = 0;
  for (auto& s : cohort.samples) {
    if (!s.text_hidden) continue;
    const std::size_t L = s.text_hidden->rows;
    l_min = with_text ? std::min(l_min, L) : L;
    l_max = std::max(l_max, L);
    l_sum += L;
    ++with_text;
    if (c.pool_text) {
      s.text_pooled = attention_pool(*s.text_hidden).embedding;
      s.text_hidden.reset();
    }
  }
  nlohmann::json extra = {{"ingest",
                           {{"dropped_missing", stats.dropped_missing},
                            {"unmatched_ids", stats.unmatched_ids},
                            {"split_seed", c.split_seed},
                            {"text_tokens", {{"min", l_min}, {"max", l_max}, {"total", l_sum}}}}}};
  save_bundle(out, cohort, split, extra);
  for (const auto& e : fs::directory_iterator(out))
    if (e.is_regular_file() && e.path().filename() != "run_manifest.json") m.output(e.path().string());
  m.write(out + "/run_manifest.json");
  return 0;
}

inline int pool(const std::string& hidden, const std::string& out) {
  RunManifest m("pool");
  m.input(hidden);
  std::vector<IdVector> pooled;
  std::size_t lmax = 0;
  for (const auto& h : read_hidden_states(hidden)) {
    pooled.push_back({h.id, attention_pool(h.values).embedding});
    lmax = std::max(lmax, h.values.rows);
  }
  write_pooled(out, pooled);
  m["samples"] = pooled.size();
  m["max_tokens"] = lmax;
  m.output(out);
  m.write(out + ".manifest.json");
  return 0;
}

inline void write_run_outputs(const std::string& out, const RunConfig& c, const TrainResult& r, RunManifest& m,
                              bool with_checkpoint) {
  fs::create_directories(out);
  write_file(out + "/report.json", to_json(r.report).dump(2) + "\n");
  write_file(out + "/report.txt", format_table(std::span<const RunReport>(&r.report, 1)));
  write_file(out + "/config.cfg", format_run_config(c));
  std::vector<std::string> ids;
  for (auto i : r.data.split.test) ids.push_back(r.data.ids[i]);
  write_file(out + "/test_curves.csv", curves_to_csv(ids, r.eval.test_hidden));
  std::vector<std::string> files = {"report.json", "report.txt", "config.cfg", "test_curves.csv"};
  if (with_checkpoint) {
    write_checkpoint(out + "/model.svck", make_checkpoint(c, r));
    files.push_back("model.svck");
  }
  for (const auto& f : files) m.output(out + "/" + f);
}

inline int train_cmd(const std::string& config_path, const std::string& out, std::ostream& os) {
  const auto c = read_run_config(config_path);
  RunManifest m("train");
  m["config"] = format_run_config(c);
  m["seed"] = c.seed;
  m["split_seed"] = c.split_seed;
  m.input(config_path);
  add_bundle_inputs(m, c);
  const auto r = train(c);
  write_run_outputs(out, c, r, m, true);
  m.write(out + "/manifest.json");
  os << format_table(std::span<const RunReport>(&r.report, 1));
  return 0;
}

inline int suite_cmd(const std::string& dir, const std::string& out, std::ostream& os) {
  if (!fs::is_directory(dir)) throw ValidationError("configs directory not found: " + dir);
  std::vector<std::string> paths;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".cfg") paths.push_back(e.path().string());
  std::sort(paths.begin(), paths.end());
  std::vector<RunConfig> configs;
  RunManifest m("suite");
  nlohmann::json cfgs = nlohmann::json::array();
  for (const auto& p : paths) {
    configs.push_back(read_run_config(p));
    m.input(p);
    cfgs.push_back({{"path", p}, {"config", format_run_config(configs.back())}});
  }
  m["configs"] = cfgs;
  const auto reports = run_experiment_suite(configs);
  fs::create_directories(out);
  nlohmann::json j = nlohmann::json::array();
  for (const auto& r : reports) j.push_back(to_json(r));
  write_file(out + "/suite.json", j.dump(2) + "\n");
  const auto table = format_table(reports);
  write_file(out + "/suite.txt", table);
  m.output(out + "/suite.json");
  m.output(out + "/suite.txt");
  m.write(out + "/manifest.json");
  os << table;
  const bool any_failed = std::any_of(reports.begin(), reports.end(), [](const RunReport& r) { return !r.ok(); });
  return any_failed ? 2 : 0;
}

/// Tab-separated channel table: channel, C^td, IBS (test split).
inline std::string channel_table(const RunReport& r) {
  std::string s = "channel\tc_td\tibs\n";
  auto row = [&](const char* name, const ChannelMetrics& m) {
    s += std::string(name) + "\t" + format_double(m.test_c_td) + "\t" + format_double(m.test_ibs) + "\n";
  };
  row("hidden", r.hidden);
  if (r.verbalized) row("verbalized", *r.verbalized);
  if (r.combined) row("combined", *r.combined);
  return s;
}

inline int eval_cmd(const std::string& checkpoint, const std::string& out, const std::string& bundle, std::ostream& os) {
  RunManifest m("eval");
  m.input(checkpoint);
  const auto ck = read_checkpoint(checkpoint);
  std::optional<RunData> data;
  if (!bundle.empty()) {
    auto b = load_bundle(bundle);
    data = RunData{std::move(b.cohort), std::move(b.split)};
    m.input(bundle + "/manifest.json");
  }
  const auto r = evaluate_checkpoint(ck, data ? &*data : nullptr);
  m["config"] = ck.meta.at("config");
  m["seed"] = ck.seed;
  fs::create_directories(out);
  write_file(out + "/report.json", to_json(r.report).dump(2) + "\n");
  const auto table = channel_table(r.report);
  write_file(out + "/channels.tsv", table);
  m.output(out + "/report.json");
  m.output(out + "/channels.tsv");
  m.write(out + "/manifest.json");
  os << table;
  return 0;
}

inline int parse_teacher_cmd(const std::string& teacher, const std::string& outcomes, const std::string& out,
                             bool correction, const std::string& family_name) {
  const CurveFamily family = parse_family(family_name);
  if (correction && outcomes.empty()) throw ValidationError("parse-teacher: --calibration-correction needs --outcomes");
  RunManifest m("parse-teacher");
  m.input(teacher);
  std::map<std::string, Outcome> outs;
  if (!outcomes.empty()) {
    m.input(outcomes);
    for (const auto& [id, o] : read_outcomes(outcomes)) outs[id] = administrative_censor(o);
  }
  auto records = read_teacher_jsonl(teacher);
  std::vector<const TeacherRecord*> ptrs;
  for (auto& r : records) {
    extract_record(r);
    ptrs.push_back(&r);
  }
  const auto means = horizon_means(ptrs);
  std::string text;
  std::size_t masked = 0, no_probability = 0;
  for (auto& r : records) {
    if (!r.any_extracted()) ++no_probability;
    try {
      finalize_record(r, means, family);
    } catch (const ValidationError& e) {
      throw ValidationError("record " + r.id + ": " + e.what());
    }
    const auto seq = build_target_sequence(r.explanation, *r.percent);
    bool included = true;
    if (correction) {
      auto it = outs.find(r.id);
      if (it == outs.end()) throw ValidationError("parse-teacher: no outcome for id " + r.id);
      included = calibration_mask(*r.percent, it->second);
    }
    if (!included) ++masked;
    text += target_to_json(r.id, seq, included).dump() + "\n";
  }
  write_file(out, text);
  m["family"] = to_string(family);
  m["calibration_correction"] = correction;
  m["records"] = records.size();
  m["masked"] = masked;
  m["without_probability"] = no_probability;
  m.output(out);
  m.write(out + ".manifest.json");
  return 0;
}

/// Blends hidden curves (id,t,S) with verbalized 3-year percentages
/// (id,percent). Ids without a percentage keep their hidden curve.
inline int blend_cmd(const std::string& curves_path, const std::string& percents_path, double lambda,
                     const std::string& out) {
  RunManifest m("blend");
  m.input(curves_path);
  m.input(percents_path);
  const auto ct = read_csv(curves_path);
  if (ct.header.size() != 3 || ct.header[1] != "t" || ct.header[2] != "S")
    throw ValidationError(curves_path + ": expected columns id,t,S");
  std::vector<std::string> order;
  std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> raw;
  for (std::size_t r = 0; r < ct.rows.size(); ++r) {
    const std::string id = trim(ct.rows[r][0]);
    double t = 0.0, s = 0.0;
    if (!parse_double(trim(ct.rows[r][1]), t) || !parse_double(trim(ct.rows[r][2]), s))
      throw ValidationError(curves_path + ":" + std::to_string(ct.line_numbers[r]) + ": unparseable number");
    auto [it, fresh] = raw.try_emplace(id);
    if (fresh) order.push_back(id);
    it->second.first.push_back(t);
    it->second.second.push_back(s);
  }
  std::map<std::string, double> pct;
  const auto pt = read_csv(percents_path);
  for (std::size_t r = 0; r < pt.rows.size(); ++r) {
    const std::string cell = trim(pt.rows[r][1]);
    if (cell.empty()) continue;
    double p = 0.0;
    if (!parse_double(cell, p))
      throw ValidationError(percents_path + ":" + std::to_string(pt.line_numbers[r]) + ": unparseable percent");
    pct[trim(pt.rows[r][0])] = p;
  }
  std::vector<SurvivalCurve> outc;
  std::size_t missing = 0;
  for (const auto& id : order) {
    auto& [t, s] = raw[id];
    SurvivalCurve hidden(t, s);
    auto it = pct.find(id);
    if (it == pct.end()) {
      ++missing;
      outc.push_back(hidden);
    } else {
      outc.push_back(combine(hidden, verbalized_curve(it->second, hidden.times()), lambda));
    }
  }
  write_file(out, curves_to_csv(order, outc));
  m["lambda"] = lambda;
  m["missing_verbalized"] = missing;
  m.output(out);
  m.write(out + ".manifest.json");
  return 0;
}

}  // namespace cli

/// Parses argv and runs one subcommand.
inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"survfuse: multimodal survival analysis with verbalized-probability distillation", "survfuse"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);
  app.allow_windows_style_options(false);

  std::string spec, out_dir, config, hidden, checkpoint, bundle, teacher, outcomes, curves, percents, family = "exponential";
  std::string configs_dir;
  bool correction = false;
  double lambda = 0.0;

  auto* sim = app.add_subcommand("simulate", "Generate a synthetic cohort with known ground truth");
  sim->add_option("--spec", spec, "Generator spec file (key = value)")->required();
  sim->add_option("--out", out_dir, "Output directory")->required();

  auto* ing = app.add_subcommand("ingest", "Validate raw cohort files and write a cohort bundle");
  ing->add_option("--config", config, "Ingest config file")->required();
  ing->add_option("--out", out_dir, "Bundle directory (overrides the config's out key)");

  auto* pl = app.add_subcommand("pool", "Attention-pool SVHS hidden states into SVPV vectors");
  pl->add_option("--hidden", hidden, "SVHS hidden-state file")->required();
  pl->add_option("--out", out_dir, "Output SVPV file")->required();

  auto* tr = app.add_subcommand("train", "Train one configuration and evaluate it");
  tr->add_option("--config", config, "Run config file")->required();
  tr->add_option("--out", out_dir, "Output directory")->required();

  auto* su = app.add_subcommand("suite", "Train every *.cfg in a directory and tabulate");
  su->add_option("--configs-dir", configs_dir, "Directory of run configs")->required();
  su->add_option("--out", out_dir, "Output directory")->required();

  auto* ev = app.add_subcommand("eval", "Re-evaluate a trained checkpoint");
  ev->add_option("--checkpoint", checkpoint, "Model checkpoint (SVCK)")->required();
  ev->add_option("--out", out_dir, "Output directory")->required();
  ev->add_option("--bundle", bundle, "Evaluate on this cohort bundle instead of the training data");

  auto* pt = app.add_subcommand("parse-teacher", "Extract teacher probabilities and build target sequences");
  pt->add_option("--teacher", teacher, "Teacher JSONL file")->required();
  pt->add_option("--out", out_dir, "Output target JSONL file")->required();
  pt->add_option("--outcomes", outcomes, "Outcomes CSV (needed for calibration correction)");
  pt->add_flag("--calibration-correction", correction, "Mark targets contradicted by the outcome");
  pt->add_option("--family", family, "Curve family for the 3-year percent: exponential, weibull, loglogistic");

  auto* bl = app.add_subcommand("blend", "Blend hidden curves with verbalized 3-year percentages");
  bl->add_option("--curves", curves, "Hidden curves CSV (id,t,S)")->required();
  bl->add_option("--percents", percents, "Percentages CSV (id,percent)")->required();
  bl->add_option("--lambda", lambda, "Blend weight in [0,1]")->required()->check(CLI::Range(0.0, 1.0));
  bl->add_option("--out", out_dir, "Output curves CSV")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == static_cast<int>(CLI::ExitCodes::Success)) return app.exit(e, out, err);
    err << "survfuse: " << e.what() << "\n\n" << app.help();
    return 1;
  }

  try {
    if (*sim) return cli::simulate(spec, out_dir);
    if (*ing) return cli::ingest(config, out_dir);
    if (*pl) return cli::pool(hidden, out_dir);
    if (*tr) return cli::train_cmd(config, out_dir, out);
    if (*su) return cli::suite_cmd(configs_dir, out_dir, out);
    if (*ev) return cli::eval_cmd(checkpoint, out_dir, bundle, out);
    if (*pt) return cli::parse_teacher_cmd(teacher, outcomes, out_dir, correction, family);
    if (*bl) return cli::blend_cmd(curves, percents, lambda, out_dir);
  } catch (const ValidationError& e) {
    err << "survfuse: error: " << e.what() << "\n";
    return 1;
  } catch (const nlohmann::json::exception& e) {
    err << "survfuse: error: malformed JSON: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "survfuse: failure: " << e.what() << "\n";
    return 2;
  }
  err << app.help();
  return 1;
}

}  // namespace survfuse
