// Training orchestration: data preparation, mini-batch AdamW with early
// stopping on validation survival loss, optional head pre-training,
// three-channel evaluation, run reports, checkpoints and experiment suites.
#pragma once

#include <algorithm>
#include <array>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "blending.hpp"
#include "cohort.hpp"
#include "config.hpp"
#include "core.hpp"
#include "distill.hpp"
#include "metrics.hpp"
#include "model.hpp"
#include "survival.hpp"

namespace survfuse {

// ---------------------------------------------------------------------------
// Data

struct RunData {
  Cohort cohort;
  CohortSplit split;
};

/// Drops samples lacking any of `modalities` and remaps the split.
inline void restrict_to_modalities(RunData& d, const std::set<Modality>& modalities) {
  std::vector<std::size_t> remap(d.cohort.size(), static_cast<std::size_t>(-1));
  std::vector<Sample> kept;
  for (std::size_t i = 0; i < d.cohort.size(); ++i) {
    bool ok = true;
    for (Modality m : modalities) ok = ok && d.cohort.samples[i].has(m);
    if (!ok) continue;
    remap[i] = kept.size();
    kept.push_back(std::move(d.cohort.samples[i]));
  }
  if (kept.size() == d.cohort.size()) {
    d.cohort.samples = std::move(kept);
    return;
  }
  warn("dropped " + std::to_string(d.cohort.size() - kept.size()) + " samples lacking a configured modality");
  d.cohort.samples = std::move(kept);
  for (auto* part : {&d.split.train, &d.split.val, &d.split.test}) {
    std::vector<std::size_t> next;
    for (auto i : *part)
      if (remap[i] != static_cast<std::size_t>(-1)) next.push_back(remap[i]);
    *part = std::move(next);
  }
}

/// Loads the cohort named by a config: a bundle, or raw files that are split
/// with `split_seed` and whose raw clinical covariates are encoded on train.
inline RunData load_run_data(const RunConfig& c) {
  RunData d;
  if (!c.bundle.empty()) {
    auto b = load_bundle(c.bundle);
    d.cohort = std::move(b.cohort);
    d.split = std::move(b.split);
  } else {
    if (c.outcomes.empty()) throw ValidationError("config names no data: set bundle or outcomes");
    CohortSchema schema;
    schema.required = c.modalities;
    schema.horizon_years = c.horizon_years;
    CohortPaths p{c.covariates, c.ge, c.hidden_states, c.teacher, c.outcomes};
    d.cohort = load_cohort(p, schema);
    d.split = split_cohort(d.cohort.size(), c.split_ratios, c.split_seed);
    if (d.cohort.raw_covariates) encode_cohort_covariates(d.cohort, d.split);
  }
  restrict_to_modalities(d, c.modalities);
  return d;
}

/// Feature matrices, outcomes and distillation targets for every sample.
struct PreparedData {
  std::vector<std::string> ids;
  Matrix text, cov, ge;
  std::vector<Outcome> outcomes;
  std::vector<std::optional<TextTarget>> targets;
  CohortSplit split;
  TimeGrid grid;
  ModelDims dims;
  std::size_t train_targets = 0;  // training samples with a teacher target
  std::size_t train_masked = 0;   // of which excluded by calibration correction
};

inline PreparedData prepare_data(const RunConfig& c, const Cohort& cohort, const CohortSplit& split) {
  const std::size_t n = cohort.size();
  if (split.train.empty() || split.val.empty() || split.test.empty())
    throw ValidationError("prepare_data: train, validation and test splits must all be non-empty");
  for (const auto* part : {&split.train, &split.val, &split.test})
    for (auto i : *part)
      if (i >= n) throw ValidationError("prepare_data: split index out of range");
  if (c.has(Modality::kCov) && cohort.raw_covariates)
    throw ValidationError("prepare_data: raw clinical covariates must be encoded first");

  PreparedData d;
  d.split = split;
  d.dims = {c.has(Modality::kText) ? cohort.text_dim : 0, c.has(Modality::kCov) ? cohort.cov_dim() : 0,
            c.has(Modality::kGe) ? cohort.ge_dim : 0};
  if (d.dims.text) d.text = Matrix(n, d.dims.text);
  if (d.dims.cov) d.cov = Matrix(n, d.dims.cov);
  if (d.dims.ge) d.ge = Matrix(n, d.dims.ge);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& s = cohort.samples[i];
    d.ids.push_back(s.id);
    d.outcomes.push_back(s.outcome);
    auto fill = [&](Matrix& dst, const std::vector<double>& v, const char* what) {
      if (v.size() != dst.cols) throw ValidationError("sample " + s.id + ": " + what + " width mismatch");
      std::copy(v.begin(), v.end(), dst.row(i).begin());
    };
    if (d.dims.text) fill(d.text, text_embedding(s), "text embedding");
    if (d.dims.cov) fill(d.cov, s.cov, "covariate");
    if (d.dims.ge) fill(d.ge, s.ge, "gene-expression");
  }

  // teacher targets: extraction, train-split horizon means, completion, fit
  std::vector<std::optional<TeacherRecord>> records(n);
  for (std::size_t i = 0; i < n; ++i)
    if (cohort.samples[i].teacher) {
      records[i] = cohort.samples[i].teacher;
      extract_record(*records[i]);
    }
  std::vector<const TeacherRecord*> train_records;
  for (auto i : split.train)
    if (records[i]) train_records.push_back(&*records[i]);
  const auto means = horizon_means(train_records);
  d.targets.resize(n);
  if (c.has(Modality::kText))
    for (std::size_t i = 0; i < n; ++i) {
      if (!records[i]) continue;
      finalize_record(*records[i], means);
      auto t = make_text_target(records[i]->explanation, *records[i]->percent);
      t.included = !c.calibration_correction || calibration_mask(*records[i]->percent, d.outcomes[i]);
      d.targets[i] = std::move(t);
    }
  for (auto i : split.train)
    if (d.targets[i]) {
      ++d.train_targets;
      if (!d.targets[i]->included) ++d.train_masked;
    }

  double t_max = c.horizon_years > 0.0 ? c.horizon_years : 0.0;
  for (const auto& o : d.outcomes) t_max = std::max(t_max, o.time);
  if (c.grid == GridKind::kEqualWidth) {
    d.grid = equal_width_grid(c.bins, t_max);
  } else {
    std::vector<Outcome> tr;
    for (auto i : split.train) tr.push_back(d.outcomes[i]);
    d.grid = quantile_grid(c.bins, tr, t_max);
  }
  return d;
}

inline Batch make_batch(const PreparedData& d, std::span<const std::size_t> idx) {
  Batch b;
  if (!d.text.empty()) b.text = gather_rows(d.text, idx);
  if (!d.cov.empty()) b.cov = gather_rows(d.cov, idx);
  if (!d.ge.empty()) b.ge = gather_rows(d.ge, idx);
  for (auto i : idx) {
    b.outcomes.push_back(d.outcomes[i]);
    b.targets.push_back(d.targets[i] ? &*d.targets[i] : nullptr);
  }
  return b;
}

// ---------------------------------------------------------------------------
// Fitting

struct FitOptions {
  std::size_t batch_size = 16;
  std::size_t epochs = 30;
  std::size_t patience = 5;
  std::uint64_t seed = 0;
  std::string stream = "train";  // names the shuffle and dropout sub-streams
  LearningRates lr;
  LossOptions loss;
  double weight_decay = 0.01;
};

struct FitTrace {
  std::vector<double> train_loss;  // sample-weighted mean total loss per epoch
  std::vector<double> val_loss;    // validation survival loss per epoch
  std::size_t epochs_run = 0;
  std::size_t best_epoch = 0;      // 0: the initial parameters were kept
  std::size_t skipped_batches = 0; // Cox batches without an event
  std::size_t steps = 0;
};

inline double validation_loss(const Model& m, const PreparedData& d, const TimeGrid* grid) {
  const Batch b = make_batch(d, d.split.val);
  if (m.head == HeadKind::kCox && std::none_of(b.outcomes.begin(), b.outcomes.end(), [](auto& o) { return o.event; }))
    throw ValidationError("validation split has no events; the Cox loss is undefined");
  return survival_loss(m.head, predict(m, b), b.outcomes, grid).value;
}

/// Mini-batch AdamW over the training split; after every epoch the
/// validation survival loss is checked and the best parameters are restored
/// at the end. Stops after `patience` epochs without improvement.
inline FitTrace fit(Model& model, const PreparedData& d, const FitOptions& o) {
  FitTrace tr;
  Model grad = zero_grad_like(model);
  auto params = collect_model_params(model, grad, o.lr);
  AdamWState opt;
  opt.config.weight_decay = o.weight_decay;
  Rng shuffle_rng(derive_seed(o.seed, o.stream + ".shuffle"));
  Rng dropout_rng(derive_seed(o.seed, o.stream + ".dropout"));

  Model best = model;
  double best_val = std::numeric_limits<double>::infinity();
  std::size_t bad = 0;
  std::vector<std::size_t> order = d.split.train;
  for (std::size_t epoch = 0; epoch < o.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    double sum = 0.0;
    std::size_t seen = 0;
    for (std::size_t start = 0; start < order.size(); start += o.batch_size) {
      const std::size_t end = std::min(order.size(), start + o.batch_size);
      const std::span<const std::size_t> idx(order.data() + start, end - start);
      const Batch b = make_batch(d, idx);
      if (model.head == HeadKind::kCox &&
          std::none_of(b.outcomes.begin(), b.outcomes.end(), [](auto& x) { return x.event; })) {
        ++tr.skipped_batches;
        continue;
      }
      const ModelMasks masks = sample_model_masks(model, b.size(), dropout_rng);
      clear_grad(grad);
      LossBreakdown lb;
      try {
        lb = total_loss(model, b, o.loss, &grad, &masks);
        adamw_step(params, opt);
      } catch (const NumericError& e) {
        throw NumericError(o.stream + ": epoch " + std::to_string(epoch + 1) + ", step " + std::to_string(tr.steps + 1) +
                           ": " + e.what());
      }
      ++tr.steps;
      sum += lb.total * static_cast<double>(b.size());
      seen += b.size();
    }
    const double val = validation_loss(model, d, o.loss.grid);
    if (!std::isfinite(val))
      throw NumericError(o.stream + ": non-finite validation loss after epoch " + std::to_string(epoch + 1));
    tr.train_loss.push_back(seen ? sum / static_cast<double>(seen) : 0.0);
    tr.val_loss.push_back(val);
    tr.epochs_run = epoch + 1;
    info(o.stream + " epoch " + std::to_string(epoch + 1) + " train " + format_fixed(tr.train_loss.back(), 6) +
         " val " + format_fixed(val, 6));
    if (val < best_val) {
      best_val = val;
      best = model;
      tr.best_epoch = epoch + 1;
      bad = 0;
    } else {
      ++bad;
    }
    if (bad >= o.patience) break;
  }
  if (tr.skipped_batches > 0)
    warn(o.stream + ": skipped " + std::to_string(tr.skipped_batches) + " Cox batches without events");
  model = std::move(best);
  return tr;
}

inline FitOptions fit_options(const RunConfig& c, const TimeGrid* grid) {
  FitOptions o;
  o.batch_size = c.batch_size;
  o.epochs = c.epochs;
  o.patience = c.patience;
  o.seed = c.seed;
  o.lr = learning_rates(c);
  o.loss = loss_options(c, grid);
  o.weight_decay = c.weight_decay;
  return o;
}

// ---------------------------------------------------------------------------
// Evaluation

struct ChannelMetrics {
  double val_c_td = 0.0;
  double test_c_td = 0.0;
  double test_ibs = 0.0;
};

struct Evaluation {
  ChannelMetrics hidden;
  std::optional<ChannelMetrics> verbalized;
  std::optional<ChannelMetrics> combined;
  LambdaSelection lambda;
  double train_c_td = 0.0;
  std::size_t missing_verbalized = 0;
  std::vector<SurvivalCurve> test_hidden;  // aligned with split.test
  std::vector<int> test_percent;           // student percentages, when verbalized
};

/// Hidden-state curves for the train, validation and test splits. CoxPH uses
/// a Breslow baseline fitted on train + validation.
inline std::array<std::vector<SurvivalCurve>, 3> hidden_curves(const Model& m, const PreparedData& d) {
  const std::array<const std::vector<std::size_t>*, 3> parts = {&d.split.train, &d.split.val, &d.split.test};
  std::array<Matrix, 3> out;
  for (std::size_t p = 0; p < 3; ++p) out[p] = predict(m, make_batch(d, *parts[p]));
  std::array<std::vector<SurvivalCurve>, 3> curves;
  if (m.head == HeadKind::kDiscrete) {
    for (std::size_t p = 0; p < 3; ++p)
      for (std::size_t r = 0; r < out[p].rows; ++r) curves[p].push_back(discrete_curve(out[p].row(r), d.grid));
    return curves;
  }
  std::vector<double> scores;
  std::vector<Outcome> outs;
  for (std::size_t p = 0; p < 2; ++p)
    for (std::size_t r = 0; r < out[p].rows; ++r) {
      scores.push_back(out[p](r, 0));
      outs.push_back(d.outcomes[(*parts[p])[r]]);
    }
  const auto base = breslow_baseline(scores, outs);
  for (std::size_t p = 0; p < 3; ++p)
    for (std::size_t r = 0; r < out[p].rows; ++r) curves[p].push_back(cox_curve(out[p](r, 0), base));
  return curves;
}

namespace detail {
inline std::vector<Outcome> outcomes_of(const PreparedData& d, const std::vector<std::size_t>& idx) {
  std::vector<Outcome> o;
  for (auto i : idx) o.push_back(d.outcomes[i]);
  return o;
}
}  // namespace detail

inline Evaluation evaluate(const Model& m, const PreparedData& d, const RunConfig& c) {
  Evaluation ev;
  auto curves = hidden_curves(m, d);
  const auto o_train = detail::outcomes_of(d, d.split.train);
  const auto o_val = detail::outcomes_of(d, d.split.val);
  const auto o_test = detail::outcomes_of(d, d.split.test);
  ev.train_c_td = c_td(curves[0], o_train);
  ev.hidden = {c_td(curves[1], o_val), c_td(curves[2], o_test), ibs(curves[2], o_test, c.ibs_subintervals)};

  const bool verbal = m.has(Modality::kText) && d.train_targets > 0;
  if (verbal) {
    auto channel = [&](const std::vector<std::size_t>& idx, const std::vector<SurvivalCurve>& hidden,
                       std::vector<int>* pct) {
      const auto V = verbalizer_logits(m, gather_rows(d.text, idx));
      std::vector<std::optional<SurvivalCurve>> v;
      for (std::size_t r = 0; r < idx.size(); ++r) {
        const int p = student_percent(V.row(r));
        if (pct) pct->push_back(p);
        v.emplace_back(verbalized_curve(p, hidden[r].times()));
      }
      return handle_missing(hidden, v);
    };
    const auto val_in = channel(d.split.val, curves[1], nullptr);
    const auto test_in = channel(d.split.test, curves[2], &ev.test_percent);
    ev.missing_verbalized = test_in.missing;
    ev.verbalized = ChannelMetrics{c_td(val_in.verbal_eval, o_val), c_td(test_in.verbal_eval, o_test),
                                   ibs(test_in.verbal_eval, o_test, c.ibs_subintervals)};
    ev.lambda = select_lambda(curves[1], val_in.combined_verbal, o_val, c.lambda_grid);
    std::vector<SurvivalCurve> comb;
    for (std::size_t r = 0; r < curves[2].size(); ++r)
      comb.push_back(combine(curves[2][r], test_in.combined_verbal[r], ev.lambda.lambda));
    ev.combined = ChannelMetrics{ev.lambda.c_td, c_td(comb, o_test), ibs(comb, o_test, c.ibs_subintervals)};
  }
  ev.test_hidden = std::move(curves[2]);
  return ev;
}

// ---------------------------------------------------------------------------
// Pre-training

struct PretrainEntry {
  Modality modality = Modality::kCov;
  FitTrace trace;
  double val_c_td = 0.0;
};

/// Trains f^cov and f^ge (the latter with the autoencoder) each on its own
/// modality with the pre-training batch size, then injects them into `model`.
/// The autoencoder is injected too when ae_warm_start is set.
inline std::vector<PretrainEntry> pretrain_heads(const RunConfig& c, const PreparedData& d, Model& model) {
  if (!model.late()) throw ValidationError("pretrain_heads: requires late fusion");
  std::vector<PretrainEntry> out;
  for (Modality mod : {Modality::kCov, Modality::kGe}) {
    if (!model.has(mod)) continue;
    Model sub;
    sub.head = model.head;
    sub.fusion = FusionKind::kNone;
    sub.modalities = {mod};
    if (mod == Modality::kCov) {
      sub.head_early = model.head_cov;
    } else {
      sub.ae = model.ae;
      sub.head_early = model.head_ge;
    }
    FitOptions o = fit_options(c, &d.grid);
    o.batch_size = c.pretrain_batch_size;
    o.epochs = c.pretrain_epochs;
    o.stream = "pretrain." + to_string(mod);
    o.loss.beta = 0.0;
    PretrainEntry e;
    e.modality = mod;
    e.trace = fit(sub, d, o);
    const auto curves = hidden_curves(sub, d);
    e.val_c_td = c_td(curves[1], detail::outcomes_of(d, d.split.val));
    if (mod == Modality::kCov) {
      model.head_cov = sub.head_early;
    } else {
      model.head_ge = sub.head_early;
      if (c.ae_warm_start) model.ae = sub.ae;
    }
    out.push_back(std::move(e));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Reports

struct RunReport {
  std::string name;
  std::string config;  // canonical key = value text
  std::string error;   // set when a suite run failed
  std::array<std::size_t, 3> split_sizes{};
  ChannelMetrics hidden;
  std::optional<ChannelMetrics> verbalized;
  std::optional<ChannelMetrics> combined;
  double lambda = 0.0;
  std::vector<double> lambda_scores;
  double train_c_td = 0.0;
  std::vector<double> gate_cov;  // realised gates sigmoid(logit)
  std::vector<double> gate_ge;
  FitTrace trace;
  std::size_t text_targets = 0;
  std::size_t text_masked = 0;
  std::size_t missing_verbalized = 0;
  std::vector<PretrainEntry> pretrain;

  bool ok() const { return error.empty(); }
};

inline RunReport make_report(const RunConfig& c, const PreparedData& d, const Model& m, const FitTrace& tr,
                             const Evaluation& ev) {
  RunReport r;
  r.name = c.name;
  r.config = format_run_config(c);
  r.split_sizes = {d.split.train.size(), d.split.val.size(), d.split.test.size()};
  r.hidden = ev.hidden;
  r.verbalized = ev.verbalized;
  r.combined = ev.combined;
  r.lambda = ev.lambda.lambda;
  r.lambda_scores = ev.lambda.scores;
  r.train_c_td = ev.train_c_td;
  for (double x : m.gates.cov_logit) r.gate_cov.push_back(sigmoid(x));
  for (double x : m.gates.ge_logit) r.gate_ge.push_back(sigmoid(x));
  r.trace = tr;
  r.text_targets = d.train_targets;
  r.text_masked = d.train_masked;
  r.missing_verbalized = ev.missing_verbalized;
  return r;
}

inline nlohmann::json to_json(const ChannelMetrics& m) {
  return {{"val_c_td", m.val_c_td}, {"test_c_td", m.test_c_td}, {"test_ibs", m.test_ibs}};
}

inline nlohmann::json to_json(const RunReport& r) {
  using nlohmann::json;
  json j = {{"name", r.name}, {"config", r.config}};
  if (!r.ok()) {
    j["error"] = r.error;
    return j;
  }
  json channels = {{"hidden", to_json(r.hidden)}};
  if (r.verbalized) channels["verbalized"] = to_json(*r.verbalized);
  if (r.combined) channels["combined"] = to_json(*r.combined);
  j["split_sizes"] = r.split_sizes;
  j["channels"] = channels;
  j["train_c_td"] = r.train_c_td;
  if (r.combined) j["lambda"] = {{"selected", r.lambda}, {"val_c_td_by_grid", r.lambda_scores}};
  j["gates"] = {{"cov", r.gate_cov}, {"ge", r.gate_ge}};
  j["training"] = {{"epochs_run", r.trace.epochs_run},  {"best_epoch", r.trace.best_epoch},
                   {"steps", r.trace.steps},            {"skipped_batches", r.trace.skipped_batches},
                   {"train_loss", r.trace.train_loss}, {"val_loss", r.trace.val_loss}};
  j["text_loss"] = {{"train_targets", r.text_targets}, {"calibration_masked", r.text_masked}};
  j["missing_verbalized"] = r.missing_verbalized;
  if (!r.pretrain.empty()) {
    json p = json::array();
    for (const auto& e : r.pretrain)
      p.push_back({{"modality", to_string(e.modality)},
                   {"val_c_td", e.val_c_td},
                   {"epochs_run", e.trace.epochs_run},
                   {"best_epoch", e.trace.best_epoch}});
    j["pretrain"] = p;
  }
  return j;
}

/// Aligned plain-text comparison table, one row per report.
inline std::string format_table(std::span<const RunReport> reports) {
  const std::vector<std::string> head = {"run", "hidden C", "hidden IBS", "verb C", "verb IBS", "comb C", "comb IBS", "lambda"};
  std::vector<std::vector<std::string>> rows;
  auto num = [](double x) { return format_fixed(x, 4); };
  for (const auto& r : reports) {
    if (!r.ok()) {
      rows.push_back({r.name, "failed: " + r.error});
      continue;
    }
    std::vector<std::string> row = {r.name, num(r.hidden.test_c_td), num(r.hidden.test_ibs)};
    for (const auto* ch : {&r.verbalized, &r.combined}) {
      row.push_back(*ch ? num((*ch)->test_c_td) : "-");
      row.push_back(*ch ? num((*ch)->test_ibs) : "-");
    }
    row.push_back(r.combined ? format_fixed(r.lambda, 2) : "-");
    rows.push_back(std::move(row));
  }
  std::vector<std::size_t> width(head.size(), 0);
  for (std::size_t k = 0; k < head.size(); ++k) width[k] = head[k].size();
  for (const auto& row : rows)
    if (row.size() == head.size())
      for (std::size_t k = 0; k < row.size(); ++k) width[k] = std::max(width[k], row[k].size());
  auto line = [&](const std::vector<std::string>& cells) {
    std::string s;
    for (std::size_t k = 0; k < cells.size(); ++k) {
      if (k) s += "  ";
      const std::string& v = cells[k];
      if (cells.size() == head.size()) {
        const std::size_t pad = width[k] - v.size();
        s += k == 0 ? v + std::string(pad, ' ') : std::string(pad, ' ') + v;
      } else {
        s += v;
      }
    }
    while (!s.empty() && s.back() == ' ') s.pop_back();
    return s + "\n";
  };
  std::string out = line(head);
  std::size_t total = 0;
  for (auto w : width) total += w;
  out += std::string(total + 2 * (width.size() - 1), '-') + "\n";
  for (const auto& row : rows) out += line(row);
  return out;
}

// ---------------------------------------------------------------------------
// Training entry points

struct TrainResult {
  Model model;
  PreparedData data;
  Evaluation eval;
  RunReport report;
};

inline TrainResult train(const RunConfig& c, const Cohort& cohort, const CohortSplit& split) {
  validate(c);
  TrainResult res;
  res.data = prepare_data(c, cohort, split);
  res.model = make_model(c, res.data.dims);
  FitOptions o = fit_options(c, &res.data.grid);
  std::vector<PretrainEntry> pre;
  if (c.pretrain) {
    pre = pretrain_heads(c, res.data, res.model);
    if (c.freeze_pretrained) o.lr.frozen_heads = {Modality::kCov, Modality::kGe};
  }
  const auto tr = fit(res.model, res.data, o);
  res.eval = evaluate(res.model, res.data, c);
  res.report = make_report(c, res.data, res.model, tr, res.eval);
  res.report.pretrain = std::move(pre);
  return res;
}

inline TrainResult train(const RunConfig& c) {
  const auto d = load_run_data(c);
  return train(c, d.cohort, d.split);
}

inline Checkpoint make_checkpoint(const RunConfig& c, const TrainResult& r) {
  Checkpoint ck;
  ck.seed = c.seed;
  ck.step = r.report.trace.steps;
  ck.meta["format"] = "survfuse-model";
  ck.meta["survfuse_version"] = kVersion;
  ck.meta["config"] = format_run_config(c);
  ck.meta["dims"] = nlohmann::json{{"text", r.data.dims.text}, {"cov", r.data.dims.cov}, {"ge", r.data.dims.ge}}.dump();
  append_model(ck, r.model);
  return ck;
}

/// Rebuilds the model stored in a checkpoint and re-evaluates it on the data
/// its config names (or on `data` when given).
inline TrainResult evaluate_checkpoint(const Checkpoint& ck, const RunData* data = nullptr) {
  auto it = ck.meta.find("format");
  if (it == ck.meta.end() || it->second != "survfuse-model") throw ValidationError("checkpoint is not a survfuse model");
  const RunConfig c = parse_run_config(ck.meta.at("config"), "checkpoint config");
  RunData loaded;
  if (!data) {
    loaded = load_run_data(c);
    data = &loaded;
  }
  TrainResult res;
  res.data = prepare_data(c, data->cohort, data->split);
  const auto dims = nlohmann::json::parse(ck.meta.at("dims"));
  if (dims["text"].get<std::size_t>() != res.data.dims.text || dims["cov"].get<std::size_t>() != res.data.dims.cov ||
      dims["ge"].get<std::size_t>() != res.data.dims.ge)
    throw ValidationError("checkpoint dimensions do not match the data");
  res.model = make_model(c, res.data.dims);
  load_model(ck, res.model);
  res.eval = evaluate(res.model, res.data, c);
  res.report = make_report(c, res.data, res.model, FitTrace{}, res.eval);
  return res;
}

// ---------------------------------------------------------------------------
// Suites

/// Runs every config; configs naming the same data share one load (and so one
/// split). A failing run is reported with its error and the suite continues.
inline std::vector<RunReport> run_experiment_suite(
    const std::vector<RunConfig>& configs,
    const std::function<RunData(const RunConfig&)>& loader = load_run_data) {
  std::vector<RunReport> out;
  std::map<std::string, RunData> cache;
  for (const auto& c : configs) {
    try {
      const std::string key = c.bundle + "|" + c.covariates + "|" + c.ge + "|" + c.hidden_states + "|" + c.teacher + "|" +
                              c.outcomes + "|" + std::to_string(c.split_seed) + "|" + format_double(c.horizon_years) +
                              "|" + detail::join(std::vector<double>(c.split_ratios.begin(), c.split_ratios.end()));
      auto it = cache.find(key);
      if (it == cache.end()) {
        RunConfig all = c;
        all.modalities.clear();
        it = cache.emplace(key, loader(all)).first;
      }
      RunData d = it->second;
      restrict_to_modalities(d, c.modalities);
      out.push_back(train(c, d.cohort, d.split).report);
    } catch (const std::exception& e) {
      warn("suite: run " + c.name + " failed: " + e.what());
      RunReport r;
      r.name = c.name;
      r.config = format_run_config(c);
      r.error = e.what();
      out.push_back(std::move(r));
    }
  }
  return out;
}

/// In-memory variant: every config runs on the given cohort and split.
inline std::vector<RunReport> run_experiment_suite(const std::vector<RunConfig>& configs, const Cohort& cohort,
                                                   const CohortSplit& split) {
  return run_experiment_suite(configs, [&](const RunConfig&) { return RunData{cohort, split}; });
}

}  // namespace survfuse
