#include <gtest/gtest.h>

#include <survfuse/synth.hpp>
#include <survfuse/train.hpp>

#include "support.hpp"

using namespace survfuse;

namespace {

const SyntheticCohort& small_synth() {
  static const SyntheticCohort s = [] {
    GeneratorSpec g;
    g.n = 240;
    g.ge_dim = 24;
    g.teacher_shift = 1.5;
    g.seed = 11;
    return generate(g);
  }();
  return s;
}

CohortSplit small_split() { return split_cohort(small_synth().cohort.size(), {0.7, 0.1, 0.2}, 3); }

// Small, fast defaults; keys in `extra` override them.
RunConfig quick(const std::string& extra = "") {
  std::map<std::string, std::string> kv = {
      {"hidden_layers", "16,16"}, {"epochs", "4"}, {"patience", "2"}, {"seed", "5"}, {"bins", "10"}};
  for (const auto& [k, v] : parse_key_values(extra, "override")) kv[k] = v;
  std::string text;
  for (const auto& [k, v] : kv) text += k + " = " + v + "\n";
  return parse_run_config(text);
}

void randomize_biases(Mlp& m, Rng& rng) {
  for (auto& l : m.layers)
    for (auto& b : l.bias) b = 0.1 * rng.normal();
}

}  // namespace

TEST(RunConfig, DefaultsAndParsing) {
  const auto c = parse_run_config("head = coxph\nmodalities = cov, ge\nfusion = early\n");
  EXPECT_EQ(c.head, HeadKind::kCox);
  EXPECT_EQ(c.beta_value(), 5.0);
  EXPECT_EQ(c.alpha_value(), 1e-8);
  EXPECT_EQ(c.modalities, (std::set<Modality>{Modality::kCov, Modality::kGe}));
  const auto d = parse_run_config("");
  EXPECT_EQ(d.beta_value(), 1.0);
  EXPECT_EQ(d.alpha_value(), 1e-9);
  EXPECT_EQ(d.lambda_grid.size(), 21u);
  // late fusion over one modality degenerates to a plain head
  EXPECT_EQ(parse_run_config("modalities = ge\n").fusion, FusionKind::kNone);
  const auto again = parse_run_config(format_run_config(c));
  EXPECT_EQ(format_run_config(again), format_run_config(c));
}

TEST(RunConfig, Rejections) {
  for (const char* bad : {"nope = 1\n", "head = rsf\n", "fusion = none\nmodalities = cov,ge\n", "beta = -1\n",
                          "lambda_grid = 0.2,1\n", "patience = 9\nepochs = 3\n", "modalities = cov\npretrain = true\n",
                          "split_ratios = 0.5,0.5\n", "dropout = 1\n", "epochs = two\n"})
    EXPECT_THROW(parse_run_config(bad), ValidationError) << bad;
  try {
    parse_run_config("head = rsf\n", "a.cfg");
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("a.cfg"), std::string::npos);
  }
}

TEST(RunConfig, RelativePathsResolveAgainstConfigDir) {
  const auto c = parse_run_config("bundle = data/b\n", "x", "/base");
  EXPECT_EQ(c.bundle, "/base/data/b");
  EXPECT_EQ(parse_run_config("bundle = /abs\n", "x", "/base").bundle, "/abs");
}

class Objective : public ::testing::Test {
 protected:
  PreparedData data;
  Model model;
  Batch batch;
  std::vector<std::size_t> idx;

  void build(const RunConfig& c) {
    data = prepare_data(c, small_synth().cohort, small_split());
    model = make_model(c, data.dims);
    idx.assign(data.split.train.begin(), data.split.train.begin() + 12);
    batch = make_batch(data, idx);
  }
};

TEST_F(Objective, ComponentsCompose) {
  const auto c = quick("alpha = 0.5\nbeta = 2\n");
  build(c);
  LossOptions o = loss_options(c, &data.grid);
  const auto lb = total_loss(model, batch, o);
  EXPECT_GT(lb.ae, 0.0);
  EXPECT_GT(lb.text, 0.0);
  EXPECT_DOUBLE_EQ(lb.total, lb.surv + 0.5 * lb.ae + 2.0 * lb.text);

  o.alpha = o.beta = 0.0;
  const auto only = total_loss(model, batch, o);
  EXPECT_EQ(only.total, only.surv);
  EXPECT_EQ(only.surv, lb.surv);

  // survival part matches the head loss on the raw predictions
  const auto direct = survival_loss(model.head, predict(model, batch), batch.outcomes, &data.grid);
  EXPECT_EQ(direct.value, lb.surv);
}

TEST_F(Objective, MaskedTargetsContributeNothing) {
  const auto c = quick();
  build(c);
  std::vector<TextTarget> masked;
  for (auto* t : batch.targets) masked.push_back(t ? *t : TextTarget{});
  for (std::size_t i = 0; i < masked.size(); ++i) {
    masked[i].included = false;
    batch.targets[i] = &masked[i];
  }
  const auto lb = total_loss(model, batch, loss_options(c, &data.grid));
  EXPECT_EQ(lb.text, 0.0);
  EXPECT_EQ(lb.text_included, 0u);
  EXPECT_EQ(lb.text_masked, 12u);
  EXPECT_EQ(lb.total, lb.surv + c.alpha_value() * lb.ae);
}

TEST_F(Objective, GradientMatchesFiniteDifferencesLate) {
  for (const char* head : {"discrete", "coxph"}) {
    const auto c = quick(std::string("head = ") + head + "\nalpha = 0.3\nbeta = 1.5\nhidden_layers = 8\n");
    build(c);
    Rng rng(19);
    for (Mlp* p : {&model.head_text, &model.head_cov, &model.head_ge, &model.ae.encoder, &model.ae.decoder,
                   &model.text_proj, &model.verbalizer})
      randomize_biases(*p, rng);
    for (auto& g : model.gates.cov_logit) g = rng.normal();
    for (auto& g : model.gates.ge_logit) g = rng.normal();
    const LossOptions o = loss_options(c, &data.grid);
    const ModelMasks masks = sample_model_masks(model, batch.size(), rng);
    Model grad = zero_grad_like(model);
    total_loss(model, batch, o, &grad, &masks);
    const auto params = collect_model_params(model, grad, learning_rates(c));
    const auto r = finite_difference_check([&] { return total_loss(model, batch, o, nullptr, &masks).total; },
                                           params, 120, 1e-6, rng);
    EXPECT_LT(r.max_rel_error, 1e-4) << head << " worst " << r.worst;
  }
}

TEST_F(Objective, GradientMatchesFiniteDifferencesEarly) {
  const auto c = quick("fusion = early\nalpha = 0.3\nbeta = 1.5\nhidden_layers = 8\n");
  build(c);
  Rng rng(23);
  for (Mlp* p : {&model.head_early, &model.ae.encoder, &model.ae.decoder, &model.text_proj, &model.verbalizer})
    randomize_biases(*p, rng);
  const LossOptions o = loss_options(c, &data.grid);
  const ModelMasks masks = sample_model_masks(model, batch.size(), rng);
  Model grad = zero_grad_like(model);
  total_loss(model, batch, o, &grad, &masks);
  const auto params = collect_model_params(model, grad, learning_rates(c));
  const auto r = finite_difference_check([&] { return total_loss(model, batch, o, nullptr, &masks).total; }, params,
                                         120, 1e-6, rng);
  EXPECT_LT(r.max_rel_error, 1e-4) << r.worst;
}

TEST(Train, PatienceZeroRunsOneEpoch) {
  const auto r = train(quick("patience = 0\nepochs = 5\n"), small_synth().cohort, small_split()).report;
  EXPECT_EQ(r.trace.epochs_run, 1u);
}

TEST(Train, BitIdenticalReruns) {
  const auto c = quick();
  const auto a = train(c, small_synth().cohort, small_split());
  const auto b = train(c, small_synth().cohort, small_split());
  EXPECT_EQ(to_json(a.report).dump(), to_json(b.report).dump());
  const auto other = train(quick("seed = 6\n"), small_synth().cohort, small_split());
  EXPECT_NE(to_json(a.report).dump(), to_json(other.report).dump());
}

TEST(Train, ApproachesOracleOnCovariateSignal) {
  GeneratorSpec g;
  g.n = 300;
  g.w_cov = 1.0;
  g.w_ge = g.w_text = 0.0;
  g.censoring_rate = 0.0;
  const auto s = generate(g);
  const auto split = split_cohort(g.n, {0.7, 0.1, 0.2}, 1);
  std::vector<double> fine;
  for (int k = 0; k <= 5000; ++k) fine.push_back(0.001 * k);
  std::vector<Outcome> o;
  for (auto i : split.test) o.push_back(s.cohort.samples[i].outcome);
  const double oracle = c_td(oracle_curves(s, split.test, fine), o);
  for (const char* head : {"discrete", "coxph"}) {
    const auto c = quick(std::string("modalities = cov\nhead = ") + head +
                         "\nbins = 30\nepochs = 40\npatience = 40\nlr_head = 0.01\nbatch_size = 32\n");
    const auto r = train(c, s.cohort, split).report;
    EXPECT_GT(r.hidden.test_c_td, 0.7) << head;
    EXPECT_GT(r.hidden.test_c_td, oracle - 0.06) << head << " oracle " << oracle;
  }
}

TEST(Train, CombinedChannelNeverLosesOnValidation) {
  const auto r = train(quick(), small_synth().cohort, small_split()).report;
  ASSERT_TRUE(r.combined && r.verbalized);
  EXPECT_GE(r.combined->val_c_td, std::max(r.hidden.val_c_td, r.verbalized->val_c_td));
  EXPECT_EQ(r.lambda_scores.size(), 21u);
  EXPECT_EQ(r.gate_cov.size(), 10u);
}

TEST(Train, CalibrationFlagIsInertWithoutTextLoss) {
  const auto a = train(quick("beta = 0\n"), small_synth().cohort, small_split()).report;
  const auto b = train(quick("beta = 0\ncalibration_correction = true\n"), small_synth().cohort, small_split()).report;
  EXPECT_EQ(to_json(a)["channels"].dump(), to_json(b)["channels"].dump());
  EXPECT_EQ(a.lambda, b.lambda);
  EXPECT_EQ(a.trace.train_loss, b.trace.train_loss);
  EXPECT_GT(b.text_masked, 0u);
}

TEST(Train, PretrainWithoutJointEpochsKeepsHeads) {
  auto c = quick("pretrain = true\npretrain_epochs = 3\npretrain_batch_size = 64\nepochs = 0\npatience = 0\n");
  const auto data = prepare_data(c, small_synth().cohort, small_split());
  Model m = make_model(c, data.dims);
  const auto entries = pretrain_heads(c, data, m);
  ASSERT_EQ(entries.size(), 2u);
  const auto r = train(c, small_synth().cohort, small_split());
  EXPECT_EQ(r.model.head_cov.layers[0].weight.data, m.head_cov.layers[0].weight.data);
  EXPECT_EQ(r.model.head_ge.layers.back().bias, m.head_ge.layers.back().bias);
  EXPECT_EQ(r.report.pretrain.size(), 2u);
}

TEST(Train, FrozenHeadsStayPut) {
  const auto c = quick("pretrain = true\npretrain_epochs = 2\nfreeze_pretrained = true\nepochs = 2\npatience = 2\n");
  const auto data = prepare_data(c, small_synth().cohort, small_split());
  Model m = make_model(c, data.dims);
  pretrain_heads(c, data, m);
  const auto r = train(c, small_synth().cohort, small_split());
  EXPECT_EQ(r.model.head_cov.layers[0].weight.data, m.head_cov.layers[0].weight.data);
  EXPECT_NE(r.model.head_text.layers[0].weight.data, make_model(c, data.dims).head_text.layers[0].weight.data);
}

TEST(Suite, EmptyAndRepeatable) {
  EXPECT_TRUE(run_experiment_suite({}, small_synth().cohort, small_split()).empty());
  const std::vector<RunConfig> cfgs = {quick("name = a\nmodalities = cov\n"), quick("name = b\nfusion = early\n")};
  const auto x = run_experiment_suite(cfgs, small_synth().cohort, small_split());
  const auto y = run_experiment_suite(cfgs, small_synth().cohort, small_split());
  ASSERT_EQ(x.size(), 2u);
  for (std::size_t i = 0; i < 2; ++i) EXPECT_EQ(to_json(x[i]).dump(), to_json(y[i]).dump());
  EXPECT_NE(format_table(x).find("hidden C"), std::string::npos);
}

TEST(Suite, FailedRunIsReported) {
  const std::vector<RunConfig> cfgs = {quick("name = bad\n")};
  const auto r = run_experiment_suite(cfgs, [](const RunConfig&) -> RunData { throw ValidationError("no data"); });
  ASSERT_EQ(r.size(), 1u);
  EXPECT_FALSE(r[0].ok());
  EXPECT_NE(format_table(r).find("failed: no data"), std::string::npos);
}

TEST(Checkpoint, EvaluateReproducesMetrics) {
  const auto c = quick("head = coxph\n");
  const auto r = train(c, small_synth().cohort, small_split());
  testkit::TempDir dir("ck");
  write_checkpoint(dir / "m.svck", make_checkpoint(c, r));
  const RunData data{small_synth().cohort, small_split()};
  const auto back = evaluate_checkpoint(read_checkpoint(dir / "m.svck"), &data);
  EXPECT_EQ(back.report.hidden.test_c_td, r.report.hidden.test_c_td);
  EXPECT_EQ(back.report.hidden.test_ibs, r.report.hidden.test_ibs);
  EXPECT_EQ(back.report.combined->test_c_td, r.report.combined->test_c_td);
}
