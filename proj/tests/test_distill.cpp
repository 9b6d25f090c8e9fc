#include <gtest/gtest.h>

#include <survfuse/distill.hpp>
#include <survfuse/nn.hpp>

#include "support.hpp"

using namespace survfuse;

TEST(ExtractProbability, TemplateSentence) {
  EXPECT_EQ(extract_probability("The estimated 3-year survival probability is: 90%."), 0.90);
}

TEST(ExtractProbability, RefusalIsAbsent) {
  EXPECT_FALSE(extract_probability("I cannot provide an estimate.").has_value());
}

TEST(ExtractProbability, LastPercentWins) {
  EXPECT_EQ(extract_probability("between 60% and 70%, likely 65%"), 0.65);
}

TEST(ExtractProbability, PreferenceOrder) {
  // a percent beats a bare decimal, which beats a bare number read as percent
  EXPECT_EQ(extract_probability("0.3 or maybe 40%"), 0.40);
  EXPECT_EQ(extract_probability("about 0.72 given 3 risk factors"), 0.72);
  EXPECT_EQ(extract_probability("roughly 85"), 0.85);
  EXPECT_EQ(extract_probability("Survival probability: 45 %"), 0.45);
}

TEST(ExtractProbability, DurationsAndLabelsIgnored) {
  EXPECT_EQ(extract_probability("The 5-year survival is 55%"), 0.55);
  EXPECT_EQ(extract_probability("pT3 tumour, 12 months follow-up, 0.4"), 0.4);
  EXPECT_FALSE(extract_probability("after 3 years").has_value());
  EXPECT_FALSE(extract_probability("150%").has_value());
}

TEST(CompleteHorizons, SinglePointExponentialRefit) {
  const auto c = complete_horizons({0.9, std::nullopt, std::nullopt}, {0.5, 0.5, 0.5});
  EXPECT_EQ(c[0], 0.9);
  EXPECT_NEAR(c[1], 0.729, 1e-12);
  EXPECT_NEAR(c[2], 0.59049, 1e-12);
}

TEST(CompleteHorizons, AllMissingUsesMeans) {
  const auto c = complete_horizons({}, {0.8, 0.6, 0.4});
  EXPECT_EQ(c, (std::array<double, 3>{0.8, 0.6, 0.4}));
}

TEST(CompleteHorizons, PresentValuesKeptAndMonotone) {
  EXPECT_EQ(complete_horizons({0.9, 0.7, 0.5}, {}), (std::array<double, 3>{0.9, 0.7, 0.5}));
  const auto c = complete_horizons({0.6, 0.7, 0.5}, {});
  EXPECT_EQ(c, (std::array<double, 3>{0.6, 0.6, 0.5}));
}

TEST(CompleteHorizons, MonotoneOnRandomInputs) {
  Rng rng(4);
  for (int trial = 0; trial < 200; ++trial) {
    std::array<std::optional<double>, 3> p;
    for (auto& x : p)
      if (rng.bernoulli(0.6)) x = rng.uniform();
    const auto c = complete_horizons(p, {0.7, 0.5, 0.3});
    EXPECT_GE(c[0], c[1]);
    EXPECT_GE(c[1], c[2]);
    for (double v : c) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
  }
}

TEST(FitParametric, ExponentialExactAndSinglePoint) {
  const std::vector<SurvivalPoint> pts = {{1, 0.9}, {3, 0.729}, {5, 0.59049}};
  EXPECT_NEAR(fit_parametric(pts, CurveFamily::kExponential).rate, -std::log(0.9), 1e-12);
  const std::vector<SurvivalPoint> one = {{3, 0.5}};
  EXPECT_NEAR(fit_parametric(one, CurveFamily::kExponential).rate, std::log(2.0) / 3.0, 1e-12);
}

TEST(FitParametric, WeibullAndLogLogisticRecovery) {
  std::vector<SurvivalPoint> w, ll;
  for (double t : {1.0, 3.0, 5.0}) {
    w.push_back({t, std::exp(-std::pow(t / 4.0, 2.0))});
    ll.push_back({t, 1.0 / (1.0 + std::pow(t / 2.5, 1.7))});
  }
  const auto fw = fit_parametric(w, CurveFamily::kWeibull);
  EXPECT_NEAR(fw.shape, 2.0, 2e-9);
  EXPECT_NEAR(fw.scale, 4.0, 4e-9);
  const auto fl = fit_parametric(ll, CurveFamily::kLogLogistic);
  EXPECT_NEAR(fl.shape, 1.7, 1.7e-9);
  EXPECT_NEAR(fl.scale, 2.5, 2.5e-9);
}

TEST(FitParametric, InvalidInputs) {
  EXPECT_THROW(fit_parametric({}, CurveFamily::kExponential), ValidationError);
  const std::vector<SurvivalPoint> one = {{3, 0.5}};
  EXPECT_THROW(fit_parametric(one, CurveFamily::kWeibull), ValidationError);
  const std::vector<SurvivalPoint> bad = {{0, 0.5}};
  EXPECT_THROW(fit_parametric(bad, CurveFamily::kExponential), ValidationError);
  EXPECT_THROW(parse_family("gamma"), ValidationError);
}

TEST(FitParametric, ZeroSurvivalIsClamped) {
  const std::vector<SurvivalPoint> pts = {{3, 0.0}};
  const auto f = fit_parametric(pts, CurveFamily::kExponential);
  EXPECT_EQ(f.clamped_points, 1);
  EXPECT_TRUE(std::isfinite(f.rate));
}

TEST(ThreeYearPercent, Rounding) {
  ParametricFit f;
  f.rate = std::log(2.0) / 3.0;
  EXPECT_EQ(three_year_percent(f), 50);
  f.rate = -std::log(0.729) / 3.0;
  EXPECT_EQ(three_year_percent(f), 75);
  f.rate = -std::log(0.975) / 3.0;
  EXPECT_EQ(three_year_percent(f), 100);
  f.rate = 0.0;
  EXPECT_EQ(three_year_percent(f), 100);
  f.rate = 50.0;
  EXPECT_EQ(three_year_percent(f), 0);
}

TEST(FinalizeRecord, PipelineAndFamilies) {
  TeacherRecord r;
  r.responses = {std::string("90%"), std::nullopt, std::string("I cannot provide an estimate.")};
  extract_record(r);
  ASSERT_TRUE(r.any_extracted());
  finalize_record(r, {0.5, 0.5, 0.5});
  EXPECT_NEAR(*r.rate, -std::log(0.9), 1e-12);
  EXPECT_EQ(*r.percent, 75);

  TeacherRecord w;
  w.responses = {std::string("95%"), std::string("80%"), std::string("60%")};
  extract_record(w);
  finalize_record(w, {0.5, 0.5, 0.5}, CurveFamily::kWeibull);
  EXPECT_FALSE(w.rate.has_value());
  EXPECT_EQ(*w.percent, 80);
}

TEST(TeacherJson, RoundTripAndErrors) {
  TeacherRecord r;
  r.id = "P1";
  r.responses = {std::string("70%"), std::nullopt, std::string("50%")};
  r.explanation = "Stable disease.";
  const auto back = teacher_record_from_json(teacher_record_to_json(r));
  EXPECT_EQ(back.id, "P1");
  EXPECT_EQ(back.responses[0], r.responses[0]);
  EXPECT_FALSE(back.responses[1].has_value());
  EXPECT_EQ(back.explanation, "Stable disease.");
  EXPECT_THROW(teacher_record_from_json(nlohmann::json::parse(R"({"responses":{}})")), ValidationError);
  EXPECT_THROW(teacher_record_from_json(nlohmann::json::parse(R"({"id":"a","responses":{"y1":3}})")), ValidationError);

  testkit::TempDir dir("teacher");
  write_file(dir / "bad.jsonl", "{\"id\":\"a\"}\n{not json\n");
  try {
    read_teacher_jsonl(dir / "bad.jsonl");
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find(":2:"), std::string::npos);
  }
}

TEST(TargetSequence, ExactTemplate) {
  const auto t = build_target_sequence("Favorable features.", 90);
  EXPECT_EQ(t.text, "Favorable features. «VPROB»\n\n The estimated 3-year survival probability is: 90%. «END_VPROB»");
  EXPECT_EQ(t.text.substr(t.number.begin, t.number.size()), "90");
  EXPECT_EQ(t.text.substr(t.vprob.begin, 9), "«VPROB»");
  EXPECT_EQ(t.vprob.end, t.text.size());
  EXPECT_EQ(extract_probability(t.text), 0.90);
}

TEST(TargetSequence, RoundTripEveryPercent) {
  for (int p = 0; p <= 100; ++p) {
    const auto t = build_target_sequence("Some rationale with stage 2 disease.", p);
    EXPECT_EQ(extract_probability(t.text), p / 100.0) << p;
  }
}

TEST(TargetSequence, RejectsBadInput) {
  EXPECT_THROW(build_target_sequence("x", 101), ValidationError);
  EXPECT_THROW(build_target_sequence("has «VPROB» inside", 50), ValidationError);
}

TEST(TokenMasks, OverlapRule) {
  const auto t = build_target_sequence("Favorable features.", 90);
  const auto toks = whitespace_tokens(t.text);
  const auto m = token_masks(t, toks);
  ASSERT_EQ(toks.size(), m.vprob.size());
  std::size_t num_hits = 0;
  for (std::size_t k = 0; k < toks.size(); ++k) {
    const std::string tok = t.text.substr(toks[k].begin, toks[k].size());
    if (k < 2) EXPECT_FALSE(m.vprob[k]) << tok;
    else EXPECT_TRUE(m.vprob[k]) << tok;
    if (tok == "90%.") {
      EXPECT_TRUE(m.number[k]);
      EXPECT_TRUE(m.vprob[k]);
    }
    num_hits += m.number[k];
  }
  EXPECT_EQ(num_hits, 1u);
  // a token straddling the span start still counts
  const std::vector<Span> straddle = {{t.vprob.begin - 3, t.vprob.begin + 2}};
  EXPECT_TRUE(token_masks(t, straddle).vprob[0]);
  const std::vector<Span> bad = {{5, 3}};
  EXPECT_THROW(token_masks(t, bad), ValidationError);
}

TEST(WeightedTextLoss, Examples) {
  const std::vector<double> nll = {1.0, 1.0};
  EXPECT_DOUBLE_EQ(weighted_text_loss(nll, {false, true}, {false, true}).value, 3.5);
  const std::vector<double> x = {0.3, 0.9, 1.2};
  EXPECT_DOUBLE_EQ(weighted_text_loss(x, {true, true, false}, {false, true, false}, 1.0, 1.0).value, 0.8);
  EXPECT_DOUBLE_EQ(weighted_text_loss(x, {false, false, false}, {false, false, false}).value, 0.8);
}

TEST(WeightedTextLoss, MonotoneInWeightsAndGradient) {
  Rng rng(3);
  std::vector<double> nll(8);
  for (auto& v : nll) v = rng.uniform(0.1, 2.0);
  std::vector<bool> vp(8, false), nm(8, false);
  vp[5] = vp[6] = vp[7] = true;
  nm[6] = true;
  EXPECT_LT(weighted_text_loss(nll, vp, nm, 2.0, 5.0).value, weighted_text_loss(nll, vp, nm, 3.0, 5.0).value);
  EXPECT_LT(weighted_text_loss(nll, vp, nm, 2.0, 5.0).value, weighted_text_loss(nll, vp, nm, 2.0, 6.0).value);
  auto l = weighted_text_loss(nll, vp, nm);
  EXPECT_DOUBLE_EQ(l.grad[0], 1.0 / 8);
  EXPECT_DOUBLE_EQ(l.grad[5], 2.0 / 8);
  EXPECT_DOUBLE_EQ(l.grad[6], 6.0 / 8);
  std::vector<ParamRef> p = {{"nll", nll, l.grad, 1}};
  EXPECT_LT(finite_difference_check([&] { return weighted_text_loss(nll, vp, nm).value; }, p, 100, 1e-6, rng).max_rel_error,
            1e-8);
  EXPECT_THROW(weighted_text_loss({}, {}, {}), ValidationError);
}

TEST(CalibrationMask, Examples) {
  EXPECT_FALSE(calibration_mask(80, {1.2, true}));
  EXPECT_FALSE(calibration_mask(30, {4.0, false}));
  EXPECT_TRUE(calibration_mask(80, {2.0, false}));
  EXPECT_TRUE(calibration_mask(50, {1.0, true}));
  EXPECT_TRUE(calibration_mask(50, {4.0, false}));
  EXPECT_FALSE(calibration_mask(40, {3.0, true}));
  EXPECT_TRUE(calibration_mask(40, {2.9, true}));
}

TEST(TargetJson, Fields) {
  const auto t = build_target_sequence("x.", 35);
  const auto j = target_to_json("P9", t, false);
  EXPECT_EQ(j["id"], "P9");
  EXPECT_EQ(j["text_loss_included"], false);
  EXPECT_EQ(j["num_span"][0].get<std::size_t>(), t.number.begin);
}
