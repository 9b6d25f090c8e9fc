#include <gtest/gtest.h>

#include <survfuse/synth.hpp>
#include <survfuse/train.hpp>

#include "support.hpp"

using namespace survfuse;

namespace {

std::vector<std::size_t> all_indices(std::size_t n) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), std::size_t{0});
  return v;
}

std::vector<double> grid_times() {
  std::vector<double> t;
  for (int k = 0; k <= 100; ++k) t.push_back(0.05 * k);
  return t;
}

}  // namespace

TEST(GeneratorSpec, ParsesAndValidates) {
  const auto s = parse_generator_spec("n = 50\nw_ge = 0\nevent_model = weibull\nseed = 3\n");
  EXPECT_EQ(s.n, 50u);
  EXPECT_EQ(s.w_ge, 0.0);
  EXPECT_EQ(s.event_model, EventModel::kWeibull);
  EXPECT_THROW(parse_generator_spec("bogus = 1\n"), ValidationError);
  EXPECT_THROW(parse_generator_spec("n = 2\n"), ValidationError);
  EXPECT_THROW(parse_generator_spec("base_hazard = 0\n"), ValidationError);
  EXPECT_THROW(parse_generator_spec("teacher_missing = 1.5\n"), ValidationError);
}

TEST(Generate, DeterministicAndShaped) {
  GeneratorSpec g;
  g.n = 120;
  const auto a = generate(g), b = generate(g);
  ASSERT_EQ(a.cohort.size(), 120u);
  EXPECT_EQ(a.cohort.samples[7].cov, b.cohort.samples[7].cov);
  EXPECT_EQ(a.cohort.samples[7].outcome, b.cohort.samples[7].outcome);
  EXPECT_EQ(a.cohort.samples[0].id, "S001");
  for (const auto& s : a.cohort.samples) {
    EXPECT_LE(s.outcome.time, g.horizon);
    EXPECT_GT(s.outcome.time, 0.0);
    EXPECT_EQ(s.ge.size(), g.ge_dim);
    EXPECT_GE(s.text_hidden->rows, g.tokens / 2);
    EXPECT_LE(s.text_hidden->rows, g.tokens);
  }
}

TEST(Generate, NoCensoringMeansAllEventsBeforeHorizon) {
  GeneratorSpec g;
  g.n = 300;
  g.censoring_rate = 0.0;
  g.horizon = 1e6;
  for (const auto& s : generate(g).cohort.samples) EXPECT_TRUE(s.outcome.event);
}

TEST(Generate, TeacherSelfConsistency) {
  GeneratorSpec g;
  g.n = 200;
  g.teacher_noise = 0.0;
  g.teacher_shift = 0.0;
  g.teacher_missing = 0.0;
  const auto synth = generate(g);
  std::vector<TeacherRecord> recs;
  for (const auto& s : synth.cohort.samples) recs.push_back(*s.teacher);
  std::vector<const TeacherRecord*> ptrs;
  for (auto& r : recs) {
    extract_record(r);
    ptrs.push_back(&r);
  }
  const auto means = horizon_means(ptrs);
  for (std::size_t i = 0; i < recs.size(); ++i) {
    const double s3 = truth_survival(g, truth_log_hazard(g, synth.truth[i]), 3.0);
    ASSERT_TRUE(recs[i].extracted[1].has_value());
    EXPECT_NEAR(*recs[i].extracted[1], s3, 0.005 + 1e-12);
    finalize_record(recs[i], means);
    // 1% response rounding plus the 5% bucket
    EXPECT_LE(std::abs(*recs[i].percent - 100.0 * s3), 2.5 + 1.0);
  }
}

TEST(Generate, MissingResponsesHaveNoNumber) {
  GeneratorSpec g;
  g.n = 100;
  g.teacher_missing = 1.0;
  for (const auto& s : generate(g).cohort.samples)
    for (const auto& r : s.teacher->responses) EXPECT_FALSE(extract_probability(*r).has_value());
}

TEST(OracleCurves, ClosedForm) {
  GeneratorSpec g;
  g.base_hazard = std::log(2.0);
  SyntheticCohort s;
  s.spec = g;
  s.truth = {SampleTruth{}};
  const std::vector<std::size_t> idx = {0};
  const std::vector<double> t = {0.0, 1.0};
  EXPECT_NEAR(oracle_curves(s, idx, t)[0](1.0), 0.5, 1e-15);
}

TEST(OracleCurves, BeatModelFreeBaselines) {
  GeneratorSpec g;
  g.n = 2000;
  const auto s = generate(g);
  const auto idx = all_indices(g.n);
  const auto outs = s.cohort.outcomes();
  const auto times = grid_times();
  const auto oracle = oracle_curves(s, idx, times);
  const std::vector<SurvivalCurve> half(g.n, SurvivalCurve({0.0, 1e-9}, {1.0, 0.5}));
  EXPECT_GT(c_td(oracle, outs), 0.7);
  EXPECT_LT(ibs(oracle, outs), ibs(half, outs));
  const double all = c_td(oracle, outs);
  for (auto [c, ge, tx] : {std::tuple{true, false, false}, std::tuple{false, true, false}, std::tuple{false, false, true}})
    EXPECT_GT(all, c_td(oracle_curves(s, idx, times, c, ge, tx), outs));
}

TEST(OracleCurves, NoSignalNullIsHalf) {
  GeneratorSpec g;
  g.n = 2000;
  g.w_cov = g.w_ge = g.w_text = 0.0;
  const auto s = generate(g);
  const auto idx = all_indices(g.n);
  const auto outs = s.cohort.outcomes();
  // the oracle sees no signal: every curve is the same
  EXPECT_EQ(c_td(oracle_curves(s, idx, grid_times()), outs), 0.5);
  // and a fitted model lands near chance on held-out data
  RunConfig c = parse_run_config("modalities = cov\nfusion = none\nepochs = 5\npatience = 2\nseed = 1\n");
  const auto r = train(c, s.cohort, split_cohort(g.n, {0.7, 0.1, 0.2}, 4)).report;
  EXPECT_NEAR(r.hidden.test_c_td, 0.5, 0.05);
}

TEST(WriteSynthetic, RoundTripsThroughIngest) {
  GeneratorSpec g;
  g.n = 40;
  g.ge_missing_rate = 0.1;
  const auto s = generate(g);
  testkit::TempDir dir("synth");
  write_synthetic(s, dir.str());
  LoadStats st;
  const auto c = load_cohort({dir / "covariates.csv", dir / "ge.csv", dir / "hidden.svhs", dir / "teacher.jsonl",
                              dir / "outcomes.csv"},
                             {}, &st);
  ASSERT_EQ(c.size(), 40u);
  EXPECT_EQ(st.dropped_missing, 0u);
  EXPECT_EQ(st.unmatched_ids, 0u);
  for (std::size_t i = 0; i < 40; ++i) {
    EXPECT_EQ(c.samples[i].cov, s.cohort.samples[i].cov);
    EXPECT_EQ(c.samples[i].ge, s.cohort.samples[i].ge);
    EXPECT_EQ(c.samples[i].outcome, s.cohort.samples[i].outcome);
    EXPECT_EQ(c.samples[i].text_hidden->data, s.cohort.samples[i].text_hidden->data);
    EXPECT_EQ(c.samples[i].teacher->responses, s.cohort.samples[i].teacher->responses);
  }
}
