#include <gtest/gtest.h>

#include <survfuse/fusion.hpp>
#include <survfuse/nn.hpp>

#include "support.hpp"

using namespace survfuse;

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();

Matrix filled(double v) { return Matrix(2, 3, v); }
}  // namespace

TEST(EarlyFuse, ConcatenatesInOrder) {
  const std::vector<double> t = {1, 2, 3, 4}, c = {5, 6, 7}, g = {8, 9, 10, 11, 12};
  EarlyFuseLayout lay;
  const auto z = early_fuse(std::span<const double>(t), std::span<const double>(c), std::span<const double>(g), &lay);
  ASSERT_EQ(z.size(), 12u);
  for (std::size_t i = 0; i < 12; ++i) EXPECT_EQ(z[i], i + 1.0);
  EXPECT_EQ(lay.offset(2), 7u);
  EXPECT_EQ(lay.total(), 12u);
}

TEST(EarlyFuse, TextOnlyIsIdentity) {
  const std::vector<double> t = {0.5, -1};
  EXPECT_EQ(early_fuse(std::span<const double>(t), std::nullopt, std::nullopt), t);
  EXPECT_THROW(early_fuse(std::nullopt, std::nullopt, std::nullopt), ValidationError);
}

TEST(EarlyFuse, RowsSkipAbsentParts) {
  const auto a = Matrix::from_rows({{1, 2}, {3, 4}});
  const auto b = Matrix::from_rows({{5}, {6}});
  const auto z = early_fuse_rows(&a, nullptr, &b);
  EXPECT_EQ(z.data, (std::vector<double>{1, 2, 5, 3, 4, 6}));
}

TEST(LateFuse, DerivedValue) {
  const Matrix t(1, 1, 2.0), c(1, 1, 4.0), g(1, 1, 100.0);
  FusionGates gates{{0.0}, {-kInf}};
  EXPECT_EQ(late_fuse({&t, &c, &g}, gates)(0, 0), 3.0);
}

TEST(LateFuse, SaturatedGatesCollapseExactly) {
  Rng rng(1);
  const auto t = testkit::random_matrix(4, 3, rng), c = testkit::random_matrix(4, 3, rng),
             g = testkit::random_matrix(4, 3, rng);
  const std::vector<double> hi(3, kInf), lo(3, -kInf);
  EXPECT_EQ(late_fuse({&t, &c, &g}, {lo, hi}).data, g.data);
  EXPECT_EQ(late_fuse({&t, &c, &g}, {lo, lo}).data, t.data);
  EXPECT_EQ(late_fuse({&t, &c, &g}, {hi, lo}).data, c.data);
  // large finite logits saturate too
  EXPECT_EQ(late_fuse({&t, &c, &g}, {std::vector<double>(3, -1e3), std::vector<double>(3, 1e3)}).data, g.data);
}

TEST(LateFuse, DisabledModalitiesCollapseNesting) {
  Rng rng(2);
  const auto t = testkit::random_matrix(2, 3, rng), c = testkit::random_matrix(2, 3, rng),
             g = testkit::random_matrix(2, 3, rng);
  auto gates = make_gates(false, true, true, 3);
  EXPECT_TRUE(gates.cov_logit.empty());
  ASSERT_EQ(gates.ge_logit.size(), 3u);
  const auto out = late_fuse({nullptr, &c, &g}, gates);
  for (std::size_t i = 0; i < out.data.size(); ++i) EXPECT_DOUBLE_EQ(out.data[i], 0.5 * c.data[i] + 0.5 * g.data[i]);
  EXPECT_EQ(late_fuse({&t, nullptr, nullptr}, make_gates(true, false, false, 3)).data, t.data);
  EXPECT_THROW(late_fuse({&t, &c, nullptr}, make_gates(true, true, true, 3)), ValidationError);
}

TEST(LateFuseBackward, GeGateOneBlocksOthers) {
  const auto t = filled(1.0), c = filled(2.0), g = filled(3.0);
  FusionGates gates{std::vector<double>(3, 0.3), std::vector<double>(3, kInf)};
  const auto d = late_fuse_backward(filled(1.0), {&t, &c, &g}, gates);
  for (double v : d.text.data) EXPECT_EQ(v, 0.0);
  for (double v : d.cov.data) EXPECT_EQ(v, 0.0);
  for (double v : d.ge.data) EXPECT_EQ(v, 1.0);
}

TEST(LateFuseBackward, FiniteDifferencesOnGatesAndInputs) {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    auto t = testkit::random_matrix(3, 4, rng), c = testkit::random_matrix(3, 4, rng), g = testkit::random_matrix(3, 4, rng);
    const auto w = testkit::random_matrix(3, 4, rng);
    FusionGates gates{std::vector<double>(4), std::vector<double>(4)};
    for (auto& x : gates.cov_logit) x = rng.normal();
    for (auto& x : gates.ge_logit) x = rng.normal();
    auto loss = [&] {
      const auto o = late_fuse({&t, &c, &g}, gates);
      double s = 0.0;
      for (std::size_t i = 0; i < o.data.size(); ++i) s += w.data[i] * o.data[i];
      return s;
    };
    auto d = late_fuse_backward(w, {&t, &c, &g}, gates);
    std::vector<ParamRef> p = {{"gcov", gates.cov_logit, d.cov_logit, 1},
                               {"gge", gates.ge_logit, d.ge_logit, 1},
                               {"t", t.data, d.text.data, 1},
                               {"c", c.data, d.cov.data, 1},
                               {"g", g.data, d.ge.data, 1}};
    const auto res = finite_difference_check(loss, p, 1000, 1e-6, rng);
    EXPECT_LT(res.max_rel_error, 1e-4) << res.worst;
  }
}
