#include <gtest/gtest.h>

#include <survfuse/pooling.hpp>

#include "support.hpp"

using namespace survfuse;

TEST(AttentionPool, SingleTokenIsItself) {
  const auto h = Matrix::from_rows({{0.3, -1.0, 2.0}});
  EXPECT_EQ(attention_pool(h).embedding, (std::vector<double>{0.3, -1.0, 2.0}));
}

TEST(AttentionPool, IdentityGivesHalfHalf) {
  const auto z = attention_pool(Matrix::from_rows({{1, 0}, {0, 1}})).embedding;
  EXPECT_DOUBLE_EQ(z[0], 0.5);
  EXPECT_DOUBLE_EQ(z[1], 0.5);
}

TEST(AttentionPool, EqualRowsCollapse) {
  const auto z = attention_pool(Matrix::from_rows({{1, 2, 3}, {1, 2, 3}, {1, 2, 3}})).embedding;
  for (std::size_t k = 0; k < 3; ++k) EXPECT_NEAR(z[k], k + 1.0, 1e-15);
}

TEST(AttentionPool, MatchesNaiveOracle) {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t L = 1 + rng.index(9), d = 1 + rng.index(6);
    const auto h = testkit::random_matrix(L, d, rng, 0.7);
    const auto res = attention_pool(h);
    // naive: H~ = softmax(H H^T) H row by row, then column mean
    std::vector<double> z(d, 0.0);
    for (std::size_t i = 0; i < L; ++i) {
      std::vector<double> s(L);
      double tot = 0.0;
      for (std::size_t j = 0; j < L; ++j) {
        double dot = 0.0;
        for (std::size_t k = 0; k < d; ++k) dot += h(i, k) * h(j, k);
        s[j] = std::exp(dot);
        tot += s[j];
      }
      double rowsum = 0.0;
      for (std::size_t j = 0; j < L; ++j) {
        rowsum += s[j] / tot;
        EXPECT_NEAR(res.attention(i, j), s[j] / tot, 1e-12);
        for (std::size_t k = 0; k < d; ++k) z[k] += s[j] / tot * h(j, k) / static_cast<double>(L);
      }
      EXPECT_NEAR(rowsum, 1.0, 1e-12);
    }
    for (std::size_t k = 0; k < d; ++k) EXPECT_NEAR(res.embedding[k], z[k], 1e-12);
  }
}

TEST(AttentionPool, LargeDotProductsStayFinite) {
  const auto z = attention_pool(Matrix::from_rows({{100, 0}, {0, 100}, {100, 100}})).embedding;
  for (double v : z) EXPECT_TRUE(std::isfinite(v));
}

TEST(AttentionPool, RejectsEmptyAndNonFinite) {
  EXPECT_THROW(attention_pool(Matrix()), ValidationError);
  EXPECT_THROW(attention_pool(Matrix::from_rows({{1.0, std::nan("")}})), ValidationError);
}
