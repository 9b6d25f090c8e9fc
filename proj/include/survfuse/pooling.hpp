// Self-attention pooling of token hidden states into one text embedding.
#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "core.hpp"

namespace survfuse {

struct AttentionPoolResult {
  std::vector<double> embedding;  // length d
  Matrix attention;               // L x L, rows sum to 1
};

/// A = row_softmax(H H^T), H~ = A H, z = mean over the rows of H~.
/// No temperature and no 1/sqrt(d) scaling.
inline AttentionPoolResult attention_pool(const Matrix& hidden) {
  const std::size_t L = hidden.rows, d = hidden.cols;
  if (L == 0 || d == 0) throw ValidationError("attention_pool: empty hidden-state matrix");
  if (!all_finite(hidden.data)) throw ValidationError("attention_pool: non-finite hidden state");

  AttentionPoolResult out;
  out.attention = Matrix(L, L);
  for (std::size_t i = 0; i < L; ++i) {
    auto hi = hidden.row(i);
    auto arow = out.attention.row(i);
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < L; ++j) {
      auto hj = hidden.row(j);
      double dot = 0.0;
      for (std::size_t k = 0; k < d; ++k) dot += hi[k] * hj[k];
      arow[j] = dot;
      mx = std::max(mx, dot);
    }
    double sum = 0.0;
    for (auto& a : arow) {
      a = std::exp(a - mx);
      sum += a;
    }
    for (auto& a : arow) a /= sum;
  }

  // mean_i sum_j A_ij H_j = sum_j (mean_i A_ij) H_j
  std::vector<double> col_weight(L, 0.0);
  for (std::size_t i = 0; i < L; ++i)
    for (std::size_t j = 0; j < L; ++j) col_weight[j] += out.attention(i, j);
  out.embedding.assign(d, 0.0);
  for (std::size_t j = 0; j < L; ++j) {
    const double wj = col_weight[j] / static_cast<double>(L);
    auto hj = hidden.row(j);
    for (std::size_t k = 0; k < d; ++k) out.embedding[k] += wj * hj[k];
  }
  return out;
}

}  // namespace survfuse
