// Early (concatenation) and gated late fusion of modality representations.
#pragma once

#include <array>
#include <optional>
#include <span>
#include <vector>

#include "core.hpp"

namespace survfuse {

/// Segment lengths of an early-fused vector, in text -> cov -> ge order.
struct EarlyFuseLayout {
  std::array<std::size_t, 3> lengths{};
  std::size_t offset(std::size_t segment) const {
    std::size_t o = 0;
    for (std::size_t s = 0; s < segment; ++s) o += lengths[s];
    return o;
  }
  std::size_t total() const { return lengths[0] + lengths[1] + lengths[2]; }
};

/// z = [z_text ; x_cov ; z_ge], skipping absent parts.
inline std::vector<double> early_fuse(std::optional<std::span<const double>> text, std::optional<std::span<const double>> cov,
                                      std::optional<std::span<const double>> ge, EarlyFuseLayout* layout = nullptr) {
  if (!text && !cov && !ge) throw ValidationError("early_fuse: no modality present");
  std::vector<double> z;
  z.reserve((text ? text->size() : 0) + (cov ? cov->size() : 0) + (ge ? ge->size() : 0));
  EarlyFuseLayout lay;
  std::size_t slot = 0;
  for (const auto& part : {text, cov, ge}) {
    if (part) {
      z.insert(z.end(), part->begin(), part->end());
      lay.lengths[slot] = part->size();
    }
    ++slot;
  }
  if (layout) *layout = lay;
  return z;
}

/// Row-wise early fusion of batch matrices (null pointers are skipped).
inline Matrix early_fuse_rows(const Matrix* text, const Matrix* cov, const Matrix* ge) {
  std::size_t rows = 0, cols = 0;
  for (const Matrix* m : {text, cov, ge})
    if (m) {
      if (rows != 0 && m->rows != rows) throw ValidationError("early_fuse_rows: batch size mismatch");
      rows = m->rows;
      cols += m->cols;
    }
  if (cols == 0) throw ValidationError("early_fuse: no modality present");
  Matrix z(rows, cols);
  std::size_t off = 0;
  for (const Matrix* m : {text, cov, ge}) {
    if (!m) continue;
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < m->cols; ++c) z(r, off + c) = (*m)(r, c);
    off += m->cols;
  }
  return z;
}

/// Gate logits. Realised gates are sigmoid(logit); a gate whose nesting level
/// is collapsed (a modality is disabled) has an empty vector. Length is B for
/// the discrete head and 1 for CoxPH.
struct FusionGates {
  std::vector<double> cov_logit;  // text vs cov (inner)
  std::vector<double> ge_logit;   // ge vs the rest (outer)
};

/// Per-modality head outputs for a batch (N x K); null when disabled.
struct ModalityOutputs {
  const Matrix* text = nullptr;
  const Matrix* cov = nullptr;
  const Matrix* ge = nullptr;

  bool inner_gate() const { return text && cov; }
  bool outer_gate() const { return ge && (text || cov); }
};

inline FusionGates make_gates(bool text, bool cov, bool ge, std::size_t width) {
  FusionGates g;
  if (text && cov) g.cov_logit.assign(width, 0.0);
  if (ge && (text || cov)) g.ge_logit.assign(width, 0.0);
  return g;
}

namespace detail {
inline std::size_t check_fusion_shapes(const ModalityOutputs& o, const FusionGates& g) {
  const Matrix* first = o.text ? o.text : (o.cov ? o.cov : o.ge);
  if (!first) throw ValidationError("late_fuse: no modality outputs");
  for (const Matrix* m : {o.text, o.cov, o.ge})
    if (m && !m->same_shape(*first)) throw ValidationError("late_fuse: modality outputs differ in shape");
  if (o.inner_gate() != !g.cov_logit.empty() || o.outer_gate() != !g.ge_logit.empty())
    throw ValidationError("late_fuse: gates do not match the enabled modalities");
  if ((o.inner_gate() && g.cov_logit.size() != first->cols) || (o.outer_gate() && g.ge_logit.size() != first->cols))
    throw ValidationError("late_fuse: gate width does not match head output width");
  return first->cols;
}
}  // namespace detail

/// o = (1 - g_ge) [(1 - g_cov) o_text + g_cov o_cov] + g_ge o_ge, elementwise,
/// collapsing the levels whose modalities are absent.
inline Matrix late_fuse(const ModalityOutputs& o, const FusionGates& g) {
  const std::size_t K = detail::check_fusion_shapes(o, g);
  const Matrix& shape = o.text ? *o.text : (o.cov ? *o.cov : *o.ge);
  Matrix out(shape.rows, K);
  for (std::size_t r = 0; r < shape.rows; ++r)
    for (std::size_t k = 0; k < K; ++k) {
      double inner;
      if (o.inner_gate()) {
        const double gc = sigmoid(g.cov_logit[k]);
        inner = (1.0 - gc) * (*o.text)(r, k) + gc * (*o.cov)(r, k);
      } else if (o.text) {
        inner = (*o.text)(r, k);
      } else if (o.cov) {
        inner = (*o.cov)(r, k);
      } else {
        out(r, k) = (*o.ge)(r, k);
        continue;
      }
      if (o.outer_gate()) {
        const double gg = sigmoid(g.ge_logit[k]);
        out(r, k) = (1.0 - gg) * inner + gg * (*o.ge)(r, k);
      } else {
        out(r, k) = inner;
      }
    }
  return out;
}

struct LateFuseGrads {
  Matrix text, cov, ge;              // empty for disabled modalities
  std::vector<double> cov_logit;     // summed over the batch
  std::vector<double> ge_logit;
};

inline LateFuseGrads late_fuse_backward(const Matrix& upstream, const ModalityOutputs& o, const FusionGates& g) {
  const std::size_t K = detail::check_fusion_shapes(o, g);
  const std::size_t N = upstream.rows;
  if (upstream.cols != K) throw ValidationError("late_fuse_backward: upstream width mismatch");
  LateFuseGrads d;
  if (o.text) d.text = Matrix(N, K);
  if (o.cov) d.cov = Matrix(N, K);
  if (o.ge) d.ge = Matrix(N, K);
  d.cov_logit.assign(g.cov_logit.size(), 0.0);
  d.ge_logit.assign(g.ge_logit.size(), 0.0);
  for (std::size_t r = 0; r < N; ++r)
    for (std::size_t k = 0; k < K; ++k) {
      const double up = upstream(r, k);
      double w_inner = 1.0;
      if (o.outer_gate()) {
        const double gg = sigmoid(g.ge_logit[k]);
        w_inner = 1.0 - gg;
        d.ge(r, k) = gg * up;
        double inner;
        if (o.inner_gate()) {
          const double gc = sigmoid(g.cov_logit[k]);
          inner = (1.0 - gc) * (*o.text)(r, k) + gc * (*o.cov)(r, k);
        } else {
          inner = o.text ? (*o.text)(r, k) : (*o.cov)(r, k);
        }
        d.ge_logit[k] += up * ((*o.ge)(r, k) - inner) * gg * (1.0 - gg);
      } else if (o.ge) {
        d.ge(r, k) = up;
        continue;
      }
      const double up_inner = up * w_inner;
      if (o.inner_gate()) {
        const double gc = sigmoid(g.cov_logit[k]);
        d.text(r, k) = (1.0 - gc) * up_inner;
        d.cov(r, k) = gc * up_inner;
        d.cov_logit[k] += up_inner * ((*o.cov)(r, k) - (*o.text)(r, k)) * gc * (1.0 - gc);
      } else if (o.text) {
        d.text(r, k) = up_inner;
      } else if (o.cov) {
        d.cov(r, k) = up_inner;
      }
    }
  return d;
}

}  // namespace survfuse
