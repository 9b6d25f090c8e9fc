// The joint model: text projection + verbalizer adapter, gene-expression
// autoencoder, survival head(s) and fusion gates, with the composed objective
//   L = L_surv + alpha L_AE + beta L_text
// and its hand-written backward pass.
//
// The language model itself is out of reach, so the trainable part of the
// text pathway is a linear projection of the pooled hidden states. The
// verbalizer maps that projection to a distribution over the 21 possible
// rounded percentages and supplies the NLL of the number token; all other
// target tokens carry zero NLL.
#pragma once

#include <cmath>
#include <set>
#include <string>
#include <vector>

#include "autoencoder.hpp"
#include "config.hpp"
#include "core.hpp"
#include "distill.hpp"
#include "fusion.hpp"
#include "nn.hpp"
#include "survival.hpp"

namespace survfuse {

inline constexpr std::size_t kPercentBuckets = 21;  // 0, 5, ..., 100

struct ModelDims {
  std::size_t text = 0;
  std::size_t cov = 0;
  std::size_t ge = 0;
};

struct Model {
  HeadKind head = HeadKind::kDiscrete;
  FusionKind fusion = FusionKind::kNone;
  std::set<Modality> modalities;
  Mlp text_proj;
  Mlp verbalizer;
  Autoencoder ae;
  Mlp head_early;                    // early fusion and single-modality runs
  Mlp head_text, head_cov, head_ge;  // late fusion
  FusionGates gates;

  bool has(Modality m) const { return modalities.count(m) > 0; }
  bool late() const { return fusion == FusionKind::kLate; }
};

inline Model make_model(const RunConfig& c, const ModelDims& dims) {
  Model m;
  m.head = c.head;
  m.fusion = c.fusion;
  m.modalities = c.modalities;
  const std::size_t K = c.head_width();
  auto rng_for = [&](const char* part) { return Rng(derive_seed(c.seed, std::string("init.") + part)); };
  std::size_t fused = 0;
  if (m.has(Modality::kText)) {
    if (dims.text == 0) throw ValidationError("make_model: text modality enabled but text width is 0");
    auto r = rng_for("text_proj");
    m.text_proj = make_mlp(dims.text, {}, c.text_proj_dim, 0.0, r);
    auto rv = rng_for("verbalizer");
    m.verbalizer = make_mlp(c.text_proj_dim, {}, kPercentBuckets, 0.0, rv);
    fused += c.text_proj_dim;
  }
  if (m.has(Modality::kCov)) {
    if (dims.cov == 0) throw ValidationError("make_model: covariate modality enabled but no covariates");
    fused += dims.cov;
  }
  if (m.has(Modality::kGe)) {
    if (dims.ge == 0) throw ValidationError("make_model: gene-expression modality enabled but ge width is 0");
    auto r = rng_for("ae");
    m.ae = make_autoencoder(dims.ge, c.ae_layers, c.latent_dim, c.ae_dropout, r);
    fused += c.latent_dim;
  }
  if (m.late()) {
    if (m.has(Modality::kText)) {
      auto r = rng_for("head.text");
      m.head_text = make_mlp(c.text_proj_dim, c.hidden_layers, K, c.dropout, r);
    }
    if (m.has(Modality::kCov)) {
      auto r = rng_for("head.cov");
      m.head_cov = make_mlp(dims.cov, c.hidden_layers, K, c.dropout, r);
    }
    if (m.has(Modality::kGe)) {
      auto r = rng_for("head.ge");
      m.head_ge = make_mlp(c.latent_dim, c.hidden_layers, K, c.dropout, r);
    }
    m.gates = make_gates(m.has(Modality::kText), m.has(Modality::kCov), m.has(Modality::kGe), K);
  } else {
    auto r = rng_for("head");
    m.head_early = make_mlp(fused, c.hidden_layers, K, c.dropout, r);
  }
  return m;
}

/// Gradient accumulator with the shapes of `m`.
inline Model zero_grad_like(const Model& m) {
  Model g = m;
  for (Mlp* p : {&g.text_proj, &g.verbalizer, &g.ae.encoder, &g.ae.decoder, &g.head_early, &g.head_text, &g.head_cov,
                 &g.head_ge})
    set_zero(*p);
  std::fill(g.gates.cov_logit.begin(), g.gates.cov_logit.end(), 0.0);
  std::fill(g.gates.ge_logit.begin(), g.gates.ge_logit.end(), 0.0);
  return g;
}

inline void clear_grad(Model& g) {
  for (Mlp* p : {&g.text_proj, &g.verbalizer, &g.ae.encoder, &g.ae.decoder, &g.head_early, &g.head_text, &g.head_cov,
                 &g.head_ge})
    set_zero(*p);
  std::fill(g.gates.cov_logit.begin(), g.gates.cov_logit.end(), 0.0);
  std::fill(g.gates.ge_logit.begin(), g.gates.ge_logit.end(), 0.0);
}

struct LearningRates {
  double text = 1e-3;
  double ae = 1e-3;
  double head = 1e-3;
  double gates = 1e-4;
  std::set<Modality> frozen_heads;  // late-fusion heads held fixed
};

inline LearningRates learning_rates(const RunConfig& c) { return {c.lr_text, c.lr_ae, c.lr_head, c.lr_gates, {}}; }

inline std::vector<ParamRef> collect_model_params(Model& m, Model& g, const LearningRates& lr) {
  std::vector<ParamRef> out;
  auto add = [&](Mlp& p, Mlp& gp, const char* name, double rate) {
    if (!p.layers.empty()) collect_params(p, gp, name, rate, out);
  };
  auto head_lr = [&](Modality mod) { return lr.frozen_heads.count(mod) ? 0.0 : lr.head; };
  add(m.text_proj, g.text_proj, "text_proj", lr.text);
  add(m.verbalizer, g.verbalizer, "verbalizer", lr.text);
  add(m.ae.encoder, g.ae.encoder, "ae.encoder", lr.ae);
  add(m.ae.decoder, g.ae.decoder, "ae.decoder", lr.ae);
  add(m.head_early, g.head_early, "head", lr.head);
  add(m.head_text, g.head_text, "head.text", head_lr(Modality::kText));
  add(m.head_cov, g.head_cov, "head.cov", head_lr(Modality::kCov));
  add(m.head_ge, g.head_ge, "head.ge", head_lr(Modality::kGe));
  if (!m.gates.cov_logit.empty()) out.push_back({"gates.cov", m.gates.cov_logit, g.gates.cov_logit, lr.gates});
  if (!m.gates.ge_logit.empty()) out.push_back({"gates.ge", m.gates.ge_logit, g.gates.ge_logit, lr.gates});
  return out;
}

// ---------------------------------------------------------------------------
// Batches

/// Distillation target of one sample, reduced to what the adapter scores.
struct TextTarget {
  std::size_t bucket = 0;        // percent / 5
  std::vector<bool> vprob;       // per whitespace token of the target sequence
  std::vector<bool> number;
  std::size_t number_token = 0;  // first token overlapping the digits
  bool included = true;          // false when calibration correction masks it
};

inline TextTarget make_text_target(const std::string& explanation, int percent) {
  const auto seq = build_target_sequence(explanation, percent);
  const auto toks = whitespace_tokens(seq.text);
  const auto masks = token_masks(seq, toks);
  TextTarget t;
  t.bucket = static_cast<std::size_t>(percent / 5);
  t.vprob = masks.vprob;
  t.number = masks.number;
  const auto it = std::find(t.number.begin(), t.number.end(), true);
  if (it == t.number.end()) throw ValidationError("make_text_target: number span covers no token");
  t.number_token = static_cast<std::size_t>(it - t.number.begin());
  return t;
}

struct Batch {
  Matrix text, cov, ge;  // 0 x 0 when the modality is unused
  std::vector<Outcome> outcomes;
  std::vector<const TextTarget*> targets;  // null when the sample has none
  std::size_t size() const { return outcomes.size(); }
};

struct ModelMasks {
  DropoutMasks head_early, head_text, head_cov, head_ge, encoder, decoder;
};

inline ModelMasks sample_model_masks(const Model& m, std::size_t n, Rng& rng) {
  ModelMasks k;
  auto draw = [&](const Mlp& p, DropoutMasks& d) {
    if (!p.layers.empty()) d = sample_dropout(p, n, rng);
  };
  draw(m.ae.encoder, k.encoder);
  draw(m.ae.decoder, k.decoder);
  draw(m.head_early, k.head_early);
  draw(m.head_text, k.head_text);
  draw(m.head_cov, k.head_cov);
  draw(m.head_ge, k.head_ge);
  return k;
}

// ---------------------------------------------------------------------------
// Forward

struct ForwardPass {
  MlpCache proj, enc, dec, early, text, cov, ge, verbal;
  Matrix P, Z, R, fused_in, o_text, o_cov, o_ge, out, V;
};

namespace detail {
inline const DropoutMasks* mask_of(const ModelMasks* k, const DropoutMasks ModelMasks::*field) {
  return k ? &(k->*field) : nullptr;
}
}  // namespace detail

/// Fills f.out (N x K). Reconstruction and verbalizer logits are computed on
/// request.
inline void forward(const Model& m, const Batch& b, ForwardPass& f, const ModelMasks* masks = nullptr,
                    bool reconstruct = false, bool verbalize = false) {
  using detail::mask_of;
  if (b.size() == 0) throw ValidationError("forward: empty batch");
  if (m.has(Modality::kText)) {
    f.P = mlp_forward(m.text_proj, b.text, &f.proj);
    if (verbalize) f.V = mlp_forward(m.verbalizer, f.P, &f.verbal);
  }
  if (m.has(Modality::kGe)) {
    f.Z = mlp_forward(m.ae.encoder, b.ge, &f.enc, mask_of(masks, &ModelMasks::encoder));
    if (reconstruct) f.R = mlp_forward(m.ae.decoder, f.Z, &f.dec, mask_of(masks, &ModelMasks::decoder));
  }
  const Matrix* P = m.has(Modality::kText) ? &f.P : nullptr;
  const Matrix* C = m.has(Modality::kCov) ? &b.cov : nullptr;
  const Matrix* Z = m.has(Modality::kGe) ? &f.Z : nullptr;
  if (m.late()) {
    ModalityOutputs o;
    if (P) o.text = &(f.o_text = mlp_forward(m.head_text, *P, &f.text, mask_of(masks, &ModelMasks::head_text)));
    if (C) o.cov = &(f.o_cov = mlp_forward(m.head_cov, *C, &f.cov, mask_of(masks, &ModelMasks::head_cov)));
    if (Z) o.ge = &(f.o_ge = mlp_forward(m.head_ge, *Z, &f.ge, mask_of(masks, &ModelMasks::head_ge)));
    f.out = late_fuse(o, m.gates);
  } else {
    f.fused_in = early_fuse_rows(P, C, Z);
    f.out = mlp_forward(m.head_early, f.fused_in, &f.early, mask_of(masks, &ModelMasks::head_early));
  }
}

/// Evaluation-mode head outputs.
inline Matrix predict(const Model& m, const Batch& b) {
  ForwardPass f;
  forward(m, b, f);
  return f.out;
}

/// Evaluation-mode verbalizer logits (N x 21).
inline Matrix verbalizer_logits(const Model& m, const Matrix& text) {
  if (m.verbalizer.layers.empty()) throw ValidationError("verbalizer_logits: model has no text pathway");
  return mlp_forward(m.verbalizer, mlp_forward(m.text_proj, text));
}

/// Student's rounded 3-year percentage: 5 * argmax bucket (first on ties).
inline int student_percent(std::span<const double> logits) {
  return static_cast<int>(std::max_element(logits.begin(), logits.end()) - logits.begin()) * 5;
}

// ---------------------------------------------------------------------------
// Objective

struct LossOptions {
  double alpha = 0.0;
  double beta = 0.0;
  double text_weight = 2.0;
  double number_weight = 5.0;
  const TimeGrid* grid = nullptr;  // discrete head only
};

inline LossOptions loss_options(const RunConfig& c, const TimeGrid* grid) {
  return {c.alpha_value(), c.beta_value(), c.text_weight, c.number_weight, grid};
}

struct LossBreakdown {
  double total = 0.0;
  double surv = 0.0;
  double ae = 0.0;
  double text = 0.0;
  std::size_t text_included = 0;
  std::size_t text_masked = 0;
};

inline std::string describe(const LossBreakdown& l) {
  return "total=" + format_double(l.total) + " surv=" + format_double(l.surv) + " ae=" + format_double(l.ae) +
         " text=" + format_double(l.text) + " text_samples=" + std::to_string(l.text_included);
}

/// Survival loss of head outputs. Cox batches must contain an event.
inline MatrixLoss survival_loss(HeadKind head, const Matrix& out, std::span<const Outcome> outcomes,
                                const TimeGrid* grid) {
  if (head == HeadKind::kDiscrete) {
    if (!grid) throw ValidationError("survival_loss: discrete head needs a time grid");
    return discrete_loss(out, build_discrete_targets(outcomes, *grid));
  }
  const auto v = cox_loss(out.data, outcomes);
  MatrixLoss r;
  r.value = v.value;
  r.grad = Matrix(out.rows, 1);
  r.grad.data = v.grad;
  return r;
}

/// Value of the composed objective; accumulates gradients into `grad` when
/// given. `masks` fixes dropout (null runs in evaluation mode).
inline LossBreakdown total_loss(const Model& m, const Batch& b, const LossOptions& opt, Model* grad = nullptr,
                                const ModelMasks* masks = nullptr) {
  const bool has_ge = m.has(Modality::kGe);
  const bool text_loss = opt.beta > 0.0 && m.has(Modality::kText) && !m.verbalizer.layers.empty();
  ForwardPass f;
  forward(m, b, f, masks, has_ge, text_loss);

  LossBreakdown lb;
  const auto surv = survival_loss(m.head, f.out, b.outcomes, opt.grid);
  lb.surv = surv.value;

  ReconstructionLoss rec;
  if (has_ge) {
    rec = reconstruction_loss(f.R, b.ge);
    lb.ae = rec.value;
  }

  Matrix dV;
  if (text_loss) {
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < b.size(); ++i)
      if (b.targets.size() == b.size() && b.targets[i]) {
        if (b.targets[i]->included) rows.push_back(i);
        else ++lb.text_masked;
      }
    lb.text_included = rows.size();
    if (grad) dV = Matrix(f.V.rows, f.V.cols);
    for (std::size_t i : rows) {
      const TextTarget& t = *b.targets[i];
      const auto v = f.V.row(i);
      const double mx = *std::max_element(v.begin(), v.end());
      double z = 0.0;
      for (double x : v) z += std::exp(x - mx);
      const double lse = mx + std::log(z);
      std::vector<double> nll(t.vprob.size(), 0.0);
      nll[t.number_token] = lse - v[t.bucket];
      const auto tl = weighted_text_loss(nll, t.vprob, t.number, opt.text_weight, opt.number_weight);
      lb.text += tl.value;
      if (grad) {
        const double coef = opt.beta * tl.grad[t.number_token] / static_cast<double>(rows.size());
        for (std::size_t k = 0; k < v.size(); ++k)
          dV(i, k) = coef * (std::exp(v[k] - lse) - (k == t.bucket ? 1.0 : 0.0));
      }
    }
    if (!rows.empty()) lb.text /= static_cast<double>(rows.size());
  }

  lb.total = lb.surv + opt.alpha * lb.ae + opt.beta * lb.text;
  if (!std::isfinite(lb.total)) throw NumericError("non-finite loss: " + describe(lb));
  if (!grad) return lb;

  // backward
  Matrix dP, dZ;
  if (m.late()) {
    ModalityOutputs o;
    if (m.has(Modality::kText)) o.text = &f.o_text;
    if (m.has(Modality::kCov)) o.cov = &f.o_cov;
    if (has_ge) o.ge = &f.o_ge;
    const auto d = late_fuse_backward(surv.grad, o, m.gates);
    for (std::size_t k = 0; k < d.cov_logit.size(); ++k) grad->gates.cov_logit[k] += d.cov_logit[k];
    for (std::size_t k = 0; k < d.ge_logit.size(); ++k) grad->gates.ge_logit[k] += d.ge_logit[k];
    if (o.text) mlp_backward(m.head_text, f.text, d.text, grad->head_text, &dP);
    if (o.cov) mlp_backward(m.head_cov, f.cov, d.cov, grad->head_cov);
    if (o.ge) mlp_backward(m.head_ge, f.ge, d.ge, grad->head_ge, &dZ);
  } else {
    Matrix dF;
    const bool need_input = m.has(Modality::kText) || has_ge;
    mlp_backward(m.head_early, f.early, surv.grad, grad->head_early, need_input ? &dF : nullptr);
    std::size_t off = 0;
    auto take = [&](std::size_t width, Matrix& dst) {
      dst = Matrix(dF.rows, width);
      for (std::size_t r = 0; r < dF.rows; ++r)
        for (std::size_t c = 0; c < width; ++c) dst(r, c) = dF(r, off + c);
      off += width;
    };
    if (m.has(Modality::kText)) take(f.P.cols, dP);
    if (m.has(Modality::kCov)) off += b.cov.cols;
    if (has_ge) take(f.Z.cols, dZ);
  }

  if (has_ge) {
    if (opt.alpha > 0.0) {
      for (auto& x : rec.grad.data) x *= opt.alpha;
      Matrix dZr;
      mlp_backward(m.ae.decoder, f.dec, rec.grad, grad->ae.decoder, &dZr);
      for (std::size_t k = 0; k < dZ.data.size(); ++k) dZ.data[k] += dZr.data[k];
    }
    mlp_backward(m.ae.encoder, f.enc, dZ, grad->ae.encoder);
  }
  if (m.has(Modality::kText)) {
    if (text_loss && lb.text_included > 0) {
      Matrix dPv;
      mlp_backward(m.verbalizer, f.verbal, dV, grad->verbalizer, &dPv);
      for (std::size_t k = 0; k < dP.data.size(); ++k) dP.data[k] += dPv.data[k];
    }
    mlp_backward(m.text_proj, f.proj, dP, grad->text_proj);
  }
  return lb;
}

// ---------------------------------------------------------------------------
// Checkpoint payload

inline void append_model(Checkpoint& c, const Model& m) {
  auto add = [&](const Mlp& p, const char* name) {
    if (!p.layers.empty()) append_mlp(c, p, name);
  };
  add(m.text_proj, "text_proj");
  add(m.verbalizer, "verbalizer");
  add(m.ae.encoder, "ae.encoder");
  add(m.ae.decoder, "ae.decoder");
  add(m.head_early, "head");
  add(m.head_text, "head.text");
  add(m.head_cov, "head.cov");
  add(m.head_ge, "head.ge");
  if (!m.gates.cov_logit.empty()) c.tensors.push_back({"gates.cov", m.gates.cov_logit.size(), 1, m.gates.cov_logit});
  if (!m.gates.ge_logit.empty()) c.tensors.push_back({"gates.ge", m.gates.ge_logit.size(), 1, m.gates.ge_logit});
}

/// Loads weights into a model already shaped by make_model.
inline void load_model(const Checkpoint& c, Model& m) {
  auto get = [&](Mlp& p, const char* name) {
    if (!p.layers.empty()) load_mlp(c, p, name);
  };
  get(m.text_proj, "text_proj");
  get(m.verbalizer, "verbalizer");
  get(m.ae.encoder, "ae.encoder");
  get(m.ae.decoder, "ae.decoder");
  get(m.head_early, "head");
  get(m.head_text, "head.text");
  get(m.head_cov, "head.cov");
  get(m.head_ge, "head.ge");
  auto gate = [&](std::vector<double>& v, const char* name) {
    if (v.empty()) return;
    const auto& t = c.at(name);
    if (t.data.size() != v.size()) throw ValidationError(std::string("checkpoint tensor ") + name + " has the wrong shape");
    v = t.data;
  };
  gate(m.gates.cov_logit, "gates.cov");
  gate(m.gates.ge_logit, "gates.ge");
}

}  // namespace survfuse
