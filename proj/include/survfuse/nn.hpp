// Feed-forward networks with hand-written backward passes, AdamW, a central
// finite-difference gradient checker and the binary checkpoint format.
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "core.hpp"

namespace survfuse {

struct DenseLayer {
  Matrix weight;              // out x in
  std::vector<double> bias;   // out
};

/// ReLU multilayer perceptron; the last layer is linear. `dropout[l]` applies
/// (inverted) after hidden layer l's activation.
struct Mlp {
  std::vector<DenseLayer> layers;
  std::vector<double> dropout;

  std::size_t in_dim() const { return layers.empty() ? 0 : layers.front().weight.cols; }
  std::size_t out_dim() const { return layers.empty() ? 0 : layers.back().weight.rows; }
  std::size_t num_params() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.weight.data.size() + l.bias.size();
    return n;
  }
};

/// Layer widths in -> hidden... -> out, uniform He fan-in init, zero biases.
inline Mlp make_mlp(std::size_t in, std::span<const std::size_t> hidden, std::size_t out, double dropout, Rng& rng) {
  if (in == 0 || out == 0) throw ValidationError("make_mlp: zero-width input or output");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ValidationError("make_mlp: dropout must lie in [0,1)");
  Mlp m;
  std::size_t prev = in;
  auto add = [&](std::size_t width) {
    DenseLayer l;
    l.weight = Matrix(width, prev);
    const double bound = std::sqrt(6.0 / static_cast<double>(prev));
    for (auto& w : l.weight.data) w = rng.uniform(-bound, bound);
    l.bias.assign(width, 0.0);
    m.layers.push_back(std::move(l));
    prev = width;
  };
  for (std::size_t h : hidden) {
    if (h == 0) throw ValidationError("make_mlp: zero-width hidden layer");
    add(h);
    m.dropout.push_back(dropout);
  }
  add(out);
  return m;
}

/// Same shapes as `m`, all zeros. Also used as a gradient accumulator.
inline Mlp zeros_like(const Mlp& m) {
  Mlp z = m;
  for (auto& l : z.layers) {
    std::fill(l.weight.data.begin(), l.weight.data.end(), 0.0);
    std::fill(l.bias.begin(), l.bias.end(), 0.0);
  }
  return z;
}

inline void set_zero(Mlp& m) {
  for (auto& l : m.layers) {
    std::fill(l.weight.data.begin(), l.weight.data.end(), 0.0);
    std::fill(l.bias.begin(), l.bias.end(), 0.0);
  }
}

/// Per-hidden-layer dropout masks for a batch; entries are 0 or 1/(1-p).
struct DropoutMasks {
  std::vector<Matrix> masks;
};

inline DropoutMasks sample_dropout(const Mlp& m, std::size_t batch, Rng& rng) {
  DropoutMasks d;
  for (std::size_t l = 0; l + 1 < m.layers.size(); ++l) {
    const double p = m.dropout[l];
    Matrix mask(batch, m.layers[l].weight.rows, 1.0);
    if (p > 0.0)
      for (auto& x : mask.data) x = rng.uniform() < p ? 0.0 : 1.0 / (1.0 - p);
    d.masks.push_back(std::move(mask));
  }
  return d;
}

struct MlpCache {
  std::vector<Matrix> inputs;  // input to each layer
  std::vector<Matrix> pre;     // pre-activation of each hidden layer
  DropoutMasks masks;          // empty in evaluation mode
};

/// Batch forward pass, rows of `x` are samples. Dropout is applied only when
/// `masks` is given. Fills `cache` for a later backward pass.
inline Matrix mlp_forward(const Mlp& m, const Matrix& x, MlpCache* cache = nullptr, const DropoutMasks* masks = nullptr) {
  if (m.layers.empty()) throw ValidationError("mlp_forward: empty network");
  if (x.cols != m.in_dim())
    throw ValidationError("mlp_forward: input width " + std::to_string(x.cols) + ", expected " + std::to_string(m.in_dim()));
  if (masks && masks->masks.size() + 1 != m.layers.size()) throw ValidationError("mlp_forward: dropout mask count mismatch");
  if (cache) {
    cache->inputs.clear();
    cache->pre.clear();
    cache->masks = masks ? *masks : DropoutMasks{};
  }
  Matrix cur = x;
  for (std::size_t l = 0; l < m.layers.size(); ++l) {
    const auto& layer = m.layers[l];
    const std::size_t n = cur.rows, out = layer.weight.rows, in = layer.weight.cols;
    Matrix z(n, out);
    for (std::size_t r = 0; r < n; ++r) {
      const double* xr = cur.data.data() + r * in;
      for (std::size_t o = 0; o < out; ++o) {
        const double* wo = layer.weight.data.data() + o * in;
        double s = layer.bias[o];
        for (std::size_t k = 0; k < in; ++k) s += wo[k] * xr[k];
        z(r, o) = s;
      }
    }
    if (cache) cache->inputs.push_back(std::move(cur));
    if (l + 1 == m.layers.size()) return z;
    Matrix a(n, out);
    for (std::size_t i = 0; i < z.data.size(); ++i) a.data[i] = z.data[i] > 0.0 ? z.data[i] : 0.0;
    if (masks) {
      const auto& mk = masks->masks[l];
      if (!mk.same_shape(a)) throw ValidationError("mlp_forward: dropout mask shape mismatch");
      for (std::size_t i = 0; i < a.data.size(); ++i) a.data[i] *= mk.data[i];
    }
    if (cache) cache->pre.push_back(std::move(z));
    cur = std::move(a);
  }
  return cur;  // unreachable
}

/// Accumulates parameter gradients into `grad` (same shapes as `m`) and
/// optionally writes the gradient with respect to the input.
inline void mlp_backward(const Mlp& m, const MlpCache& cache, const Matrix& dout, Mlp& grad, Matrix* dinput = nullptr) {
  if (cache.inputs.size() != m.layers.size() || cache.pre.size() + 1 != m.layers.size())
    throw ValidationError("mlp_backward: stale cache");
  if (dout.cols != m.out_dim() || dout.rows != cache.inputs.front().rows)
    throw ValidationError("mlp_backward: upstream gradient shape mismatch");
  Matrix delta = dout;
  for (std::size_t li = m.layers.size(); li-- > 0;) {
    const auto& layer = m.layers[li];
    auto& g = grad.layers[li];
    const Matrix& in = cache.inputs[li];
    const std::size_t n = delta.rows, out = layer.weight.rows, width = layer.weight.cols;
    if (in.cols != width) throw ValidationError("mlp_backward: stale cache");
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t o = 0; o < out; ++o) {
        const double d = delta(r, o);
        if (d == 0.0) continue;
        g.bias[o] += d;
        double* go = g.weight.data.data() + o * width;
        const double* xr = in.data.data() + r * width;
        for (std::size_t k = 0; k < width; ++k) go[k] += d * xr[k];
      }
    if (li == 0 && dinput == nullptr) break;
    Matrix dx(n, width);
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t o = 0; o < out; ++o) {
        const double d = delta(r, o);
        if (d == 0.0) continue;
        const double* wo = layer.weight.data.data() + o * width;
        double* dxr = dx.data.data() + r * width;
        for (std::size_t k = 0; k < width; ++k) dxr[k] += d * wo[k];
      }
    if (li == 0) {
      *dinput = std::move(dx);
      break;
    }
    // back through dropout and ReLU of the previous hidden layer
    const Matrix& z = cache.pre[li - 1];
    const Matrix* mk = cache.masks.masks.empty() ? nullptr : &cache.masks.masks[li - 1];
    for (std::size_t i = 0; i < dx.data.size(); ++i) {
      if (z.data[i] <= 0.0) dx.data[i] = 0.0;
      else if (mk) dx.data[i] *= mk->data[i];
    }
    delta = std::move(dx);
  }
}

// ---------------------------------------------------------------------------
// Parameter registry

/// A named parameter tensor with its gradient buffer and learning rate.
struct ParamRef {
  std::string name;
  std::span<double> values;
  std::span<double> grads;
  double lr = 1e-3;
};

inline void collect_params(Mlp& m, Mlp& g, const std::string& prefix, double lr, std::vector<ParamRef>& out) {
  for (std::size_t l = 0; l < m.layers.size(); ++l) {
    const std::string base = prefix + "." + std::to_string(l);
    out.push_back({base + ".weight", m.layers[l].weight.data, g.layers[l].weight.data, lr});
    out.push_back({base + ".bias", m.layers[l].bias, g.layers[l].bias, lr});
  }
}

// ---------------------------------------------------------------------------
// AdamW

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

struct AdamWState {
  AdamWConfig config;
  std::uint64_t step = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
};

/// One decoupled-weight-decay Adam step over every registered tensor:
///   p <- p (1 - lr wd);  p <- p - lr mhat / (sqrt(vhat) + eps)
/// Throws NumericError naming the tensor when a gradient is non-finite; no
/// parameter is touched in that case.
inline void adamw_step(std::span<const ParamRef> params, AdamWState& state) {
  for (const auto& p : params) {
    if (p.values.size() != p.grads.size()) throw ValidationError("adamw_step: gradient shape mismatch for " + p.name);
    if (!all_finite(p.grads)) throw NumericError("adamw_step: non-finite gradient in " + p.name);
  }
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.emplace_back(p.values.size(), 0.0);
      state.v.emplace_back(p.values.size(), 0.0);
    }
  }
  if (state.m.size() != params.size()) throw ValidationError("adamw_step: optimizer state does not match parameters");
  const auto& c = state.config;
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(c.beta1, t);
  const double bc2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& p = params[i];
    auto& m = state.m[i];
    auto& v = state.v[i];
    if (m.size() != p.values.size()) throw ValidationError("adamw_step: moment shape mismatch for " + p.name);
    const double decay = 1.0 - p.lr * c.weight_decay;
    for (std::size_t k = 0; k < p.values.size(); ++k) {
      const double g = p.grads[k];
      m[k] = c.beta1 * m[k] + (1.0 - c.beta1) * g;
      v[k] = c.beta2 * v[k] + (1.0 - c.beta2) * g * g;
      const double mhat = m[k] / bc1;
      const double vhat = v[k] / bc2;
      p.values[k] = p.values[k] * decay - p.lr * mhat / (std::sqrt(vhat) + c.eps);
    }
  }
}

// ---------------------------------------------------------------------------
// Finite-difference gradient check

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t probes = 0;
  std::string worst;  // "<tensor>[<index>]"
};

/// Compares the gradients currently stored in `params` with central
/// differences of `loss` at `probes` sampled coordinates (all coordinates
/// when probes >= total). Relative error is |a - n| / max(|a|, |n|, floor).
inline GradCheckResult finite_difference_check(const std::function<double()>& loss, std::span<const ParamRef> params,
                                               std::size_t probes, double h, Rng& rng, double floor = 1e-6) {
  std::vector<std::pair<std::size_t, std::size_t>> coords;
  std::size_t total = 0;
  for (const auto& p : params) total += p.values.size();
  if (probes >= total) {
    for (std::size_t i = 0; i < params.size(); ++i)
      for (std::size_t k = 0; k < params[i].values.size(); ++k) coords.emplace_back(i, k);
  } else {
    for (std::size_t s = 0; s < probes; ++s) {
      std::size_t flat = rng.index(total), i = 0;
      while (flat >= params[i].values.size()) flat -= params[i].values.size(), ++i;
      coords.emplace_back(i, flat);
    }
  }
  GradCheckResult res;
  for (const auto& [i, k] : coords) {
    const auto& p = params[i];
    const double analytic = p.grads[k];
    const double orig = p.values[k];
    p.values[k] = orig + h;
    const double up = loss();
    p.values[k] = orig - h;
    const double down = loss();
    p.values[k] = orig;
    const double numeric = (up - down) / (2.0 * h);
    const double rel = std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
    if (res.probes == 0 || rel > res.max_rel_error) {
      res.max_rel_error = rel;
      res.worst = p.name + "[" + std::to_string(k) + "]";
    }
    ++res.probes;
  }
  return res;
}

// ---------------------------------------------------------------------------
// Checkpoints

inline constexpr std::string_view kCheckpointMagic = "SVCK";
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedTensor {
  std::string name;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;
};

/// Versioned binary checkpoint: magic "SVCK", u32 version, u64 seed, u64 step,
/// u32 metadata count + (key, value) strings, u32 tensor count + per tensor
/// (name, u32 rows, u32 cols, rows*cols little-endian f64).
struct Checkpoint {
  std::uint64_t seed = 0;
  std::uint64_t step = 0;
  std::map<std::string, std::string> meta;
  std::vector<NamedTensor> tensors;

  const NamedTensor* find(std::string_view name) const {
    for (const auto& t : tensors)
      if (t.name == name) return &t;
    return nullptr;
  }
  const NamedTensor& at(std::string_view name) const {
    if (const auto* t = find(name)) return *t;
    throw ValidationError("checkpoint has no tensor " + std::string(name));
  }
};

inline std::string serialize_checkpoint(const Checkpoint& c) {
  BinaryWriter w;
  w.bytes(kCheckpointMagic);
  w.u32(kCheckpointVersion);
  w.u64(c.seed);
  w.u64(c.step);
  w.u32(static_cast<std::uint32_t>(c.meta.size()));
  for (const auto& [k, v] : c.meta) {
    w.str(k);
    w.str(v);
  }
  w.u32(static_cast<std::uint32_t>(c.tensors.size()));
  for (const auto& t : c.tensors) {
    if (t.data.size() != t.rows * t.cols) throw ValidationError("checkpoint tensor " + t.name + " has inconsistent shape");
    w.str(t.name);
    w.u32(static_cast<std::uint32_t>(t.rows));
    w.u32(static_cast<std::uint32_t>(t.cols));
    for (double x : t.data) w.f64(x);
  }
  return w.buffer();
}

inline Checkpoint deserialize_checkpoint(std::string bytes, const std::string& source = "checkpoint") {
  BinaryReader r(std::move(bytes), source);
  if (r.bytes(4) != kCheckpointMagic) throw ValidationError(source + ": bad magic, expected SVCK");
  if (const auto v = r.u32(); v != kCheckpointVersion)
    throw ValidationError(source + ": unsupported checkpoint version " + std::to_string(v));
  Checkpoint c;
  c.seed = r.u64();
  c.step = r.u64();
  const auto nmeta = r.u32();
  for (std::uint32_t i = 0; i < nmeta; ++i) {
    auto k = r.str();
    c.meta[k] = r.str();
  }
  const auto nt = r.u32();
  for (std::uint32_t i = 0; i < nt; ++i) {
    NamedTensor t;
    t.name = r.str();
    t.rows = r.u32();
    t.cols = r.u32();
    t.data.resize(t.rows * t.cols);
    for (auto& x : t.data) x = r.f64();
    c.tensors.push_back(std::move(t));
  }
  if (!r.at_end()) throw ValidationError(source + ": trailing bytes");
  return c;
}

inline void write_checkpoint(const std::string& path, const Checkpoint& c) { write_file(path, serialize_checkpoint(c)); }
inline Checkpoint read_checkpoint(const std::string& path) { return deserialize_checkpoint(read_file(path), path); }

inline void append_mlp(Checkpoint& c, const Mlp& m, const std::string& prefix) {
  for (std::size_t l = 0; l < m.layers.size(); ++l) {
    const auto& L = m.layers[l];
    const std::string base = prefix + "." + std::to_string(l);
    c.tensors.push_back({base + ".weight", L.weight.rows, L.weight.cols, L.weight.data});
    c.tensors.push_back({base + ".bias", L.bias.size(), 1, L.bias});
  }
}

/// Copies tensors named by `prefix` into an already-shaped network.
inline void load_mlp(const Checkpoint& c, Mlp& m, const std::string& prefix) {
  for (std::size_t l = 0; l < m.layers.size(); ++l) {
    auto& L = m.layers[l];
    const std::string base = prefix + "." + std::to_string(l);
    const auto& w = c.at(base + ".weight");
    const auto& b = c.at(base + ".bias");
    if (w.rows != L.weight.rows || w.cols != L.weight.cols || b.data.size() != L.bias.size())
      throw ValidationError("checkpoint tensor " + base + " has the wrong shape");
    L.weight.data = w.data;
    L.bias = b.data;
  }
}

}  // namespace survfuse
