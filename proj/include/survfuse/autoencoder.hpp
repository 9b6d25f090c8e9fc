// Gene-expression autoencoder: encoder/decoder MLP pair and the per-gene
// mean squared reconstruction loss.
#pragma once

#include <algorithm>
#include <vector>

#include "core.hpp"
#include "nn.hpp"

namespace survfuse {

struct Autoencoder {
  Mlp encoder;
  Mlp decoder;
  std::size_t latent_dim() const { return encoder.out_dim(); }
  std::size_t input_dim() const { return encoder.in_dim(); }
};

/// Encoder d_g -> layers... -> latent; decoder mirrors it back to d_g.
inline Autoencoder make_autoencoder(std::size_t d_g, std::span<const std::size_t> layers, std::size_t latent,
                                    double dropout, Rng& rng) {
  Autoencoder ae;
  ae.encoder = make_mlp(d_g, layers, latent, dropout, rng);
  std::vector<std::size_t> rev(layers.rbegin(), layers.rend());
  ae.decoder = make_mlp(latent, rev, d_g, dropout, rng);
  return ae;
}

/// Latent codes (evaluation mode, no dropout).
inline Matrix encode(const Autoencoder& ae, const Matrix& x_ge) {
  if (x_ge.cols != ae.input_dim()) throw ValidationError("encode: gene-expression width mismatch");
  return mlp_forward(ae.encoder, x_ge);
}

struct ReconstructionLoss {
  double value = 0.0;
  Matrix grad;  // dL / d reconstruction
};

/// L = (1/N) sum_i ||recon_i - x_i||^2 / d_g
inline ReconstructionLoss reconstruction_loss(const Matrix& recon, const Matrix& x) {
  if (!recon.same_shape(x)) throw ValidationError("reconstruction_loss: shape mismatch");
  if (x.rows == 0) throw ValidationError("reconstruction_loss: empty batch");
  ReconstructionLoss out;
  out.grad = Matrix(x.rows, x.cols);
  const double scale = 1.0 / (static_cast<double>(x.rows) * static_cast<double>(x.cols));
  for (std::size_t r = 0; r < x.rows; ++r) {
    double sq = 0.0;
    for (std::size_t c = 0; c < x.cols; ++c) {
      const double d = recon(r, c) - x(r, c);
      sq += d * d;
      out.grad(r, c) = 2.0 * d * scale;
    }
    out.value += sq / static_cast<double>(x.cols);
  }
  out.value /= static_cast<double>(x.rows);
  return out;
}

inline double reconstruction_loss(const Autoencoder& ae, const Matrix& x_ge) {
  return reconstruction_loss(mlp_forward(ae.decoder, encode(ae, x_ge)), x_ge).value;
}

}  // namespace survfuse
