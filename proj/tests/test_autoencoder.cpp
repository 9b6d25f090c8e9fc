#include <gtest/gtest.h>

#include <survfuse/autoencoder.hpp>
#include <survfuse/nn.hpp>

#include "support.hpp"

using namespace survfuse;

TEST(Autoencoder, ZeroEncoderGivesZeroCode) {
  Rng rng(1);
  auto ae = make_autoencoder(5, std::vector<std::size_t>{4}, 2, 0.0, rng);
  set_zero(ae.encoder);
  for (double v : encode(ae, testkit::random_matrix(3, 5, rng)).data) EXPECT_EQ(v, 0.0);
}

TEST(Autoencoder, IdentityEncoder) {
  Rng rng(1);
  auto ae = make_autoencoder(3, {}, 3, 0.0, rng);
  set_zero(ae.encoder);
  for (std::size_t i = 0; i < 3; ++i) ae.encoder.layers[0].weight(i, i) = 1.0;
  const auto x = testkit::random_matrix(2, 3, rng);
  EXPECT_EQ(encode(ae, x).data, x.data);
}

TEST(Autoencoder, ShapesMirror) {
  Rng rng(2);
  const std::vector<std::size_t> layers = {16, 8};
  auto ae = make_autoencoder(20, layers, 4, 0.3, rng);
  EXPECT_EQ(ae.latent_dim(), 4u);
  EXPECT_EQ(ae.input_dim(), 20u);
  ASSERT_EQ(ae.decoder.layers.size(), 3u);
  EXPECT_EQ(ae.decoder.layers[0].weight.rows, 8u);
  EXPECT_EQ(ae.decoder.layers[1].weight.rows, 16u);
  EXPECT_EQ(ae.decoder.out_dim(), 20u);
}

TEST(ReconstructionLoss, ClosedFormCases) {
  const auto x = Matrix::from_rows({{1, 0}});
  EXPECT_DOUBLE_EQ(reconstruction_loss(Matrix(1, 2), x).value, 0.5);
  EXPECT_EQ(reconstruction_loss(x, x).value, 0.0);
}

TEST(ReconstructionLoss, MatchesSumOfSquaresAndGradient) {
  Rng rng(4);
  const auto x = testkit::random_matrix(6, 5, rng);
  auto r = testkit::random_matrix(6, 5, rng);
  double ss = 0.0;
  for (std::size_t i = 0; i < x.data.size(); ++i) ss += (r.data[i] - x.data[i]) * (r.data[i] - x.data[i]);
  const auto l = reconstruction_loss(r, x);
  EXPECT_NEAR(l.value, ss / 30.0, 1e-14);
  std::vector<ParamRef> p = {{"r", r.data, std::span<double>(const_cast<double*>(l.grad.data.data()), l.grad.data.size()), 1}};
  EXPECT_LT(finite_difference_check([&] { return reconstruction_loss(r, x).value; }, p, 100, 1e-6, rng).max_rel_error,
            1e-6);
}

TEST(ReconstructionLoss, ShapeMismatchRejected) {
  EXPECT_THROW(reconstruction_loss(Matrix(1, 2), Matrix(1, 3)), ValidationError);
}
