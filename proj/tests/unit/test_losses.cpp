#include <gtest/gtest.h>

#include "abhe/error.hpp"
#include "abhe/geometry.hpp"
#include "abhe/losses.hpp"
#include "abhe/ops.hpp"
#include "oracles.hpp"

using namespace abhe;

namespace {

Tensor smooth_image(int64_t n, double fx, double fy, double phase) {
  std::vector<float> v(static_cast<std::size_t>(n * n));
  for (int64_t y = 0; y < n; ++y)
    for (int64_t x = 0; x < n; ++x)
      v[y * n + x] = static_cast<float>(0.5 + 0.25 * std::sin(fx * x + phase) * std::cos(fy * y - phase));
  return Tensor::from_vector({1, n, n, 1}, v);
}

}  // namespace

TEST(Losses, MaskedL1MatchesOracle) {
  std::mt19937_64 rng(1);
  const Tensor a = oracle::random_tensor({1, 10, 10, 1}, rng), b = oracle::random_tensor({1, 10, 10, 1}, rng);
  geometry::CornerOffsets o{};
  std::uniform_real_distribution<float> u(-2.0f, 2.0f);
  for (float& v : o) v = u(rng);
  const geometry::Homography h = geometry::homography_from_offsets(o, 10, 10);
  const auto ov = oracle::overlap(oracle::values(a), oracle::values(b), 10, 10, h.m.data());
  double ref = 0.0;
  for (std::size_t i = 0; i < ov.mask.size(); ++i) ref += std::fabs(ov.source[i] - ov.target[i]);
  ref /= static_cast<double>(ov.mask.size());
  EXPECT_NEAR(masked_l1(a, b, h.to_tensor()).item(), ref, 1e-5);
}

TEST(Losses, MaskedL1VanishesAtTrueTranslation) {
  const Tensor a = smooth_image(16, 0.5, 0.3, 0.2);
  // b(x) = a(x - 1): b pulled back through x -> x + 1 equals a wherever it exists.
  std::vector<float> bv(256, 0.0f);
  for (int64_t y = 0; y < 16; ++y)
    for (int64_t x = 1; x < 16; ++x) bv[y * 16 + x] = a.at({0, y, x - 1, 0});
  const Tensor b = Tensor::from_vector({1, 16, 16, 1}, bv);
  const Tensor right = geometry::Homography::translation(1, 0).to_tensor();
  const Tensor wrong = geometry::Homography::translation(-1, 0).to_tensor();
  EXPECT_LT(masked_l1(a, b, right).item(), 1e-6);
  EXPECT_GT(masked_l1(a, b, wrong).item(), 1e-2);
}

TEST(Losses, PixelLossWeightsStages) {
  const Tensor a = smooth_image(16, 0.5, 0.3, 0.2), b = smooth_image(16, 0.5, 0.3, 0.9);
  const Tensor h1 = geometry::Homography::translation(0.5, 0).to_tensor();
  const Tensor h2 = geometry::Homography::translation(0, 0.5).to_tensor();
  const Tensor h3 = geometry::Homography().to_tensor();
  const std::vector<Tensor> hs = {h1, h2, h3};
  const std::vector<float> omega = {1, 4, 16};
  const double expect = masked_l1(a, b, h1).item() + 4 * masked_l1(a, b, h2).item() + 16 * masked_l1(a, b, h3).item();
  EXPECT_NEAR(pixel_loss(a, b, hs, omega).item(), expect, 1e-5);
  const std::vector<float> short_omega = {1, 4};
  EXPECT_THROW(pixel_loss(a, b, hs, short_omega), ShapeError);
}

TEST(Losses, TotalLossMix) {
  EXPECT_FLOAT_EQ(total_loss(Tensor::scalar(2), Tensor::scalar(3), 1.0f, 10.0f).item(), 32.0f);
  LossWeights w;
  EXPECT_NO_THROW(w.validate());
  w.omega[1] = -1;
  EXPECT_THROW(w.validate(), ConfigError);
}

TEST(Losses, ContentLossIsMaskedL1OnFeatures) {
  std::mt19937_64 rng(2);
  const Tensor za = oracle::random_tensor({2, 8, 8, 5}, rng), zb = oracle::random_tensor({2, 8, 8, 5}, rng);
  const Tensor h = concat({geometry::Homography::translation(0.3, 0.1).to_tensor(),
                           geometry::Homography::translation(-0.2, 0.4).to_tensor()}, 0);
  EXPECT_FLOAT_EQ(content_loss(za, zb, h).item(), masked_l1(za, zb, h).item());
}

TEST(Losses, GradientPointsTowardTrueShift) {
  // One descent step on the x translation moves it toward the true value.
  const Tensor a = smooth_image(24, 0.35, 0.25, 0.1);
  std::vector<float> bv(24 * 24, 0.0f);
  for (int64_t y = 0; y < 24; ++y)
    for (int64_t x = 0; x < 24; ++x) {
      const double s = x - 1.0;
      bv[y * 24 + x] = static_cast<float>(0.5 + 0.25 * std::sin(0.35 * s + 0.1) * std::cos(0.25 * y - 0.1));
    }
  const Tensor b = Tensor::from_vector({1, 24, 24, 1}, bv);
  Tensor off = Tensor::from_vector({1, 8}, {0.3f, 0, 0.3f, 0, 0.3f, 0, 0.3f, 0}, true);
  Tape tape;
  Tape::Scope scope(tape);
  tape.backward(masked_l1(a, b, geometry::solve_dlt(off, 24, 24)));
  double gx = 0.0;
  for (int k = 0; k < 4; ++k) gx += off.grad()[2 * k];
  EXPECT_LT(gx, 0.0);  // increasing the shift toward 1 lowers the loss
}
