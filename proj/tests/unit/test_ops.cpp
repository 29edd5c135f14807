#include <gtest/gtest.h>

#include "abhe/error.hpp"
#include "abhe/ops.hpp"
#include "oracles.hpp"

using namespace abhe;

namespace {

void expect_close(const Tensor& t, const oracle::Vec& ref, double tol) {
  ASSERT_EQ(static_cast<std::size_t>(t.numel()), ref.size());
  for (std::size_t i = 0; i < ref.size(); ++i) ASSERT_NEAR(t.data()[i], ref[i], tol) << "at " << i;
}

}  // namespace

TEST(Ops, BroadcastingAdd) {
  const Tensor a = Tensor::from_vector({2, 3}, {1, 2, 3, 4, 5, 6});
  const Tensor b = Tensor::from_vector({3}, {10, 20, 30});
  expect_close(add(a, b), {11, 22, 33, 14, 25, 36}, 0);
  const Tensor c = Tensor::from_vector({2, 1}, {1, 2});
  expect_close(mul(a, c), {1, 2, 3, 8, 10, 12}, 0);
  EXPECT_THROW(add(a, Tensor::zeros({2})), ShapeError);
}

TEST(Ops, MatmulMatchesLoops) {
  std::mt19937_64 rng(5);
  const Tensor a = oracle::random_tensor({2, 5, 7}, rng), b = oracle::random_tensor({2, 7, 3}, rng);
  const Tensor c = matmul(a, b);
  ASSERT_EQ(c.shape(), (Shape{2, 5, 3}));
  const auto va = oracle::values(a), vb = oracle::values(b);
  for (int64_t k = 0; k < 2; ++k) {
    const oracle::Vec ra(va.begin() + k * 35, va.begin() + (k + 1) * 35);
    const oracle::Vec rb(vb.begin() + k * 21, vb.begin() + (k + 1) * 21);
    const auto ref = oracle::matmul(ra, rb, 5, 7, 3);
    for (int64_t i = 0; i < 15; ++i) EXPECT_NEAR(c.data()[k * 15 + i], ref[i], 1e-5);
  }
  const Tensor shared = oracle::random_tensor({7, 3}, rng);
  EXPECT_EQ(matmul(a, shared).shape(), (Shape{2, 5, 3}));
  EXPECT_THROW(matmul(a, oracle::random_tensor({6, 3}, rng)), ShapeError);
}

TEST(Ops, ConvolutionMatchesDirectLoop) {
  std::mt19937_64 rng(9);
  for (int stride : {1, 2}) {
    for (Padding pad : {Padding::kSame, Padding::kValid}) {
      const int64_t H = 7, W = 6, ci = 3, co = 4, k = 3;
      const Tensor x = oracle::random_tensor({2, H, W, ci}, rng), w = oracle::random_tensor({k, k, ci, co}, rng);
      const Tensor y = conv2d(x, w, stride, pad);
      int64_t ho, wo, pt, pl;
      if (pad == Padding::kSame) {
        ho = (H + stride - 1) / stride;
        wo = (W + stride - 1) / stride;
        pt = std::max<int64_t>((ho - 1) * stride + k - H, 0) / 2;
        pl = std::max<int64_t>((wo - 1) * stride + k - W, 0) / 2;
      } else {
        ho = (H - k) / stride + 1;
        wo = (W - k) / stride + 1;
        pt = pl = 0;
      }
      ASSERT_EQ(y.shape(), (Shape{2, ho, wo, co}));
      for (int64_t b = 0; b < 2; ++b)
        for (int64_t oy = 0; oy < ho; ++oy)
          for (int64_t ox = 0; ox < wo; ++ox)
            for (int64_t o = 0; o < co; ++o) {
              double s = 0.0;
              for (int64_t ky = 0; ky < k; ++ky)
                for (int64_t kx = 0; kx < k; ++kx) {
                  const int64_t iy = oy * stride + ky - pt, ix = ox * stride + kx - pl;
                  if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
                  for (int64_t c = 0; c < ci; ++c)
                    s += x.at({b, iy, ix, c}) * w.at({ky, kx, c, o});
                }
              ASSERT_NEAR(y.at({b, oy, ox, o}), s, 1e-5);
            }
    }
  }
}

TEST(Ops, AvgPoolDividesByFullKernel) {
  const Tensor x = Tensor::full({1, 3, 3, 1}, 9.0f);
  const Tensor y = avg_pool2d(x, 3, 1, 1);
  EXPECT_FLOAT_EQ(y.at({0, 1, 1, 0}), 9.0f);
  EXPECT_FLOAT_EQ(y.at({0, 0, 0, 0}), 4.0f);
  EXPECT_FLOAT_EQ(y.at({0, 0, 1, 0}), 6.0f);
}

TEST(Ops, SoftmaxRowsSumToOne) {
  std::mt19937_64 rng(2);
  const Tensor x = oracle::random_tensor({4, 9}, rng, 5.0);
  for (float k : {1.0f, 10.0f}) {
    const Tensor s = softmax_scaled(x, k);
    for (int64_t r = 0; r < 4; ++r) {
      double total = 0.0;
      for (int64_t c = 0; c < 9; ++c) total += s.at({r, c});
      EXPECT_NEAR(total, 1.0, 1e-6);
    }
  }
  const Tensor big = Tensor::from_vector({1, 2}, {1000.0f, 0.0f});
  EXPECT_FLOAT_EQ(softmax_scaled(big).at({0, 0}), 1.0f);
}

TEST(Ops, LayerNormStandardises) {
  std::mt19937_64 rng(4);
  const Tensor x = oracle::random_tensor({3, 16}, rng, 3.0);
  const Tensor y = layer_norm(x, Tensor::full({16}, 1.0f), Tensor::zeros({16}));
  for (int64_t r = 0; r < 3; ++r) {
    double m = 0, v = 0;
    for (int64_t c = 0; c < 16; ++c) m += y.at({r, c});
    m /= 16;
    for (int64_t c = 0; c < 16; ++c) v += (y.at({r, c}) - m) * (y.at({r, c}) - m);
    EXPECT_NEAR(m, 0.0, 1e-5);
    EXPECT_NEAR(v / 16, 1.0, 1e-3);
  }
}

TEST(Ops, L2NormaliseHasUnitRows) {
  std::mt19937_64 rng(6);
  const Tensor y = l2_normalize(oracle::random_tensor({5, 4}, rng));
  for (int64_t r = 0; r < 5; ++r) {
    double n = 0;
    for (int64_t c = 0; c < 4; ++c) n += y.at({r, c}) * y.at({r, c});
    EXPECT_NEAR(n, 1.0, 1e-5);
  }
}

TEST(Ops, ShapeOpsRoundTrip) {
  std::mt19937_64 rng(8);
  const Tensor x = oracle::random_tensor({2, 3, 4, 5}, rng);
  const Tensor p = permute(permute(x, {0, 2, 3, 1}), {0, 3, 1, 2});
  expect_close(p, oracle::values(x), 0);
  const Tensor r = roll2d(roll2d(x, 1, -2), -1, 2);
  expect_close(r, oracle::values(x), 0);
  EXPECT_FLOAT_EQ(roll2d(x, 1, 0).at({0, 1, 2, 3}), x.at({0, 0, 2, 3}));
  const Tensor c = concat({narrow(x, 3, 0, 2), narrow(x, 3, 2, 3)}, 3);
  expect_close(c, oracle::values(x), 0);
  EXPECT_THROW(reshape(x, {7, -1}), ShapeError);
  const std::vector<int64_t> idx = {2, 0, 2};
  const Tensor g = gather_rows(Tensor::from_vector({3, 2}, {1, 2, 3, 4, 5, 6}), idx);
  expect_close(g, {5, 6, 1, 2, 5, 6}, 0);
}

TEST(Ops, MaxAxisRoutesGradientToFirstMaximum) {
  Tape tape;
  Tape::Scope scope(tape);
  Tensor x = Tensor::from_vector({1, 4}, {1, 3, 3, 2}, true);
  const Tensor m = max_axis(x, 1);
  EXPECT_FLOAT_EQ(m.item(), 3.0f);
  tape.backward(sum(m));
  EXPECT_FLOAT_EQ(x.grad()[1], 1.0f);
  EXPECT_FLOAT_EQ(x.grad()[2], 0.0f);
}

TEST(Ops, SolveLinearAndInverse) {
  const Tensor a = Tensor::from_vector({1, 3, 3}, {2, 1, 0, 1, 3, 1, 0, 1, 4});
  const Tensor b = Tensor::from_vector({1, 3}, {3, 5, 5});
  expect_close(solve_linear(a, b), {1, 1, 1}, 1e-6);
  const Tensor inv = inverse3x3(a);
  const Tensor eye = matmul(a, inv);
  expect_close(eye, {1, 0, 0, 0, 1, 0, 0, 0, 1}, 1e-6);
  EXPECT_THROW(solve_linear(Tensor::zeros({1, 3, 3}), b), DegenerateError);
  EXPECT_THROW(inverse3x3(Tensor::zeros({1, 3, 3})), DegenerateError);
}

TEST(Ops, BilinearSampleMatchesOracle) {
  std::mt19937_64 rng(10);
  const int64_t H = 5, W = 6;
  const Tensor img = oracle::random_tensor({1, H, W, 1}, rng);
  std::uniform_real_distribution<float> u(-1.0f, 7.0f);
  std::vector<float> g;
  for (int i = 0; i < 40; ++i) g.push_back(u(rng));
  const Tensor grid = Tensor::from_vector({1, 4, 5, 2}, g);
  const Tensor out = bilinear_sample(img, grid);
  const auto v = oracle::values(img);
  for (int i = 0; i < 20; ++i) EXPECT_NEAR(out.data()[i], oracle::bilinear(v, W, H, g[2 * i], g[2 * i + 1]), 1e-5);
  // Integer grid points reproduce the pixel, the far edge included.
  const Tensor edge = Tensor::from_vector({1, 1, 1, 2}, {5.0f, 4.0f});
  EXPECT_FLOAT_EQ(bilinear_sample(img, edge).item(), img.at({0, 4, 5, 0}));
}

TEST(Ops, HomographyGridOfIdentityIsPixelLattice) {
  const Tensor eye = Tensor::from_vector({1, 3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  const Tensor g = homography_grid(eye, 3, 4);
  for (int64_t y = 0; y < 3; ++y)
    for (int64_t x = 0; x < 4; ++x) {
      EXPECT_FLOAT_EQ(g.at({0, y, x, 0}), static_cast<float>(x));
      EXPECT_FLOAT_EQ(g.at({0, y, x, 1}), static_cast<float>(y));
    }
}
