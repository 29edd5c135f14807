#include <gtest/gtest.h>

#include "abhe/error.hpp"
#include "abhe/swin.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace abhe;
using namespace abhe::swin;

using fixture::bias_matrix;
using fixture::randomise_bias;

TEST(Swin, ConfigValidation) {
  SwinConfig c;
  c.embed_dim = 10;
  c.num_heads = 4;
  EXPECT_THROW(c.validate(), ConfigError);
  c.embed_dim = 8;
  c.shift = 1;
  EXPECT_THROW(c.validate(), ConfigError);
  c.shift = 2;
  EXPECT_NO_THROW(c.validate());
}

TEST(Swin, WindowPartitionRoundTrip) {
  std::mt19937_64 rng(1);
  const Tensor x = oracle::random_tensor({2, 8, 12, 3}, rng);
  const Tensor w = window_partition(x, 4);
  ASSERT_EQ(w.shape(), (Shape{12, 16, 3}));
  // Window 1 of batch 0 is the tile at rows 0..3, cols 4..7.
  EXPECT_FLOAT_EQ(w.at({1, 5, 2}), x.at({0, 1, 5, 2}));
  const Tensor back = window_reverse(w, 4, 2, 8, 12);
  for (int64_t i = 0; i < x.numel(); ++i) ASSERT_EQ(back.data()[i], x.data()[i]);
  EXPECT_THROW(window_partition(x, 5), ShapeError);
}

TEST(Swin, ShiftMaskBlocksOnlyWrappedPairs) {
  // Two rolled pixels may attend iff their pre-roll positions are in the
  // same region of the shifted grid; check against explicit coordinates.
  const int64_t H = 8, W = 8, M = 4, s = 2;
  const Tensor mask = cyclic_shift_mask(H, W, M, s);
  ASSERT_EQ(mask.shape(), (Shape{4, 16, 16}));
  // After rolling by -s, rolled index v holds original (v + s) mod extent;
  // indices v >= extent - s wrapped around the border.
  auto region = [&](int64_t v, int64_t extent) { return v >= extent - s ? 1 : 0; };
  for (int64_t wy = 0; wy < 2; ++wy)
    for (int64_t wx = 0; wx < 2; ++wx)
      for (int64_t i = 0; i < 16; ++i)
        for (int64_t j = 0; j < 16; ++j) {
          const int64_t yi = wy * M + i / M, xi = wx * M + i % M, yj = wy * M + j / M, xj = wx * M + j % M;
          const bool same = region(yi, H) == region(yj, H) && region(xi, W) == region(xj, W);
          const float v = mask.at({wy * 2 + wx, i, j});
          EXPECT_EQ(v, same ? 0.0f : kMaskPenalty) << wy << wx << " " << i << " " << j;
        }
  EXPECT_FALSE(cyclic_shift_mask(H, W, M, 0).defined());
}

TEST(Swin, ShiftedBlockKeepsWrappedPixelsApart) {
  // Perturbing a pixel on the far border must not change outputs of pixels
  // that only reach it through the cyclic wrap (same window after rolling).
  std::mt19937_64 rng(3);
  Rng init(4);
  ParameterStore store;
  SwinConfig c;
  c.embed_dim = 4;
  c.num_heads = 2;
  c.window = 4;
  c.shift = 2;
  const SwinBlock block = SwinBlock::create(store, "b", c, init);
  Tensor x = oracle::random_tensor({1, 8, 8, 4}, rng);
  const Tensor y0 = block(x);
  Tensor x2 = x.detach();
  x2.mutable_data()[(0 * 8 + 7) * 4] += 5.0f;  // pixel (0, 7)
  const Tensor y1 = block(x2);
  // (0, 0) shares a rolled window with (0, 7) but lies in a different region.
  for (int64_t k = 0; k < 4; ++k) EXPECT_EQ(y0.at({0, 0, 0, k}), y1.at({0, 0, 0, k}));
  bool changed = false;
  for (int64_t k = 0; k < 4; ++k) changed |= y0.at({0, 0, 6, k}) != y1.at({0, 0, 6, k});
  EXPECT_TRUE(changed);
}

TEST(Swin, FullWindowAttentionEqualsGlobalAttention) {
  std::mt19937_64 rng(11);
  for (int draw = 0; draw < 20; ++draw) {
    Rng init(100 + draw);
    ParameterStore store;
    SwinConfig c;
    c.embed_dim = 8;
    c.num_heads = 2;
    c.window = 8;
    WindowAttention attn = WindowAttention::create(store, "a", c, init);
    randomise_bias(attn, rng);
    const Tensor x = oracle::random_tensor({1, 8, 8, 8}, rng);
    const Tensor got = window_reverse(attn(window_partition(x, 8), Tensor()), 8, 1, 8, 8);
    const auto ref = oracle::global_attention(oracle::values(x), 64, 8, 2, oracle::values(attn.qkv.weight),
                                              oracle::values(attn.qkv.bias), oracle::values(attn.proj.weight),
                                              oracle::values(attn.proj.bias), bias_matrix(attn));
    double worst = 0.0;
    for (std::size_t i = 0; i < ref.size(); ++i) worst = std::max(worst, std::fabs(got.data()[i] - ref[i]));
    EXPECT_LT(worst, 1e-5) << "draw " << draw;
  }
}

TEST(Swin, RelativeIndexIsTranslationInvariant) {
  const auto idx = relative_position_index(3);
  ASSERT_EQ(idx.size(), 81u);
  EXPECT_EQ(idx[0], 2 * 5 + 2);  // same token: centre of the 5x5 table
  // (0,0)->(1,1) and (1,1)->(2,2) share a displacement.
  EXPECT_EQ(idx[0 * 9 + 4], idx[4 * 9 + 8]);
  EXPECT_NE(idx[0 * 9 + 4], idx[4 * 9 + 0]);
}

TEST(Swin, AttentionWeightsAreRowStochastic) {
  Rng init(5);
  std::mt19937_64 rng(6);
  ParameterStore store;
  SwinConfig c;
  c.embed_dim = 8;
  c.num_heads = 2;
  c.window = 4;
  const WindowAttention attn = WindowAttention::create(store, "a", c, init);
  Tensor w;
  attn(oracle::random_tensor({3, 16, 8}, rng), cyclic_shift_mask(4, 12, 4, 2), &w);
  ASSERT_EQ(w.shape(), (Shape{3, 2, 16, 16}));
  for (int64_t r = 0; r < 3 * 2 * 16; ++r) {
    double s = 0.0;
    for (int64_t j = 0; j < 16; ++j) s += w.data()[r * 16 + j];
    EXPECT_NEAR(s, 1.0, 1e-5);
  }
}

TEST(Swin, PatchMergingHalvesExtentsAndDoublesWidth) {
  Rng init(7);
  std::mt19937_64 rng(8);
  ParameterStore store;
  const PatchMerging m = PatchMerging::create(store, "m", 4, init);
  EXPECT_EQ(m(oracle::random_tensor({2, 8, 6, 4}, rng)).shape(), (Shape{2, 4, 3, 8}));
  EXPECT_THROW(m(oracle::random_tensor({1, 5, 4, 4}, rng)), ShapeError);
  const Tensor x = oracle::random_tensor({1, 2, 2, 1}, rng);
  const Tensor g = gather_2x2(x);
  EXPECT_FLOAT_EQ(g.at({0, 0, 0, 0}), x.at({0, 0, 0, 0}));
  EXPECT_FLOAT_EQ(g.at({0, 0, 0, 1}), x.at({0, 1, 0, 0}));
  EXPECT_FLOAT_EQ(g.at({0, 0, 0, 2}), x.at({0, 0, 1, 0}));
  EXPECT_FLOAT_EQ(g.at({0, 0, 0, 3}), x.at({0, 1, 1, 0}));
}
