#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "abhe/nn.hpp"

namespace abhe::swin {

struct SwinConfig {
  int64_t embed_dim = 8;
  int64_t num_heads = 2;
  int64_t window = 4;  // pixels per window side
  int64_t shift = 0;   // 0 or window / 2
  int64_t mlp_ratio = 4;

  /// Throws ConfigError if embed_dim is not divisible by num_heads or the
  /// shift is neither 0 nor window/2.
  void validate() const;
};

/// Additive penalty applied to attention logits of forbidden token pairs.
inline constexpr float kMaskPenalty = -1e9f;

/// [B, H, W, C] -> [B * (H/M) * (W/M), M*M, C]; tokens within a window are
/// row-major over the tile, windows are ordered batch-major then row-major.
Tensor window_partition(const Tensor& x, int64_t window);
/// Inverse of window_partition.
Tensor window_reverse(const Tensor& windows, int64_t window, int64_t batch, int64_t height, int64_t width);

/// Row of the (2M-1)^2 bias table used for each (query, key) token pair,
/// flattened query-major: index[i * M*M + j].
std::vector<int64_t> relative_position_index(int64_t window);

/// Region label of every pixel after a cyclic roll by (-shift, -shift);
/// pixels carrying different labels never attend to each other.
std::vector<int> shift_region_labels(int64_t height, int64_t width, int64_t window, int64_t shift);

/// [num_windows, M*M, M*M] mask holding 0 for permitted pairs and
/// kMaskPenalty for pairs from different pre-shift regions. Undefined
/// (no mask) when shift == 0.
Tensor cyclic_shift_mask(int64_t height, int64_t width, int64_t window, int64_t shift);

/// Relative position bias: learnable table plus the fixed index map.
struct RelPosBias {
  Tensor table;  // [(2M-1)^2, heads]
  std::vector<int64_t> index;
  int64_t window = 0;
  int64_t heads = 0;

  static RelPosBias create(ParameterStore& store, const std::string& name, int64_t window, int64_t heads);
  /// [heads, M*M, M*M]
  Tensor matrix() const;
};

/// Windowed multi-head self-attention.
struct WindowAttention {
  Linear qkv;   // C -> 3C
  Linear proj;  // C -> C
  RelPosBias bias;
  int64_t heads = 1;

  static WindowAttention create(ParameterStore& store, const std::string& name, const SwinConfig& config, Rng& rng);

  /// tokens [B * nW, N, C]; mask [nW, N, N] or undefined. When `weights` is
  /// non-null it receives the post-softmax attention [B * nW, heads, N, N].
  Tensor operator()(const Tensor& tokens, const Tensor& mask, Tensor* weights = nullptr) const;
};

/// LN -> (shifted) W-MSA -> residual, LN -> MLP(FC, ReLU, FC) -> residual.
struct SwinBlock {
  SwinConfig config;
  LayerNorm norm1;
  WindowAttention attn;
  LayerNorm norm2;
  Linear fc1;
  Linear fc2;

  static SwinBlock create(ParameterStore& store, const std::string& name, const SwinConfig& config, Rng& rng);
  Tensor operator()(const Tensor& x) const;
};

/// Concatenates each 2x2 neighbourhood (4C), layer-normalises, projects to 2C.
struct PatchMerging {
  LayerNorm norm;
  Linear reduction;  // 4C -> 2C, no bias

  static PatchMerging create(ParameterStore& store, const std::string& name, int64_t channels, Rng& rng);
  Tensor operator()(const Tensor& x) const;
};

/// [B, H, W, C] -> [B, H/2, W/2, 4C] in (0,0), (1,0), (0,1), (1,1) (row, col) order.
Tensor gather_2x2(const Tensor& x);

}  // namespace abhe::swin
