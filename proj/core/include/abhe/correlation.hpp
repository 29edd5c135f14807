#pragma once

#include <array>
#include <vector>

#include "abhe/nn.hpp"

namespace abhe {

inline constexpr int64_t kDefaultMaxCorrelationPositions = 4096;

/// Cosine-similarity volume [B, H, W, H*W]. Channel m (source position m in
/// row-major order) holds the similarity of Fa at m against every position
/// of Fb after a 3x3 zero-padded mean filter. Throws MemoryGuardError when
/// H*W exceeds `max_positions`.
Tensor correlation_volume(const Tensor& fa, const Tensor& fb,
                          int64_t max_positions = kDefaultMaxCorrelationPositions);

/// Channel re-weighting of a correlation volume: per-channel spatial max,
/// bottleneck MLP (HW -> HW/4 -> HW/4 -> HW, ReLU, sigmoid) and scaling.
struct ChannelAttention {
  Linear fc1, fc2, fc3;

  static ChannelAttention create(ParameterStore& store, const std::string& name, int64_t positions, Rng& rng);
  /// Gate values in (0, 1), [B, HW].
  Tensor weights(const Tensor& volume) const;
  /// volume with channel m scaled by weight m; the weights are written to
  /// `gates` when non-null.
  Tensor operator()(const Tensor& volume, Tensor* gates = nullptr) const;
};

struct HeadWidths {
  std::array<int64_t, 3> conv = {16, 32, 32};
  std::array<int64_t, 3> fc = {128, 64, 32};
};

/// Three stride-2 3x3 convs and four fully-connected layers ending in 8
/// corner offsets. The last layer starts at zero so a fresh head predicts
/// the identity homography.
struct RegressionHead {
  std::array<Conv2d, 3> convs;
  std::array<Linear, 4> fcs;
  int64_t height = 0;
  int64_t width = 0;

  static RegressionHead create(ParameterStore& store, const std::string& name, int64_t height, int64_t width,
                               int64_t channels, const HeadWidths& widths, Rng& rng);
  /// volume [B, height, width, channels] -> [B, 8]
  Tensor operator()(const Tensor& volume) const;
};

/// One cascade level: correlation, channel attention, offset regression.
struct CorrelationStage {
  ChannelAttention attention;
  RegressionHead head;
  int64_t max_positions = kDefaultMaxCorrelationPositions;

  static CorrelationStage create(ParameterStore& store, const std::string& name, int64_t height, int64_t width,
                                 const HeadWidths& widths, int64_t max_positions, Rng& rng);
  Tensor operator()(const Tensor& fa, const Tensor& fb) const;
};

}  // namespace abhe
