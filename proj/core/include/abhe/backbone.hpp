#pragma once

#include <array>
#include <vector>

#include "abhe/nn.hpp"
#include "abhe/swin.hpp"

namespace abhe {

struct BackboneConfig {
  int64_t in_channels = 1;
  int64_t stem_channels = 8;  // C; deep widths are C, 2C, 4C
  int64_t num_heads = 2;
  int64_t window = 4;
  int64_t mlp_ratio = 4;
  int blocks_per_stage = 2;  // alternating unshifted / shifted

  int64_t deep_channels(int level) const { return stem_channels << level; }
  /// Channels of pyramid level `level` (0-based): shallow C plus deep.
  int64_t pyramid_channels(int level) const { return stem_channels + deep_channels(level); }
  /// Input extents must be multiples of this.
  int64_t size_multiple() const { return 8 * window; }
};

/// Per-stream pyramid at 1/2, 1/4, 1/8 of the input resolution. levels[i]
/// holds F_{i+1} = concat(resized shallow, deep) along channels.
struct FeaturePyramid {
  std::array<Tensor, 3> levels;
  /// Swin outputs F^{i'} that fed the next stage (before the projection conv).
  std::array<Tensor, 3> stage_outputs;
};

/// Shared-weight feature extractor: 2-conv stem, three Swin stages, per-stage
/// projection conv, and shallow-feature concatenation.
class Backbone {
 public:
  static Backbone create(ParameterStore& store, const BackboneConfig& config, Rng& rng);

  /// img [B, H, W, in_channels] with H, W multiples of size_multiple().
  FeaturePyramid operator()(const Tensor& img) const;
  const BackboneConfig& config() const { return config_; }

 private:
  struct Stage {
    bool merges = false;
    swin::PatchMerging merge;
    std::vector<swin::SwinBlock> blocks;
    Conv2d proj;
  };

  BackboneConfig config_;
  Conv2d stem1_;
  Conv2d stem2_;
  std::array<Stage, 3> stages_;
};

}  // namespace abhe
