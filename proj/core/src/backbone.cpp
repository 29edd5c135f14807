#include "abhe/backbone.hpp"

#include "abhe/error.hpp"

namespace abhe {

Backbone Backbone::create(ParameterStore& store, const BackboneConfig& config, Rng& rng) {
  if (config.blocks_per_stage < 1) throw ConfigError("backbone: blocks_per_stage must be >= 1");
  Backbone b;
  b.config_ = config;
  const int64_t c = config.stem_channels;
  b.stem1_ = Conv2d::create(store, "stem.conv1", 3, config.in_channels, c, 2, rng, true, kReluGain);
  b.stem2_ = Conv2d::create(store, "stem.conv2", 3, c, c, 1, rng, true, kReluGain);
  for (int level = 0; level < 3; ++level) {
    Stage& s = b.stages_[static_cast<std::size_t>(level)];
    const std::string prefix = "stage" + std::to_string(level + 1);
    const int64_t width = config.deep_channels(level);
    if (level > 0) {
      s.merges = true;
      s.merge = swin::PatchMerging::create(store, prefix + ".merge", width / 2, rng);
    }
    for (int j = 0; j < config.blocks_per_stage; ++j) {
      swin::SwinConfig sc;
      sc.embed_dim = width;
      sc.num_heads = config.num_heads;
      sc.window = config.window;
      sc.shift = (j % 2 == 1) ? config.window / 2 : 0;
      sc.mlp_ratio = config.mlp_ratio;
      s.blocks.push_back(swin::SwinBlock::create(store, prefix + ".block" + std::to_string(j), sc, rng));
    }
    s.proj = Conv2d::create(store, prefix + ".proj", 3, width, width, 1, rng);
  }
  return b;
}

FeaturePyramid Backbone::operator()(const Tensor& img) const {
  if (img.rank() != 4 || img.dim(3) != config_.in_channels) {
    throw ShapeError("backbone: expected [B, H, W, " + std::to_string(config_.in_channels) + "], got " +
                     shape_to_string(img.shape()));
  }
  const int64_t m = config_.size_multiple();
  if (img.dim(1) % m != 0 || img.dim(2) % m != 0) {
    throw ShapeError("backbone: input extents " + std::to_string(img.dim(1)) + "x" + std::to_string(img.dim(2)) +
                     " must be multiples of " + std::to_string(m));
  }
  const Tensor shallow = relu(stem2_(relu(stem1_(img))));
  FeaturePyramid out;
  Tensor x = shallow;
  for (int level = 0; level < 3; ++level) {
    const Stage& s = stages_[static_cast<std::size_t>(level)];
    if (s.merges) x = s.merge(x);
    for (const auto& block : s.blocks) x = block(x);
    out.stage_outputs[static_cast<std::size_t>(level)] = x;
    const Tensor deep = s.proj(x);
    const int factor = 1 << level;
    const Tensor resized = factor == 1 ? shallow : avg_pool2d(shallow, factor, factor, 0);
    out.levels[static_cast<std::size_t>(level)] = concat({resized, deep}, 3);
  }
  return out;
}

}  // namespace abhe
