#include "abhe/model.hpp"

#include "abhe/error.hpp"
#include "abhe/geometry.hpp"

namespace abhe {

namespace {

// Per-image zero mean, unit variance.
Tensor standardize(const Tensor& img) {
  const int64_t B = img.dim(0);
  const Tensor flat = reshape(img, {B, -1});
  const Tensor centred = sub(flat, mean_axis(flat, 1, true));
  const Tensor sd = add_scalar(sqrt(add_scalar(mean_axis(square(centred), 1, true), 1e-6f)), 1e-3f);
  return reshape(div(centred, sd), img.shape());
}

}  // namespace

void ModelConfig::validate() const {
  const int64_t m = backbone.size_multiple();
  if (patch <= 0 || patch % m != 0) {
    throw ConfigError("patch size " + std::to_string(patch) + " must be a positive multiple of " + std::to_string(m));
  }
  if (backbone.stem_channels <= 0 || backbone.num_heads <= 0 || backbone.window <= 0 || backbone.mlp_ratio <= 0) {
    throw ConfigError("model widths must be positive");
  }
  for (int level = 0; level < 3; ++level) {
    if (backbone.deep_channels(level) % backbone.num_heads != 0) {
      throw ConfigError("stage " + std::to_string(level + 1) + " width is not divisible by num_heads");
    }
  }
  if (backbone.window % 2 != 0) throw ConfigError("window must be even for the half-window shift");
  const int64_t finest = (patch / 2) * (patch / 2);
  if (finest > max_positions) {
    throw ConfigError("finest correlation volume has " + std::to_string(finest) + " positions, above corr.max_hw " +
                      std::to_string(max_positions));
  }
}

AbheNet AbheNet::create(const ModelConfig& config, uint64_t seed) {
  config.validate();
  AbheNet net;
  net.config_ = config;
  net.store_ = std::make_shared<ParameterStore>();
  Rng rng(seed);
  net.backbone_ = Backbone::create(*net.store_, config.backbone, rng);
  net.nonlocal_ = CrossNonLocal::create(*net.store_, config.backbone.pyramid_channels(2), rng,
                                        config.nonlocal_temperature, config.nonlocal_blend);
  for (int level = 0; level < 3; ++level) {
    const int64_t side = config.patch >> (level + 1);
    net.stages_[static_cast<std::size_t>(level)] = CorrelationStage::create(
        *net.store_, "corr" + std::to_string(level + 1), side, side, config.head, config.max_positions, rng);
  }
  return net;
}

ForwardResult AbheNet::forward(const Tensor& ia, const Tensor& ib) const {
  const int64_t P = config_.patch;
  if (ia.rank() != 4 || ia.shape() != ib.shape() || ia.dim(1) != P || ia.dim(2) != P || ia.dim(3) != 1) {
    throw ShapeError("model input must be two [B, " + std::to_string(P) + ", " + std::to_string(P) + ", 1] images, got " +
                     shape_to_string(ia.shape()) + " and " + shape_to_string(ib.shape()));
  }
  const FeaturePyramid pa = backbone_(standardize(ia));
  const FeaturePyramid pb = backbone_(standardize(ib));
  const CrossNonLocalOutput z = nonlocal_(pa.levels[2], pb.levels[2]);

  ForwardResult out;
  out.za = z.za;
  out.zb = z.zb;
  const geometry::CascadeState* prev = nullptr;
  geometry::CascadeState state;
  for (int level = 2; level >= 0; --level) {
    const auto i = static_cast<std::size_t>(level);
    Tensor fa, fb;
    if (level == 2) {
      fa = z.za;
      fb = z.zb;
    } else {
      const double factor = 1.0 / static_cast<double>(2 << level);
      fa = geometry::warp(pa.levels[i], geometry::rescale_homography(state.homography, factor));
      fb = pb.levels[i];
    }
    out.residuals[i] = stages_[i](fa, fb);
    state = geometry::cascade_step(prev, out.residuals[i], P, P);
    prev = &state;
    out.offsets[i] = state.total_offsets;
    out.homographies[i] = state.homography;
  }
  return out;
}

LossTerms AbheNet::loss(const ForwardResult& fwd, const Tensor& ia, const Tensor& ib, const LossWeights& weights) const {
  LossTerms t;
  t.pixel = pixel_loss(ia, ib, fwd.homographies, weights.omega);
  const double factor = static_cast<double>(fwd.za.dim(1)) / static_cast<double>(config_.patch);
  t.content = content_loss(fwd.za, fwd.zb, geometry::rescale_homography(fwd.homographies[2], factor));
  t.total = total_loss(t.content, t.pixel, weights.lambda_content, weights.lambda_pixel);
  return t;
}

}  // namespace abhe
