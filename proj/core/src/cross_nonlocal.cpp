#include "abhe/cross_nonlocal.hpp"

#include "abhe/error.hpp"

namespace abhe {

CrossNonLocal CrossNonLocal::create(ParameterStore& store, int64_t channels, Rng& rng, float temperature,
                                    float blend) {
  if (channels < 2) throw ConfigError("cross non-local: need at least 2 channels");
  CrossNonLocal c;
  const int64_t embed = channels / 2;
  c.query_ = Conv2d::create(store, "nonlocal.query", 1, channels, embed, 1, rng);
  c.key_ = Conv2d::create(store, "nonlocal.key", 1, channels, embed, 1, rng);
  c.value_ = Conv2d::create(store, "nonlocal.value", 1, channels, embed, 1, rng);
  c.output_ = Conv2d::create(store, "nonlocal.output", 1, embed, channels, 1, rng);
  c.set_temperature(temperature);
  c.set_blend(blend);
  return c;
}

void CrossNonLocal::set_temperature(float k) {
  if (!(k > 0.0f)) throw ConfigError("cross non-local: temperature must be positive");
  temperature_ = k;
}

void CrossNonLocal::set_blend(float lambda) {
  if (!(lambda >= 0.0f && lambda <= 1.0f)) throw ConfigError("cross non-local: blend must lie in [0, 1]");
  blend_ = lambda;
}

Tensor CrossNonLocal::flat(const Tensor& x) const { return reshape(x, {x.dim(0), x.dim(1) * x.dim(2), x.dim(3)}); }

Tensor CrossNonLocal::similarity(const Tensor& fi, const Tensor& fj) const {
  return matmul(flat(query_(fi)), transpose_last(flat(key_(fj))));
}

CrossNonLocalOutput CrossNonLocal::operator()(const Tensor& fa, const Tensor& fb) const {
  if (fa.rank() != 4 || fa.shape() != fb.shape()) {
    throw ShapeError("cross non-local: feature maps must share one [B, H, W, C] shape, got " +
                     shape_to_string(fa.shape()) + " and " + shape_to_string(fb.shape()));
  }
  const Shape& s = fa.shape();
  const Tensor theta_a = flat(query_(fa)), theta_b = flat(query_(fb));
  const Tensor phi_a = flat(key_(fa)), phi_b = flat(key_(fb));
  const Tensor g_a = flat(value_(fa)), g_b = flat(value_(fb));

  CrossNonLocalOutput out;
  out.attention_a = softmax_scaled(matmul(theta_a, transpose_last(phi_b)), temperature_);
  out.attention_b = softmax_scaled(matmul(theta_b, transpose_last(phi_a)), temperature_);
  const Shape embed_shape = {s[0], s[1], s[2], g_a.dim(2)};
  out.embedded_a = output_(reshape(matmul(out.attention_a, g_b), embed_shape));
  out.embedded_b = output_(reshape(matmul(out.attention_b, g_a), embed_shape));
  out.za = add(scale(fa, blend_), scale(out.embedded_a, 1.0f - blend_));
  out.zb = add(scale(fb, blend_), scale(out.embedded_b, 1.0f - blend_));
  return out;
}

}  // namespace abhe
