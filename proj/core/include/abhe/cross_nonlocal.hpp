#pragma once

#include "abhe/nn.hpp"

namespace abhe {

/// Outputs of the mutual attention between the two deepest feature maps.
struct CrossNonLocalOutput {
  Tensor za;
  Tensor zb;
  Tensor attention_a;  // softmax(k * S_a), [B, HW, HW]
  Tensor attention_b;
  Tensor embedded_a;   // output-projected reconstruction of stream a, [B, H, W, C]
  Tensor embedded_b;
};

/// Query/key/value 1x1 projectors shared by both streams, an output
/// projector, scale-softmax temperature, and the residual blend.
class CrossNonLocal {
 public:
  /// The embedding width is channels / 2.
  static CrossNonLocal create(ParameterStore& store, int64_t channels, Rng& rng, float temperature = 10.0f,
                              float blend = 0.9f);

  CrossNonLocalOutput operator()(const Tensor& fa, const Tensor& fb) const;

  /// Query embedding of `fi` against key embedding of `fj`: [B, HW, HW],
  /// row = query position in fi, column = key position in fj.
  Tensor similarity(const Tensor& fi, const Tensor& fj) const;

  float temperature() const { return temperature_; }
  float blend() const { return blend_; }
  void set_temperature(float k);
  void set_blend(float lambda);

  const Conv2d& query() const { return query_; }
  const Conv2d& key() const { return key_; }
  const Conv2d& value() const { return value_; }
  const Conv2d& output() const { return output_; }

 private:
  Tensor flat(const Tensor& x) const;

  Conv2d query_, key_, value_, output_;
  float temperature_ = 10.0f;
  float blend_ = 0.9f;
};

}  // namespace abhe
