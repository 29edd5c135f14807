#include "abhe/correlation.hpp"

#include "abhe/error.hpp"

namespace abhe {

Tensor correlation_volume(const Tensor& fa, const Tensor& fb, int64_t max_positions) {
  if (fa.rank() != 4 || fa.shape() != fb.shape()) {
    throw ShapeError("correlation_volume: feature maps must share one [B, H, W, C] shape, got " +
                     shape_to_string(fa.shape()) + " and " + shape_to_string(fb.shape()));
  }
  const int64_t B = fa.dim(0), H = fa.dim(1), W = fa.dim(2), C = fa.dim(3);
  if (H * W > max_positions) {
    throw MemoryGuardError("correlation_volume: " + std::to_string(H * W) + " positions exceed corr.max_hw = " +
                           std::to_string(max_positions));
  }
  const Tensor source = reshape(l2_normalize(fa), {B, H * W, C});
  const Tensor target = reshape(l2_normalize(avg_pool2d(fb, 3, 1, 1)), {B, H * W, C});
  return reshape(matmul(target, transpose_last(source)), {B, H, W, H * W});
}

ChannelAttention ChannelAttention::create(ParameterStore& store, const std::string& name, int64_t positions,
                                          Rng& rng) {
  const int64_t hidden = std::max<int64_t>(positions / 4, 1);
  ChannelAttention a;
  a.fc1 = Linear::create(store, name + ".fc1", positions, hidden, rng);
  a.fc2 = Linear::create(store, name + ".fc2", hidden, hidden, rng);
  a.fc3 = Linear::create(store, name + ".fc3", hidden, positions, rng);
  return a;
}

Tensor ChannelAttention::weights(const Tensor& volume) const {
  const int64_t B = volume.dim(0), hw = volume.dim(1) * volume.dim(2);
  const Tensor peaks = max_axis(reshape(volume, {B, hw, volume.dim(3)}), 1);  // [B, channels]
  return sigmoid(fc3(relu(fc2(relu(fc1(peaks))))));
}

Tensor ChannelAttention::operator()(const Tensor& volume, Tensor* gates) const {
  const Tensor w = weights(volume);
  if (gates) *gates = w;
  return mul(volume, reshape(w, {volume.dim(0), 1, 1, volume.dim(3)}));
}

RegressionHead RegressionHead::create(ParameterStore& store, const std::string& name, int64_t height, int64_t width,
                                      int64_t channels, const HeadWidths& widths, Rng& rng) {
  RegressionHead h;
  h.height = height;
  h.width = width;
  int64_t in = channels, hh = height, ww = width;
  for (int i = 0; i < 3; ++i) {
    const auto out = widths.conv[static_cast<std::size_t>(i)];
    h.convs[static_cast<std::size_t>(i)] = Conv2d::create(store, name + ".conv" + std::to_string(i + 1), 3, in, out, 2, rng, true,
                                                         kReluGain);
    in = out;
    hh = (hh + 1) / 2;
    ww = (ww + 1) / 2;
  }
  int64_t features = hh * ww * in;
  for (int i = 0; i < 3; ++i) {
    const auto out = widths.fc[static_cast<std::size_t>(i)];
    h.fcs[static_cast<std::size_t>(i)] = Linear::create(store, name + ".fc" + std::to_string(i + 1), features, out, rng, true, kReluGain);
    features = out;
  }
  h.fcs[3].weight = store.add_constant(name + ".fc4.weight", {features, 8}, 0.0f);
  h.fcs[3].bias = store.add_constant(name + ".fc4.bias", {8}, 0.0f);
  return h;
}

Tensor RegressionHead::operator()(const Tensor& volume) const {
  if (volume.rank() != 4 || volume.dim(1) != height || volume.dim(2) != width) {
    throw ShapeError("regression head: expected a " + std::to_string(height) + "x" + std::to_string(width) +
                     " volume, got " + shape_to_string(volume.shape()));
  }
  Tensor x = volume;
  for (const auto& conv : convs) x = relu(conv(x));
  x = reshape(x, {x.dim(0), -1});
  for (int i = 0; i < 3; ++i) x = relu(fcs[static_cast<std::size_t>(i)](x));
  return fcs[3](x);
}

CorrelationStage CorrelationStage::create(ParameterStore& store, const std::string& name, int64_t height,
                                          int64_t width, const HeadWidths& widths, int64_t max_positions, Rng& rng) {
  if (height * width > max_positions) {
    throw MemoryGuardError(name + ": " + std::to_string(height * width) + " positions exceed corr.max_hw = " +
                           std::to_string(max_positions));
  }
  CorrelationStage s;
  s.attention = ChannelAttention::create(store, name + ".attn", height * width, rng);
  s.head = RegressionHead::create(store, name, height, width, height * width, widths, rng);
  s.max_positions = max_positions;
  return s;
}

Tensor CorrelationStage::operator()(const Tensor& fa, const Tensor& fb) const {
  return head(attention(correlation_volume(fa, fb, max_positions)));
}

}  // namespace abhe
