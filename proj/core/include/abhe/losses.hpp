#pragma once

#include <array>
#include <span>

#include "abhe/tensor.hpp"

namespace abhe {

struct LossWeights {
  std::array<float, 3> omega = {1.0f, 4.0f, 16.0f};  // stage 1 (finest) .. stage 3 (deepest)
  float lambda_content = 1.0f;
  float lambda_pixel = 10.0f;

  /// Throws ConfigError on a negative weight.
  void validate() const;
};

/// mean(|mask * a - align(b, h)|) where mask = align(ones, h): b is pulled
/// onto a's frame and pixels without a source are excluded from a.
Tensor masked_l1(const Tensor& a, const Tensor& b, const Tensor& h);

/// Sum over stages of omega_i * masked_l1(Ia, Ib, H_i) at image resolution.
/// `homographies[i]` belongs to stage i + 1.
Tensor pixel_loss(const Tensor& ia, const Tensor& ib, std::span<const Tensor> homographies,
                  std::span<const float> omega);

/// masked_l1 between the cross-attended deepest features; `h3` must already
/// be expressed at the feature-map resolution.
Tensor content_loss(const Tensor& za, const Tensor& zb, const Tensor& h3);

Tensor total_loss(const Tensor& content, const Tensor& pixel, float lambda_content, float lambda_pixel);

}  // namespace abhe
