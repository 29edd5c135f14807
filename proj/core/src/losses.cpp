#include "abhe/losses.hpp"

#include "abhe/error.hpp"
#include "abhe/geometry.hpp"
#include "abhe/ops.hpp"

namespace abhe {

void LossWeights::validate() const {
  for (float w : omega) {
    if (!(w >= 0.0f)) throw ConfigError("loss: stage weights must be >= 0");
  }
  if (!(lambda_content >= 0.0f) || !(lambda_pixel >= 0.0f)) throw ConfigError("loss: mix weights must be >= 0");
}

Tensor masked_l1(const Tensor& a, const Tensor& b, const Tensor& h) {
  if (a.shape() != b.shape()) {
    throw ShapeError("masked_l1: shapes differ, " + shape_to_string(a.shape()) + " vs " + shape_to_string(b.shape()));
  }
  const Tensor ones = Tensor::full({a.dim(0), a.dim(1), a.dim(2), 1}, 1.0f);
  const Tensor mask = geometry::align(ones, h);
  return l1_distance(mul(a, mask), geometry::align(b, h));
}

Tensor pixel_loss(const Tensor& ia, const Tensor& ib, std::span<const Tensor> homographies,
                  std::span<const float> omega) {
  if (homographies.empty() || homographies.size() != omega.size()) {
    throw ShapeError("pixel_loss: need one weight per stage homography");
  }
  Tensor total;
  for (std::size_t i = 0; i < homographies.size(); ++i) {
    const Tensor term = scale(masked_l1(ia, ib, homographies[i]), omega[i]);
    total = total.defined() ? add(total, term) : term;
  }
  return total;
}

Tensor content_loss(const Tensor& za, const Tensor& zb, const Tensor& h3) { return masked_l1(za, zb, h3); }

Tensor total_loss(const Tensor& content, const Tensor& pixel, float lambda_content, float lambda_pixel) {
  return add(scale(content, lambda_content), scale(pixel, lambda_pixel));
}

}  // namespace abhe
