#include <cmath>

#include "abhe/ops.hpp"
#include "op_util.hpp"

namespace abhe {

using detail::grad_target;
using detail::out_grad;

namespace {

struct Tap {
  bool valid = false;
  int64_t x0 = 0, y0 = 0, x1 = 0, y1 = 0;
  float wx = 0.0f, wy = 0.0f;
};

// Neighbours and weights for a sample point; invalid outside the frame.
Tap make_tap(float x, float y, int64_t width, int64_t height) {
  Tap t;
  if (!(x >= 0.0f && y >= 0.0f && x <= static_cast<float>(width - 1) && y <= static_cast<float>(height - 1))) {
    return t;
  }
  t.valid = true;
  t.x0 = std::min(static_cast<int64_t>(std::floor(x)), width - 1);
  t.y0 = std::min(static_cast<int64_t>(std::floor(y)), height - 1);
  t.x1 = std::min(t.x0 + 1, width - 1);
  t.y1 = std::min(t.y0 + 1, height - 1);
  t.wx = x - static_cast<float>(t.x0);
  t.wy = y - static_cast<float>(t.y0);
  return t;
}

}  // namespace

Tensor bilinear_sample(const Tensor& img, const Tensor& grid) {
  detail::require_rank(img, 4, "bilinear_sample image");
  detail::require_rank(grid, 4, "bilinear_sample grid");
  const int64_t B = img.dim(0), H = img.dim(1), W = img.dim(2), C = img.dim(3);
  if (grid.dim(0) != B || grid.dim(3) != 2) {
    throw ShapeError("bilinear_sample: grid " + shape_to_string(grid.shape()) + " incompatible with image " +
                     shape_to_string(img.shape()));
  }
  const int64_t Ho = grid.dim(1), Wo = grid.dim(2);
  Tensor out = detail::make_result({B, Ho, Wo, C}, {&img, &grid});
  const float* src = img.data().data();
  const float* gd = grid.data().data();
  float* o = out.mutable_data().data();
  for (int64_t b = 0; b < B; ++b) {
    const float* plane = src + b * H * W * C;
    for (int64_t p = 0; p < Ho * Wo; ++p) {
      const int64_t q = b * Ho * Wo + p;
      const Tap t = make_tap(gd[2 * q], gd[2 * q + 1], W, H);
      if (!t.valid) continue;
      const float* i00 = plane + (t.y0 * W + t.x0) * C;
      const float* i01 = plane + (t.y0 * W + t.x1) * C;
      const float* i10 = plane + (t.y1 * W + t.x0) * C;
      const float* i11 = plane + (t.y1 * W + t.x1) * C;
      const float a00 = (1 - t.wy) * (1 - t.wx), a01 = (1 - t.wy) * t.wx;
      const float a10 = t.wy * (1 - t.wx), a11 = t.wy * t.wx;
      float* dst = o + q * C;
      for (int64_t c = 0; c < C; ++c) dst[c] = a00 * i00[c] + a01 * i01[c] + a10 * i10[c] + a11 * i11[c];
    }
  }
  detail::record(out, {img, grid}, [img, grid, out, B, H, W, C, Ho, Wo]() {
    const float* g = out_grad(out);
    const float* src = img.data().data();
    const float* gd = grid.data().data();
    float* gimg = grad_target(img);
    float* ggrid = grad_target(grid);
    for (int64_t b = 0; b < B; ++b) {
      const float* plane = src + b * H * W * C;
      float* gplane = gimg ? gimg + b * H * W * C : nullptr;
      for (int64_t p = 0; p < Ho * Wo; ++p) {
        const int64_t q = b * Ho * Wo + p;
        const Tap t = make_tap(gd[2 * q], gd[2 * q + 1], W, H);
        if (!t.valid) continue;
        const int64_t o00 = (t.y0 * W + t.x0) * C, o01 = (t.y0 * W + t.x1) * C;
        const int64_t o10 = (t.y1 * W + t.x0) * C, o11 = (t.y1 * W + t.x1) * C;
        const float* gq = g + q * C;
        if (gplane) {
          const float a00 = (1 - t.wy) * (1 - t.wx), a01 = (1 - t.wy) * t.wx;
          const float a10 = t.wy * (1 - t.wx), a11 = t.wy * t.wx;
          for (int64_t c = 0; c < C; ++c) {
            gplane[o00 + c] += a00 * gq[c];
            gplane[o01 + c] += a01 * gq[c];
            gplane[o10 + c] += a10 * gq[c];
            gplane[o11 + c] += a11 * gq[c];
          }
        }
        if (ggrid) {
          double dx = 0.0, dy = 0.0;
          for (int64_t c = 0; c < C; ++c) {
            const float v00 = plane[o00 + c], v01 = plane[o01 + c], v10 = plane[o10 + c], v11 = plane[o11 + c];
            dx += gq[c] * ((1 - t.wy) * (v01 - v00) + t.wy * (v11 - v10));
            dy += gq[c] * ((1 - t.wx) * (v10 - v00) + t.wx * (v11 - v01));
          }
          ggrid[2 * q] += static_cast<float>(dx);
          ggrid[2 * q + 1] += static_cast<float>(dy);
        }
      }
    }
  });
  return out;
}

Tensor homography_grid(const Tensor& h, int64_t out_h, int64_t out_w) {
  detail::require_rank(h, 3, "homography_grid");
  if (h.dim(1) != 3 || h.dim(2) != 3) throw ShapeError("homography_grid: expected [B, 3, 3]");
  if (out_h < 1 || out_w < 1) throw ShapeError("homography_grid: output extents must be positive");
  const int64_t B = h.dim(0);
  Tensor out = detail::make_result({B, out_h, out_w, 2}, {&h});
  const float* m = h.data().data();
  float* o = out.mutable_data().data();
  constexpr double kMinDepth = 1e-12;
  constexpr float kOutside = -1e6f;
  for (int64_t b = 0; b < B; ++b) {
    const float* e = m + 9 * b;
    for (int64_t y = 0; y < out_h; ++y)
      for (int64_t x = 0; x < out_w; ++x) {
        const double u = e[0] * x + e[1] * y + static_cast<double>(e[2]);
        const double v = e[3] * x + e[4] * y + static_cast<double>(e[5]);
        const double w = e[6] * x + e[7] * y + static_cast<double>(e[8]);
        float* dst = o + ((b * out_h + y) * out_w + x) * 2;
        if (std::fabs(w) < kMinDepth) {
          dst[0] = dst[1] = kOutside;
        } else {
          dst[0] = static_cast<float>(u / w);
          dst[1] = static_cast<float>(v / w);
        }
      }
  }
  detail::record(out, {h}, [h, out, B, out_h, out_w]() {
    const float* g = out_grad(out);
    const float* m = h.data().data();
    float* gh = grad_target(h);
    for (int64_t b = 0; b < B; ++b) {
      const float* e = m + 9 * b;
      double acc[9] = {};
      for (int64_t y = 0; y < out_h; ++y)
        for (int64_t x = 0; x < out_w; ++x) {
          const double w = e[6] * x + e[7] * y + static_cast<double>(e[8]);
          if (std::fabs(w) < kMinDepth) continue;
          const double u = e[0] * x + e[1] * y + static_cast<double>(e[2]);
          const double v = e[3] * x + e[4] * y + static_cast<double>(e[5]);
          const float* gq = g + ((b * out_h + y) * out_w + x) * 2;
          const double p[3] = {static_cast<double>(x), static_cast<double>(y), 1.0};
          const double gx = gq[0] / w, gy = gq[1] / w;
          const double gw = -(gq[0] * u + gq[1] * v) / (w * w);
          for (int j = 0; j < 3; ++j) {
            acc[j] += gx * p[j];
            acc[3 + j] += gy * p[j];
            acc[6 + j] += gw * p[j];
          }
        }
      for (int j = 0; j < 9; ++j) gh[9 * b + j] += static_cast<float>(acc[j]);
    }
  });
  return out;
}

}  // namespace abhe
