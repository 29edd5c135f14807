#include <vector>

#include "abhe/ops.hpp"
#include "gemm.hpp"
#include "op_util.hpp"

namespace abhe {

using detail::grad_target;
using detail::out_grad;

namespace {

struct ConvGeometry {
  int64_t batch, in_h, in_w, in_c;
  int64_t kh, kw, out_c;
  int64_t out_h, out_w;
  int64_t stride, pad_top, pad_left;

  int64_t patch() const { return kh * kw * in_c; }
  int64_t rows() const { return batch * out_h * out_w; }
  bool pointwise() const { return kh == 1 && kw == 1 && stride == 1 && pad_top == 0 && pad_left == 0; }
};

ConvGeometry conv_geometry(const Shape& x, const Shape& k, int stride, Padding padding) {
  ConvGeometry g{};
  g.batch = x[0];
  g.in_h = x[1];
  g.in_w = x[2];
  g.in_c = x[3];
  g.kh = k[0];
  g.kw = k[1];
  g.out_c = k[3];
  g.stride = stride;
  if (padding == Padding::kSame) {
    g.out_h = (g.in_h + stride - 1) / stride;
    g.out_w = (g.in_w + stride - 1) / stride;
    g.pad_top = std::max<int64_t>((g.out_h - 1) * stride + g.kh - g.in_h, 0) / 2;
    g.pad_left = std::max<int64_t>((g.out_w - 1) * stride + g.kw - g.in_w, 0) / 2;
  } else {
    if (g.in_h < g.kh || g.in_w < g.kw) throw ShapeError("conv2d: valid padding with kernel larger than input");
    g.out_h = (g.in_h - g.kh) / stride + 1;
    g.out_w = (g.in_w - g.kw) / stride + 1;
    g.pad_top = g.pad_left = 0;
  }
  return g;
}

void im2col(const ConvGeometry& g, const float* x, float* col) {
  const int64_t patch = g.patch();
  for (int64_t b = 0; b < g.batch; ++b)
    for (int64_t oy = 0; oy < g.out_h; ++oy)
      for (int64_t ox = 0; ox < g.out_w; ++ox) {
        float* row = col + ((b * g.out_h + oy) * g.out_w + ox) * patch;
        for (int64_t ky = 0; ky < g.kh; ++ky) {
          const int64_t iy = oy * g.stride + ky - g.pad_top;
          for (int64_t kx = 0; kx < g.kw; ++kx) {
            const int64_t ix = ox * g.stride + kx - g.pad_left;
            float* dst = row + (ky * g.kw + kx) * g.in_c;
            if (iy < 0 || iy >= g.in_h || ix < 0 || ix >= g.in_w) {
              std::fill_n(dst, g.in_c, 0.0f);
            } else {
              std::copy_n(x + ((b * g.in_h + iy) * g.in_w + ix) * g.in_c, g.in_c, dst);
            }
          }
        }
      }
}

void col2im_add(const ConvGeometry& g, const float* col, float* x) {
  const int64_t patch = g.patch();
  for (int64_t b = 0; b < g.batch; ++b)
    for (int64_t oy = 0; oy < g.out_h; ++oy)
      for (int64_t ox = 0; ox < g.out_w; ++ox) {
        const float* row = col + ((b * g.out_h + oy) * g.out_w + ox) * patch;
        for (int64_t ky = 0; ky < g.kh; ++ky) {
          const int64_t iy = oy * g.stride + ky - g.pad_top;
          if (iy < 0 || iy >= g.in_h) continue;
          for (int64_t kx = 0; kx < g.kw; ++kx) {
            const int64_t ix = ox * g.stride + kx - g.pad_left;
            if (ix < 0 || ix >= g.in_w) continue;
            const float* src = row + (ky * g.kw + kx) * g.in_c;
            float* dst = x + ((b * g.in_h + iy) * g.in_w + ix) * g.in_c;
            for (int64_t c = 0; c < g.in_c; ++c) dst[c] += src[c];
          }
        }
      }
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& kernel, int stride, Padding padding) {
  detail::require_rank(x, 4, "conv2d input");
  detail::require_rank(kernel, 4, "conv2d kernel");
  if (stride < 1) throw ShapeError("conv2d: stride must be >= 1");
  if (kernel.dim(2) != x.dim(3)) {
    throw ShapeError("conv2d: input has " + std::to_string(x.dim(3)) + " channels, kernel expects " +
                     std::to_string(kernel.dim(2)));
  }
  const ConvGeometry g = conv_geometry(x.shape(), kernel.shape(), stride, padding);
  Tensor out = detail::make_result({g.batch, g.out_h, g.out_w, g.out_c}, {&x, &kernel});
  const float* w = kernel.data().data();
  if (g.pointwise()) {
    detail::gemm(false, false, g.rows(), g.out_c, g.in_c, 1.0f, x.data().data(), w, 0.0f, out.mutable_data().data());
  } else {
    std::vector<float> col(static_cast<std::size_t>(g.rows() * g.patch()));
    im2col(g, x.data().data(), col.data());
    detail::gemm(false, false, g.rows(), g.out_c, g.patch(), 1.0f, col.data(), w, 0.0f, out.mutable_data().data());
  }
  detail::record(out, {x, kernel}, [x, kernel, out, g]() {
    const float* go = out_grad(out);
    float* gx = grad_target(x);
    float* gk = grad_target(kernel);
    const float* w = kernel.data().data();
    if (g.pointwise()) {
      if (gk) detail::gemm(true, false, g.in_c, g.out_c, g.rows(), 1.0f, x.data().data(), go, 1.0f, gk);
      if (gx) detail::gemm(false, true, g.rows(), g.in_c, g.out_c, 1.0f, go, w, 1.0f, gx);
      return;
    }
    std::vector<float> col(static_cast<std::size_t>(g.rows() * g.patch()));
    if (gk) {
      im2col(g, x.data().data(), col.data());
      detail::gemm(true, false, g.patch(), g.out_c, g.rows(), 1.0f, col.data(), go, 1.0f, gk);
    }
    if (gx) {
      detail::gemm(false, true, g.rows(), g.patch(), g.out_c, 1.0f, go, w, 0.0f, col.data());
      col2im_add(g, col.data(), gx);
    }
  });
  return out;
}

Tensor avg_pool2d(const Tensor& x, int kernel, int stride, int pad) {
  detail::require_rank(x, 4, "avg_pool2d");
  if (kernel < 1 || stride < 1 || pad < 0) throw ShapeError("avg_pool2d: invalid window");
  const int64_t B = x.dim(0), H = x.dim(1), W = x.dim(2), C = x.dim(3);
  const int64_t Ho = (H + 2 * pad - kernel) / stride + 1;
  const int64_t Wo = (W + 2 * pad - kernel) / stride + 1;
  if (Ho < 1 || Wo < 1) throw ShapeError("avg_pool2d: window larger than padded input");
  Tensor out = detail::make_result({B, Ho, Wo, C}, {&x});
  const float inv = 1.0f / static_cast<float>(kernel * kernel);
  auto visit = [=](auto&& f) {
    for (int64_t b = 0; b < B; ++b)
      for (int64_t oy = 0; oy < Ho; ++oy)
        for (int64_t ox = 0; ox < Wo; ++ox)
          for (int64_t ky = 0; ky < kernel; ++ky) {
            const int64_t iy = oy * stride + ky - pad;
            if (iy < 0 || iy >= H) continue;
            for (int64_t kx = 0; kx < kernel; ++kx) {
              const int64_t ix = ox * stride + kx - pad;
              if (ix < 0 || ix >= W) continue;
              f(((b * Ho + oy) * Wo + ox) * C, ((b * H + iy) * W + ix) * C);
            }
          }
  };
  const float* in = x.data().data();
  float* o = out.mutable_data().data();
  visit([&](int64_t oi, int64_t ii) {
    for (int64_t c = 0; c < C; ++c) o[oi + c] += in[ii + c] * inv;
  });
  detail::record(out, {x}, [x, out, visit, inv, C]() {
    const float* g = out_grad(out);
    float* gx = grad_target(x);
    visit([&](int64_t oi, int64_t ii) {
      for (int64_t c = 0; c < C; ++c) gx[ii + c] += g[oi + c] * inv;
    });
  });
  return out;
}

}  // namespace abhe
