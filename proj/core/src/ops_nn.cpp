#include <cmath>

#include "abhe/ops.hpp"
#include "op_util.hpp"

namespace abhe {

using detail::grad_target;
using detail::out_grad;

Tensor softmax_scaled(const Tensor& x, float temperature) {
  if (!(temperature > 0.0f)) throw ShapeError("softmax_scaled: temperature must be positive");
  const int64_t n = x.dim(-1);
  const int64_t rows = x.numel() / n;
  Tensor out = detail::make_result(x.shape(), {&x});
  const float* in = x.data().data();
  float* o = out.mutable_data().data();
  for (int64_t r = 0; r < rows; ++r) {
    const float* xr = in + r * n;
    float* yr = o + r * n;
    float mx = xr[0];
    for (int64_t i = 1; i < n; ++i) mx = std::max(mx, xr[i]);
    double total = 0.0;
    for (int64_t i = 0; i < n; ++i) {
      yr[i] = std::exp(temperature * (xr[i] - mx));
      total += yr[i];
    }
    const auto inv = static_cast<float>(1.0 / total);
    for (int64_t i = 0; i < n; ++i) yr[i] *= inv;
  }
  detail::record(out, {x}, [x, out, n, rows, temperature]() {
    const float* g = out_grad(out);
    const float* y = out.data().data();
    float* gx = grad_target(x);
    for (int64_t r = 0; r < rows; ++r) {
      double dot = 0.0;
      for (int64_t i = 0; i < n; ++i) dot += static_cast<double>(g[r * n + i]) * y[r * n + i];
      for (int64_t i = 0; i < n; ++i) {
        gx[r * n + i] += temperature * y[r * n + i] * (g[r * n + i] - static_cast<float>(dot));
      }
    }
  });
  return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, float eps) {
  const int64_t n = x.dim(-1);
  if (gamma.numel() != n || beta.numel() != n) {
    throw ShapeError("layer_norm: affine parameters must have " + std::to_string(n) + " elements");
  }
  const int64_t rows = x.numel() / n;
  Tensor out = detail::make_result(x.shape(), {&x, &gamma, &beta});
  auto xhat = std::make_shared<std::vector<float>>(static_cast<std::size_t>(x.numel()));
  auto inv_std = std::make_shared<std::vector<float>>(static_cast<std::size_t>(rows));
  const float* in = x.data().data();
  const float* gm = gamma.data().data();
  const float* bt = beta.data().data();
  float* o = out.mutable_data().data();
  for (int64_t r = 0; r < rows; ++r) {
    const float* xr = in + r * n;
    double mu = 0.0;
    for (int64_t i = 0; i < n; ++i) mu += xr[i];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (int64_t i = 0; i < n; ++i) var += (xr[i] - mu) * (xr[i] - mu);
    var /= static_cast<double>(n);
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[static_cast<std::size_t>(r)] = static_cast<float>(is);
    for (int64_t i = 0; i < n; ++i) {
      const auto h = static_cast<float>((xr[i] - mu) * is);
      (*xhat)[static_cast<std::size_t>(r * n + i)] = h;
      o[r * n + i] = gm[i] * h + bt[i];
    }
  }
  detail::record(out, {x, gamma, beta}, [x, gamma, beta, out, xhat, inv_std, n, rows]() {
    const float* g = out_grad(out);
    float* gx = grad_target(x);
    float* gg = grad_target(gamma);
    float* gb = grad_target(beta);
    const float* gm = gamma.data().data();
    const float* h = xhat->data();
    for (int64_t r = 0; r < rows; ++r) {
      const float* gr = g + r * n;
      const float* hr = h + r * n;
      if (gg || gb) {
        for (int64_t i = 0; i < n; ++i) {
          if (gg) gg[i] += gr[i] * hr[i];
          if (gb) gb[i] += gr[i];
        }
      }
      if (!gx) continue;
      double mean_d = 0.0, mean_dh = 0.0;
      for (int64_t i = 0; i < n; ++i) {
        const double d = static_cast<double>(gr[i]) * gm[i];
        mean_d += d;
        mean_dh += d * hr[i];
      }
      mean_d /= static_cast<double>(n);
      mean_dh /= static_cast<double>(n);
      const float is = (*inv_std)[static_cast<std::size_t>(r)];
      for (int64_t i = 0; i < n; ++i) {
        const double d = static_cast<double>(gr[i]) * gm[i];
        gx[r * n + i] += static_cast<float>(is * (d - mean_d - hr[i] * mean_dh));
      }
    }
  });
  return out;
}

Tensor l2_normalize(const Tensor& x, float eps) {
  const int64_t n = x.dim(-1);
  const int64_t rows = x.numel() / n;
  Tensor out = detail::make_result(x.shape(), {&x});
  auto norms = std::make_shared<std::vector<float>>(static_cast<std::size_t>(rows));
  const float* in = x.data().data();
  float* o = out.mutable_data().data();
  for (int64_t r = 0; r < rows; ++r) {
    double ss = 0.0;
    for (int64_t i = 0; i < n; ++i) ss += static_cast<double>(in[r * n + i]) * in[r * n + i];
    const double norm = std::sqrt(ss + eps);
    (*norms)[static_cast<std::size_t>(r)] = static_cast<float>(norm);
    for (int64_t i = 0; i < n; ++i) o[r * n + i] = static_cast<float>(in[r * n + i] / norm);
  }
  detail::record(out, {x}, [x, out, norms, n, rows]() {
    const float* g = out_grad(out);
    const float* y = out.data().data();
    float* gx = grad_target(x);
    for (int64_t r = 0; r < rows; ++r) {
      double dot = 0.0;
      for (int64_t i = 0; i < n; ++i) dot += static_cast<double>(g[r * n + i]) * y[r * n + i];
      const float inv = 1.0f / (*norms)[static_cast<std::size_t>(r)];
      for (int64_t i = 0; i < n; ++i) {
        gx[r * n + i] += inv * (g[r * n + i] - y[r * n + i] * static_cast<float>(dot));
      }
    }
  });
  return out;
}

}  // namespace abhe
