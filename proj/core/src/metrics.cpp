#include "abhe/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "abhe/error.hpp"
#include "abhe/ops.hpp"

namespace abhe::metrics {

namespace {

constexpr double kFullCoverage = 1.0 - 1e-6;

Tensor as_image(const Tensor& t) {
  if (t.rank() == 2) return reshape(t, {1, t.dim(0), t.dim(1), 1});
  if (t.rank() == 3 && t.dim(2) == 1) return reshape(t, {1, t.dim(0), t.dim(1), 1});
  if (t.rank() == 4 && t.dim(0) == 1 && t.dim(3) == 1) return t;
  throw ShapeError("metrics: expected a single grayscale image, got " + shape_to_string(t.shape()));
}

void require_overlap(const AlignedOverlap& o) {
  double area = 0.0;
  for (double m : o.mask) area += m;
  if (area < kMinOverlapFraction * static_cast<double>(o.mask.size())) {
    throw NoOverlapError("no overlap: warped mask covers " + std::to_string(area) + " of " +
                         std::to_string(o.mask.size()) + " pixels");
  }
}

// Valid-mode separable filtering of a w x h image with `taps`.
std::vector<double> filter_valid(const std::vector<double>& img, int64_t w, int64_t h, const std::vector<double>& taps) {
  const auto k = static_cast<int64_t>(taps.size());
  const int64_t ow = w - k + 1, oh = h - k + 1;
  std::vector<double> rows(static_cast<std::size_t>(h * ow));
  for (int64_t y = 0; y < h; ++y)
    for (int64_t x = 0; x < ow; ++x) {
      double s = 0.0;
      for (int64_t t = 0; t < k; ++t) s += taps[static_cast<std::size_t>(t)] * img[static_cast<std::size_t>(y * w + x + t)];
      rows[static_cast<std::size_t>(y * ow + x)] = s;
    }
  std::vector<double> out(static_cast<std::size_t>(oh * ow));
  for (int64_t y = 0; y < oh; ++y)
    for (int64_t x = 0; x < ow; ++x) {
      double s = 0.0;
      for (int64_t t = 0; t < k; ++t) s += taps[static_cast<std::size_t>(t)] * rows[static_cast<std::size_t>((y + t) * ow + x)];
      out[static_cast<std::size_t>(y * ow + x)] = s;
    }
  return out;
}

}  // namespace

std::vector<double> gaussian_taps(int size, double sigma) {
  std::vector<double> taps(static_cast<std::size_t>(size));
  const double c = (size - 1) / 2.0;
  double total = 0.0;
  for (int i = 0; i < size; ++i) {
    const double d = i - c;
    taps[static_cast<std::size_t>(i)] = std::exp(-d * d / (2.0 * sigma * sigma));
    total += taps[static_cast<std::size_t>(i)];
  }
  for (auto& t : taps) t /= total;
  return taps;
}

AlignedOverlap aligned_overlap(const Tensor& ia, const Tensor& ib, const geometry::Homography& h) {
  const Tensor a = as_image(ia), b = as_image(ib);
  if (a.shape() != b.shape()) throw ShapeError("metrics: image sizes differ");
  AlignedOverlap o;
  o.height = a.dim(1);
  o.width = a.dim(2);
  const int64_t w = o.width, hh = o.height;
  const auto n = static_cast<std::size_t>(a.numel());
  o.source.resize(n);
  o.target.resize(n);
  o.mask.resize(n);
  const float* pb = b.data().data();
  // Same sampling rule as geometry::align, carried out in double.
  for (int64_t y = 0; y < hh; ++y)
    for (int64_t x = 0; x < w; ++x) {
      const auto i = static_cast<std::size_t>(y * w + x);
      const auto [u, v] = h.apply(static_cast<double>(x), static_cast<double>(y));
      if (!(u >= 0.0 && v >= 0.0 && u <= static_cast<double>(w - 1) && v <= static_cast<double>(hh - 1))) continue;
      const auto x0 = std::min(static_cast<int64_t>(std::floor(u)), w - 1);
      const auto y0 = std::min(static_cast<int64_t>(std::floor(v)), hh - 1);
      const int64_t x1 = std::min(x0 + 1, w - 1), y1 = std::min(y0 + 1, hh - 1);
      const double fx = u - static_cast<double>(x0), fy = v - static_cast<double>(y0);
      o.mask[i] = 1.0;
      o.source[i] = a.data()[i];
      o.target[i] = (1 - fy) * ((1 - fx) * pb[y0 * w + x0] + fx * pb[y0 * w + x1]) +
                    fy * ((1 - fx) * pb[y1 * w + x0] + fx * pb[y1 * w + x1]);
    }
  return o;
}

double psnr(const AlignedOverlap& o) {
  require_overlap(o);
  double se = 0.0, weight = 0.0;
  for (std::size_t i = 0; i < o.mask.size(); ++i) {
    const double d = o.source[i] - o.target[i];
    se += o.mask[i] * d * d;
    weight += o.mask[i];
  }
  const double mse = se / weight;
  if (mse < 1e-10) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

double ssim(const AlignedOverlap& o) {
  require_overlap(o);
  const int64_t w = o.width, h = o.height, k = kSsimWindow;
  if (w < k || h < k) throw ShapeError("ssim: image smaller than the 11x11 window");
  const auto taps = gaussian_taps();
  const auto n = o.source.size();
  std::vector<double> xx(n), yy(n), xy(n);
  for (std::size_t i = 0; i < n; ++i) {
    xx[i] = o.source[i] * o.source[i];
    yy[i] = o.target[i] * o.target[i];
    xy[i] = o.source[i] * o.target[i];
  }
  const auto mu_x = filter_valid(o.source, w, h, taps);
  const auto mu_y = filter_valid(o.target, w, h, taps);
  const auto e_xx = filter_valid(xx, w, h, taps);
  const auto e_yy = filter_valid(yy, w, h, taps);
  const auto e_xy = filter_valid(xy, w, h, taps);

  // windows touching a partially covered pixel are skipped; counted via an integral image
  std::vector<int64_t> bad(static_cast<std::size_t>((w + 1) * (h + 1)), 0);
  for (int64_t y = 0; y < h; ++y)
    for (int64_t x = 0; x < w; ++x) {
      const int64_t v = o.mask[static_cast<std::size_t>(y * w + x)] < kFullCoverage ? 1 : 0;
      bad[static_cast<std::size_t>((y + 1) * (w + 1) + x + 1)] = v + bad[static_cast<std::size_t>(y * (w + 1) + x + 1)] +
                                                                 bad[static_cast<std::size_t>((y + 1) * (w + 1) + x)] -
                                                                 bad[static_cast<std::size_t>(y * (w + 1) + x)];
    }
  const double c1 = kSsimK1 * kSsimK1, c2 = kSsimK2 * kSsimK2;
  const int64_t ow = w - k + 1, oh = h - k + 1;
  double total = 0.0;
  int64_t count = 0;
  for (int64_t y = 0; y < oh; ++y)
    for (int64_t x = 0; x < ow; ++x) {
      const int64_t nbad = bad[static_cast<std::size_t>((y + k) * (w + 1) + x + k)] -
                           bad[static_cast<std::size_t>(y * (w + 1) + x + k)] -
                           bad[static_cast<std::size_t>((y + k) * (w + 1) + x)] + bad[static_cast<std::size_t>(y * (w + 1) + x)];
      if (nbad != 0) continue;
      const auto i = static_cast<std::size_t>(y * ow + x);
      const double mx = mu_x[i], my = mu_y[i];
      const double vx = e_xx[i] - mx * mx, vy = e_yy[i] - my * my, cxy = e_xy[i] - mx * my;
      total += ((2 * mx * my + c1) * (2 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
      ++count;
    }
  if (count == 0) throw NoOverlapError("ssim: no 11x11 window lies fully inside the overlap");
  return total / static_cast<double>(count);
}

double psnr(const Tensor& ia, const Tensor& ib, const geometry::Homography& h) { return psnr(aligned_overlap(ia, ib, h)); }
double ssim(const Tensor& ia, const Tensor& ib, const geometry::Homography& h) { return ssim(aligned_overlap(ia, ib, h)); }

}  // namespace abhe::metrics
