#include "abhe/geometry.hpp"

#include <cmath>

#include "abhe/error.hpp"
#include "abhe/ops.hpp"
#include "op_util.hpp"

namespace abhe::geometry {

namespace {

// Source corners in normalised coordinates, TL, TR, BR, BL.
constexpr std::array<std::array<float, 2>, 4> kUnitCorners = {{{-1, -1}, {1, -1}, {1, 1}, {-1, 1}}};

// Pixel -> [-1, 1] normalisation for a patch.
Homography normalizer(int64_t width, int64_t height) {
  const double sx = 2.0 / static_cast<double>(width - 1);
  const double sy = 2.0 / static_cast<double>(height - 1);
  return {{sx, 0, -1, 0, sy, -1, 0, 0, 1}};
}

}  // namespace

std::array<std::array<double, 2>, 4> patch_corners(int64_t width, int64_t height) {
  const auto w = static_cast<double>(width - 1);
  const auto h = static_cast<double>(height - 1);
  return {{{0.0, 0.0}, {w, 0.0}, {w, h}, {0.0, h}}};
}

Homography Homography::from_tensor(const Tensor& h, int64_t index) {
  if (h.rank() != 3 || h.dim(1) != 3 || h.dim(2) != 3) throw ShapeError("homography tensor must be [B, 3, 3]");
  if (index < 0 || index >= h.dim(0)) throw ShapeError("homography batch index out of range");
  Homography out;
  for (int i = 0; i < 9; ++i) out.m[static_cast<std::size_t>(i)] = h.data()[static_cast<std::size_t>(9 * index + i)];
  return out;
}

std::pair<double, double> Homography::apply(double x, double y) const {
  const double w = m[6] * x + m[7] * y + m[8];
  return {(m[0] * x + m[1] * y + m[2]) / w, (m[3] * x + m[4] * y + m[5]) / w};
}

double Homography::determinant() const {
  return m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6]) + m[2] * (m[3] * m[7] - m[4] * m[6]);
}

Homography Homography::inverse() const {
  const double det = determinant();
  if (!(std::fabs(det) > 1e-8)) throw DegenerateError("degenerate configuration: homography is not invertible");
  Homography r;
  r.m = {(m[4] * m[8] - m[5] * m[7]) / det, (m[2] * m[7] - m[1] * m[8]) / det, (m[1] * m[5] - m[2] * m[4]) / det,
         (m[5] * m[6] - m[3] * m[8]) / det, (m[0] * m[8] - m[2] * m[6]) / det, (m[2] * m[3] - m[0] * m[5]) / det,
         (m[3] * m[7] - m[4] * m[6]) / det, (m[1] * m[6] - m[0] * m[7]) / det, (m[0] * m[4] - m[1] * m[3]) / det};
  const double s = r.m[8];
  for (auto& v : r.m) v /= s;
  return r;
}

Homography Homography::operator*(const Homography& rhs) const {
  Homography r;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      double s = 0.0;
      for (int k = 0; k < 3; ++k) s += m[static_cast<std::size_t>(i * 3 + k)] * rhs.m[static_cast<std::size_t>(k * 3 + j)];
      r.m[static_cast<std::size_t>(i * 3 + j)] = s;
    }
  return r;
}

Tensor Homography::to_tensor() const {
  std::vector<float> v(m.begin(), m.end());
  return Tensor::from_vector({1, 3, 3}, std::move(v));
}

Homography homography_from_offsets(const CornerOffsets& offsets, int64_t width, int64_t height) {
  if (width < 2 || height < 2) throw ShapeError("homography_from_offsets: patch must be at least 2x2");
  const Homography norm = normalizer(width, height);
  double a[8][9];
  for (std::size_t k = 0; k < 4; ++k) {
    const double x = kUnitCorners[k][0], y = kUnitCorners[k][1];
    const double u = x + offsets[2 * k] * norm.m[0], v = y + offsets[2 * k + 1] * norm.m[4];
    const double r0[9] = {x, y, 1, 0, 0, 0, -u * x, -u * y, u};
    const double r1[9] = {0, 0, 0, x, y, 1, -v * x, -v * y, v};
    std::copy_n(r0, 9, a[2 * k]);
    std::copy_n(r1, 9, a[2 * k + 1]);
  }
  for (int c = 0; c < 8; ++c) {
    int piv = c;
    for (int r = c + 1; r < 8; ++r)
      if (std::fabs(a[r][c]) > std::fabs(a[piv][c])) piv = r;
    if (std::fabs(a[piv][c]) < 1e-10) throw DegenerateError("degenerate configuration: singular DLT system");
    if (piv != c) std::swap(a[piv], a[c]);
    for (int r = c + 1; r < 8; ++r) {
      const double f = a[r][c] / a[c][c];
      if (f == 0.0) continue;
      for (int j = c; j < 9; ++j) a[r][j] -= f * a[c][j];
    }
  }
  double h[8];
  for (int r = 7; r >= 0; --r) {
    double s = a[r][8];
    for (int j = r + 1; j < 8; ++j) s -= a[r][j] * h[j];
    h[r] = s / a[r][r];
  }
  const Homography hn{{h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], 1.0}};
  Homography out = norm.inverse() * hn * norm;
  const double s = out.m[8];
  for (auto& v : out.m) v /= s;
  return out;
}

CornerOffsets offsets_from_homography(const Homography& h, int64_t width, int64_t height) {
  CornerOffsets out{};
  const auto corners = patch_corners(width, height);
  for (std::size_t k = 0; k < 4; ++k) {
    const auto [x, y] = h.apply(corners[k][0], corners[k][1]);
    out[2 * k] = static_cast<float>(x - corners[k][0]);
    out[2 * k + 1] = static_cast<float>(y - corners[k][1]);
  }
  return out;
}

double corner_error(const CornerOffsets& a, const CornerOffsets& b) {
  double total = 0.0;
  for (std::size_t k = 0; k < 4; ++k) {
    const double dx = static_cast<double>(a[2 * k]) - b[2 * k];
    const double dy = static_cast<double>(a[2 * k + 1]) - b[2 * k + 1];
    total += std::sqrt(dx * dx + dy * dy);
  }
  return total / 4.0;
}

Tensor dlt_system(const Tensor& dst) {
  if (dst.rank() != 3 || dst.dim(1) != 4 || dst.dim(2) != 2) throw ShapeError("dlt_system: expected [B, 4, 2]");
  const int64_t B = dst.dim(0);
  Tensor out = detail::make_result({B, 8, 9}, {&dst});
  const float* d = dst.data().data();
  float* o = out.mutable_data().data();
  for (int64_t b = 0; b < B; ++b) {
    for (std::size_t k = 0; k < 4; ++k) {
      const float x = kUnitCorners[k][0], y = kUnitCorners[k][1];
      const float u = d[b * 8 + static_cast<int64_t>(2 * k)], v = d[b * 8 + static_cast<int64_t>(2 * k + 1)];
      float* r0 = o + (b * 8 + static_cast<int64_t>(2 * k)) * 9;
      float* r1 = r0 + 9;
      const float row0[9] = {x, y, 1, 0, 0, 0, -u * x, -u * y, u};
      const float row1[9] = {0, 0, 0, x, y, 1, -v * x, -v * y, v};
      std::copy_n(row0, 9, r0);
      std::copy_n(row1, 9, r1);
    }
  }
  detail::record(out, {dst}, [dst, out, B]() {
    const float* g = detail::out_grad(out);
    float* gd = detail::grad_target(dst);
    for (int64_t b = 0; b < B; ++b) {
      for (std::size_t k = 0; k < 4; ++k) {
        const float x = kUnitCorners[k][0], y = kUnitCorners[k][1];
        const float* g0 = g + (b * 8 + static_cast<int64_t>(2 * k)) * 9;
        const float* g1 = g0 + 9;
        gd[b * 8 + static_cast<int64_t>(2 * k)] += -x * g0[6] - y * g0[7] + g0[8];
        gd[b * 8 + static_cast<int64_t>(2 * k + 1)] += -x * g1[6] - y * g1[7] + g1[8];
      }
    }
  });
  return out;
}

Tensor solve_dlt(const Tensor& offsets, int64_t patch_width, int64_t patch_height) {
  if (offsets.rank() != 2 || offsets.dim(1) != 8) {
    throw ShapeError("solve_dlt: expected offsets [B, 8], got " + shape_to_string(offsets.shape()));
  }
  if (patch_width < 2 || patch_height < 2) throw ShapeError("solve_dlt: patch must be at least 2x2");
  const int64_t B = offsets.dim(0);
  const Homography norm = normalizer(patch_width, patch_height);

  // dst_n = norm(corner + offset) = corner_n + offset * (sx, sy)
  const auto sx = static_cast<float>(norm.m[0]), sy = static_cast<float>(norm.m[4]);
  const Tensor step = Tensor::from_vector({1, 4, 2}, {sx, sy, sx, sy, sx, sy, sx, sy});
  std::vector<float> base;
  for (const auto& c : kUnitCorners) base.insert(base.end(), c.begin(), c.end());
  const Tensor dst = add(mul(reshape(offsets, {B, 4, 2}), step), Tensor::from_vector({1, 4, 2}, base));

  const Tensor system = dlt_system(dst);
  const Tensor h8 = solve_linear(reshape(narrow(system, 2, 0, 8), {B, 8, 8}), reshape(narrow(system, 2, 8, 1), {B, 8}));
  const Tensor hn = reshape(concat({h8, Tensor::full({B, 1}, 1.0f)}, 1), {B, 3, 3});

  const Homography denorm = norm.inverse();
  const Tensor h = matmul(matmul(denorm.to_tensor(), hn), norm.to_tensor());
  return div(h, reshape(narrow(reshape(h, {B, 9}), 1, 8, 1), {B, 1, 1}));
}

Tensor warp(const Tensor& img, const Tensor& h) {
  if (img.rank() != 4) throw ShapeError("warp: expected image [B, H, W, C]");
  return bilinear_sample(img, homography_grid(inverse3x3(h), img.dim(1), img.dim(2)));
}

Tensor align(const Tensor& img, const Tensor& h) {
  if (img.rank() != 4) throw ShapeError("align: expected image [B, H, W, C]");
  return bilinear_sample(img, homography_grid(h, img.dim(1), img.dim(2)));
}

Tensor warp_mask(const Tensor& ones, const Tensor& h) { return warp(ones, h); }

Tensor rescale_homography(const Tensor& h, double factor) {
  if (!(factor > 0.0)) throw ShapeError("rescale_homography: factor must be positive");
  const double c = 0.5 * factor - 0.5;
  const Homography s{{factor, 0, c, 0, factor, c, 0, 0, 1}};
  return matmul(matmul(s.to_tensor(), h), s.inverse().to_tensor());
}

CascadeState cascade_step(const CascadeState* previous, const Tensor& residual, int64_t patch_width,
                          int64_t patch_height) {
  CascadeState s;
  s.total_offsets = previous ? add(previous->total_offsets, residual) : residual;
  s.homography = solve_dlt(s.total_offsets, patch_width, patch_height);
  return s;
}

Tensor cascade_compose(std::span<const Tensor> stages, int64_t patch_width, int64_t patch_height) {
  if (stages.empty()) throw ShapeError("cascade_compose: no stages");
  Tensor total = stages[0];
  for (std::size_t i = 1; i < stages.size(); ++i) total = add(total, stages[i]);
  return solve_dlt(total, patch_width, patch_height);
}

}  // namespace abhe::geometry
