#pragma once

#include <array>
#include <span>
#include <utility>
#include <vector>

#include "abhe/tensor.hpp"

namespace abhe::geometry {

/// 8 corner displacements (dx0, dy0, ..., dx3, dy3) in pixels, corner order
/// top-left, top-right, bottom-right, bottom-left.
using CornerOffsets = std::array<float, 8>;

/// Corner pixel centres of a w x h patch in TL, TR, BR, BL order.
std::array<std::array<double, 2>, 4> patch_corners(int64_t width, int64_t height);

/// Plain 3x3 projective transform, row-major, normalised so m[8] == 1.
/// H_ab maps source-image (I_a) pixel coordinates to target-image (I_b)
/// coordinates.
struct Homography {
  std::array<double, 9> m = {1, 0, 0, 0, 1, 0, 0, 0, 1};

  static Homography identity() { return {}; }
  static Homography translation(double tx, double ty) { return {{1, 0, tx, 0, 1, ty, 0, 0, 1}}; }
  /// Batch entry `index` of a [B, 3, 3] tensor.
  static Homography from_tensor(const Tensor& h, int64_t index = 0);

  std::pair<double, double> apply(double x, double y) const;
  double determinant() const;
  /// Throws DegenerateError when |det| <= 1e-8.
  Homography inverse() const;
  Homography operator*(const Homography& rhs) const;
  Tensor to_tensor() const;  // [1, 3, 3]
};

/// Double-precision 4-point DLT with the same normalisation as solve_dlt.
/// Throws DegenerateError on a near-singular system.
Homography homography_from_offsets(const CornerOffsets& offsets, int64_t width, int64_t height);

/// Offsets that carry the patch corners to where `h` maps them.
CornerOffsets offsets_from_homography(const Homography& h, int64_t width, int64_t height);

/// Mean over the 4 corners of the Euclidean distance between displacements.
double corner_error(const CornerOffsets& a, const CornerOffsets& b);

// -- differentiable ---------------------------------------------------------

/// 4-point DLT: offsets [B, 8] -> H [B, 3, 3] mapping each patch corner to
/// corner + offset. Coordinates are normalised to [-1, 1] for the 8x8 solve.
/// Throws DegenerateError on a near-singular system.
Tensor solve_dlt(const Tensor& offsets, int64_t patch_width, int64_t patch_height);

/// The normalised 8x8 DLT system [B, 8, 9] (matrix | right-hand side) for
/// destination corners dst [B, 4, 2] given in normalised coordinates.
Tensor dlt_system(const Tensor& dst_normalized);

/// Inverse warp: output pixel p samples img at H^-1 p (zero outside).
/// img [B, H, W, C]; h [B, 3, 3].
Tensor warp(const Tensor& img, const Tensor& h);
/// Pulls content from the H-mapped location: output p samples img at H p.
/// Aligns a target-frame image onto the source frame.
Tensor align(const Tensor& img, const Tensor& h);
/// warp() applied to an all-ones mask.
Tensor warp_mask(const Tensor& ones, const Tensor& h);

/// Re-expresses an image-resolution homography at a resolution scaled by
/// `factor` (0.5 for a half-resolution map), treating each coarse pixel as
/// the average of a factor^-1 block of fine pixels.
Tensor rescale_homography(const Tensor& h, double factor);

/// Running state of the coarse-to-fine cascade.
struct CascadeState {
  Tensor total_offsets;  // [B, 8]
  Tensor homography;     // solve_dlt(total_offsets)
};

/// Adds one stage's residual offsets to the running total.
CascadeState cascade_step(const CascadeState* previous, const Tensor& residual, int64_t patch_width,
                          int64_t patch_height);
/// Final homography of a deepest-first list of residual offsets.
Tensor cascade_compose(std::span<const Tensor> stages, int64_t patch_width, int64_t patch_height);

}  // namespace abhe::geometry
