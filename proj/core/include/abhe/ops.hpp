#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "abhe/tensor.hpp"

// Differentiable operators. Images and feature maps are channels-last
// [B, H, W, C]. Binary elementwise ops broadcast numpy-style: shapes are
// right-aligned and an extent of 1 stretches to match the other operand.

namespace abhe {

// -- elementwise -------------------------------------------------------------
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
/// a / (b + eps) with eps = 0 unless given; callers normalising by a
/// magnitude pass kNormEps.
Tensor div(const Tensor& a, const Tensor& b, float eps = 0.0f);
Tensor scale(const Tensor& x, float factor);
Tensor add_scalar(const Tensor& x, float value);
Tensor neg(const Tensor& x);
/// relu'(0) is taken as 0.
Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor sqrt(const Tensor& x);
Tensor square(const Tensor& x);
/// d|x|/dx at 0 is taken as 0.
Tensor abs(const Tensor& x);

inline constexpr float kNormEps = 1e-8f;

// -- reductions --------------------------------------------------------------
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
Tensor sum_axis(const Tensor& x, int axis, bool keepdim = false);
Tensor mean_axis(const Tensor& x, int axis, bool keepdim = false);
/// Ties route the gradient to the first maximal element.
Tensor max_axis(const Tensor& x, int axis, bool keepdim = false);
/// mean(|a - b|)
Tensor l1_distance(const Tensor& a, const Tensor& b);

// -- shape -------------------------------------------------------------------
Tensor reshape(const Tensor& x, Shape shape);
Tensor permute(const Tensor& x, std::span<const int> order);
Tensor permute(const Tensor& x, std::initializer_list<int> order);
Tensor transpose_last(const Tensor& x);
Tensor concat(const std::vector<Tensor>& parts, int axis);
/// Elements [start, start + length) along `axis`.
Tensor narrow(const Tensor& x, int axis, int64_t start, int64_t length);
/// torch.roll over the two spatial axes of [B, H, W, C].
Tensor roll2d(const Tensor& x, int64_t shift_h, int64_t shift_w);
/// out[i, :] = table[indices[i], :]
Tensor gather_rows(const Tensor& table, std::span<const int64_t> indices);

// -- linear algebra ----------------------------------------------------------
/// [.., m, k] x [.., k, n] -> [.., m, n]. Leading extents must agree, or one
/// operand must be a plain matrix (shared across the other's batch).
Tensor matmul(const Tensor& a, const Tensor& b);
/// x[.., in] * weight[in, out] + bias[out]; bias may be undefined.
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);

/// Solves A x = b for each batch entry; A [B, n, n], b [B, n].
/// Gaussian elimination with partial pivoting, carried out in double.
/// Throws DegenerateError when a pivot magnitude falls below 1e-10.
Tensor solve_linear(const Tensor& a, const Tensor& b);

/// Batched inverse of [B, 3, 3]; throws DegenerateError if |det| <= 1e-8.
Tensor inverse3x3(const Tensor& m);

// -- convolution / pooling ---------------------------------------------------
enum class Padding { kSame, kValid };

/// Cross-correlation. x [B, H, W, Cin], kernel [kh, kw, Cin, Cout].
/// "Same" padding splits the total pad as floor/ceil (before/after).
Tensor conv2d(const Tensor& x, const Tensor& kernel, int stride = 1, Padding padding = Padding::kSame);
/// Average pooling with zero padding; the divisor is always kernel*kernel.
Tensor avg_pool2d(const Tensor& x, int kernel, int stride, int pad);

// -- normalisation / attention ----------------------------------------------
/// softmax(k * x) along the last axis, max-subtracted.
Tensor softmax_scaled(const Tensor& x, float temperature = 1.0f);
/// Per-position standardisation over the last axis (eps 1e-5, biased
/// variance) followed by gamma * x + beta.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, float eps = 1e-5f);
/// x / sqrt(sum(x^2) + eps) along the last axis.
Tensor l2_normalize(const Tensor& x, float eps = kNormEps);

// -- sampling ----------------------------------------------------------------
/// Bilinear sampling of img [B, H, W, C] at grid [B, H', W', 2] holding
/// (x, y) pixel coordinates. Points outside [0, W-1] x [0, H-1] yield 0.
Tensor bilinear_sample(const Tensor& img, const Tensor& grid);

/// Sampling grid [B, out_h, out_w, 2] whose entry at pixel p is the
/// dehomogenised H p, for H [B, 3, 3].
Tensor homography_grid(const Tensor& h, int64_t out_h, int64_t out_w);

}  // namespace abhe
