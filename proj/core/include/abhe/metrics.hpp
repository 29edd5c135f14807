#pragma once

#include <cstdint>
#include <vector>

#include "abhe/geometry.hpp"
#include "abhe/tensor.hpp"

// Evaluation-only image quality measures. Nothing here records on a tape.

namespace abhe::metrics {

inline constexpr double kPsnrCap = 100.0;
inline constexpr double kMinOverlapFraction = 0.01;
inline constexpr int kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;
inline constexpr double kSsimK1 = 0.01;
inline constexpr double kSsimK2 = 0.03;

/// Single-channel images brought onto the source frame: source = mask * Ia,
/// target = Ib sampled at H p, mask = ones sampled at H p.
struct AlignedOverlap {
  int64_t width = 0;
  int64_t height = 0;
  std::vector<double> source;
  std::vector<double> target;
  std::vector<double> mask;
};

/// ia, ib: [H, W], [H, W, 1] or [1, H, W, 1] grayscale in [0, 1].
AlignedOverlap aligned_overlap(const Tensor& ia, const Tensor& ib, const geometry::Homography& h);

/// 10 log10(1 / MSE), MSE weighted by the mask; capped at kPsnrCap when
/// MSE < 1e-10. Throws NoOverlapError if the mask covers < 1% of pixels.
double psnr(const AlignedOverlap& overlap);
/// Mean single-scale SSIM (11x11 Gaussian, sigma 1.5) over the window
/// positions whose mask coverage is full.
double ssim(const AlignedOverlap& overlap);

double psnr(const Tensor& ia, const Tensor& ib, const geometry::Homography& h);
double ssim(const Tensor& ia, const Tensor& ib, const geometry::Homography& h);

/// Normalised 1-D Gaussian taps of the SSIM window.
std::vector<double> gaussian_taps(int size = kSsimWindow, double sigma = kSsimSigma);

}  // namespace abhe::metrics
