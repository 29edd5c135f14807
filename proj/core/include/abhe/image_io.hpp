#pragma once

#include <filesystem>

#include "abhe/tensor.hpp"

namespace abhe::io {

/// Reads PNG, PGM (P5) or PPM (P6) as a grayscale [H, W] image in [0, 1].
/// Colour channels are averaged; alpha is dropped. Throws IoError.
Tensor read_gray(const std::filesystem::path& path);

/// Writes an 8-bit grayscale PNG. Accepts [H, W], [H, W, 1] or [1, H, W, 1];
/// values are clamped to [0, 1].
void write_png(const std::filesystem::path& path, const Tensor& image);

}  // namespace abhe::io
