// Inputs shared by the unit tests and the acceptance runner.
#pragma once

#include <cmath>
#include <random>
#include <vector>

#include "abhe/geometry.hpp"
#include "abhe/swin.hpp"
#include "oracles.hpp"

namespace fixture {

// Random bias table so the oracle sees a non-trivial bias.
inline void randomise_bias(abhe::swin::WindowAttention& attn, std::mt19937_64& rng) {
  std::normal_distribution<float> d(0.0f, 0.5f);
  for (float& v : attn.bias.table.mutable_data()) v = d(rng);
}

// Dense [heads, n, n] bias read straight from the table by relative offset.
inline oracle::Vec bias_matrix(const abhe::swin::WindowAttention& attn) {
  const int64_t m = attn.bias.window, n = m * m, heads = attn.heads, span = 2 * m - 1;
  oracle::Vec out(static_cast<std::size_t>(heads * n * n));
  for (int64_t h = 0; h < heads; ++h)
    for (int64_t i = 0; i < n; ++i)
      for (int64_t j = 0; j < n; ++j) {
        const int64_t dy = (i / m) - (j / m), dx = (i % m) - (j % m);
        const int64_t row = (dy + m - 1) * span + (dx + m - 1);
        out[static_cast<std::size_t>((h * n + i) * n + j)] = attn.bias.table.at({row, h});
      }
  return out;
}

struct MetricPair {
  abhe::Tensor a, b;
  abhe::geometry::Homography h;
};

// Five fixed textured pairs of different sizes and alignments.
inline std::vector<MetricPair> metric_pairs() {
  std::vector<MetricPair> out;
  const int64_t sizes[5] = {24, 32, 20, 40, 28};
  for (int k = 0; k < 5; ++k) {
    const int64_t n = sizes[k];
    std::vector<float> a(static_cast<std::size_t>(n * n)), b(static_cast<std::size_t>(n * n));
    for (int64_t y = 0; y < n; ++y)
      for (int64_t x = 0; x < n; ++x) {
        const auto i = static_cast<std::size_t>(y * n + x);
        a[i] = static_cast<float>(0.5 + 0.3 * std::sin(0.3 * x + k) * std::cos(0.2 * y + 0.5 * k));
        b[i] = static_cast<float>(0.5 + 0.3 * std::sin(0.3 * x + k + 0.2) * std::cos(0.2 * y + 0.5 * k) +
                                  0.02 * std::sin(1.7 * x * y));
      }
    abhe::geometry::CornerOffsets o{};
    for (int i = 0; i < 8; ++i) o[static_cast<std::size_t>(i)] = static_cast<float>(0.4 * k * std::sin(1.3 * i + k));
    out.push_back({abhe::Tensor::from_vector({n, n}, a), abhe::Tensor::from_vector({n, n}, b),
                   abhe::geometry::homography_from_offsets(o, n, n)});
  }
  return out;
}

}  // namespace fixture
