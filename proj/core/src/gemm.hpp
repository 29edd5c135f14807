#pragma once

#include <cstdint>

namespace abhe::detail {

/// Row-major C = alpha * op(A) op(B) + beta * C with op(A) m x k, op(B) k x n.
void gemm(bool trans_a, bool trans_b, int64_t m, int64_t n, int64_t k, float alpha, const float* a, const float* b,
          float beta, float* c);

}  // namespace abhe::detail
