#include <cblas.h>

#include <array>
#include <cmath>

#include "abhe/ops.hpp"
#include "gemm.hpp"
#include "op_util.hpp"

namespace abhe {

using detail::grad_target;
using detail::out_grad;

namespace detail {

void gemm(bool trans_a, bool trans_b, int64_t m, int64_t n, int64_t k, float alpha, const float* a, const float* b,
          float beta, float* c) {
  const auto lda = static_cast<int>(trans_a ? m : k);
  const auto ldb = static_cast<int>(trans_b ? k : n);
  cblas_sgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans, trans_b ? CblasTrans : CblasNoTrans,
              static_cast<int>(m), static_cast<int>(n), static_cast<int>(k), alpha, a, lda, b, ldb, beta, c,
              static_cast<int>(n));
}

}  // namespace detail

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() < 2 || b.rank() < 2) throw ShapeError("matmul: operands must have rank >= 2");
  const int64_t m = a.dim(-2), k = a.dim(-1), n = b.dim(-1);
  if (b.dim(-2) != k) {
    throw ShapeError("matmul: inner extents differ, " + shape_to_string(a.shape()) + " x " + shape_to_string(b.shape()));
  }
  const Shape lead_a(a.shape().begin(), a.shape().end() - 2);
  const Shape lead_b(b.shape().begin(), b.shape().end() - 2);
  const int64_t batch_a = shape_numel(lead_a), batch_b = shape_numel(lead_b);
  const bool shared_b = lead_b.empty() || batch_b == 1;
  const bool shared_a = !shared_b && (lead_a.empty() || batch_a == 1);
  if (!shared_a && !shared_b && lead_a != lead_b) {
    throw ShapeError("matmul: batch extents differ, " + shape_to_string(a.shape()) + " x " + shape_to_string(b.shape()));
  }
  Shape shape = shared_a ? lead_b : lead_a;
  const int64_t batch = shared_a ? batch_b : batch_a;
  shape.push_back(m);
  shape.push_back(n);
  Tensor out = detail::make_result(shape, {&a, &b});

  const float* pa = a.data().data();
  const float* pb = b.data().data();
  float* po = out.mutable_data().data();
  if (shared_b) {
    detail::gemm(false, false, batch * m, n, k, 1.0f, pa, pb, 0.0f, po);
  } else {
    for (int64_t i = 0; i < batch; ++i) {
      detail::gemm(false, false, m, n, k, 1.0f, shared_a ? pa : pa + i * m * k, pb + i * k * n, 0.0f, po + i * m * n);
    }
  }

  detail::record(out, {a, b}, [a, b, out, m, n, k, batch, shared_a, shared_b]() {
    const float* g = out_grad(out);
    const float* pa = a.data().data();
    const float* pb = b.data().data();
    float* ga = grad_target(a);
    float* gb = grad_target(b);
    if (shared_b) {
      if (ga) detail::gemm(false, true, batch * m, k, n, 1.0f, g, pb, 1.0f, ga);
      if (gb) detail::gemm(true, false, k, n, batch * m, 1.0f, pa, g, 1.0f, gb);
      return;
    }
    for (int64_t i = 0; i < batch; ++i) {
      const float* gi = g + i * m * n;
      const float* ai = shared_a ? pa : pa + i * m * k;
      const float* bi = pb + i * k * n;
      if (ga) detail::gemm(false, true, m, k, n, 1.0f, gi, bi, 1.0f, shared_a ? ga : ga + i * m * k);
      if (gb) detail::gemm(true, false, k, n, m, 1.0f, ai, gi, 1.0f, gb + i * k * n);
    }
  });
  return out;
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  detail::require_rank(weight, 2, "linear weight");
  if (x.dim(-1) != weight.dim(0)) {
    throw ShapeError("linear: input features " + std::to_string(x.dim(-1)) + " vs weight " +
                     shape_to_string(weight.shape()));
  }
  Shape flat = {x.numel() / x.dim(-1), x.dim(-1)};
  Tensor y = matmul(x.rank() == 2 ? x : reshape(x, flat), weight);
  if (bias.defined()) y = add(y, bias);
  if (x.rank() == 2) return y;
  Shape shape = x.shape();
  shape.back() = weight.dim(1);
  return reshape(y, shape);
}

namespace {

constexpr double kPivotTolerance = 1e-10;

// In-place LU with partial pivoting on an n x n row-major matrix.
void lu_factor(std::vector<double>& lu, std::vector<int>& perm, int n) {
  perm.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) perm[static_cast<std::size_t>(i)] = i;
  for (int col = 0; col < n; ++col) {
    int pivot = col;
    double best = std::fabs(lu[static_cast<std::size_t>(col * n + col)]);
    for (int r = col + 1; r < n; ++r) {
      const double v = std::fabs(lu[static_cast<std::size_t>(r * n + col)]);
      if (v > best) {
        best = v;
        pivot = r;
      }
    }
    if (!(best >= kPivotTolerance)) {
      throw DegenerateError("degenerate configuration: linear system is near-singular (pivot " + std::to_string(best) +
                            ")");
    }
    if (pivot != col) {
      for (int c = 0; c < n; ++c) {
        std::swap(lu[static_cast<std::size_t>(col * n + c)], lu[static_cast<std::size_t>(pivot * n + c)]);
      }
      std::swap(perm[static_cast<std::size_t>(col)], perm[static_cast<std::size_t>(pivot)]);
    }
    const double d = lu[static_cast<std::size_t>(col * n + col)];
    for (int r = col + 1; r < n; ++r) {
      double& f = lu[static_cast<std::size_t>(r * n + col)];
      f /= d;
      for (int c = col + 1; c < n; ++c) {
        lu[static_cast<std::size_t>(r * n + c)] -= f * lu[static_cast<std::size_t>(col * n + c)];
      }
    }
  }
}

// Solves A x = rhs given the factorisation of A (P A = L U).
std::vector<double> lu_solve(const std::vector<double>& lu, const std::vector<int>& perm, const double* rhs, int n) {
  std::vector<double> x(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    double v = rhs[perm[static_cast<std::size_t>(i)]];
    for (int c = 0; c < i; ++c) v -= lu[static_cast<std::size_t>(i * n + c)] * x[static_cast<std::size_t>(c)];
    x[static_cast<std::size_t>(i)] = v;
  }
  for (int i = n - 1; i >= 0; --i) {
    double v = x[static_cast<std::size_t>(i)];
    for (int c = i + 1; c < n; ++c) v -= lu[static_cast<std::size_t>(i * n + c)] * x[static_cast<std::size_t>(c)];
    x[static_cast<std::size_t>(i)] = v / lu[static_cast<std::size_t>(i * n + i)];
  }
  return x;
}

// Solves A^T y = rhs given P A = L U, i.e. U^T L^T P y = rhs.
std::vector<double> lu_solve_transposed(const std::vector<double>& lu, const std::vector<int>& perm, const double* rhs,
                                        int n) {
  std::vector<double> z(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {  // U^T z = rhs
    double v = rhs[i];
    for (int r = 0; r < i; ++r) v -= lu[static_cast<std::size_t>(r * n + i)] * z[static_cast<std::size_t>(r)];
    z[static_cast<std::size_t>(i)] = v / lu[static_cast<std::size_t>(i * n + i)];
  }
  for (int i = n - 1; i >= 0; --i) {  // L^T w = z (unit diagonal)
    double v = z[static_cast<std::size_t>(i)];
    for (int r = i + 1; r < n; ++r) v -= lu[static_cast<std::size_t>(r * n + i)] * z[static_cast<std::size_t>(r)];
    z[static_cast<std::size_t>(i)] = v;
  }
  std::vector<double> y(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) y[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])] = z[static_cast<std::size_t>(i)];
  return y;
}

}  // namespace

Tensor solve_linear(const Tensor& a, const Tensor& b) {
  detail::require_rank(a, 3, "solve_linear matrix");
  detail::require_rank(b, 2, "solve_linear rhs");
  const int64_t batch = a.dim(0);
  const int n = static_cast<int>(a.dim(1));
  if (a.dim(2) != n || b.dim(0) != batch || b.dim(1) != n) {
    throw ShapeError("solve_linear: incompatible shapes " + shape_to_string(a.shape()) + " and " +
                     shape_to_string(b.shape()));
  }
  Tensor out = detail::make_result({batch, n}, {&a, &b});
  struct Factor {
    std::vector<double> lu;
    std::vector<int> perm;
    std::vector<double> x;
  };
  auto factors = std::make_shared<std::vector<Factor>>(static_cast<std::size_t>(batch));
  const float* pa = a.data().data();
  const float* pb = b.data().data();
  float* po = out.mutable_data().data();
  for (int64_t i = 0; i < batch; ++i) {
    Factor& f = (*factors)[static_cast<std::size_t>(i)];
    f.lu.assign(pa + i * n * n, pa + (i + 1) * n * n);
    lu_factor(f.lu, f.perm, n);
    std::vector<double> rhs(pb + i * n, pb + (i + 1) * n);
    f.x = lu_solve(f.lu, f.perm, rhs.data(), n);
    for (int r = 0; r < n; ++r) po[i * n + r] = static_cast<float>(f.x[static_cast<std::size_t>(r)]);
  }
  detail::record(out, {a, b}, [a, b, out, factors, batch, n]() {
    const float* g = out_grad(out);
    float* ga = grad_target(a);
    float* gb = grad_target(b);
    for (int64_t i = 0; i < batch; ++i) {
      const Factor& f = (*factors)[static_cast<std::size_t>(i)];
      std::vector<double> gi(g + i * n, g + (i + 1) * n);
      // lambda = A^-T g; dL/db = lambda, dL/dA = -lambda x^T
      const auto lambda = lu_solve_transposed(f.lu, f.perm, gi.data(), n);
      if (gb) {
        for (int r = 0; r < n; ++r) gb[i * n + r] += static_cast<float>(lambda[static_cast<std::size_t>(r)]);
      }
      if (ga) {
        for (int r = 0; r < n; ++r)
          for (int c = 0; c < n; ++c)
            ga[(i * n + r) * n + c] -=
                static_cast<float>(lambda[static_cast<std::size_t>(r)] * f.x[static_cast<std::size_t>(c)]);
      }
    }
  });
  return out;
}

Tensor inverse3x3(const Tensor& m) {
  detail::require_rank(m, 3, "inverse3x3");
  if (m.dim(1) != 3 || m.dim(2) != 3) throw ShapeError("inverse3x3: expected [B, 3, 3], got " + shape_to_string(m.shape()));
  const int64_t batch = m.dim(0);
  Tensor out = detail::make_result(m.shape(), {&m});
  auto inverses = std::make_shared<std::vector<std::array<double, 9>>>(static_cast<std::size_t>(batch));
  const float* pm = m.data().data();
  float* po = out.mutable_data().data();
  for (int64_t i = 0; i < batch; ++i) {
    const float* h = pm + 9 * i;
    std::array<double, 9> e{};
    for (int j = 0; j < 9; ++j) e[static_cast<std::size_t>(j)] = h[j];
    const double c00 = e[4] * e[8] - e[5] * e[7];
    const double c01 = e[5] * e[6] - e[3] * e[8];
    const double c02 = e[3] * e[7] - e[4] * e[6];
    const double det = e[0] * c00 + e[1] * c01 + e[2] * c02;
    // scale-invariant check: compare against the matrix magnitude cubed
    double norm = 0.0;
    for (double v : e) norm = std::max(norm, std::fabs(v));
    if (!(std::fabs(det) > 1e-8 * norm * norm * norm)) {
      throw DegenerateError("degenerate configuration: homography is not invertible (det " + std::to_string(det) + ")");
    }
    auto& inv = (*inverses)[static_cast<std::size_t>(i)];
    inv = {c00 / det,
           (e[2] * e[7] - e[1] * e[8]) / det,
           (e[1] * e[5] - e[2] * e[4]) / det,
           c01 / det,
           (e[0] * e[8] - e[2] * e[6]) / det,
           (e[2] * e[3] - e[0] * e[5]) / det,
           c02 / det,
           (e[1] * e[6] - e[0] * e[7]) / det,
           (e[0] * e[4] - e[1] * e[3]) / det};
    for (int j = 0; j < 9; ++j) po[9 * i + j] = static_cast<float>(inv[static_cast<std::size_t>(j)]);
  }
  detail::record(out, {m}, [m, out, inverses, batch]() {
    const float* g = out_grad(out);
    float* gm = grad_target(m);
    // dL/dM = -M^-T G M^-T
    for (int64_t i = 0; i < batch; ++i) {
      const auto& inv = (*inverses)[static_cast<std::size_t>(i)];
      const float* gi = g + 9 * i;
      std::array<double, 9> t{};  // G M^-T
      for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) {
          double s = 0.0;
          for (int k = 0; k < 3; ++k) s += gi[r * 3 + k] * inv[static_cast<std::size_t>(c * 3 + k)];
          t[static_cast<std::size_t>(r * 3 + c)] = s;
        }
      for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) {
          double s = 0.0;
          for (int k = 0; k < 3; ++k) s += inv[static_cast<std::size_t>(k * 3 + r)] * t[static_cast<std::size_t>(k * 3 + c)];
          gm[9 * i + r * 3 + c] -= static_cast<float>(s);
        }
    }
  });
  return out;
}

}  // namespace abhe
