#include <cmath>

#include "abhe/ops.hpp"
#include "op_util.hpp"

namespace abhe {

namespace {

using detail::grad_target;
using detail::out_grad;

struct BroadcastPlan {
  Shape out;
  std::vector<int64_t> stride_a;
  std::vector<int64_t> stride_b;
  bool same = false;
};

BroadcastPlan plan_broadcast(const Shape& a, const Shape& b) {
  BroadcastPlan p;
  if (a == b) {
    p.out = a;
    p.same = true;
    return p;
  }
  const std::size_t rank = std::max(a.size(), b.size());
  p.out.assign(rank, 1);
  Shape pa(rank, 1), pb(rank, 1);
  std::copy(a.begin(), a.end(), pa.begin() + static_cast<std::ptrdiff_t>(rank - a.size()));
  std::copy(b.begin(), b.end(), pb.begin() + static_cast<std::ptrdiff_t>(rank - b.size()));
  for (std::size_t i = 0; i < rank; ++i) {
    if (pa[i] != pb[i] && pa[i] != 1 && pb[i] != 1) {
      throw ShapeError("cannot broadcast " + shape_to_string(a) + " with " + shape_to_string(b));
    }
    p.out[i] = std::max(pa[i], pb[i]);
  }
  const auto sa = detail::contiguous_strides(pa);
  const auto sb = detail::contiguous_strides(pb);
  p.stride_a.resize(rank);
  p.stride_b.resize(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    p.stride_a[i] = pa[i] == 1 ? 0 : sa[i];
    p.stride_b[i] = pb[i] == 1 ? 0 : sb[i];
  }
  return p;
}

// Calls f(i_out, i_a, i_b) for every output element in row-major order.
template <class F>
void for_each_broadcast(const BroadcastPlan& p, F&& f) {
  const int64_t n = shape_numel(p.out);
  if (p.same) {
    for (int64_t i = 0; i < n; ++i) f(i, i, i);
    return;
  }
  const std::size_t rank = p.out.size();
  std::vector<int64_t> idx(rank, 0);
  const int64_t last = p.out[rank - 1];
  const int64_t la = p.stride_a[rank - 1];
  const int64_t lb = p.stride_b[rank - 1];
  int64_t ia = 0, ib = 0;
  for (int64_t o = 0; o < n; o += last) {
    for (int64_t j = 0; j < last; ++j) f(o + j, ia + j * la, ib + j * lb);
    // advance the odometer over all but the last axis
    for (int d = static_cast<int>(rank) - 2; d >= 0; --d) {
      const auto du = static_cast<std::size_t>(d);
      ++idx[du];
      ia += p.stride_a[du];
      ib += p.stride_b[du];
      if (idx[du] < p.out[du]) break;
      ia -= p.stride_a[du] * idx[du];
      ib -= p.stride_b[du] * idx[du];
      idx[du] = 0;
    }
  }
}

enum class BinaryKind { kAdd, kSub, kMul, kDiv };

Tensor binary(const Tensor& a, const Tensor& b, BinaryKind kind, float eps = 0.0f) {
  auto plan = plan_broadcast(a.shape(), b.shape());
  Tensor out = detail::make_result(plan.out, {&a, &b});
  const float* pa = a.data().data();
  const float* pb = b.data().data();
  float* po = out.mutable_data().data();
  switch (kind) {
    case BinaryKind::kAdd:
      for_each_broadcast(plan, [&](int64_t o, int64_t i, int64_t j) { po[o] = pa[i] + pb[j]; });
      break;
    case BinaryKind::kSub:
      for_each_broadcast(plan, [&](int64_t o, int64_t i, int64_t j) { po[o] = pa[i] - pb[j]; });
      break;
    case BinaryKind::kMul:
      for_each_broadcast(plan, [&](int64_t o, int64_t i, int64_t j) { po[o] = pa[i] * pb[j]; });
      break;
    case BinaryKind::kDiv:
      for_each_broadcast(plan, [&](int64_t o, int64_t i, int64_t j) { po[o] = pa[i] / (pb[j] + eps); });
      break;
  }
  detail::record(out, {a, b}, [a, b, out, plan = std::move(plan), kind, eps]() {
    const float* g = out_grad(out);
    float* ga = grad_target(a);
    float* gb = grad_target(b);
    const float* va = a.data().data();
    const float* vb = b.data().data();
    for_each_broadcast(plan, [&](int64_t o, int64_t i, int64_t j) {
      const float go = g[o];
      switch (kind) {
        case BinaryKind::kAdd:
          if (ga) ga[i] += go;
          if (gb) gb[j] += go;
          break;
        case BinaryKind::kSub:
          if (ga) ga[i] += go;
          if (gb) gb[j] -= go;
          break;
        case BinaryKind::kMul:
          if (ga) ga[i] += go * vb[j];
          if (gb) gb[j] += go * va[i];
          break;
        case BinaryKind::kDiv: {
          const float d = vb[j] + eps;
          if (ga) ga[i] += go / d;
          if (gb) gb[j] -= go * va[i] / (d * d);
          break;
        }
      }
    });
  });
  return out;
}

// Unary op from a value function and a derivative expressed through (x, y).
template <class Fwd, class Deriv>
Tensor unary(const Tensor& x, Fwd fwd, Deriv deriv) {
  Tensor out = detail::make_result(x.shape(), {&x});
  const auto in = x.data();
  auto o = out.mutable_data();
  for (std::size_t i = 0; i < in.size(); ++i) o[i] = fwd(in[i]);
  detail::record(out, {x}, [x, out, deriv]() {
    const float* g = out_grad(out);
    float* gx = grad_target(x);
    const auto in = x.data();
    const auto y = out.data();
    for (std::size_t i = 0; i < in.size(); ++i) gx[i] += g[i] * deriv(in[i], y[i]);
  });
  return out;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return binary(a, b, BinaryKind::kAdd); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary(a, b, BinaryKind::kSub); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary(a, b, BinaryKind::kMul); }
Tensor div(const Tensor& a, const Tensor& b, float eps) { return binary(a, b, BinaryKind::kDiv, eps); }

Tensor scale(const Tensor& x, float factor) {
  return unary(x, [factor](float v) { return v * factor; }, [factor](float, float) { return factor; });
}

Tensor add_scalar(const Tensor& x, float value) {
  return unary(x, [value](float v) { return v + value; }, [](float, float) { return 1.0f; });
}

Tensor neg(const Tensor& x) { return scale(x, -1.0f); }

Tensor relu(const Tensor& x) {
  return unary(x, [](float v) { return v > 0.0f ? v : 0.0f; }, [](float v, float) { return v > 0.0f ? 1.0f : 0.0f; });
}

Tensor sigmoid(const Tensor& x) {
  return unary(
      x,
      [](float v) {
        // split by sign so exp never overflows
        if (v >= 0.0f) return 1.0f / (1.0f + std::exp(-v));
        const float e = std::exp(v);
        return e / (1.0f + e);
      },
      [](float, float y) { return y * (1.0f - y); });
}

Tensor sqrt(const Tensor& x) {
  for (float v : x.data()) {
    if (v < 0.0f) throw NumericalError("sqrt of a negative value");
  }
  return unary(x, [](float v) { return std::sqrt(v); }, [](float, float y) { return y > 0.0f ? 0.5f / y : 0.0f; });
}

Tensor square(const Tensor& x) {
  return unary(x, [](float v) { return v * v; }, [](float v, float) { return 2.0f * v; });
}

Tensor abs(const Tensor& x) {
  return unary(
      x, [](float v) { return std::fabs(v); },
      [](float v, float) { return v > 0.0f ? 1.0f : (v < 0.0f ? -1.0f : 0.0f); });
}

// -- reductions --------------------------------------------------------------

Tensor sum(const Tensor& x) {
  Tensor out = detail::make_result({1}, {&x});
  double acc = 0.0;
  for (float v : x.data()) acc += v;
  out.mutable_data()[0] = static_cast<float>(acc);
  detail::record(out, {x}, [x, out]() {
    const float g = out_grad(out)[0];
    float* gx = grad_target(x);
    for (int64_t i = 0; i < x.numel(); ++i) gx[i] += g;
  });
  return out;
}

Tensor mean(const Tensor& x) { return scale(sum(x), 1.0f / static_cast<float>(x.numel())); }

Tensor sum_axis(const Tensor& x, int axis, bool keepdim) {
  const int a = detail::normalize_axis(axis, x.rank());
  const auto s = detail::split_at(x.shape(), a);
  Shape shape = x.shape();
  if (keepdim) {
    shape[static_cast<std::size_t>(a)] = 1;
  } else {
    shape.erase(shape.begin() + a);
    if (shape.empty()) shape = {1};
  }
  Tensor out = detail::make_result(shape, {&x});
  const float* in = x.data().data();
  float* o = out.mutable_data().data();
  for (int64_t p = 0; p < s.outer; ++p) {
    for (int64_t e = 0; e < s.extent; ++e) {
      const float* row = in + (p * s.extent + e) * s.inner;
      float* dst = o + p * s.inner;
      for (int64_t q = 0; q < s.inner; ++q) dst[q] += row[q];
    }
  }
  detail::record(out, {x}, [x, out, s]() {
    const float* g = out_grad(out);
    float* gx = grad_target(x);
    for (int64_t p = 0; p < s.outer; ++p) {
      for (int64_t e = 0; e < s.extent; ++e) {
        float* row = gx + (p * s.extent + e) * s.inner;
        const float* src = g + p * s.inner;
        for (int64_t q = 0; q < s.inner; ++q) row[q] += src[q];
      }
    }
  });
  return out;
}

Tensor mean_axis(const Tensor& x, int axis, bool keepdim) {
  const int a = detail::normalize_axis(axis, x.rank());
  return scale(sum_axis(x, a, keepdim), 1.0f / static_cast<float>(x.shape()[static_cast<std::size_t>(a)]));
}

Tensor max_axis(const Tensor& x, int axis, bool keepdim) {
  const int a = detail::normalize_axis(axis, x.rank());
  const auto s = detail::split_at(x.shape(), a);
  Shape shape = x.shape();
  if (keepdim) {
    shape[static_cast<std::size_t>(a)] = 1;
  } else {
    shape.erase(shape.begin() + a);
    if (shape.empty()) shape = {1};
  }
  Tensor out = detail::make_result(shape, {&x});
  auto argmax = std::make_shared<std::vector<int64_t>>(static_cast<std::size_t>(s.outer * s.inner));
  const float* in = x.data().data();
  float* o = out.mutable_data().data();
  for (int64_t p = 0; p < s.outer; ++p) {
    for (int64_t q = 0; q < s.inner; ++q) {
      const float* base = in + p * s.extent * s.inner + q;
      int64_t best = 0;
      float best_v = base[0];
      for (int64_t e = 1; e < s.extent; ++e) {
        // strict comparison keeps the first maximal index
        if (base[e * s.inner] > best_v) {
          best_v = base[e * s.inner];
          best = e;
        }
      }
      o[p * s.inner + q] = best_v;
      (*argmax)[static_cast<std::size_t>(p * s.inner + q)] = best;
    }
  }
  detail::record(out, {x}, [x, out, s, argmax]() {
    const float* g = out_grad(out);
    float* gx = grad_target(x);
    for (int64_t p = 0; p < s.outer; ++p) {
      for (int64_t q = 0; q < s.inner; ++q) {
        const int64_t k = p * s.inner + q;
        gx[p * s.extent * s.inner + (*argmax)[static_cast<std::size_t>(k)] * s.inner + q] += g[k];
      }
    }
  });
  return out;
}

Tensor l1_distance(const Tensor& a, const Tensor& b) { return mean(abs(sub(a, b))); }

}  // namespace abhe
