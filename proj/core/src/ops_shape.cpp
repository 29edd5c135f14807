#include <numeric>

#include "abhe/ops.hpp"
#include "op_util.hpp"

namespace abhe {

using detail::grad_target;
using detail::out_grad;

Tensor reshape(const Tensor& x, Shape shape) {
  // a single -1 extent is inferred
  int64_t known = 1;
  int infer = -1;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (shape[i] == -1) {
      if (infer >= 0) throw ShapeError("reshape: at most one inferred extent");
      infer = static_cast<int>(i);
    } else {
      known *= shape[i];
    }
  }
  if (infer >= 0 && known > 0) shape[static_cast<std::size_t>(infer)] = x.numel() / known;
  if (shape_numel(shape) != x.numel()) {
    throw ShapeError("reshape: cannot view " + shape_to_string(x.shape()) + " as " + shape_to_string(shape));
  }
  Tensor out = detail::make_result(shape, {&x});
  std::copy(x.data().begin(), x.data().end(), out.mutable_data().begin());
  detail::record(out, {x}, [x, out]() {
    const float* g = out_grad(out);
    float* gx = grad_target(x);
    for (int64_t i = 0; i < x.numel(); ++i) gx[i] += g[i];
  });
  return out;
}

Tensor permute(const Tensor& x, std::initializer_list<int> order) {
  return permute(x, std::span<const int>(order.begin(), order.size()));
}

Tensor permute(const Tensor& x, std::span<const int> order) {
  const int rank = x.rank();
  if (static_cast<int>(order.size()) != rank) throw ShapeError("permute: order length must equal rank");
  std::vector<bool> seen(static_cast<std::size_t>(rank), false);
  Shape shape(static_cast<std::size_t>(rank));
  for (int i = 0; i < rank; ++i) {
    const int src = order[static_cast<std::size_t>(i)];
    if (src < 0 || src >= rank || seen[static_cast<std::size_t>(src)]) throw ShapeError("permute: invalid order");
    seen[static_cast<std::size_t>(src)] = true;
    shape[static_cast<std::size_t>(i)] = x.shape()[static_cast<std::size_t>(src)];
  }
  const auto in_strides = detail::contiguous_strides(x.shape());
  // stride in the input for each output axis
  std::vector<int64_t> strides(static_cast<std::size_t>(rank));
  for (int i = 0; i < rank; ++i) {
    strides[static_cast<std::size_t>(i)] = in_strides[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])];
  }
  auto src_index = std::make_shared<std::vector<int64_t>>(static_cast<std::size_t>(x.numel()));
  {
    std::vector<int64_t> idx(static_cast<std::size_t>(rank), 0);
    int64_t off = 0;
    for (int64_t o = 0; o < x.numel(); ++o) {
      (*src_index)[static_cast<std::size_t>(o)] = off;
      for (int d = rank - 1; d >= 0; --d) {
        const auto du = static_cast<std::size_t>(d);
        ++idx[du];
        off += strides[du];
        if (idx[du] < shape[du]) break;
        off -= strides[du] * idx[du];
        idx[du] = 0;
      }
    }
  }
  Tensor out = detail::make_result(shape, {&x});
  const float* in = x.data().data();
  float* o = out.mutable_data().data();
  for (int64_t i = 0; i < x.numel(); ++i) o[i] = in[(*src_index)[static_cast<std::size_t>(i)]];
  detail::record(out, {x}, [x, out, src_index]() {
    const float* g = out_grad(out);
    float* gx = grad_target(x);
    for (int64_t i = 0; i < x.numel(); ++i) gx[(*src_index)[static_cast<std::size_t>(i)]] += g[i];
  });
  return out;
}

Tensor transpose_last(const Tensor& x) {
  const int rank = x.rank();
  if (rank < 2) throw ShapeError("transpose_last: rank must be >= 2");
  std::vector<int> order(static_cast<std::size_t>(rank));
  std::iota(order.begin(), order.end(), 0);
  std::swap(order[static_cast<std::size_t>(rank - 1)], order[static_cast<std::size_t>(rank - 2)]);
  return permute(x, order);
}

Tensor concat(const std::vector<Tensor>& parts, int axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const int rank = parts[0].rank();
  const int a = detail::normalize_axis(axis, rank);
  Shape shape = parts[0].shape();
  int64_t total = 0;
  for (const auto& p : parts) {
    if (p.rank() != rank) throw ShapeError("concat: rank mismatch");
    for (int d = 0; d < rank; ++d) {
      if (d != a && p.shape()[static_cast<std::size_t>(d)] != shape[static_cast<std::size_t>(d)]) {
        throw ShapeError("concat: extent mismatch " + shape_to_string(p.shape()) + " vs " + shape_to_string(shape));
      }
    }
    total += p.shape()[static_cast<std::size_t>(a)];
  }
  shape[static_cast<std::size_t>(a)] = total;
  Tensor out = detail::make_result(shape, parts);
  const auto s = detail::split_at(shape, a);
  float* o = out.mutable_data().data();
  int64_t offset = 0;
  for (const auto& p : parts) {
    const int64_t e = p.shape()[static_cast<std::size_t>(a)];
    const float* in = p.data().data();
    for (int64_t q = 0; q < s.outer; ++q) {
      std::copy(in + q * e * s.inner, in + (q + 1) * e * s.inner, o + (q * s.extent + offset) * s.inner);
    }
    offset += e;
  }
  detail::record(out, parts, [parts, out, s, a]() {
    const float* g = out_grad(out);
    int64_t offset = 0;
    for (const auto& p : parts) {
      const int64_t e = p.shape()[static_cast<std::size_t>(a)];
      if (float* gp = grad_target(p)) {
        for (int64_t q = 0; q < s.outer; ++q) {
          const float* src = g + (q * s.extent + offset) * s.inner;
          float* dst = gp + q * e * s.inner;
          for (int64_t i = 0; i < e * s.inner; ++i) dst[i] += src[i];
        }
      }
      offset += e;
    }
  });
  return out;
}

Tensor narrow(const Tensor& x, int axis, int64_t start, int64_t length) {
  const int a = detail::normalize_axis(axis, x.rank());
  const auto s = detail::split_at(x.shape(), a);
  if (start < 0 || length <= 0 || start + length > s.extent) {
    throw ShapeError("narrow: range [" + std::to_string(start) + ", " + std::to_string(start + length) +
                     ") outside extent " + std::to_string(s.extent));
  }
  Shape shape = x.shape();
  shape[static_cast<std::size_t>(a)] = length;
  Tensor out = detail::make_result(shape, {&x});
  const float* in = x.data().data();
  float* o = out.mutable_data().data();
  for (int64_t q = 0; q < s.outer; ++q) {
    const float* src = in + (q * s.extent + start) * s.inner;
    std::copy(src, src + length * s.inner, o + q * length * s.inner);
  }
  detail::record(out, {x}, [x, out, s, start, length]() {
    const float* g = out_grad(out);
    float* gx = grad_target(x);
    for (int64_t q = 0; q < s.outer; ++q) {
      float* dst = gx + (q * s.extent + start) * s.inner;
      const float* src = g + q * length * s.inner;
      for (int64_t i = 0; i < length * s.inner; ++i) dst[i] += src[i];
    }
  });
  return out;
}

Tensor roll2d(const Tensor& x, int64_t shift_h, int64_t shift_w) {
  detail::require_rank(x, 4, "roll2d");
  const int64_t B = x.dim(0), H = x.dim(1), W = x.dim(2), C = x.dim(3);
  const int64_t sh = ((shift_h % H) + H) % H;
  const int64_t sw = ((shift_w % W) + W) % W;
  Tensor out = detail::make_result(x.shape(), {&x});
  const float* in = x.data().data();
  float* o = out.mutable_data().data();
  auto dst_row = [=](int64_t b, int64_t h, int64_t w) { return ((b * H + (h + sh) % H) * W + (w + sw) % W) * C; };
  for (int64_t b = 0; b < B; ++b)
    for (int64_t h = 0; h < H; ++h)
      for (int64_t w = 0; w < W; ++w) std::copy_n(in + ((b * H + h) * W + w) * C, C, o + dst_row(b, h, w));
  detail::record(out, {x}, [x, out, B, H, W, C, dst_row]() {
    const float* g = out_grad(out);
    float* gx = grad_target(x);
    for (int64_t b = 0; b < B; ++b)
      for (int64_t h = 0; h < H; ++h)
        for (int64_t w = 0; w < W; ++w) {
          const float* src = g + dst_row(b, h, w);
          float* dst = gx + ((b * H + h) * W + w) * C;
          for (int64_t c = 0; c < C; ++c) dst[c] += src[c];
        }
  });
  return out;
}

Tensor gather_rows(const Tensor& table, std::span<const int64_t> indices) {
  detail::require_rank(table, 2, "gather_rows");
  const int64_t R = table.dim(0), C = table.dim(1);
  auto idx = std::make_shared<std::vector<int64_t>>(indices.begin(), indices.end());
  for (int64_t i : *idx) {
    if (i < 0 || i >= R) throw ShapeError("gather_rows: index out of range");
  }
  Tensor out = detail::make_result({static_cast<int64_t>(idx->size()), C}, {&table});
  const float* in = table.data().data();
  float* o = out.mutable_data().data();
  for (std::size_t r = 0; r < idx->size(); ++r) std::copy_n(in + (*idx)[r] * C, C, o + static_cast<int64_t>(r) * C);
  detail::record(out, {table}, [table, out, idx, C]() {
    const float* g = out_grad(out);
    float* gt = grad_target(table);
    for (std::size_t r = 0; r < idx->size(); ++r) {
      for (int64_t c = 0; c < C; ++c) gt[(*idx)[r] * C + c] += g[static_cast<int64_t>(r) * C + c];
    }
  });
  return out;
}

}  // namespace abhe
