#include "abhe/swin.hpp"

#include <cmath>

#include "abhe/error.hpp"

namespace abhe::swin {

void SwinConfig::validate() const {
  if (embed_dim <= 0 || num_heads <= 0 || window <= 0 || mlp_ratio <= 0) {
    throw ConfigError("swin: dimensions must be positive");
  }
  if (embed_dim % num_heads != 0) {
    throw ConfigError("swin: embed_dim " + std::to_string(embed_dim) + " not divisible by num_heads " +
                      std::to_string(num_heads));
  }
  if (shift != 0 && shift * 2 != window) throw ConfigError("swin: shift must be 0 or window/2");
}

Tensor window_partition(const Tensor& x, int64_t window) {
  if (x.rank() != 4) throw ShapeError("window_partition: expected [B, H, W, C]");
  const int64_t B = x.dim(0), H = x.dim(1), W = x.dim(2), C = x.dim(3);
  if (window <= 0 || H % window != 0 || W % window != 0) {
    throw ShapeError("window_partition: " + std::to_string(H) + "x" + std::to_string(W) +
                     " map is not divisible into " + std::to_string(window) + "-pixel windows");
  }
  Tensor t = reshape(x, {B, H / window, window, W / window, window, C});
  t = permute(t, {0, 1, 3, 2, 4, 5});
  return reshape(t, {B * (H / window) * (W / window), window * window, C});
}

Tensor window_reverse(const Tensor& windows, int64_t window, int64_t batch, int64_t height, int64_t width) {
  if (height % window != 0 || width % window != 0) throw ShapeError("window_reverse: indivisible extents");
  const int64_t C = windows.dim(-1);
  Tensor t = reshape(windows, {batch, height / window, width / window, window, window, C});
  t = permute(t, {0, 1, 3, 2, 4, 5});
  return reshape(t, {batch, height, width, C});
}

std::vector<int64_t> relative_position_index(int64_t window) {
  const int64_t n = window * window;
  const int64_t span = 2 * window - 1;
  std::vector<int64_t> index(static_cast<std::size_t>(n * n));
  for (int64_t i = 0; i < n; ++i) {
    for (int64_t j = 0; j < n; ++j) {
      const int64_t dr = i / window - j / window + window - 1;
      const int64_t dc = i % window - j % window + window - 1;
      index[static_cast<std::size_t>(i * n + j)] = dr * span + dc;
    }
  }
  return index;
}

std::vector<int> shift_region_labels(int64_t height, int64_t width, int64_t window, int64_t shift) {
  // Slices [0, -M), [-M, -s), [-s, end) along each axis, as laid out after the roll.
  auto band = [&](int64_t v, int64_t extent) {
    if (v < extent - window) return 0;
    if (v < extent - shift) return 1;
    return 2;
  };
  std::vector<int> labels(static_cast<std::size_t>(height * width));
  for (int64_t y = 0; y < height; ++y)
    for (int64_t x = 0; x < width; ++x) labels[static_cast<std::size_t>(y * width + x)] = band(y, height) * 3 + band(x, width);
  return labels;
}

Tensor cyclic_shift_mask(int64_t height, int64_t width, int64_t window, int64_t shift) {
  if (shift == 0) return {};
  if (shift * 2 != window) throw ShapeError("cyclic_shift_mask: shift must equal window/2");
  if (height % window != 0 || width % window != 0) throw ShapeError("cyclic_shift_mask: indivisible extents");
  const auto labels = shift_region_labels(height, width, window, shift);
  const int64_t nwh = height / window, nww = width / window, n = window * window;
  std::vector<float> mask(static_cast<std::size_t>(nwh * nww * n * n), 0.0f);
  for (int64_t wy = 0; wy < nwh; ++wy)
    for (int64_t wx = 0; wx < nww; ++wx) {
      const int64_t w = wy * nww + wx;
      auto label = [&](int64_t t) {
        const int64_t y = wy * window + t / window, x = wx * window + t % window;
        return labels[static_cast<std::size_t>(y * width + x)];
      };
      for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < n; ++j) {
          if (label(i) != label(j)) mask[static_cast<std::size_t>((w * n + i) * n + j)] = kMaskPenalty;
        }
    }
  return Tensor::from_vector({nwh * nww, n, n}, std::move(mask));
}

RelPosBias RelPosBias::create(ParameterStore& store, const std::string& name, int64_t window, int64_t heads) {
  RelPosBias b;
  const int64_t span = 2 * window - 1;
  b.table = store.add_constant(name + ".rel_pos_bias", {span * span, heads}, 0.0f);
  b.index = relative_position_index(window);
  b.window = window;
  b.heads = heads;
  return b;
}

Tensor RelPosBias::matrix() const {
  const int64_t n = window * window;
  Tensor rows = gather_rows(table, index);  // [n*n, heads]
  return permute(reshape(rows, {n, n, heads}), {2, 0, 1});
}

WindowAttention WindowAttention::create(ParameterStore& store, const std::string& name, const SwinConfig& config,
                                        Rng& rng) {
  WindowAttention a;
  a.qkv = Linear::create(store, name + ".qkv", config.embed_dim, 3 * config.embed_dim, rng);
  a.proj = Linear::create(store, name + ".proj", config.embed_dim, config.embed_dim, rng);
  a.bias = RelPosBias::create(store, name, config.window, config.num_heads);
  a.heads = config.num_heads;
  return a;
}

Tensor WindowAttention::operator()(const Tensor& tokens, const Tensor& mask, Tensor* weights) const {
  if (tokens.rank() != 3) throw ShapeError("wmsa: expected tokens [windows, N, C]");
  const int64_t nwb = tokens.dim(0), n = tokens.dim(1), c = tokens.dim(2);
  if (c % heads != 0) throw ShapeError("wmsa: channels not divisible by heads");
  if (n != bias.window * bias.window) throw ShapeError("wmsa: token count does not match the bias window");
  const int64_t d = c / heads;

  Tensor qkv_t = qkv(tokens);                                   // [nwb, n, 3c]
  qkv_t = permute(reshape(qkv_t, {nwb, n, 3, heads, d}), {2, 0, 3, 1, 4});  // [3, nwb, heads, n, d]
  auto part = [&](int i) { return reshape(narrow(qkv_t, 0, i, 1), {nwb, heads, n, d}); };
  const Tensor q = part(0), k = part(1), v = part(2);

  Tensor logits = scale(matmul(q, transpose_last(k)), 1.0f / std::sqrt(static_cast<float>(d)));
  logits = add(logits, bias.matrix());
  if (mask.defined()) {
    const int64_t nw = mask.dim(0);
    if (nwb % nw != 0) throw ShapeError("wmsa: window count is not a multiple of the mask's");
    logits = reshape(add(reshape(logits, {nwb / nw, nw, heads, n, n}), reshape(mask, {nw, 1, n, n})),
                     {nwb, heads, n, n});
  }
  Tensor attn = softmax_scaled(logits, 1.0f);
  if (weights) *weights = attn;
  Tensor out = permute(matmul(attn, v), {0, 2, 1, 3});  // [nwb, n, heads, d]
  return proj(reshape(out, {nwb, n, c}));
}

SwinBlock SwinBlock::create(ParameterStore& store, const std::string& name, const SwinConfig& config, Rng& rng) {
  config.validate();
  SwinBlock b;
  b.config = config;
  b.norm1 = LayerNorm::create(store, name + ".norm1", config.embed_dim);
  b.attn = WindowAttention::create(store, name + ".attn", config, rng);
  b.norm2 = LayerNorm::create(store, name + ".norm2", config.embed_dim);
  const int64_t hidden = config.mlp_ratio * config.embed_dim;
  b.fc1 = Linear::create(store, name + ".mlp.fc1", config.embed_dim, hidden, rng);
  b.fc2 = Linear::create(store, name + ".mlp.fc2", hidden, config.embed_dim, rng);
  return b;
}

Tensor SwinBlock::operator()(const Tensor& x) const {
  if (x.rank() != 4 || x.dim(3) != config.embed_dim) {
    throw ShapeError("swin block: expected [B, H, W, " + std::to_string(config.embed_dim) + "], got " +
                     shape_to_string(x.shape()));
  }
  const int64_t B = x.dim(0), H = x.dim(1), W = x.dim(2);
  const int64_t s = config.shift;
  Tensor h = norm1(x);
  if (s) h = roll2d(h, -s, -s);
  const Tensor mask = cyclic_shift_mask(H, W, config.window, s);
  h = window_reverse(attn(window_partition(h, config.window), mask), config.window, B, H, W);
  if (s) h = roll2d(h, s, s);
  const Tensor t = add(x, h);
  return add(t, fc2(relu(fc1(norm2(t)))));
}

Tensor gather_2x2(const Tensor& x) {
  if (x.rank() != 4) throw ShapeError("patch merging: expected [B, H, W, C]");
  const int64_t B = x.dim(0), H = x.dim(1), W = x.dim(2), C = x.dim(3);
  if (H % 2 != 0 || W % 2 != 0) {
    throw ShapeError("patch merging: extents " + std::to_string(H) + "x" + std::to_string(W) + " must be even");
  }
  Tensor t = reshape(x, {B, H / 2, 2, W / 2, 2, C});
  t = permute(t, {0, 1, 3, 4, 2, 5});  // [B, H/2, W/2, dx, dy, C]
  return reshape(t, {B, H / 2, W / 2, 4 * C});
}

PatchMerging PatchMerging::create(ParameterStore& store, const std::string& name, int64_t channels, Rng& rng) {
  PatchMerging m;
  m.norm = LayerNorm::create(store, name + ".norm", 4 * channels);
  m.reduction = Linear::create(store, name + ".reduction", 4 * channels, 2 * channels, rng, false);
  return m;
}

Tensor PatchMerging::operator()(const Tensor& x) const { return reduction(norm(gather_2x2(x))); }

}  // namespace abhe::swin
