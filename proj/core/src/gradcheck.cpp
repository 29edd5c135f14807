#include "abhe/gradcheck.hpp"

#include <cmath>
#include <iomanip>
#include <ostream>

#include "abhe/correlation.hpp"
#include "abhe/cross_nonlocal.hpp"
#include "abhe/error.hpp"
#include "abhe/geometry.hpp"
#include "abhe/losses.hpp"
#include "abhe/swin.hpp"

namespace abhe::gradcheck {

namespace {

Tensor normal(Shape shape, Rng& rng, float sd = 1.0f) {
  std::normal_distribution<float> d(0.0f, sd);
  std::vector<float> v(static_cast<std::size_t>(shape_numel(shape)));
  for (auto& x : v) x = d(rng);
  return Tensor::from_vector(std::move(shape), std::move(v));
}

Tensor uniform(Shape shape, Rng& rng, float lo, float hi) {
  std::uniform_real_distribution<float> d(lo, hi);
  std::vector<float> v(static_cast<std::size_t>(shape_numel(shape)));
  for (auto& x : v) x = d(rng);
  return Tensor::from_vector(std::move(shape), std::move(v));
}

// Random signs, magnitudes in [0.2, 1.5]: keeps relu/abs kinks out of reach.
Tensor off_zero(Shape shape, Rng& rng) {
  Tensor t = uniform(std::move(shape), rng, 0.2f, 1.5f);
  std::bernoulli_distribution flip(0.5);
  for (auto& x : t.mutable_data())
    if (flip(rng)) x = -x;
  return t;
}

// Distinct values spaced >= 0.1 apart, so a max never switches under a step.
Tensor spaced(Shape shape, Rng& rng) {
  const auto n = static_cast<std::size_t>(shape_numel(shape));
  std::vector<float> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = 0.1f * static_cast<float>(i);
  std::shuffle(v.begin(), v.end(), rng);
  std::uniform_real_distribution<float> jitter(-0.02f, 0.02f);
  for (auto& x : v) x += jitter(rng);
  return Tensor::from_vector(std::move(shape), std::move(v));
}

double weighted_sum(const Tensor& out, const std::vector<double>& r) {
  double s = 0.0;
  for (std::size_t i = 0; i < r.size(); ++i) s += static_cast<double>(out.data()[i]) * r[i];
  return s;
}

Tensor translation_like(Rng& rng, double tx, double ty) {
  std::uniform_real_distribution<float> small(-0.01f, 0.01f), tiny(-1e-3f, 1e-3f);
  return Tensor::from_vector({1, 3, 3}, {1 + small(rng), small(rng), static_cast<float>(tx), small(rng), 1 + small(rng),
                                         static_cast<float>(ty), tiny(rng), tiny(rng), 1.0f});
}

// Smooth test image in [0.1, 0.9].
Tensor smooth_image(int64_t size, double fx, double fy, double phase) {
  std::vector<float> v(static_cast<std::size_t>(size * size));
  for (int64_t y = 0; y < size; ++y)
    for (int64_t x = 0; x < size; ++x) {
      v[static_cast<std::size_t>(y * size + x)] =
          static_cast<float>(0.5 + 0.2 * std::sin(fx * x + phase) + 0.2 * std::cos(fy * y - 0.5 * phase));
    }
  return Tensor::from_vector({1, size, size, 1}, std::move(v));
}

double min_abs(const Tensor& t) {
  double m = 1e30;
  for (float v : t.data()) m = std::min(m, static_cast<double>(std::fabs(v)));
  return m;
}

double min_preactivation(const RegressionHead& head, const Tensor& x) {
  Tape::Pause no_tape;
  double m = 1e30;
  Tensor t = x;
  for (const auto& conv : head.convs) {
    t = conv(t);
    m = std::min(m, min_abs(t));
    t = relu(t);
  }
  t = reshape(t, {t.dim(0), -1});
  for (int i = 0; i < 3; ++i) {
    t = head.fcs[static_cast<std::size_t>(i)](t);
    m = std::min(m, min_abs(t));
    t = relu(t);
  }
  return m;
}

// Smallest |input| over the MLP hidden ReLU of a Swin block.
double min_mlp_preactivation(const swin::SwinBlock& block, const Tensor& x) {
  Tape::Pause no_tape;
  const int64_t s = block.config.shift, m = block.config.window;
  Tensor h = block.norm1(x);
  if (s) h = roll2d(h, -s, -s);
  h = swin::window_reverse(block.attn(swin::window_partition(h, m), swin::cyclic_shift_mask(x.dim(1), x.dim(2), m, s)), m,
                           x.dim(0), x.dim(1), x.dim(2));
  if (s) h = roll2d(h, s, s);
  return min_abs(block.fc1(block.norm2(add(x, h))));
}

}  // namespace

double relative_error(const Fn& f, const std::vector<Tensor>& inputs, Rng& rng, std::vector<float> eps,
                      std::vector<bool> checked) {
  if (checked.empty()) checked.assign(inputs.size(), true);
  if (eps.size() == 1) eps.assign(inputs.size(), eps[0]);
  if (eps.size() != inputs.size() || checked.size() != inputs.size()) {
    throw ShapeError("relative_error: need one step and one flag per input");
  }
  std::vector<Tensor> leaves;
  for (const auto& x : inputs) {
    Tensor l = x.detach();
    l.set_requires_grad(true);
    leaves.push_back(l);
  }
  Tensor out;
  std::vector<double> r;
  {
    Tape tape;
    Tape::Scope scope(tape);
    out = f(leaves);
    std::normal_distribution<double> d(0.0, 1.0);
    r.resize(static_cast<std::size_t>(out.numel()));
    std::vector<float> rf(r.size());
    for (std::size_t i = 0; i < r.size(); ++i) {
      rf[i] = static_cast<float>(d(rng));
      r[i] = rf[i];
    }
    const Tensor loss = sum(mul(out, Tensor::from_vector(out.shape(), std::move(rf))));
    tape.backward(loss);
  }

  double worst = 0.0;
  Tape::Pause no_tape;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    if (!checked[i]) continue;
    std::vector<Tensor> probe;
    for (const auto& x : inputs) probe.push_back(x.detach());
    Tensor& xi = probe[i];
    double diff2 = 0.0, ref2 = 0.0;
    for (int64_t j = 0; j < xi.numel(); ++j) {
      auto& v = xi.mutable_data()[static_cast<std::size_t>(j)];
      const float orig = v;
      const float hi = orig + eps[i], lo = orig - eps[i];
      v = hi;
      const double fp = weighted_sum(f(probe), r);
      v = lo;
      const double fm = weighted_sum(f(probe), r);
      v = orig;
      const double fd = (fp - fm) / (static_cast<double>(hi) - static_cast<double>(lo));
      const double g = leaves[i].has_grad() ? leaves[i].grad()[static_cast<std::size_t>(j)] : 0.0;
      diff2 += (g - fd) * (g - fd);
      ref2 += fd * fd;
    }
    const double err = std::sqrt(diff2) / std::max(std::sqrt(ref2), 1e-6);
    worst = std::max(worst, err);
  }
  return worst;
}

std::vector<Row> run_suite(uint64_t seed) {
  Rng rng(seed);
  std::vector<Row> rows;
  auto add_row = [&](const std::string& name, const Fn& f, const std::vector<Tensor>& in, std::vector<float> eps = {1e-2f},
                     std::vector<bool> checked = {}, double tol = kOpTolerance) {
    rows.push_back({name, relative_error(f, in, rng, eps, std::move(checked)), tol});
  };
  using In = std::span<const Tensor>;

  // elementwise
  add_row("add (broadcast)", [](In x) { return add(x[0], x[1]); }, {normal({3, 4}, rng), normal({4}, rng)});
  add_row("sub (broadcast)", [](In x) { return sub(x[0], x[1]); }, {normal({2, 3, 4}, rng), normal({3, 1}, rng)});
  add_row("mul (broadcast)", [](In x) { return mul(x[0], x[1]); }, {normal({3, 4}, rng), normal({3, 1}, rng)});
  add_row("div", [](In x) { return div(x[0], x[1]); }, {normal({3, 4}, rng), uniform({3, 4}, rng, 0.5f, 2.0f)});
  add_row("scale", [](In x) { return scale(x[0], -1.7f); }, {normal({5, 3}, rng)});
  add_row("add_scalar", [](In x) { return add_scalar(x[0], 0.3f); }, {normal({5, 3}, rng)});
  add_row("neg", [](In x) { return neg(x[0]); }, {normal({4, 4}, rng)});
  add_row("relu", [](In x) { return relu(x[0]); }, {off_zero({4, 5}, rng)});
  add_row("sigmoid", [](In x) { return sigmoid(x[0]); }, {normal({4, 5}, rng, 2.0f)});
  add_row("sqrt", [](In x) { return sqrt(x[0]); }, {uniform({4, 5}, rng, 0.5f, 2.0f)});
  add_row("square", [](In x) { return square(x[0]); }, {normal({4, 5}, rng)});
  add_row("abs", [](In x) { return abs(x[0]); }, {off_zero({4, 5}, rng)});

  // reductions
  add_row("sum", [](In x) { return sum(x[0]); }, {normal({3, 4, 5}, rng)});
  add_row("mean", [](In x) { return mean(x[0]); }, {normal({3, 4, 5}, rng)});
  add_row("sum_axis", [](In x) { return sum_axis(x[0], 1); }, {normal({3, 4, 5}, rng)});
  add_row("mean_axis (keepdim)", [](In x) { return mean_axis(x[0], -1, true); }, {normal({3, 4, 5}, rng)});
  add_row("max_axis", [](In x) { return max_axis(x[0], 1); }, {spaced({3, 5, 4}, rng)});
  add_row("l1_distance", [](In x) { return l1_distance(x[0], x[1]); }, [&] {
    Tensor a = normal({4, 5}, rng);
    Tensor d = off_zero({4, 5}, rng);
    return std::vector<Tensor>{a, add(a, d).detach()};
  }());

  // shape
  add_row("reshape", [](In x) { return reshape(x[0], {6, -1}); }, {normal({2, 3, 4}, rng)});
  add_row("permute", [](In x) { return permute(x[0], {2, 0, 1}); }, {normal({2, 3, 4}, rng)});
  add_row("transpose_last", [](In x) { return transpose_last(x[0]); }, {normal({2, 3, 4}, rng)});
  add_row("concat", [](In x) { return concat({x[0], x[1]}, 1); }, {normal({2, 3, 2}, rng), normal({2, 1, 2}, rng)});
  add_row("narrow", [](In x) { return narrow(x[0], 1, 1, 3); }, {normal({2, 5, 3}, rng)});
  add_row("roll2d", [](In x) { return roll2d(x[0], -1, 2); }, {normal({1, 4, 5, 2}, rng)});
  add_row("gather_rows (repeats)", [](In x) {
    const std::vector<int64_t> idx = {3, 0, 3, 1, 1, 2};
    return gather_rows(x[0], idx);
  }, {normal({4, 3}, rng)});

  // linear algebra
  add_row("matmul (batched)", [](In x) { return matmul(x[0], x[1]); }, {normal({2, 3, 4}, rng), normal({2, 4, 5}, rng)});
  add_row("matmul (shared rhs)", [](In x) { return matmul(x[0], x[1]); }, {normal({2, 3, 4}, rng), normal({4, 5}, rng)});
  add_row("linear", [](In x) { return linear(x[0], x[1], x[2]); },
          {normal({2, 3, 4}, rng), normal({4, 5}, rng), normal({5}, rng)});
  add_row("solve_linear", [](In x) { return solve_linear(x[0], x[1]); }, [&] {
    Tensor a = normal({2, 5, 5}, rng, 0.3f);
    for (int64_t b = 0; b < 2; ++b)
      for (int64_t i = 0; i < 5; ++i) a.mutable_data()[static_cast<std::size_t>(b * 25 + i * 6)] += 2.0f;
    return std::vector<Tensor>{a, normal({2, 5}, rng)};
  }());
  add_row("inverse3x3", [](In x) { return inverse3x3(x[0]); }, [&] {
    Tensor m = normal({2, 3, 3}, rng, 0.3f);
    for (int64_t b = 0; b < 2; ++b)
      for (int64_t i = 0; i < 3; ++i) m.mutable_data()[static_cast<std::size_t>(b * 9 + i * 4)] += 1.5f;
    return std::vector<Tensor>{m};
  }());

  // convolution and pooling
  add_row("conv2d 3x3 same", [](In x) { return conv2d(x[0], x[1], 1, Padding::kSame); },
          {normal({2, 5, 4, 3}, rng), normal({3, 3, 3, 2}, rng)});
  add_row("conv2d 3x3 stride 2", [](In x) { return conv2d(x[0], x[1], 2, Padding::kSame); },
          {normal({1, 6, 5, 2}, rng), normal({3, 3, 2, 3}, rng)});
  add_row("conv2d 3x3 valid", [](In x) { return conv2d(x[0], x[1], 1, Padding::kValid); },
          {normal({1, 5, 6, 2}, rng), normal({3, 3, 2, 2}, rng)});
  add_row("conv2d 1x1", [](In x) { return conv2d(x[0], x[1]); }, {normal({2, 3, 4, 3}, rng), normal({1, 1, 3, 4}, rng)});
  add_row("avg_pool2d 3x3 pad 1", [](In x) { return avg_pool2d(x[0], 3, 1, 1); }, {normal({1, 5, 4, 2}, rng)});
  add_row("avg_pool2d 2x2 stride 2", [](In x) { return avg_pool2d(x[0], 2, 2, 0); }, {normal({2, 4, 6, 2}, rng)});

  // normalisation
  add_row("softmax_scaled (k=10)", [](In x) { return softmax_scaled(x[0], 10.0f); }, {normal({2, 3, 5}, rng, 0.2f)}, {1e-3f});
  add_row("layer_norm", [](In x) { return layer_norm(x[0], x[1], x[2]); },
          {normal({3, 2, 5}, rng), normal({5}, rng), normal({5}, rng)});
  add_row("l2_normalize", [](In x) { return l2_normalize(x[0]); }, {normal({2, 3, 4}, rng)});

  // sampling; sample points stay 0.2 px or more from the interpolation knots
  add_row("bilinear_sample", [](In x) { return bilinear_sample(x[0], x[1]); }, [&] {
    Tensor grid = uniform({1, 3, 4, 2}, rng, 0.2f, 0.8f);
    std::uniform_int_distribution<int> cell(0, 3);
    for (auto& v : grid.mutable_data()) v += static_cast<float>(cell(rng));
    return std::vector<Tensor>{normal({1, 5, 5, 2}, rng), grid};
  }());
  add_row("homography_grid", [](In x) { return homography_grid(x[0], 4, 5); },
          {translation_like(rng, 0.3, -0.2)}, {1e-3f});

  // geometry
  add_row("dlt_system", [](In x) { return geometry::dlt_system(x[0]); }, {normal({2, 4, 2}, rng, 0.5f)});
  add_row("solve_dlt", [](In x) { return geometry::solve_dlt(x[0], 6, 6); }, {uniform({2, 8}, rng, -1.5f, 1.5f)});
  add_row("rescale_homography", [](In x) { return geometry::rescale_homography(x[0], 0.5); },
          {translation_like(rng, 0.5, 0.3)}, {1e-3f});
  add_row("warp", [](In x) { return geometry::warp(x[0], x[1]); },
          {normal({1, 5, 6, 2}, rng), translation_like(rng, 0.5, 0.35)}, {1e-2f, 1e-3f});
  add_row("align", [](In x) { return geometry::align(x[0], x[1]); },
          {normal({1, 6, 5, 1}, rng), translation_like(rng, -0.45, 0.3)}, {1e-2f, 1e-3f});

  // network modules, gradients with respect to their inputs
  {
    ParameterStore store;
    Rng init(seed + 1);
    swin::SwinConfig sc;
    sc.embed_dim = 4;
    sc.num_heads = 2;
    sc.window = 2;
    sc.shift = 1;
    sc.mlp_ratio = 2;
    const auto attn = swin::WindowAttention::create(store, "attn", sc, init);
    const Tensor mask = swin::cyclic_shift_mask(4, 4, 2, 1);
    add_row("window attention (masked)", [&](In x) { return attn(x[0], mask); }, {normal({4, 4, 4}, rng)}, {1e-3f}, {}, kModuleTolerance);
    const auto block = swin::SwinBlock::create(store, "block", sc, init);
    Tensor bx;
    for (int attempt = 0; attempt < 1000; ++attempt) {
      bx = normal({1, 4, 4, 4}, rng);
      if (min_mlp_preactivation(block, bx) > 0.02) break;
    }
    add_row("swin block (shifted)", [&](In x) { return block(x[0]); }, {bx}, {1e-3f}, {}, kModuleTolerance);
    const auto merge = swin::PatchMerging::create(store, "merge", 2, init);
    add_row("patch merging", [&](In x) { return merge(x[0]); }, {normal({1, 4, 4, 2}, rng)}, {1e-3f}, {}, kModuleTolerance);
    const auto nl = CrossNonLocal::create(store, 4, init, 10.0f, 0.9f);
    add_row("cross non-local", [&](In x) {
      const auto o = nl(x[0], x[1]);
      return concat({o.za, o.zb}, 3);
    }, {normal({1, 3, 3, 4}, rng, 0.5f), normal({1, 3, 3, 4}, rng, 0.5f)}, {1e-3f}, {}, kModuleTolerance);
    add_row("correlation_volume", [](In x) { return correlation_volume(x[0], x[1]); },
            {normal({1, 3, 3, 3}, rng), normal({1, 3, 3, 3}, rng)}, {1e-3f});
    const auto ca = ChannelAttention::create(store, "ca", 9, init);
    add_row("channel attention", [&](In x) { return ca(x[0]); }, {spaced({1, 3, 3, 9}, rng)}, {1e-3f}, {}, kModuleTolerance);
    HeadWidths hw;
    hw.conv = {6, 6, 6};
    hw.fc = {6, 6, 6};
    auto head = RegressionHead::create(store, "head", 6, 6, 4, hw, init);
    // fan-in scaled normal weights and no biases keep the output sensitive to
    // the input, well above f32 rounding; the zero start would hide everything
    for (auto& c : head.convs) {
      c.kernel = normal(c.kernel.shape(), init, std::sqrt(2.0f / static_cast<float>(c.kernel.dim(0) * c.kernel.dim(1) * c.kernel.dim(2))));
      c.bias = Tensor();
    }
    for (auto& l : head.fcs) {
      l.weight = normal(l.weight.shape(), init, std::sqrt(2.0f / static_cast<float>(l.weight.dim(0))));
      l.bias = Tensor();
    }
    // redraw until no ReLU input sits within 0.1 of its kink
    Tensor hx;
    for (int attempt = 0; attempt < 1000; ++attempt) {
      hx = normal({1, 6, 6, 4}, rng);
      if (min_preactivation(head, hx) > 0.1) break;
    }
    add_row("regression head", [&](In x) { return head(x[0]); }, {hx}, {1e-3f}, {}, kModuleTolerance);
  }

  // losses
  add_row("masked_l1", [](In x) { return masked_l1(x[0], x[1], x[2]); }, [&] {
    // b sits 1.0 above a, so |mask * a - align(b)| stays clear of its kink inside the overlap
    Tensor a = smooth_image(6, 0.9, 0.7, 0.3), b = add_scalar(smooth_image(6, 0.5, 1.1, 2.0), 1.0f);
    return std::vector<Tensor>{a, b, translation_like(rng, 0.4, 0.3)};
  }(), {1e-2f, 1e-2f, 1e-3f});

  // end to end: offsets -> DLT -> warp -> L1; inward offsets keep every sample inside the frame
  {
    const Tensor a = smooth_image(16, 0.45, 0.35, 0.2), b = smooth_image(16, 0.4, 0.5, 1.3);
    std::uniform_real_distribution<float> mag(1.2f, 1.8f);
    const float inward[8] = {1, 1, -1, 1, -1, -1, 1, -1};
    std::vector<float> off(8);
    for (int i = 0; i < 8; ++i) off[static_cast<std::size_t>(i)] = inward[i] * mag(rng);
    const std::vector<float> omega = {1.0f, 4.0f, 16.0f};
    add_row("end-to-end offsets->DLT->warp->L1", [&](In x) {
      const Tensor h = geometry::solve_dlt(x[0], 16, 16);
      const std::vector<Tensor> hs = {h, h, h};
      return pixel_loss(a, b, hs, omega);
    }, {Tensor::from_vector({1, 8}, off)}, {3e-3f}, {}, kEndToEndTolerance);
  }
  return rows;
}

void print_table(std::ostream& out, std::span<const Row> rows) {
  std::size_t width = 10;
  for (const auto& r : rows) width = std::max(width, r.name.size());
  out << std::left << std::setw(static_cast<int>(width + 2)) << "op" << std::right << std::setw(14) << "rel. error"
      << std::setw(12) << "tolerance" << "  result\n";
  for (const auto& r : rows) {
    out << std::left << std::setw(static_cast<int>(width + 2)) << r.name << std::right << std::scientific
        << std::setprecision(3) << std::setw(14) << r.error << std::setw(12) << std::setprecision(0) << r.tolerance
        << "  " << (r.passed() ? "PASS" : "FAIL") << '\n'
        << std::defaultfloat;
  }
}

}  // namespace abhe::gradcheck
