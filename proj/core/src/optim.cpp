#include "abhe/optim.hpp"

#include <cmath>

#include "abhe/error.hpp"

namespace abhe {

AdamState AdamState::for_params(std::span<const Tensor> params) {
  AdamState s;
  for (const auto& p : params) {
    s.m.emplace_back(static_cast<std::size_t>(p.numel()), 0.0f);
    s.v.emplace_back(static_cast<std::size_t>(p.numel()), 0.0f);
  }
  return s;
}

void adam_step(std::span<Tensor> params, AdamState& state, float lr, const AdamOptions& options) {
  if (state.m.size() != params.size() || state.v.size() != params.size()) {
    throw ShapeError("adam_step: state holds " + std::to_string(state.m.size()) + " moments for " +
                     std::to_string(params.size()) + " parameters");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto n = static_cast<std::size_t>(params[i].numel());
    if (state.m[i].size() != n || state.v[i].size() != n) {
      throw ShapeError("adam_step: moment size mismatch for parameter " + std::to_string(i) + " of shape " +
                       shape_to_string(params[i].shape()));
    }
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const auto correction1 = static_cast<float>(1.0 - std::pow(static_cast<double>(options.beta1), t));
  const auto correction2 = static_cast<float>(1.0 - std::pow(static_cast<double>(options.beta2), t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto data = params[i].mutable_data();
    const bool has_grad = params[i].has_grad();
    const float* g = has_grad ? params[i].grad().data() : nullptr;
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t j = 0; j < data.size(); ++j) {
      const float gj = g ? g[j] : 0.0f;
      m[j] = options.beta1 * m[j] + (1.0f - options.beta1) * gj;
      v[j] = options.beta2 * v[j] + (1.0f - options.beta2) * gj * gj;
      const float mhat = m[j] / correction1;
      const float vhat = v[j] / correction2;
      data[j] -= lr * mhat / (std::sqrt(vhat) + options.eps);
    }
  }
}

}  // namespace abhe
