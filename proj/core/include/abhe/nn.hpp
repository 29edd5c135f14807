#pragma once

#include <random>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "abhe/container.hpp"
#include "abhe/ops.hpp"
#include "abhe/tensor.hpp"

namespace abhe {

using Rng = std::mt19937_64;

/// Ordered set of named trainable tensors. Names are the checkpoint keys.
class ParameterStore {
 public:
  /// Registers a parameter. Throws ConfigError on a duplicate name.
  Tensor add(const std::string& name, Tensor value);
  /// uniform(-gain/sqrt(fan_in), gain/sqrt(fan_in))
  Tensor add_uniform(const std::string& name, Shape shape, int64_t fan_in, Rng& rng, float gain = 1.0f);
  Tensor add_constant(const std::string& name, Shape shape, float value);

  Tensor get(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.contains(name); }
  std::size_t size() const { return entries_.size(); }
  int64_t total_elements() const;

  std::vector<Tensor> tensors() const;
  std::span<const NamedTensor> named() const { return entries_; }

  /// Copies values in from `entries`; every registered name must be present
  /// with an identical shape. Extra entries are ignored.
  void load(std::span<const NamedTensor> entries);
  void zero_grad();

 private:
  std::vector<NamedTensor> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Weight gain for layers followed by a ReLU: sqrt(6) turns the default
/// bound into He-uniform, which keeps activations from shrinking with depth.
inline constexpr float kReluGain = 2.449489743f;

struct Linear {
  Tensor weight;  // [in, out]
  Tensor bias;    // [out], may be undefined

  static Linear create(ParameterStore& store, const std::string& name, int64_t in, int64_t out, Rng& rng,
                       bool with_bias = true, float gain = 1.0f);
  Tensor operator()(const Tensor& x) const { return linear(x, weight, bias); }
};

struct Conv2d {
  Tensor kernel;  // [kh, kw, in, out]
  Tensor bias;    // [out], may be undefined
  int stride = 1;
  Padding padding = Padding::kSame;

  static Conv2d create(ParameterStore& store, const std::string& name, int64_t kernel_size, int64_t in, int64_t out,
                       int stride, Rng& rng, bool with_bias = true, float gain = 1.0f);
  Tensor operator()(const Tensor& x) const;
};

struct LayerNorm {
  Tensor gamma;
  Tensor beta;

  static LayerNorm create(ParameterStore& store, const std::string& name, int64_t features);
  Tensor operator()(const Tensor& x) const { return layer_norm(x, gamma, beta); }
};

}  // namespace abhe
