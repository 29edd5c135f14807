#include "abhe/nn.hpp"

#include <cmath>

#include "abhe/error.hpp"

namespace abhe {

Tensor ParameterStore::add(const std::string& name, Tensor value) {
  if (index_.contains(name)) throw ConfigError("duplicate parameter name '" + name + "'");
  value.set_requires_grad(true);
  index_.emplace(name, entries_.size());
  entries_.push_back({name, value});
  return value;
}

Tensor ParameterStore::add_uniform(const std::string& name, Shape shape, int64_t fan_in, Rng& rng, float gain) {
  const float bound = gain / std::sqrt(static_cast<float>(fan_in));
  std::uniform_real_distribution<float> dist(-bound, bound);
  std::vector<float> values(static_cast<std::size_t>(shape_numel(shape)));
  for (auto& v : values) v = dist(rng);
  return add(name, Tensor::from_vector(std::move(shape), std::move(values)));
}

Tensor ParameterStore::add_constant(const std::string& name, Shape shape, float value) {
  return add(name, Tensor::full(std::move(shape), value));
}

Tensor ParameterStore::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("unknown parameter '" + name + "'");
  return entries_[it->second].tensor;
}

int64_t ParameterStore::total_elements() const {
  int64_t n = 0;
  for (const auto& e : entries_) n += e.tensor.numel();
  return n;
}

std::vector<Tensor> ParameterStore::tensors() const {
  std::vector<Tensor> out;
  out.reserve(entries_.size());
  for (const auto& e : entries_) out.push_back(e.tensor);
  return out;
}

void ParameterStore::load(std::span<const NamedTensor> entries) {
  std::unordered_map<std::string, const NamedTensor*> by_name;
  for (const auto& e : entries) by_name.emplace(e.name, &e);
  for (auto& own : entries_) {
    auto it = by_name.find(own.name);
    if (it == by_name.end()) throw IoError("checkpoint is missing parameter '" + own.name + "'");
    const Tensor& src = it->second->tensor;
    if (src.shape() != own.tensor.shape()) {
      throw IoError("checkpoint parameter '" + own.name + "' has shape " + shape_to_string(src.shape()) +
                    ", expected " + shape_to_string(own.tensor.shape()));
    }
    std::copy(src.data().begin(), src.data().end(), own.tensor.mutable_data().begin());
  }
}

void ParameterStore::zero_grad() {
  for (auto& e : entries_) e.tensor.zero_grad();
}

Linear Linear::create(ParameterStore& store, const std::string& name, int64_t in, int64_t out, Rng& rng,
                      bool with_bias, float gain) {
  Linear l;
  l.weight = store.add_uniform(name + ".weight", {in, out}, in, rng, gain);
  if (with_bias) l.bias = store.add_uniform(name + ".bias", {out}, in, rng);
  return l;
}

Conv2d Conv2d::create(ParameterStore& store, const std::string& name, int64_t kernel_size, int64_t in, int64_t out,
                      int stride, Rng& rng, bool with_bias, float gain) {
  Conv2d c;
  const int64_t fan_in = kernel_size * kernel_size * in;
  c.kernel = store.add_uniform(name + ".weight", {kernel_size, kernel_size, in, out}, fan_in, rng, gain);
  if (with_bias) c.bias = store.add_uniform(name + ".bias", {out}, fan_in, rng);
  c.stride = stride;
  return c;
}

Tensor Conv2d::operator()(const Tensor& x) const {
  Tensor y = conv2d(x, kernel, stride, padding);
  return bias.defined() ? add(y, bias) : y;
}

LayerNorm LayerNorm::create(ParameterStore& store, const std::string& name, int64_t features) {
  return {store.add_constant(name + ".gamma", {features}, 1.0f), store.add_constant(name + ".beta", {features}, 0.0f)};
}

}  // namespace abhe
