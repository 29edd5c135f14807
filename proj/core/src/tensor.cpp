#include "abhe/tensor.hpp"

#include <algorithm>
#include <sstream>

#include "abhe/error.hpp"

namespace abhe {

namespace {
thread_local Tape* current_tape = nullptr;
}

int64_t shape_numel(const Shape& shape) {
  int64_t n = 1;
  for (int64_t e : shape) n *= e;
  return n;
}

std::string shape_to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

static void check_shape(const Shape& shape) {
  for (int64_t e : shape) {
    if (e <= 0) throw ShapeError("tensor extents must be positive, got " + shape_to_string(shape));
  }
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0f, requires_grad); }

Tensor Tensor::full(Shape shape, float value, bool requires_grad) {
  check_shape(shape);
  auto node = std::make_shared<detail::Node>();
  node->data.assign(static_cast<std::size_t>(shape_numel(shape)), value);
  node->shape = std::move(shape);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::from_vector(Shape shape, std::vector<float> values, bool requires_grad) {
  check_shape(shape);
  if (static_cast<int64_t>(values.size()) != shape_numel(shape)) {
    throw ShapeError("value count " + std::to_string(values.size()) + " does not match shape " +
                     shape_to_string(shape));
  }
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->data = std::move(values);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(float value) { return from_vector({1}, {value}); }

const Shape& Tensor::shape() const { return node_->shape; }

int64_t Tensor::dim(int axis) const {
  const int r = rank();
  const int a = axis < 0 ? axis + r : axis;
  if (a < 0 || a >= r) throw ShapeError("axis " + std::to_string(axis) + " out of range for rank " + std::to_string(r));
  return node_->shape[static_cast<std::size_t>(a)];
}

int64_t Tensor::numel() const { return static_cast<int64_t>(node_->data.size()); }

std::span<const float> Tensor::data() const { return node_->data; }

std::span<float> Tensor::mutable_data() { return node_->data; }

float Tensor::item() const {
  if (numel() != 1) throw ShapeError("item() requires a single-element tensor, got " + shape_to_string(shape()));
  return node_->data[0];
}

float Tensor::at(std::initializer_list<int64_t> index) const {
  if (static_cast<int>(index.size()) != rank()) throw ShapeError("index rank mismatch");
  int64_t flat = 0;
  int axis = 0;
  for (int64_t i : index) {
    const int64_t extent = node_->shape[static_cast<std::size_t>(axis++)];
    if (i < 0 || i >= extent) throw ShapeError("index out of range");
    flat = flat * extent + i;
  }
  return node_->data[static_cast<std::size_t>(flat)];
}

bool Tensor::requires_grad() const { return node_->requires_grad; }

void Tensor::set_requires_grad(bool flag) {
  if (!node_->leaf) throw TapeError("requires_grad can only be toggled on leaf tensors");
  node_->requires_grad = flag;
}

bool Tensor::is_leaf() const { return node_->leaf; }

bool Tensor::has_grad() const { return !node_->grad.empty(); }

std::span<const float> Tensor::grad() const {
  if (node_->grad.empty()) throw TapeError("tensor has no gradient; run backward first");
  return node_->grad;
}

std::span<float> Tensor::mutable_grad() { return {node_->grad_buffer(), node_->data.size()}; }

void Tensor::zero_grad() { node_->grad.clear(); }

Tensor Tensor::detach() const {
  auto node = std::make_shared<detail::Node>();
  node->shape = node_->shape;
  node->data = node_->data;
  return Tensor(std::move(node));
}

// ---------------------------------------------------------------------------

Tape::~Tape() {
  if (current_tape == this) current_tape = nullptr;
}

Tape* Tape::current() { return current_tape; }

Tape::Scope::Scope(Tape& tape) : previous_(current_tape) { current_tape = &tape; }
Tape::Scope::~Scope() { current_tape = previous_; }

Tape::Pause::Pause() : previous_(current_tape) { current_tape = nullptr; }
Tape::Pause::~Pause() { current_tape = previous_; }

void Tape::record(std::vector<detail::NodePtr> inputs, detail::NodePtr output, BackwardFn fn) {
  if (consumed_) throw TapeError("cannot record onto a consumed tape; call reset() first");
  output->leaf = false;
  entries_.push_back({std::move(inputs), std::move(output), std::move(fn)});
}

void Tape::backward(const Tensor& loss) {
  if (consumed_) throw TapeError("backward already ran on this tape; call reset() before another pass");
  if (!loss.defined() || loss.numel() != 1) {
    throw TapeError("backward requires a scalar loss, got shape " +
                    (loss.defined() ? shape_to_string(loss.shape()) : std::string("<undefined>")));
  }
  if (!loss.requires_grad()) throw TapeError("loss does not depend on any tensor that requires grad");
  consumed_ = true;

  const auto& root = loss.node();
  root->grad_buffer()[0] += 1.0f;
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
    if (it->output->grad.empty()) continue;  // not reachable from the loss
    it->fn();
  }
}

void Tape::reset() {
  entries_.clear();
  consumed_ = false;
}

namespace detail {

Tensor make_result(Shape shape, std::initializer_list<const Tensor*> inputs) {
  bool rg = false;
  if (Tape::current() != nullptr) {
    for (const Tensor* t : inputs) rg = rg || t->requires_grad();
  }
  Tensor out = Tensor::zeros(std::move(shape));
  out.node()->requires_grad = rg;
  out.node()->leaf = !rg;
  return out;
}

Tensor make_result(Shape shape, const std::vector<Tensor>& inputs) {
  bool rg = false;
  if (Tape::current() != nullptr) {
    for (const Tensor& t : inputs) rg = rg || t.requires_grad();
  }
  Tensor out = Tensor::zeros(std::move(shape));
  out.node()->requires_grad = rg;
  out.node()->leaf = !rg;
  return out;
}

void record(const Tensor& out, std::vector<Tensor> inputs, Tape::BackwardFn fn) {
  if (!out.requires_grad()) return;
  Tape* tape = Tape::current();
  std::vector<NodePtr> nodes;
  nodes.reserve(inputs.size());
  for (auto& t : inputs) nodes.push_back(t.node());
  tape->record(std::move(nodes), out.node(), std::move(fn));
}

}  // namespace detail

}  // namespace abhe
