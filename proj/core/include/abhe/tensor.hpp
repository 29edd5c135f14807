#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace abhe {

using Shape = std::vector<int64_t>;

int64_t shape_numel(const Shape& shape);
std::string shape_to_string(const Shape& shape);

namespace detail {

struct Node {
  Shape shape;
  std::vector<float> data;
  // Empty until a backward pass (or optimizer) touches it.
  std::vector<float> grad;
  bool requires_grad = false;
  bool leaf = true;

  float* grad_buffer() {
    if (grad.empty()) grad.assign(data.size(), 0.0f);
    return grad.data();
  }
};

using NodePtr = std::shared_ptr<Node>;

}  // namespace detail

/// Dense row-major f32 array. A Tensor is a cheap handle; copies share storage.
///
/// Values are fixed once an op produces them. Leaves (parameters, inputs)
/// may be mutated through mutable_data() between tape recordings, which is
/// how the optimizer and checkpoint loader update weights.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, float value, bool requires_grad = false);
  static Tensor from_vector(Shape shape, std::vector<float> values, bool requires_grad = false);
  static Tensor scalar(float value);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  int rank() const { return static_cast<int>(shape().size()); }
  /// Extent of axis `axis`; negative values count from the back.
  int64_t dim(int axis) const;
  int64_t numel() const;

  std::span<const float> data() const;
  std::span<float> mutable_data();
  float item() const;
  float at(std::initializer_list<int64_t> index) const;

  bool requires_grad() const;
  void set_requires_grad(bool flag);
  bool is_leaf() const;

  bool has_grad() const;
  std::span<const float> grad() const;
  std::span<float> mutable_grad();
  void zero_grad();

  /// New leaf holding a copy of the values, detached from any tape.
  Tensor detach() const;

  const detail::NodePtr& node() const { return node_; }
  static Tensor wrap(detail::NodePtr node) { return Tensor(std::move(node)); }

 private:
  explicit Tensor(detail::NodePtr node) : node_(std::move(node)) {}
  detail::NodePtr node_;
};

/// Ordered record of differentiable ops executed while the tape is current.
///
/// Ops record onto the thread's current tape only when at least one input
/// requires a gradient. Without a current tape, ops are pure value
/// computations. backward() replays entries in exact reverse order.
class Tape {
 public:
  using BackwardFn = std::function<void()>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  ~Tape();

  /// Populates grad of every requires_grad node reachable from `loss`.
  /// The tape is consumed; call reset() before recording or replaying again.
  void backward(const Tensor& loss);
  void reset();

  std::size_t size() const { return entries_.size(); }
  bool consumed() const { return consumed_; }

  void record(std::vector<detail::NodePtr> inputs, detail::NodePtr output, BackwardFn fn);

  static Tape* current();

  /// Makes a tape current for the calling thread for the guard's lifetime.
  class Scope {
   public:
    explicit Scope(Tape& tape);
    ~Scope();
    Scope(const Scope&) = delete;
    Scope& operator=(const Scope&) = delete;

   private:
    Tape* previous_;
  };

  /// Suspends recording (evaluation-only computations).
  class Pause {
   public:
    Pause();
    ~Pause();
    Pause(const Pause&) = delete;
    Pause& operator=(const Pause&) = delete;

   private:
    Tape* previous_;
  };

 private:
  struct Entry {
    std::vector<detail::NodePtr> inputs;
    detail::NodePtr output;
    BackwardFn fn;
  };
  std::vector<Entry> entries_;
  bool consumed_ = false;
};

namespace detail {

/// Allocates an op result; it requires grad iff a tape is recording and any
/// input requires grad.
Tensor make_result(Shape shape, std::initializer_list<const Tensor*> inputs);
Tensor make_result(Shape shape, const std::vector<Tensor>& inputs);

/// Registers `fn` on the current tape when `out` requires grad.
void record(const Tensor& out, std::vector<Tensor> inputs, Tape::BackwardFn fn);

}  // namespace detail

}  // namespace abhe
