#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace ratfm {

using Shape = std::vector<std::size_t>;

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

std::size_t element_count(const Shape& shape);
std::string to_string(const Shape& shape);

namespace detail {
struct Node;
}

/// Dense row-major tensor of doubles. Copies share storage; use clone() for a deep copy.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t size() const;

  std::span<const double> data() const;
  std::span<double> mutable_data();
  double item() const;
  double at(std::initializer_list<std::size_t> index) const;

  bool requires_grad() const;
  void set_requires_grad(bool flag);

  bool has_grad() const;
  std::span<const double> grad() const;
  // Allocates a zeroed gradient on first use. Throws for tensors without requires_grad.
  std::span<double> mutable_grad() const;
  void clear_grad();

  Tensor clone() const;
  Tensor detach() const;

  bool same_as(const Tensor& other) const { return node_ == other.node_; }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

  std::shared_ptr<detail::Node> node_;
};

/// Ordered record of executed primitives. backward() replays it in reverse, once.
class Tape {
 public:
  void record(std::function<void()> rule);
  void backward(const Tensor& loss);
  std::size_t size() const { return rules_.size(); }
  void clear() { rules_.clear(); }

 private:
  std::vector<std::function<void()>> rules_;
};

/// Makes `tape` the recording target on this thread for the scope's lifetime.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

/// Suspends recording on this thread.
class NoGradScope {
 public:
  NoGradScope();
  ~NoGradScope();
  NoGradScope(const NoGradScope&) = delete;
  NoGradScope& operator=(const NoGradScope&) = delete;

 private:
  Tape* previous_;
};

Tape* active_tape();

/// Backpropagates through the active tape.
void backward(const Tensor& loss);

using BackwardRule = std::function<void(std::span<const double> out_grad)>;

/// Wraps the output of a differentiable primitive. When a tape is active and any input
/// requires grad, the result requires grad and `rule` is recorded; the rule must accumulate
/// into the gradients of those inputs that require grad.
Tensor make_result(Shape shape, std::vector<double> data, std::initializer_list<Tensor> inputs,
                   BackwardRule rule);
Tensor make_result(Shape shape, std::vector<double> data, std::span<const Tensor> inputs,
                   BackwardRule rule);

// --- primitives -----------------------------------------------------------------------------

enum class ElementwiseOp { add, sub, mul };

/// [m,k]x[k,n], or batched [b,m,k]x[b,k,n].
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor elementwise(ElementwiseOp op, const Tensor& a, const Tensor& b);
inline Tensor add(const Tensor& a, const Tensor& b) { return elementwise(ElementwiseOp::add, a, b); }
inline Tensor sub(const Tensor& a, const Tensor& b) { return elementwise(ElementwiseOp::sub, a, b); }
inline Tensor mul(const Tensor& a, const Tensor& b) { return elementwise(ElementwiseOp::mul, a, b); }
Tensor scale(const Tensor& x, double factor);
Tensor relu(const Tensor& x);
/// Softmax along the last axis.
Tensor softmax(const Tensor& x);
Tensor concat(std::size_t axis, std::span<const Tensor> parts);
Tensor concat(std::size_t axis, std::initializer_list<Tensor> parts);
Tensor slice(const Tensor& x, std::size_t axis, std::size_t begin, std::size_t end);
Tensor reshape(const Tensor& x, Shape shape);
Tensor permute(const Tensor& x, const std::vector<std::size_t>& axes);
/// 2-D transpose, or swap of the last two axes for higher ranks.
Tensor transpose(const Tensor& x);
/// Explicit broadcast: repeats x reps[i] times along axis i.
Tensor tile(const Tensor& x, const std::vector<std::size_t>& reps);
Tensor sum(const Tensor& x);

}  // namespace ratfm
