#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace mre {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {
struct Node;
}

// Dense row-major array of doubles. Copies share the underlying node, so a
// Tensor behaves like a handle. Results of differentiable ops remember their
// inputs until the last handle to them goes away.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, double value);
  static Tensor from_data(Shape shape, std::vector<double> data);
  static Tensor scalar(double value);
  /// Leaf tensor that receives gradients in backward().
  static Tensor parameter(Shape shape, std::vector<double> data);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t dim(std::size_t axis) const;
  std::size_t rank() const;
  std::size_t numel() const;

  std::span<const double> data() const;
  /// Writable view; only leaves may be mutated in place.
  std::span<double> mutable_data();
  double item() const;
  double at(std::size_t flat) const { return data()[flat]; }

  bool requires_grad() const;
  bool is_leaf() const;
  /// Empty until a backward pass has reached this tensor.
  std::span<const double> grad() const;
  void zero_grad();

  /// Same values, no graph attachment.
  Tensor detach() const;
  const char* op_name() const;

  detail::Node* node() const { return node_.get(); }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  std::shared_ptr<detail::Node> node_;

  friend Tensor make_op_result(const char*, Shape, std::vector<double>, const std::vector<Tensor>&,
                               std::function<void(const detail::Node&)>);
  friend void backward(const Tensor&);
};

// Reverse-mode sweep from a scalar. Every tensor reachable from `loss` that
// requires gradients ends up holding d(loss)/d(tensor); previous gradients of
// those tensors are overwritten, so replaying the same graph yields the same
// values.
void backward(const Tensor& loss);

// Disables graph recording on the current thread while alive.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this node's grad and accumulates into the parents' grads.
  std::function<void(const Node&)> backward;

  std::vector<double>& ensure_grad();
};

// Gradient buffer to accumulate into, or nullptr when `t` needs none.
double* grad_sink(const Tensor& t);

}  // namespace detail

// Builds the result of an op. The backward closure is kept only when some
// input requires gradients and recording is enabled.
Tensor make_op_result(const char* op, Shape shape, std::vector<double> data,
                      const std::vector<Tensor>& inputs,
                      std::function<void(const detail::Node&)> backward_fn);

}  // namespace mre
