#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace elr {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_to_string(const Shape& shape);

namespace detail {

struct Node;
using NodePtr = std::shared_ptr<Node>;

// Propagates self.grad into the grads of self.inputs.
using BackwardFn = std::function<void(Node& self)>;

struct Node {
  std::uint64_t id = 0;
  std::string_view op = "leaf";
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until first written
  bool requires_grad = false;
  std::vector<NodePtr> inputs;
  BackwardFn backward;

  bool is_leaf() const { return inputs.empty(); }
  std::vector<double>& ensure_grad();
};

}  // namespace detail

/// Dense row-major array of doubles. Copies share storage; a tensor that
/// requires grad and was produced by an operation is a node on the tape.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  std::uint64_t id() const;
  std::string_view op() const;

  const Shape& shape() const;
  std::size_t dim(std::size_t axis) const;
  std::size_t rank() const { return shape().size(); }
  std::size_t numel() const;

  std::span<const double> data() const;
  // Only leaves may be written in place (parameters, inputs).
  std::span<double> mutable_data();
  double item() const;
  double operator[](std::size_t flat) const { return data()[flat]; }

  bool requires_grad() const;
  bool has_grad() const;
  std::span<const double> grad() const;
  std::span<double> mutable_grad();
  void zero_grad();

  // Value copy with no history.
  Tensor detach() const;

  const detail::NodePtr& node() const { return node_; }
  explicit Tensor(detail::NodePtr node) : node_(std::move(node)) {}

 private:
  detail::NodePtr node_;
};

struct TapeRecord {
  std::string_view op;
  std::vector<std::uint64_t> inputs;
  std::uint64_t output = 0;
};

/// Operation records reachable from a root, in topological order
/// (inputs before outputs). Leaves are not records.
class Tape {
 public:
  static Tape record(const Tensor& root);

  const std::vector<TapeRecord>& records() const { return records_; }
  std::size_t size() const { return records_.size(); }

 private:
  friend void backward(const Tensor& loss);
  std::vector<TapeRecord> records_;
  std::vector<detail::NodePtr> nodes_;
};

/// Disables graph recording on this thread while alive.
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

/// Reverse pass from a scalar loss. Gradients accumulate into every leaf that
/// requires grad; callers zero them between steps.
void backward(const Tensor& loss);

namespace detail {

// Builds an operation output. Throws NumericalError if any value is not
// finite. The output requires grad iff some input does.
Tensor make_result(std::string_view op, Shape shape, std::vector<double> values,
                   std::vector<Tensor> inputs, BackwardFn backward);

void check_finite(std::string_view what, std::span<const double> values);

}  // namespace detail

}  // namespace elr
