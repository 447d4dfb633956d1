#include "elr/tensor.hpp"

#include <atomic>
#include <cmath>
#include <sstream>
#include <unordered_set>

#include "elr/errors.hpp"

namespace elr {

namespace {

std::atomic<std::uint64_t> next_node_id{1};
thread_local bool recording = true;

detail::NodePtr new_node(Shape shape, std::vector<double> values, bool requires_grad) {
  if (shape_numel(shape) != values.size()) {
    throw DimensionError("tensor of shape " + shape_to_string(shape) + " cannot hold " +
                         std::to_string(values.size()) + " values");
  }
  auto node = std::make_shared<detail::Node>();
  node->id = next_node_id.fetch_add(1, std::memory_order_relaxed);
  node->shape = std::move(shape);
  node->data = std::move(values);
  node->requires_grad = requires_grad;
  return node;
}

const detail::Node& deref(const detail::NodePtr& node) {
  if (!node) throw StateError("use of an undefined tensor");
  return *node;
}

}  // namespace

NoGradGuard::NoGradGuard() : previous_(recording) { recording = false; }
NoGradGuard::~NoGradGuard() { recording = previous_; }
bool grad_enabled() { return recording; }

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
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

std::vector<double>& detail::Node::ensure_grad() {
  if (grad.empty()) grad.assign(data.size(), 0.0);
  return grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const auto n = shape_numel(shape);
  return Tensor(new_node(std::move(shape), std::vector<double>(n, value), requires_grad));
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  return Tensor(new_node(std::move(shape), std::move(values), requires_grad));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor(new_node({}, {value}, requires_grad));
}

std::uint64_t Tensor::id() const { return deref(node_).id; }
std::string_view Tensor::op() const { return deref(node_).op; }
const Shape& Tensor::shape() const { return deref(node_).shape; }

std::size_t Tensor::dim(std::size_t axis) const {
  const auto& s = shape();
  if (axis >= s.size()) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for shape " +
                         shape_to_string(s));
  }
  return s[axis];
}

std::size_t Tensor::numel() const { return deref(node_).data.size(); }
std::span<const double> Tensor::data() const { return deref(node_).data; }

std::span<double> Tensor::mutable_data() {
  if (!deref(node_).is_leaf()) throw StateError("in-place write to a non-leaf tensor");
  return node_->data;
}

double Tensor::item() const {
  if (numel() != 1) {
    throw DimensionError("item() on tensor of shape " + shape_to_string(shape()));
  }
  return node_->data[0];
}

bool Tensor::requires_grad() const { return deref(node_).requires_grad; }
bool Tensor::has_grad() const { return !deref(node_).grad.empty(); }
std::span<const double> Tensor::grad() const { return deref(node_).grad; }

std::span<double> Tensor::mutable_grad() {
  deref(node_);
  return node_->ensure_grad();
}

void Tensor::zero_grad() {
  deref(node_);
  node_->grad.assign(node_->data.size(), 0.0);
}

Tensor Tensor::detach() const {
  const auto& n = deref(node_);
  return Tensor(new_node(n.shape, n.data, false));
}

Tape Tape::record(const Tensor& root) {
  Tape tape;
  if (!root.defined()) return tape;
  // Iterative post-order DFS; each node enters the order once.
  std::unordered_set<const detail::Node*> seen;
  std::vector<std::pair<detail::NodePtr, std::size_t>> stack;
  stack.emplace_back(root.node(), 0);
  seen.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      const auto& child = node->inputs[next++];
      if (child->requires_grad && !child->is_leaf() && seen.insert(child.get()).second) {
        stack.emplace_back(child, 0);
      }
      continue;
    }
    if (!node->is_leaf()) {
      TapeRecord rec;
      rec.op = node->op;
      rec.output = node->id;
      for (const auto& in : node->inputs) rec.inputs.push_back(in->id);
      tape.records_.push_back(std::move(rec));
      tape.nodes_.push_back(node);
    }
    stack.pop_back();
  }
  return tape;
}

void backward(const Tensor& loss) {
  if (!loss.defined()) throw ContractError("backward on an undefined tensor");
  if (loss.numel() != 1) {
    throw ContractError("backward requires a scalar loss, got shape " +
                        shape_to_string(loss.shape()));
  }
  if (!loss.requires_grad()) return;
  auto& root = *loss.node();
  root.ensure_grad()[0] += 1.0;
  if (root.is_leaf()) return;

  auto tape = Tape::record(loss);
  for (auto it = tape.nodes_.rbegin(); it != tape.nodes_.rend(); ++it) {
    auto& node = **it;
    if (node.grad.empty() || !node.backward) continue;
    node.backward(node);
    for (const auto& in : node.inputs) {
      if (in->requires_grad && in->is_leaf() && !in->grad.empty()) {
        detail::check_finite("gradient", in->grad);
      }
    }
    // Intermediate grads are no longer needed once propagated.
    if (&node != &root) std::vector<double>().swap(node.grad);
  }
}

namespace detail {

void check_finite(std::string_view what, std::span<const double> values) {
  for (double v : values) {
    if (!std::isfinite(v)) {
      throw NumericalError("non-finite value in " + std::string(what));
    }
  }
}

Tensor make_result(std::string_view op, Shape shape, std::vector<double> values,
                   std::vector<Tensor> inputs, BackwardFn backward) {
  check_finite(op, values);
  bool track = false;
  if (recording) {
    for (const auto& in : inputs) track = track || in.requires_grad();
  }
  auto node = new_node(std::move(shape), std::move(values), track);
  node->op = op;
  if (track) {
    node->backward = std::move(backward);
    node->inputs.reserve(inputs.size());
    for (auto& in : inputs) node->inputs.push_back(in.node());
  }
  return Tensor(std::move(node));
}

}  // namespace detail

}  // namespace elr
