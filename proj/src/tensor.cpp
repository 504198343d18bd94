#include "iiht/tensor.hpp"

#include <algorithm>
#include <sstream>
#include <unordered_set>

namespace iiht {

std::string shape_to_string(const Shape& s) {
  std::ostringstream out;
  out << "(";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out << ",";
    out << s[i];
  }
  out << ")";
  return out.str();
}

std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (std::size_t d : s) n *= d;
  return n;
}

namespace detail {

namespace {
thread_local bool g_grad_enabled = true;
}

bool grad_enabled() { return g_grad_enabled; }

void TensorNode::accumulate(const std::vector<double>& contribution) {
  if (!requires_grad) return;
  if (grad.empty()) grad.assign(data.size(), 0.0);
  for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += contribution[i];
}

std::vector<double>& TensorNode::ensure_grad() {
  if (grad.empty()) grad.assign(data.size(), 0.0);
  return grad;
}

}  // namespace detail

NoGradGuard::NoGradGuard() : previous_(detail::g_grad_enabled) {
  detail::g_grad_enabled = false;
}

NoGradGuard::~NoGradGuard() { detail::g_grad_enabled = previous_; }

Tensor make_tensor(std::shared_ptr<detail::TensorNode> node) {
  Tensor t;
  t.node() = std::move(node);
  return t;
}

Tensor Tensor::zeros(const Shape& shape, bool requires_grad) {
  return full(shape, 0.0, requires_grad);
}

Tensor Tensor::full(const Shape& shape, double value, bool requires_grad) {
  auto node = std::make_shared<detail::TensorNode>();
  node->shape = shape;
  node->data.assign(shape_numel(shape), value);
  node->requires_grad = requires_grad;
  return make_tensor(std::move(node));
}

Tensor Tensor::from_data(const Shape& shape, std::vector<double> data,
                         bool requires_grad) {
  if (shape_numel(shape) != data.size()) {
    throw DimensionError("tensor: shape " + shape_to_string(shape) + " expects " +
                         std::to_string(shape_numel(shape)) + " values, got " +
                         std::to_string(data.size()));
  }
  auto node = std::make_shared<detail::TensorNode>();
  node->shape = shape;
  node->data = std::move(data);
  node->requires_grad = requires_grad;
  return make_tensor(std::move(node));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from_data({1}, {value}, requires_grad);
}

Tensor Tensor::randn(const Shape& shape, Rng& rng, double stddev, bool requires_grad) {
  std::vector<double> data(shape_numel(shape));
  for (auto& v : data) v = rng.normal(0.0, stddev);
  return from_data(shape, std::move(data), requires_grad);
}

double Tensor::value() const {
  if (size() != 1) {
    throw ContractError("value(): tensor has " + std::to_string(size()) +
                        " elements, expected scalar");
  }
  return node_->data[0];
}

double Tensor::at(std::size_t i, std::size_t j) const {
  return node_->data[i * node_->shape[1] + j];
}

const std::vector<double>& Tensor::grad() const {
  if (node_->grad.empty()) {
    throw ContractError("grad(): no gradient accumulated on this tensor");
  }
  return node_->grad;
}

void backward(const Tensor& loss) {
  if (!loss.defined() || loss.size() != 1) {
    throw ContractError("backward: seed must be a scalar tensor");
  }
  auto root = loss.node();

  // Iterative post-order DFS; recursion would overflow on long sequence tapes.
  std::vector<detail::TensorNode*> order;
  std::unordered_set<detail::TensorNode*> visited;
  struct Frame {
    detail::TensorNode* node;
    std::size_t next_parent;
  };
  std::vector<Frame> stack;
  if (visited.insert(root.get()).second) stack.push_back({root.get(), 0});
  while (!stack.empty()) {
    Frame& top = stack.back();
    if (top.next_parent < top.node->parents.size()) {
      detail::TensorNode* parent = top.node->parents[top.next_parent++].get();
      if (visited.insert(parent).second) stack.push_back({parent, 0});
    } else {
      order.push_back(top.node);
      stack.pop_back();
    }
  }

  root->ensure_grad();
  root->grad[0] = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::TensorNode* node = *it;
    if (node->backward_fn && !node->grad.empty()) node->backward_fn();
  }
}

}  // namespace iiht
