#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "iiht/errors.hpp"
#include "iiht/rng.hpp"

namespace iiht {

using Shape = std::vector<std::size_t>;

std::string shape_to_string(const Shape& s);
std::size_t shape_numel(const Shape& s);

namespace detail {

// One node of the dynamic computation tape. The tape is rebuilt on every
// forward pass; `parents` keeps upstream nodes alive until backward() runs.
struct TensorNode {
  Shape shape;
  std::vector<double> data;
  bool requires_grad = false;
  std::vector<double> grad;  // empty until the first accumulation
  std::vector<std::shared_ptr<TensorNode>> parents;
  std::function<void()> backward_fn;
  const char* op = "leaf";

  std::size_t numel() const { return data.size(); }
  void accumulate(const std::vector<double>& contribution);
  std::vector<double>& ensure_grad();
};

bool grad_enabled();

}  // namespace detail

// Gradient recording is on by default; inference paths disable it in scope.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// Dense row-major f64 tensor with optional gradient tracking. Value type:
// copies share the underlying node.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(const Shape& shape, bool requires_grad = false);
  static Tensor full(const Shape& shape, double value, bool requires_grad = false);
  static Tensor from_data(const Shape& shape, std::vector<double> data,
                          bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor randn(const Shape& shape, Rng& rng, double stddev = 1.0,
                      bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t ndim() const { return node_->shape.size(); }
  std::size_t size() const { return node_->data.size(); }

  std::vector<double>& data() { return node_->data; }
  const std::vector<double>& data() const { return node_->data; }

  double value() const;  // scalar tensors only
  double at(std::size_t i) const { return node_->data[i]; }
  double at(std::size_t i, std::size_t j) const;

  bool requires_grad() const { return node_->requires_grad; }
  bool has_grad() const { return !node_->grad.empty(); }
  const std::vector<double>& grad() const;
  std::vector<double>& grad_ref() { return node_->grad; }
  void zero_grad() { node_->grad.clear(); }

  std::shared_ptr<detail::TensorNode>& node() { return node_; }
  const std::shared_ptr<detail::TensorNode>& node() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<detail::TensorNode> node) : node_(std::move(node)) {}
  friend Tensor make_tensor(std::shared_ptr<detail::TensorNode>);

  std::shared_ptr<detail::TensorNode> node_;
};

Tensor make_tensor(std::shared_ptr<detail::TensorNode> node);

// Reverse-mode sweep from a scalar loss. Every reachable requires_grad node
// receives additive gradient contributions exactly once per inbound edge.
void backward(const Tensor& loss);

}  // namespace iiht
