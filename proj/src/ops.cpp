#include "iiht/ops.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

namespace iiht {

namespace {

using detail::TensorNode;

std::shared_ptr<TensorNode> new_node(Shape shape, const char* op) {
  auto node = std::make_shared<TensorNode>();
  node->shape = std::move(shape);
  node->data.assign(shape_numel(node->shape), 0.0);
  node->op = op;
  return node;
}

bool wants_grad(const Tensor& t) {
  return detail::grad_enabled() && t.requires_grad();
}

void attach(const std::shared_ptr<TensorNode>& out,
            std::vector<std::shared_ptr<TensorNode>> parents,
            std::function<void()> backward_fn) {
  out->requires_grad = true;
  out->parents = std::move(parents);
  out->backward_fn = std::move(backward_fn);
}

// Right-aligned broadcast plan; stride 0 marks a repeated axis.
struct BroadcastPlan {
  Shape out_shape;
  std::vector<std::size_t> a_strides;
  std::vector<std::size_t> b_strides;
  std::size_t total = 0;

  std::pair<std::size_t, std::size_t> source_indices(std::size_t flat) const {
    std::size_t ai = 0, bi = 0;
    for (std::size_t d = out_shape.size(); d-- > 0;) {
      const std::size_t idx = flat % out_shape[d];
      flat /= out_shape[d];
      ai += idx * a_strides[d];
      bi += idx * b_strides[d];
    }
    return {ai, bi};
  }
};

BroadcastPlan make_broadcast_plan(const Shape& a, const Shape& b, const char* op) {
  const std::size_t nd = std::max(a.size(), b.size());
  BroadcastPlan plan;
  plan.out_shape.assign(nd, 1);
  std::vector<std::size_t> a_pad(nd, 1), b_pad(nd, 1);
  std::copy(a.begin(), a.end(), a_pad.begin() + (nd - a.size()));
  std::copy(b.begin(), b.end(), b_pad.begin() + (nd - b.size()));
  for (std::size_t d = 0; d < nd; ++d) {
    if (a_pad[d] != b_pad[d] && a_pad[d] != 1 && b_pad[d] != 1) {
      throw DimensionError(std::string(op) + ": shapes " + shape_to_string(a) +
                           " and " + shape_to_string(b) + " are not broadcastable");
    }
    plan.out_shape[d] = std::max(a_pad[d], b_pad[d]);
  }
  auto strides_of = [nd](const std::vector<std::size_t>& padded) {
    std::vector<std::size_t> strides(nd, 0);
    std::size_t stride = 1;
    for (std::size_t d = nd; d-- > 0;) {
      strides[d] = (padded[d] == 1) ? 0 : stride;
      stride *= padded[d];
    }
    return strides;
  };
  plan.a_strides = strides_of(a_pad);
  plan.b_strides = strides_of(b_pad);
  plan.total = shape_numel(plan.out_shape);
  return plan;
}

template <class Fwd, class BwdA, class BwdB>
Tensor broadcast_binary(const Tensor& a, const Tensor& b, const char* op_name,
                        Fwd fwd, BwdA bwd_a, BwdB bwd_b) {
  BroadcastPlan plan = make_broadcast_plan(a.shape(), b.shape(), op_name);
  auto out = new_node(plan.out_shape, op_name);
  const auto& ad = a.data();
  const auto& bd = b.data();
  for (std::size_t i = 0; i < plan.total; ++i) {
    auto [ai, bi] = plan.source_indices(i);
    out->data[i] = fwd(ad[ai], bd[bi]);
  }
  if (wants_grad(a) || wants_grad(b)) {
    auto an = a.node();
    auto bn = b.node();
    TensorNode* raw = out.get();
    attach(out, {an, bn}, [an, bn, raw, plan, bwd_a, bwd_b]() {
      const bool need_a = an->requires_grad;
      const bool need_b = bn->requires_grad;
      if (need_a) an->ensure_grad();
      if (need_b) bn->ensure_grad();
      for (std::size_t i = 0; i < plan.total; ++i) {
        auto [ai, bi] = plan.source_indices(i);
        const double g = raw->grad[i];
        if (need_a) an->grad[ai] += bwd_a(g, an->data[ai], bn->data[bi]);
        if (need_b) bn->grad[bi] += bwd_b(g, an->data[ai], bn->data[bi]);
      }
    });
  }
  return make_tensor(out);
}

template <class Fwd, class Bwd>
Tensor elementwise_unary(const Tensor& a, const char* op_name, Fwd fwd, Bwd bwd) {
  auto out = new_node(a.shape(), op_name);
  const std::size_t n = a.size();
  for (std::size_t i = 0; i < n; ++i) out->data[i] = fwd(a.data()[i]);
  if (wants_grad(a)) {
    auto an = a.node();
    TensorNode* raw = out.get();
    attach(out, {an}, [an, raw, n, bwd]() {
      an->ensure_grad();
      for (std::size_t i = 0; i < n; ++i) {
        an->grad[i] += raw->grad[i] * bwd(an->data[i], raw->data[i]);
      }
    });
  }
  return make_tensor(out);
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return broadcast_binary(
      a, b, "add", [](double x, double y) { return x + y; },
      [](double g, double, double) { return g; },
      [](double g, double, double) { return g; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return broadcast_binary(
      a, b, "sub", [](double x, double y) { return x - y; },
      [](double g, double, double) { return g; },
      [](double g, double, double) { return -g; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return broadcast_binary(
      a, b, "mul", [](double x, double y) { return x * y; },
      [](double g, double, double y) { return g * y; },
      [](double g, double x, double) { return g * x; });
}

Tensor emax(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError("emax: shapes " + shape_to_string(a.shape()) + " and " +
                         shape_to_string(b.shape()) + " differ");
  }
  return broadcast_binary(
      a, b, "emax", [](double x, double y) { return x >= y ? x : y; },
      [](double g, double x, double y) { return x >= y ? g : 0.0; },
      [](double g, double x, double y) { return x >= y ? 0.0 : g; });
}

Tensor scale(const Tensor& a, double factor) {
  return elementwise_unary(
      a, "scale", [factor](double x) { return x * factor; },
      [factor](double, double) { return factor; });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.ndim() != 2 || b.ndim() != 2 || a.shape()[1] != b.shape()[0]) {
    throw DimensionError("matmul: shapes " + shape_to_string(a.shape()) + " and " +
                         shape_to_string(b.shape()) + " are incompatible");
  }
  const std::size_t m = a.shape()[0];
  const std::size_t k = a.shape()[1];
  const std::size_t n = b.shape()[1];
  auto out = new_node({m, n}, "matmul");
  const double* ad = a.data().data();
  const double* bd = b.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double av = ad[i * k + p];
      if (av == 0.0) continue;
      for (std::size_t j = 0; j < n; ++j) {
        out->data[i * n + j] += av * bd[p * n + j];
      }
    }
  }
  if (wants_grad(a) || wants_grad(b)) {
    auto an = a.node();
    auto bn = b.node();
    TensorNode* raw = out.get();
    attach(out, {an, bn}, [an, bn, raw, m, k, n]() {
      if (an->requires_grad) {
        an->ensure_grad();
        // grad_a = g . b^T
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t j = 0; j < n; ++j) {
            const double g = raw->grad[i * n + j];
            if (g == 0.0) continue;
            for (std::size_t p = 0; p < k; ++p) {
              an->grad[i * k + p] += g * bn->data[p * n + j];
            }
          }
        }
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        // grad_b = a^T . g
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t p = 0; p < k; ++p) {
            const double av = an->data[i * k + p];
            if (av == 0.0) continue;
            for (std::size_t j = 0; j < n; ++j) {
              bn->grad[p * n + j] += av * raw->grad[i * n + j];
            }
          }
        }
      }
    });
  }
  return make_tensor(out);
}

Tensor transpose(const Tensor& a) {
  if (a.ndim() != 2) {
    throw DimensionError("transpose: expected 2-D tensor, got " +
                         shape_to_string(a.shape()));
  }
  const std::size_t m = a.shape()[0];
  const std::size_t n = a.shape()[1];
  auto out = new_node({n, m}, "transpose");
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) out->data[j * m + i] = a.data()[i * n + j];
  }
  if (wants_grad(a)) {
    auto an = a.node();
    TensorNode* raw = out.get();
    attach(out, {an}, [an, raw, m, n]() {
      an->ensure_grad();
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) an->grad[i * n + j] += raw->grad[j * m + i];
      }
    });
  }
  return make_tensor(out);
}

Tensor reshape(const Tensor& a, const Shape& new_shape) {
  if (shape_numel(new_shape) != a.size()) {
    throw DimensionError("reshape: " + shape_to_string(a.shape()) + " -> " +
                         shape_to_string(new_shape) + " changes element count");
  }
  auto out = new_node(new_shape, "reshape");
  out->data = a.data();
  if (wants_grad(a)) {
    auto an = a.node();
    TensorNode* raw = out.get();
    attach(out, {an}, [an, raw]() {
      an->ensure_grad();
      for (std::size_t i = 0; i < an->grad.size(); ++i) an->grad[i] += raw->grad[i];
    });
  }
  return make_tensor(out);
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw ContractError("concat: no inputs");
  const Shape& first = parts.front().shape();
  if (axis >= first.size()) {
    throw DimensionError("concat: axis " + std::to_string(axis) +
                         " out of range for " + shape_to_string(first));
  }
  Shape out_shape = first;
  out_shape[axis] = 0;
  for (const Tensor& p : parts) {
    Shape s = p.shape();
    s[axis] = first[axis];
    if (s != first) {
      throw DimensionError("concat: shape " + shape_to_string(p.shape()) +
                           " differs from " + shape_to_string(first) +
                           " off axis " + std::to_string(axis));
    }
    out_shape[axis] += p.shape()[axis];
  }
  // outer = product of axes before `axis`, inner = product after.
  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= out_shape[d];
  for (std::size_t d = axis + 1; d < out_shape.size(); ++d) inner *= out_shape[d];

  auto out = new_node(out_shape, "concat");
  const std::size_t out_axis = out_shape[axis];
  std::size_t offset = 0;
  std::vector<std::size_t> offsets;
  for (const Tensor& p : parts) {
    offsets.push_back(offset);
    const std::size_t ext = p.shape()[axis];
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t x = 0; x < ext; ++x) {
        const double* src = p.data().data() + (o * ext + x) * inner;
        double* dst = out->data.data() + (o * out_axis + offset + x) * inner;
        std::copy(src, src + inner, dst);
      }
    }
    offset += ext;
  }

  bool any_grad = false;
  for (const Tensor& p : parts) any_grad = any_grad || wants_grad(p);
  if (any_grad) {
    std::vector<std::shared_ptr<TensorNode>> nodes;
    std::vector<std::size_t> extents;
    for (const Tensor& p : parts) {
      nodes.push_back(p.node());
      extents.push_back(p.shape()[axis]);
    }
    TensorNode* raw = out.get();
    attach(out, nodes, [nodes, extents, offsets, raw, outer, inner, out_axis]() {
      for (std::size_t pi = 0; pi < nodes.size(); ++pi) {
        auto& pn = nodes[pi];
        if (!pn->requires_grad) continue;
        pn->ensure_grad();
        const std::size_t ext = extents[pi];
        for (std::size_t o = 0; o < outer; ++o) {
          for (std::size_t x = 0; x < ext; ++x) {
            const double* src = raw->grad.data() + (o * out_axis + offsets[pi] + x) * inner;
            double* dst = pn->grad.data() + (o * ext + x) * inner;
            for (std::size_t i = 0; i < inner; ++i) dst[i] += src[i];
          }
        }
      }
    });
  }
  return make_tensor(out);
}

Tensor slice(const Tensor& a, std::size_t axis, std::size_t start, std::size_t end) {
  if (axis >= a.ndim() || start >= end || end > a.shape()[axis]) {
    throw DimensionError("slice: range [" + std::to_string(start) + "," +
                         std::to_string(end) + ") on axis " + std::to_string(axis) +
                         " invalid for " + shape_to_string(a.shape()));
  }
  Shape out_shape = a.shape();
  out_shape[axis] = end - start;
  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= a.shape()[d];
  for (std::size_t d = axis + 1; d < a.ndim(); ++d) inner *= a.shape()[d];
  const std::size_t in_axis = a.shape()[axis];
  const std::size_t ext = end - start;

  auto out = new_node(out_shape, "slice");
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t x = 0; x < ext; ++x) {
      const double* src = a.data().data() + (o * in_axis + start + x) * inner;
      std::copy(src, src + inner, out->data.data() + (o * ext + x) * inner);
    }
  }
  if (wants_grad(a)) {
    auto an = a.node();
    TensorNode* raw = out.get();
    attach(out, {an}, [an, raw, outer, inner, in_axis, ext, start]() {
      an->ensure_grad();
      for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t x = 0; x < ext; ++x) {
          const double* src = raw->grad.data() + (o * ext + x) * inner;
          double* dst = an->grad.data() + (o * in_axis + start + x) * inner;
          for (std::size_t i = 0; i < inner; ++i) dst[i] += src[i];
        }
      }
    });
  }
  return make_tensor(out);
}

Tensor embedding_lookup(const Tensor& table, const std::vector<std::size_t>& ids) {
  if (table.ndim() != 2) {
    throw DimensionError("embedding_lookup: table must be 2-D, got " +
                         shape_to_string(table.shape()));
  }
  const std::size_t vocab = table.shape()[0];
  const std::size_t width = table.shape()[1];
  for (std::size_t id : ids) {
    if (id >= vocab) {
      throw ContractError("embedding_lookup: id " + std::to_string(id) +
                          " out of range for table of " + std::to_string(vocab));
    }
  }
  auto out = new_node({ids.size(), width}, "embedding_lookup");
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const double* src = table.data().data() + ids[i] * width;
    std::copy(src, src + width, out->data.data() + i * width);
  }
  if (wants_grad(table)) {
    auto tn = table.node();
    TensorNode* raw = out.get();
    attach(out, {tn}, [tn, raw, ids, width]() {
      tn->ensure_grad();
      for (std::size_t i = 0; i < ids.size(); ++i) {
        double* dst = tn->grad.data() + ids[i] * width;
        const double* src = raw->grad.data() + i * width;
        for (std::size_t j = 0; j < width; ++j) dst[j] += src[j];
      }
    });
  }
  return make_tensor(out);
}

Tensor relu(const Tensor& a) {
  return elementwise_unary(
      a, "relu", [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor tanh(const Tensor& a) {
  return elementwise_unary(
      a, "tanh", [](double x) { return std::tanh(x); },
      [](double, double y) { return 1.0 - y * y; });
}

Tensor sigmoid(const Tensor& a) {
  return elementwise_unary(
      a, "sigmoid", [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor log(const Tensor& a) {
  return elementwise_unary(
      a, "log", [](double x) { return std::log(x); },
      [](double x, double) { return 1.0 / x; });
}

Tensor log_clamped(const Tensor& a, double floor) {
  return elementwise_unary(
      a, "log_clamped",
      [floor](double x) { return std::log(x > floor ? x : floor); },
      [floor](double x, double) { return x > floor ? 1.0 / x : 0.0; });
}

Tensor sum_all(const Tensor& a) {
  auto out = new_node({1}, "sum_all");
  double acc = 0.0;
  for (double v : a.data()) acc += v;
  out->data[0] = acc;
  if (wants_grad(a)) {
    auto an = a.node();
    TensorNode* raw = out.get();
    attach(out, {an}, [an, raw]() {
      an->ensure_grad();
      const double g = raw->grad[0];
      for (double& gv : an->grad) gv += g;
    });
  }
  return make_tensor(out);
}

Tensor mean_all(const Tensor& a) {
  return scale(sum_all(a), 1.0 / static_cast<double>(a.size()));
}

Tensor softmax(const Tensor& a, std::size_t axis) {
  if (axis >= a.ndim()) {
    throw DimensionError("softmax: axis " + std::to_string(axis) +
                         " out of range for " + shape_to_string(a.shape()));
  }
  for (double v : a.data()) {
    if (!std::isfinite(v)) throw NumericError("softmax: non-finite input");
  }
  const std::size_t extent = a.shape()[axis];
  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= a.shape()[d];
  for (std::size_t d = axis + 1; d < a.ndim(); ++d) inner *= a.shape()[d];

  auto out = new_node(a.shape(), "softmax");
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t i = 0; i < inner; ++i) {
      const std::size_t base = o * extent * inner + i;
      double mx = a.data()[base];
      for (std::size_t x = 1; x < extent; ++x) {
        mx = std::max(mx, a.data()[base + x * inner]);
      }
      double denom = 0.0;
      for (std::size_t x = 0; x < extent; ++x) {
        const double e = std::exp(a.data()[base + x * inner] - mx);
        out->data[base + x * inner] = e;
        denom += e;
      }
      for (std::size_t x = 0; x < extent; ++x) out->data[base + x * inner] /= denom;
    }
  }
  if (wants_grad(a)) {
    auto an = a.node();
    TensorNode* raw = out.get();
    attach(out, {an}, [an, raw, outer, inner, extent]() {
      an->ensure_grad();
      for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t i = 0; i < inner; ++i) {
          const std::size_t base = o * extent * inner + i;
          double dot = 0.0;
          for (std::size_t x = 0; x < extent; ++x) {
            const std::size_t idx = base + x * inner;
            dot += raw->grad[idx] * raw->data[idx];
          }
          for (std::size_t x = 0; x < extent; ++x) {
            const std::size_t idx = base + x * inner;
            an->grad[idx] += raw->data[idx] * (raw->grad[idx] - dot);
          }
        }
      }
    });
  }
  return make_tensor(out);
}

Tensor layer_norm(const Tensor& a, double eps) {
  if (a.ndim() == 0 || a.shape().back() == 0) {
    throw DimensionError("layer_norm: empty last axis in " + shape_to_string(a.shape()));
  }
  const std::size_t width = a.shape().back();
  const std::size_t rows = a.size() / width;
  auto out = new_node(a.shape(), "layer_norm");
  std::vector<double> inv_sigma(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = a.data().data() + r * width;
    double mean = 0.0;
    for (std::size_t j = 0; j < width; ++j) mean += x[j];
    mean /= static_cast<double>(width);
    double var = 0.0;
    for (std::size_t j = 0; j < width; ++j) var += (x[j] - mean) * (x[j] - mean);
    var /= static_cast<double>(width);
    const double inv = 1.0 / std::sqrt(var + eps);
    inv_sigma[r] = inv;
    for (std::size_t j = 0; j < width; ++j) {
      out->data[r * width + j] = (x[j] - mean) * inv;
    }
  }
  if (wants_grad(a)) {
    auto an = a.node();
    TensorNode* raw = out.get();
    attach(out, {an}, [an, raw, rows, width, inv_sigma]() {
      an->ensure_grad();
      for (std::size_t r = 0; r < rows; ++r) {
        const double* g = raw->grad.data() + r * width;
        const double* y = raw->data.data() + r * width;
        double g_mean = 0.0, gy_mean = 0.0;
        for (std::size_t j = 0; j < width; ++j) {
          g_mean += g[j];
          gy_mean += g[j] * y[j];
        }
        g_mean /= static_cast<double>(width);
        gy_mean /= static_cast<double>(width);
        for (std::size_t j = 0; j < width; ++j) {
          an->grad[r * width + j] += inv_sigma[r] * (g[j] - g_mean - y[j] * gy_mean);
        }
      }
    });
  }
  return make_tensor(out);
}

Tensor dropout(const Tensor& a, double rate, bool train_flag, Rng& rng) {
  if (rate < 0.0 || rate >= 1.0) {
    throw ContractError("dropout: rate " + std::to_string(rate) + " outside [0,1)");
  }
  if (!train_flag || rate == 0.0) return a;
  const double keep_scale = 1.0 / (1.0 - rate);
  std::vector<double> mask(a.size());
  for (auto& m : mask) m = rng.uniform01() < rate ? 0.0 : keep_scale;
  auto out = new_node(a.shape(), "dropout");
  for (std::size_t i = 0; i < a.size(); ++i) out->data[i] = a.data()[i] * mask[i];
  if (wants_grad(a)) {
    auto an = a.node();
    TensorNode* raw = out.get();
    attach(out, {an}, [an, raw, mask]() {
      an->ensure_grad();
      for (std::size_t i = 0; i < mask.size(); ++i) {
        an->grad[i] += raw->grad[i] * mask[i];
      }
    });
  }
  return make_tensor(out);
}

Tensor masked_fill(const Tensor& a, const Tensor& mask, double value) {
  if (a.shape() != mask.shape()) {
    throw DimensionError("masked_fill: value shape " + shape_to_string(a.shape()) +
                         " differs from mask shape " + shape_to_string(mask.shape()));
  }
  auto out = new_node(a.shape(), "masked_fill");
  for (std::size_t i = 0; i < a.size(); ++i) {
    out->data[i] = mask.data()[i] != 0.0 ? value : a.data()[i];
  }
  if (wants_grad(a)) {
    auto an = a.node();
    auto mn = mask.node();
    TensorNode* raw = out.get();
    attach(out, {an, mn}, [an, mn, raw]() {
      an->ensure_grad();
      for (std::size_t i = 0; i < an->grad.size(); ++i) {
        if (mn->data[i] == 0.0) an->grad[i] += raw->grad[i];
      }
    });
  }
  return make_tensor(out);
}

Tensor im2col(const Tensor& image, std::size_t kh, std::size_t kw,
              std::size_t stride, std::size_t pad) {
  if (image.ndim() != 3) {
    throw DimensionError("im2col: expected [C,H,W], got " +
                         shape_to_string(image.shape()));
  }
  const std::size_t c = image.shape()[0];
  const std::size_t h = image.shape()[1];
  const std::size_t w = image.shape()[2];
  if (h + 2 * pad < kh || w + 2 * pad < kw || stride == 0) {
    throw DimensionError("im2col: kernel " + std::to_string(kh) + "x" +
                         std::to_string(kw) + " does not fit image " +
                         shape_to_string(image.shape()));
  }
  const std::size_t out_h = (h + 2 * pad - kh) / stride + 1;
  const std::size_t out_w = (w + 2 * pad - kw) / stride + 1;
  const std::size_t patches = out_h * out_w;
  auto out = new_node({c * kh * kw, patches}, "im2col");
  for (std::size_t ci = 0; ci < c; ++ci) {
    for (std::size_t ky = 0; ky < kh; ++ky) {
      for (std::size_t kx = 0; kx < kw; ++kx) {
        const std::size_t row_idx = (ci * kh + ky) * kw + kx;
        for (std::size_t oy = 0; oy < out_h; ++oy) {
          const std::ptrdiff_t sy =
              static_cast<std::ptrdiff_t>(oy * stride + ky) - static_cast<std::ptrdiff_t>(pad);
          for (std::size_t ox = 0; ox < out_w; ++ox) {
            const std::ptrdiff_t sx =
                static_cast<std::ptrdiff_t>(ox * stride + kx) - static_cast<std::ptrdiff_t>(pad);
            double v = 0.0;
            if (sy >= 0 && sy < static_cast<std::ptrdiff_t>(h) && sx >= 0 &&
                sx < static_cast<std::ptrdiff_t>(w)) {
              v = image.data()[(ci * h + sy) * w + sx];
            }
            out->data[row_idx * patches + oy * out_w + ox] = v;
          }
        }
      }
    }
  }
  if (wants_grad(image)) {
    auto in = image.node();
    TensorNode* raw = out.get();
    attach(out, {in}, [in, raw, c, h, w, kh, kw, stride, pad, out_h, out_w, patches]() {
      in->ensure_grad();
      for (std::size_t ci = 0; ci < c; ++ci) {
        for (std::size_t ky = 0; ky < kh; ++ky) {
          for (std::size_t kx = 0; kx < kw; ++kx) {
            const std::size_t row_idx = (ci * kh + ky) * kw + kx;
            for (std::size_t oy = 0; oy < out_h; ++oy) {
              const std::ptrdiff_t sy =
                  static_cast<std::ptrdiff_t>(oy * stride + ky) - static_cast<std::ptrdiff_t>(pad);
              if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(h)) continue;
              for (std::size_t ox = 0; ox < out_w; ++ox) {
                const std::ptrdiff_t sx =
                    static_cast<std::ptrdiff_t>(ox * stride + kx) - static_cast<std::ptrdiff_t>(pad);
                if (sx < 0 || sx >= static_cast<std::ptrdiff_t>(w)) continue;
                in->grad[(ci * h + sy) * w + sx] +=
                    raw->grad[row_idx * patches + oy * out_w + ox];
              }
            }
          }
        }
      }
    });
  }
  return make_tensor(out);
}

}  // namespace iiht
