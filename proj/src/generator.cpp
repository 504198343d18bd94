#include "iiht/generator.hpp"

#include <cmath>

#include "iiht/errors.hpp"

namespace iiht {

namespace {

constexpr double kMaskValue = -1e30;

Tensor affine(const Tensor& x, const Tensor& w, const Tensor& b) {
  return add(matmul(x, w), b);
}

Tensor norm_affine(const Tensor& x, const Tensor& gain, const Tensor& bias) {
  return add(mul(layer_norm(x), gain), bias);
}

// 1 marks a blocked (query, key) pair. Memory rows attend among themselves;
// token rows additionally attend to their own non-future positions.
Tensor attention_mask(std::size_t memory_rows, std::size_t tokens) {
  const std::size_t n = memory_rows + tokens;
  std::vector<double> mask(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = memory_rows; j < n; ++j) {
      const bool query_is_memory = i < memory_rows;
      const bool key_in_future = j > i;
      if (query_is_memory || key_in_future) mask[i * n + j] = 1.0;
    }
  }
  return Tensor::from_data({n, n}, std::move(mask));
}

}  // namespace

TransformerLayer TransformerLayer::init(std::size_t embed_dim, Rng& rng) {
  const double std_dev = 1.0 / std::sqrt(static_cast<double>(embed_dim));
  const std::size_t ff_dim = 4 * embed_dim;
  TransformerLayer layer;
  layer.wq = Tensor::randn({embed_dim, embed_dim}, rng, std_dev, true);
  layer.bq = Tensor::zeros({1, embed_dim}, true);
  layer.wk = Tensor::randn({embed_dim, embed_dim}, rng, std_dev, true);
  layer.bk = Tensor::zeros({1, embed_dim}, true);
  layer.wv = Tensor::randn({embed_dim, embed_dim}, rng, std_dev, true);
  layer.bv = Tensor::zeros({1, embed_dim}, true);
  layer.wo = Tensor::randn({embed_dim, embed_dim}, rng, std_dev, true);
  layer.bo = Tensor::zeros({1, embed_dim}, true);
  layer.ln1_gain = Tensor::full({1, embed_dim}, 1.0, true);
  layer.ln1_bias = Tensor::zeros({1, embed_dim}, true);
  layer.ff1_w = Tensor::randn({embed_dim, ff_dim}, rng, std_dev, true);
  layer.ff1_b = Tensor::zeros({1, ff_dim}, true);
  layer.ff2_w = Tensor::randn({ff_dim, embed_dim}, rng,
                              1.0 / std::sqrt(static_cast<double>(ff_dim)), true);
  layer.ff2_b = Tensor::zeros({1, embed_dim}, true);
  layer.ln2_gain = Tensor::full({1, embed_dim}, 1.0, true);
  layer.ln2_bias = Tensor::zeros({1, embed_dim}, true);
  return layer;
}

GeneratorParams GeneratorParams::init(std::size_t embed_dim, std::size_t heads,
                                      std::size_t layers, std::size_t vocab_size,
                                      std::size_t feature_dim, std::size_t memory_rows,
                                      Rng& rng) {
  if (heads == 0 || embed_dim % heads != 0) {
    throw ContractError("generator: embed dim " + std::to_string(embed_dim) +
                        " not divisible by " + std::to_string(heads) + " heads");
  }
  if (layers == 0) throw ContractError("generator: need at least one layer");
  const double std_dev = 1.0 / std::sqrt(static_cast<double>(embed_dim));
  GeneratorParams params;
  params.embed_dim = embed_dim;
  params.heads = heads;
  params.vocab_size = vocab_size;
  params.memory_rows = memory_rows;
  params.token_embedding = Tensor::randn({vocab_size, embed_dim}, rng, std_dev, true);
  params.adapter_w = Tensor::randn({feature_dim, embed_dim}, rng,
                                   1.0 / std::sqrt(static_cast<double>(feature_dim)),
                                   true);
  params.adapter_b = Tensor::zeros({1, embed_dim}, true);
  params.seg_visual = Tensor::randn({1, embed_dim}, rng, std_dev, true);
  params.seg_indicator = Tensor::randn({1, embed_dim}, rng, std_dev, true);
  for (std::size_t z = 0; z < layers; ++z) {
    params.blocks.push_back(TransformerLayer::init(embed_dim, rng));
  }
  params.final_ln_gain = Tensor::full({1, embed_dim}, 1.0, true);
  params.final_ln_bias = Tensor::zeros({1, embed_dim}, true);
  params.output_w = Tensor::randn({embed_dim, vocab_size}, rng, std_dev, true);
  return params;
}

Tensor build_memory(const GeneratorParams& params, const Tensor& x,
                    const std::vector<Tensor>& indicator_info) {
  if (indicator_info.size() + 1 != params.memory_rows) {
    throw DimensionError("build_memory: " + std::to_string(indicator_info.size()) +
                         " indicator rows, generator expects " +
                         std::to_string(params.memory_rows - 1));
  }
  std::vector<Tensor> rows;
  rows.reserve(params.memory_rows);
  rows.push_back(add(affine(x, params.adapter_w, params.adapter_b), params.seg_visual));
  for (const Tensor& h : indicator_info) {
    rows.push_back(add(h, params.seg_indicator));
  }
  return concat(rows, 0);
}

Tensor sinusoidal_positions(std::size_t length, std::size_t embed_dim) {
  std::vector<double> data(length * embed_dim);
  for (std::size_t pos = 0; pos < length; ++pos) {
    for (std::size_t i = 0; i < embed_dim; i += 2) {
      const double rate = std::pow(10000.0, -static_cast<double>(i) /
                                                static_cast<double>(embed_dim));
      data[pos * embed_dim + i] = std::sin(static_cast<double>(pos) * rate);
      if (i + 1 < embed_dim) {
        data[pos * embed_dim + i + 1] = std::cos(static_cast<double>(pos) * rate);
      }
    }
  }
  return Tensor::from_data({length, embed_dim}, std::move(data));
}

Tensor generator_forward(const GeneratorParams& params, const Tensor& memory,
                         const std::vector<std::size_t>& token_ids,
                         double dropout_rate, bool train_flag, Rng& rng) {
  if (token_ids.empty()) {
    throw ContractError("generator_forward: need at least the start token");
  }
  if (memory.ndim() != 2 || memory.shape()[0] != params.memory_rows ||
      memory.shape()[1] != params.embed_dim) {
    throw DimensionError("generator_forward: memory " +
                         shape_to_string(memory.shape()) + ", expected (" +
                         std::to_string(params.memory_rows) + "," +
                         std::to_string(params.embed_dim) + ")");
  }
  for (std::size_t id : token_ids) {
    if (id >= params.vocab_size) {
      throw ContractError("generator_forward: token id " + std::to_string(id) +
                          " >= vocab size " + std::to_string(params.vocab_size));
    }
  }

  const std::size_t e = params.embed_dim;
  const std::size_t head_dim = e / params.heads;
  const std::size_t tm = params.memory_rows;
  const std::size_t length = token_ids.size();
  const std::size_t n = tm + length;

  const Tensor tokens = add(embedding_lookup(params.token_embedding, token_ids),
                            sinusoidal_positions(length, e));
  Tensor seq = concat({memory, tokens}, 0);
  const Tensor mask = attention_mask(tm, length);
  const double attn_scale = 1.0 / std::sqrt(static_cast<double>(head_dim));

  for (const TransformerLayer& layer : params.blocks) {
    const Tensor pre = norm_affine(seq, layer.ln1_gain, layer.ln1_bias);
    const Tensor q = affine(pre, layer.wq, layer.bq);
    const Tensor k = affine(pre, layer.wk, layer.bk);
    const Tensor v = affine(pre, layer.wv, layer.bv);
    std::vector<Tensor> head_outputs;
    head_outputs.reserve(params.heads);
    for (std::size_t h = 0; h < params.heads; ++h) {
      const std::size_t lo = h * head_dim;
      const std::size_t hi = lo + head_dim;
      const Tensor qh = slice(q, 1, lo, hi);
      const Tensor kh = slice(k, 1, lo, hi);
      const Tensor vh = slice(v, 1, lo, hi);
      const Tensor scores =
          masked_fill(scale(matmul(qh, transpose(kh)), attn_scale), mask, kMaskValue);
      head_outputs.push_back(matmul(softmax(scores, 1), vh));
    }
    Tensor attended = affine(concat(head_outputs, 1), layer.wo, layer.bo);
    attended = dropout(attended, dropout_rate, train_flag, rng);
    seq = add(seq, attended);

    const Tensor pre_ff = norm_affine(seq, layer.ln2_gain, layer.ln2_bias);
    Tensor ff = affine(relu(affine(pre_ff, layer.ff1_w, layer.ff1_b)), layer.ff2_w,
                       layer.ff2_b);
    ff = dropout(ff, dropout_rate, train_flag, rng);
    seq = add(seq, ff);
  }

  seq = norm_affine(seq, params.final_ln_gain, params.final_ln_bias);
  return slice(seq, 0, tm, n);
}

Tensor token_distribution(const GeneratorParams& params, const Tensor& hidden) {
  return softmax(matmul(hidden, params.output_w), 1);
}

Tensor report_nll(const Tensor& probs, const std::vector<std::size_t>& targets,
                  std::size_t pad_id) {
  if (probs.ndim() != 2 || probs.shape()[0] != targets.size()) {
    throw ContractError("report_nll: " + std::to_string(targets.size()) +
                        " targets vs probs " + shape_to_string(probs.shape()));
  }
  const std::size_t vocab = probs.shape()[1];
  std::vector<double> one_hot(targets.size() * vocab, 0.0);
  for (std::size_t j = 0; j < targets.size(); ++j) {
    if (targets[j] >= vocab) {
      throw ContractError("report_nll: target id " + std::to_string(targets[j]) +
                          " out of range");
    }
    if (targets[j] == pad_id) continue;  // padding excluded from the sums
    one_hot[j * vocab + targets[j]] = 1.0;
  }
  const Tensor selector = Tensor::from_data({targets.size(), vocab}, std::move(one_hot));
  return scale(sum_all(mul(selector, log_clamped(probs, 1e-12))), -1.0);
}

Tensor generator_loss(const std::vector<Tensor>& probs_per_report,
                      const std::vector<std::vector<std::size_t>>& targets,
                      std::size_t pad_id) {
  if (probs_per_report.empty() || probs_per_report.size() != targets.size()) {
    throw ContractError("generator_loss: " + std::to_string(probs_per_report.size()) +
                        " prediction sets vs " + std::to_string(targets.size()) +
                        " reference sets");
  }
  Tensor total;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const Tensor nll = report_nll(probs_per_report[i], targets[i], pad_id);
    total = total.defined() ? add(total, nll) : nll;
  }
  return scale(total, 1.0 / static_cast<double>(targets.size()));
}

}  // namespace iiht
