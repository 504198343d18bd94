#include "iiht/classifier.hpp"

#include <cmath>

#include "iiht/errors.hpp"

namespace iiht {

VisualEncoder VisualEncoder::tiny_conv(std::size_t feature_dim, std::size_t image_h,
                                       std::size_t image_w, Rng& rng) {
  VisualEncoder enc;
  enc.mode = Mode::kTinyConv;
  enc.feature_dim = feature_dim;
  enc.image_h = image_h;
  enc.image_w = image_w;

  const std::size_t k2 = kKernel * kKernel;
  const std::size_t p2 = enc.conv_out(enc.conv_out(image_h)) *
                         enc.conv_out(enc.conv_out(image_w));
  enc.conv1_w = Tensor::randn({kConv1Channels, k2}, rng, 1.0 / std::sqrt(double(k2)), true);
  enc.conv1_b = Tensor::zeros({kConv1Channels, 1}, true);
  enc.conv2_w = Tensor::randn({kConv2Channels, kConv1Channels * k2}, rng,
                              1.0 / std::sqrt(double(kConv1Channels * k2)), true);
  enc.conv2_b = Tensor::zeros({kConv2Channels, 1}, true);
  enc.proj_w = Tensor::randn({kConv2Channels * p2, feature_dim}, rng,
                             1.0 / std::sqrt(double(kConv2Channels * p2)), true);
  enc.proj_b = Tensor::zeros({1, feature_dim}, true);
  return enc;
}

VisualEncoder VisualEncoder::passthrough(std::size_t feature_dim) {
  VisualEncoder enc;
  enc.mode = Mode::kPassthrough;
  enc.feature_dim = feature_dim;
  return enc;
}

Tensor VisualEncoder::encode_image(const Tensor& image) const {
  const Tensor col1 = im2col(image, kKernel, kKernel, kStride, kPad);
  const Tensor h1 = relu(add(matmul(conv1_w, col1), conv1_b));
  const std::size_t h1_h = conv_out(image_h);
  const std::size_t h1_w = conv_out(image_w);
  const Tensor col2 = im2col(reshape(h1, {kConv1Channels, h1_h, h1_w}), kKernel,
                             kKernel, kStride, kPad);
  const Tensor h2 = relu(add(matmul(conv2_w, col2), conv2_b));
  const Tensor flat = reshape(h2, {1, h2.size()});
  return add(matmul(flat, proj_w), proj_b);
}

Tensor extract_features(const VisualEncoder& encoder, const ReportRecord& record) {
  if (encoder.mode == VisualEncoder::Mode::kPassthrough) {
    if (record.features.empty()) {
      throw ContractError("extract_features: record " + record.id +
                          " carries no feature vector");
    }
    if (record.features.size() != encoder.feature_dim) {
      throw DimensionError("extract_features: record " + record.id + " has " +
                           std::to_string(record.features.size()) +
                           " features, model expects " +
                           std::to_string(encoder.feature_dim));
    }
    return Tensor::from_data({1, encoder.feature_dim}, record.features);
  }

  if (record.images.empty()) {
    throw ContractError("extract_features: record " + record.id + " has no images");
  }
  if (record.image_h != encoder.image_h || record.image_w != encoder.image_w) {
    throw DimensionError("extract_features: record " + record.id + " is " +
                         std::to_string(record.image_h) + "x" +
                         std::to_string(record.image_w) + ", model expects " +
                         std::to_string(encoder.image_h) + "x" +
                         std::to_string(encoder.image_w));
  }
  Tensor merged;
  for (const auto& pixels : record.images) {
    const Tensor image =
        Tensor::from_data({1, record.image_h, record.image_w}, pixels);
    const Tensor encoded = encoder.encode_image(image);
    merged = merged.defined() ? emax(merged, encoded) : encoded;
  }
  return merged;
}

ClassifierParams ClassifierParams::init(std::size_t indicators, std::size_t states,
                                        std::size_t feature_dim, std::size_t embed_dim,
                                        Rng& rng) {
  ClassifierParams params;
  params.indicators = indicators;
  params.states = states;
  params.embed_dim = embed_dim;
  for (std::size_t t = 0; t < indicators; ++t) {
    params.w.push_back(Tensor::randn({feature_dim, embed_dim}, rng,
                                     1.0 / std::sqrt(double(feature_dim)), true));
    params.b.push_back(Tensor::zeros({1, embed_dim}, true));
  }
  params.s = Tensor::randn({embed_dim, states}, rng, 1.0 / std::sqrt(double(embed_dim)),
                           true);
  return params;
}

Tensor indicator_embeddings(const ClassifierParams& params, const Tensor& x) {
  std::vector<Tensor> rows;
  rows.reserve(params.indicators);
  for (std::size_t t = 0; t < params.indicators; ++t) {
    rows.push_back(add(matmul(x, params.w[t]), params.b[t]));
  }
  return concat(rows, 0);
}

StateAttention state_attention(const ClassifierParams& params, const Tensor& d) {
  StateAttention out;
  out.alpha = softmax(matmul(d, params.s), 1);
  out.d_hat = matmul(out.alpha, transpose(params.s));
  return out;
}

Tensor multilabel_loss(const Tensor& alpha, const Tensor& labels) {
  if (alpha.shape() != labels.shape()) {
    throw DimensionError("multilabel_loss: alpha " + shape_to_string(alpha.shape()) +
                         " vs labels " + shape_to_string(labels.shape()));
  }
  const double t_count = static_cast<double>(alpha.shape()[0]);
  return scale(sum_all(mul(labels, log_clamped(alpha, 1e-12))), -1.0 / t_count);
}

Tensor labels_tensor(const std::vector<std::vector<int>>& labels) {
  const std::size_t t_count = labels.size();
  const std::size_t m_count = labels.empty() ? 0 : labels[0].size();
  std::vector<double> data;
  data.reserve(t_count * m_count);
  for (const auto& row : labels) {
    if (row.size() != m_count) {
      throw ContractError("labels_tensor: ragged label rows");
    }
    for (int v : row) data.push_back(static_cast<double>(v));
  }
  return Tensor::from_data({t_count, m_count}, std::move(data));
}

Tensor substitution_coefficients(
    const Tensor& alpha, const Tensor& labels, Phase phase,
    const std::map<std::size_t, std::vector<double>>& overrides) {
  const Tensor& base = phase == Phase::kTrain ? labels : alpha;
  const std::size_t t_count = base.shape()[0];
  const std::size_t m_count = base.shape()[1];
  for (const auto& [t, row] : overrides) {
    if (t >= t_count) {
      throw ContractError("state override for unknown indicator " + std::to_string(t));
    }
    if (row.size() != m_count) {
      throw ContractError("state override row for indicator " + std::to_string(t) +
                          " has arity " + std::to_string(row.size()));
    }
    double sum = 0.0;
    for (double v : row) {
      if (v < 0.0 || v > 1.0) {
        throw ContractError("state override row for indicator " + std::to_string(t) +
                            " is not a probability vector");
      }
      sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-9) {
      throw ContractError("state override row for indicator " + std::to_string(t) +
                          " sums to " + std::to_string(sum));
    }
  }
  if (overrides.empty()) return base;

  std::vector<Tensor> rows;
  rows.reserve(t_count);
  for (std::size_t t = 0; t < t_count; ++t) {
    auto it = overrides.find(t);
    if (it == overrides.end()) {
      rows.push_back(slice(base, 0, t, t + 1));
    } else {
      rows.push_back(Tensor::from_data({1, m_count}, it->second));
    }
  }
  return concat(rows, 0);
}

Tensor state_substitute(const ClassifierParams& params, const Tensor& coefficients) {
  if (coefficients.ndim() != 2 || coefficients.shape()[1] != params.states) {
    throw DimensionError("state_substitute: coefficients " +
                         shape_to_string(coefficients.shape()) + " vs " +
                         std::to_string(params.states) + " states");
  }
  return matmul(coefficients, transpose(params.s));
}

}  // namespace iiht
