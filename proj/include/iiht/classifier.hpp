#pragma once

#include <cstddef>
#include <map>
#include <vector>

#include "iiht/corpus.hpp"
#include "iiht/ops.hpp"
#include "iiht/tensor.hpp"

namespace iiht {

enum class Phase { kTrain, kInfer };

// Image feature extractor. Tiny-conv mode: two strided 3x3 conv layers and a
// learned projection of the flattened map down to F features. Passthrough
// mode forwards precomputed feature vectors unchanged.
struct VisualEncoder {
  enum class Mode { kTinyConv, kPassthrough };
  static constexpr std::size_t kConv1Channels = 8;
  static constexpr std::size_t kConv2Channels = 16;
  static constexpr std::size_t kKernel = 3;
  static constexpr std::size_t kStride = 2;
  static constexpr std::size_t kPad = 1;

  Mode mode = Mode::kTinyConv;
  std::size_t feature_dim = 64;  // F, fixed per model instance
  std::size_t image_h = 0;
  std::size_t image_w = 0;

  Tensor conv1_w, conv1_b;  // [C1 x 9], [C1 x 1]
  Tensor conv2_w, conv2_b;  // [C2 x C1*9], [C2 x 1]
  Tensor proj_w, proj_b;    // [C2*P2 x F], [1 x F]

  static VisualEncoder tiny_conv(std::size_t feature_dim, std::size_t image_h,
                                 std::size_t image_w, Rng& rng);
  static VisualEncoder passthrough(std::size_t feature_dim);

  std::size_t conv_out(std::size_t extent) const {
    return (extent + 2 * kPad - kKernel) / kStride + 1;
  }

  // Single view [1,H,W] -> [1,F].
  Tensor encode_image(const Tensor& image) const;
};

// Multi-view merge by elementwise max, then F features out.
Tensor extract_features(const VisualEncoder& encoder, const ReportRecord& record);

struct ClassifierParams {
  std::size_t indicators = 0;  // T
  std::size_t states = 0;      // M
  std::size_t embed_dim = 0;   // e

  std::vector<Tensor> w;  // T projections [F x e]
  std::vector<Tensor> b;  // T biases [1 x e]
  Tensor s;               // state embeddings [e x M]

  static ClassifierParams init(std::size_t indicators, std::size_t states,
                               std::size_t feature_dim, std::size_t embed_dim, Rng& rng);
};

// d_t = W_t^T x + b_t, stacked into [T x e].
Tensor indicator_embeddings(const ClassifierParams& params, const Tensor& x);

struct StateAttention {
  Tensor alpha;  // [T x M], rows are probability vectors
  Tensor d_hat;  // [T x e], diagnostic mixture of state embeddings
};
StateAttention state_attention(const ClassifierParams& params, const Tensor& d);

// Mean over indicators of the cross entropy between alpha rows and one-hot
// labels; log arguments clamped at 1e-12.
Tensor multilabel_loss(const Tensor& alpha, const Tensor& labels);

Tensor labels_tensor(const std::vector<std::vector<int>>& labels);

// Per-row mixture coefficients for the state-aware embeddings: one-hot
// labels while training, attention rows otherwise. Caller-supplied one-hot
// overrides replace individual rows in either phase.
Tensor substitution_coefficients(
    const Tensor& alpha, const Tensor& labels, Phase phase,
    const std::map<std::size_t, std::vector<double>>& overrides = {});

// s_hat rows = coefficients . S^T; both phases share this single path.
Tensor state_substitute(const ClassifierParams& params, const Tensor& coefficients);

}  // namespace iiht
