#pragma once

#include <cstddef>
#include <vector>

#include "iiht/ops.hpp"
#include "iiht/tensor.hpp"

namespace iiht {

struct TransformerLayer {
  Tensor wq, bq, wk, bk, wv, bv, wo, bo;  // attention projections [e x e], [1 x e]
  Tensor ln1_gain, ln1_bias;              // pre-attention norm affine [1 x e]
  Tensor ff1_w, ff1_b;                    // [e x 4e], [1 x 4e]
  Tensor ff2_w, ff2_b;                    // [4e x e], [1 x e]
  Tensor ln2_gain, ln2_bias;

  static TransformerLayer init(std::size_t embed_dim, Rng& rng);
};

// Causal self-attention stack over [memory rows, token rows]. Memory rows
// (visual feature + indicator information) are position-free; every token
// position attends to all memory and to non-future tokens only.
struct GeneratorParams {
  std::size_t embed_dim = 0;    // e, divisible by heads
  std::size_t heads = 0;        // H
  std::size_t vocab_size = 0;   // v
  std::size_t memory_rows = 0;  // T + 1

  Tensor token_embedding;        // [v x e]
  Tensor adapter_w, adapter_b;   // visual feature adapter [F x e], [1 x e]
  Tensor seg_visual;             // learned segment offset for the visual row
  Tensor seg_indicator;          // shared offset for indicator rows
  std::vector<TransformerLayer> blocks;
  Tensor final_ln_gain, final_ln_bias;
  Tensor output_w;               // W_p [e x v]

  static GeneratorParams init(std::size_t embed_dim, std::size_t heads,
                              std::size_t layers, std::size_t vocab_size,
                              std::size_t feature_dim, std::size_t memory_rows,
                              Rng& rng);
};

// Prefix memory [adapter(x), h_1..h_T] with segment offsets applied.
Tensor build_memory(const GeneratorParams& params, const Tensor& x,
                    const std::vector<Tensor>& indicator_info);

// Hidden states for the token positions: [L x e], row j depending on memory
// and tokens <= j only. Dropout applies in the attention/feed-forward
// sublayers when train_flag is set.
Tensor generator_forward(const GeneratorParams& params, const Tensor& memory,
                         const std::vector<std::size_t>& token_ids,
                         double dropout_rate, bool train_flag, Rng& rng);

// softmax(h . W_p) along the vocabulary axis; accepts [L x e] or [1 x e].
Tensor token_distribution(const GeneratorParams& params, const Tensor& hidden);

// Eq-style cross entropy over l reports: -(1/l) sum_i sum_n log p(y_n);
// positions whose target is `pad_id` are excluded.
Tensor generator_loss(const std::vector<Tensor>& probs_per_report,
                      const std::vector<std::vector<std::size_t>>& targets,
                      std::size_t pad_id);

// Single-report negative log likelihood (summed over positions).
Tensor report_nll(const Tensor& probs, const std::vector<std::size_t>& targets,
                  std::size_t pad_id);

Tensor sinusoidal_positions(std::size_t length, std::size_t embed_dim);

}  // namespace iiht
