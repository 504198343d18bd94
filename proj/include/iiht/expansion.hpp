#pragma once

#include <cstddef>
#include <vector>

#include "iiht/ops.hpp"
#include "iiht/templates.hpp"
#include "iiht/tensor.hpp"
#include "iiht/tokenizer.hpp"

namespace iiht {

// Gated recurrent unit (single layer):
//   z = sigmoid(x Wz + h Uz + bz)
//   r = sigmoid(x Wr + h Ur + br)
//   n = tanh(x Wn + (r * h) Un + bn)
//   h' = (1 - z) * n + z * h
struct GruCell {
  Tensor w_z, u_z, b_z;
  Tensor w_r, u_r, b_r;
  Tensor w_n, u_n, b_n;

  static GruCell init(std::size_t dim, Rng& rng);
};

Tensor gru_step(const GruCell& cell, const Tensor& x, const Tensor& h);

// The "data-text-data" expansion: word embeddings for the indicator
// vocabulary, a bi-directional GRU seeded by the state-aware embedding, a
// learned projection combining the two directional finals, and the MLP head.
struct ExpansionParams {
  std::size_t embed_dim = 0;
  Tensor word_embedding;        // [|W| x e]
  GruCell forward_cell;
  GruCell backward_cell;
  Tensor combine_w, combine_b;  // [2e x e], [1 x e]
  Tensor mlp_w1, mlp_b1;        // [e x e], [1 x e]
  Tensor mlp_w2, mlp_b2;

  static ExpansionParams init(std::size_t word_vocab, std::size_t embed_dim, Rng& rng);
};

// Renders (indicator, state row) as phrase word ids; the state is the row's
// argmax, so soft attention rows and one-hot labels share this path.
std::vector<std::size_t> indicator_to_words(const IndicatorTemplates& templates,
                                            const IndicatorVocab& vocab, std::size_t t,
                                            const std::vector<double>& state_row);

// h_t = MLP(s_hat_t + combined bidirectional final state). Both directions
// start from s_hat_t.
Tensor encode_indicator(const ExpansionParams& params,
                        const std::vector<std::size_t>& word_ids,
                        const Tensor& s_hat_t);

}  // namespace iiht
