#include "iiht/expansion.hpp"

#include <algorithm>
#include <cmath>

#include "iiht/errors.hpp"

namespace iiht {

GruCell GruCell::init(std::size_t dim, Rng& rng) {
  const double std_dev = 1.0 / std::sqrt(static_cast<double>(dim));
  GruCell cell;
  cell.w_z = Tensor::randn({dim, dim}, rng, std_dev, true);
  cell.u_z = Tensor::randn({dim, dim}, rng, std_dev, true);
  cell.b_z = Tensor::zeros({1, dim}, true);
  cell.w_r = Tensor::randn({dim, dim}, rng, std_dev, true);
  cell.u_r = Tensor::randn({dim, dim}, rng, std_dev, true);
  cell.b_r = Tensor::zeros({1, dim}, true);
  cell.w_n = Tensor::randn({dim, dim}, rng, std_dev, true);
  cell.u_n = Tensor::randn({dim, dim}, rng, std_dev, true);
  cell.b_n = Tensor::zeros({1, dim}, true);
  return cell;
}

Tensor gru_step(const GruCell& cell, const Tensor& x, const Tensor& h) {
  const Tensor z = sigmoid(add(add(matmul(x, cell.w_z), matmul(h, cell.u_z)), cell.b_z));
  const Tensor r = sigmoid(add(add(matmul(x, cell.w_r), matmul(h, cell.u_r)), cell.b_r));
  const Tensor n =
      tanh(add(add(matmul(x, cell.w_n), matmul(mul(r, h), cell.u_n)), cell.b_n));
  // (1 - z) * n + z * h without materializing the ones tensor.
  return add(sub(n, mul(z, n)), mul(z, h));
}

ExpansionParams ExpansionParams::init(std::size_t word_vocab, std::size_t embed_dim,
                                      Rng& rng) {
  const double std_dev = 1.0 / std::sqrt(static_cast<double>(embed_dim));
  ExpansionParams params;
  params.embed_dim = embed_dim;
  params.word_embedding = Tensor::randn({word_vocab, embed_dim}, rng, std_dev, true);
  params.forward_cell = GruCell::init(embed_dim, rng);
  params.backward_cell = GruCell::init(embed_dim, rng);
  params.combine_w = Tensor::randn({2 * embed_dim, embed_dim}, rng,
                                   1.0 / std::sqrt(2.0 * embed_dim), true);
  params.combine_b = Tensor::zeros({1, embed_dim}, true);
  params.mlp_w1 = Tensor::randn({embed_dim, embed_dim}, rng, std_dev, true);
  params.mlp_b1 = Tensor::zeros({1, embed_dim}, true);
  params.mlp_w2 = Tensor::randn({embed_dim, embed_dim}, rng, std_dev, true);
  params.mlp_b2 = Tensor::zeros({1, embed_dim}, true);
  return params;
}

std::vector<std::size_t> indicator_to_words(const IndicatorTemplates& templates,
                                            const IndicatorVocab& vocab, std::size_t t,
                                            const std::vector<double>& state_row) {
  if (t >= templates.indicator_count()) {
    throw ContractError("indicator_to_words: unknown indicator id " + std::to_string(t));
  }
  if (state_row.size() != templates.state_count()) {
    throw ContractError("indicator_to_words: state row arity " +
                        std::to_string(state_row.size()) + " vs " +
                        std::to_string(templates.state_count()) + " states");
  }
  const std::size_t m = static_cast<std::size_t>(
      std::max_element(state_row.begin(), state_row.end()) - state_row.begin());
  std::vector<std::size_t> ids;
  for (const auto& word : templates.phrase(t, m)) ids.push_back(vocab.id_of(word));
  return ids;
}

Tensor encode_indicator(const ExpansionParams& params,
                        const std::vector<std::size_t>& word_ids,
                        const Tensor& s_hat_t) {
  if (word_ids.empty()) throw ContractError("encode_indicator: empty word sequence");
  const Tensor embedded = embedding_lookup(params.word_embedding, word_ids);

  Tensor forward_h = s_hat_t;
  for (std::size_t k = 0; k < word_ids.size(); ++k) {
    forward_h = gru_step(params.forward_cell, row(embedded, k), forward_h);
  }
  Tensor backward_h = s_hat_t;
  for (std::size_t k = word_ids.size(); k-- > 0;) {
    backward_h = gru_step(params.backward_cell, row(embedded, k), backward_h);
  }

  const Tensor final_state = add(
      matmul(concat({forward_h, backward_h}, 1), params.combine_w), params.combine_b);
  const Tensor pre_mlp = add(s_hat_t, final_state);
  const Tensor hidden = tanh(add(matmul(pre_mlp, params.mlp_w1), params.mlp_b1));
  return add(matmul(hidden, params.mlp_w2), params.mlp_b2);
}

}  // namespace iiht
