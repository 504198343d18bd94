#include "iiht/model.hpp"

#include <json.hpp>

#include "iiht/errors.hpp"

namespace iiht {

std::string ModelConfig::to_json() const {
  nlohmann::ordered_json j;
  j["indicators"] = indicators;
  j["states"] = states;
  j["feature_dim"] = feature_dim;
  j["embed_dim"] = embed_dim;
  j["heads"] = heads;
  j["layers"] = layers;
  j["vocab_size"] = vocab_size;
  j["word_vocab_size"] = word_vocab_size;
  j["image_h"] = image_h;
  j["image_w"] = image_w;
  j["passthrough_features"] = passthrough_features;
  j["dropout"] = dropout;
  return j.dump();
}

ModelConfig ModelConfig::from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text, nullptr, false);
  if (j.is_discarded()) throw ValidationError("model config: malformed JSON");
  ModelConfig config;
  config.indicators = j.at("indicators").get<std::size_t>();
  config.states = j.at("states").get<std::size_t>();
  config.feature_dim = j.at("feature_dim").get<std::size_t>();
  config.embed_dim = j.at("embed_dim").get<std::size_t>();
  config.heads = j.at("heads").get<std::size_t>();
  config.layers = j.at("layers").get<std::size_t>();
  config.vocab_size = j.at("vocab_size").get<std::size_t>();
  config.word_vocab_size = j.at("word_vocab_size").get<std::size_t>();
  config.image_h = j.at("image_h").get<std::size_t>();
  config.image_w = j.at("image_w").get<std::size_t>();
  config.passthrough_features = j.at("passthrough_features").get<bool>();
  config.dropout = j.at("dropout").get<double>();
  return config;
}

IihtModel IihtModel::init(const ModelConfig& config, Rng& rng) {
  if (config.vocab_size < 4) {
    throw ConfigError("model: vocab_size must cover the special tokens");
  }
  if (config.word_vocab_size == 0 || config.indicators == 0 || config.states == 0) {
    throw ConfigError("model: indicator/state/word-vocab sizes must be positive");
  }
  IihtModel model;
  model.config = config;
  model.encoder = config.passthrough_features
                      ? VisualEncoder::passthrough(config.feature_dim)
                      : VisualEncoder::tiny_conv(config.feature_dim, config.image_h,
                                                 config.image_w, rng);
  model.classifier = ClassifierParams::init(config.indicators, config.states,
                                            config.feature_dim, config.embed_dim, rng);
  model.expansion = ExpansionParams::init(config.word_vocab_size, config.embed_dim, rng);
  model.generator =
      GeneratorParams::init(config.embed_dim, config.heads, config.layers,
                            config.vocab_size, config.feature_dim,
                            config.indicators + 1, rng);
  return model;
}

NamedParams IihtModel::parameters() {
  NamedParams params;
  auto push = [&params](const std::string& path, const Tensor& t) {
    if (t.defined()) params.emplace_back(path, t);
  };

  push("encoder/conv1/weight", encoder.conv1_w);
  push("encoder/conv1/bias", encoder.conv1_b);
  push("encoder/conv2/weight", encoder.conv2_w);
  push("encoder/conv2/bias", encoder.conv2_b);
  push("encoder/proj/weight", encoder.proj_w);
  push("encoder/proj/bias", encoder.proj_b);

  for (std::size_t t = 0; t < classifier.indicators; ++t) {
    push("classifier/w" + std::to_string(t), classifier.w[t]);
    push("classifier/b" + std::to_string(t), classifier.b[t]);
  }
  push("classifier/state_embedding", classifier.s);

  push("expansion/word_embedding", expansion.word_embedding);
  auto push_cell = [&push](const std::string& prefix, const GruCell& cell) {
    push(prefix + "/w_z", cell.w_z);
    push(prefix + "/u_z", cell.u_z);
    push(prefix + "/b_z", cell.b_z);
    push(prefix + "/w_r", cell.w_r);
    push(prefix + "/u_r", cell.u_r);
    push(prefix + "/b_r", cell.b_r);
    push(prefix + "/w_n", cell.w_n);
    push(prefix + "/u_n", cell.u_n);
    push(prefix + "/b_n", cell.b_n);
  };
  push_cell("expansion/fwd", expansion.forward_cell);
  push_cell("expansion/bwd", expansion.backward_cell);
  push("expansion/combine/weight", expansion.combine_w);
  push("expansion/combine/bias", expansion.combine_b);
  push("expansion/mlp/w1", expansion.mlp_w1);
  push("expansion/mlp/b1", expansion.mlp_b1);
  push("expansion/mlp/w2", expansion.mlp_w2);
  push("expansion/mlp/b2", expansion.mlp_b2);

  push("generator/token_embedding", generator.token_embedding);
  push("generator/adapter/weight", generator.adapter_w);
  push("generator/adapter/bias", generator.adapter_b);
  push("generator/seg_visual", generator.seg_visual);
  push("generator/seg_indicator", generator.seg_indicator);
  for (std::size_t z = 0; z < generator.blocks.size(); ++z) {
    const std::string prefix = "generator/block" + std::to_string(z);
    TransformerLayer& layer = generator.blocks[z];
    push(prefix + "/wq", layer.wq);
    push(prefix + "/bq", layer.bq);
    push(prefix + "/wk", layer.wk);
    push(prefix + "/bk", layer.bk);
    push(prefix + "/wv", layer.wv);
    push(prefix + "/bv", layer.bv);
    push(prefix + "/wo", layer.wo);
    push(prefix + "/bo", layer.bo);
    push(prefix + "/ln1/gain", layer.ln1_gain);
    push(prefix + "/ln1/bias", layer.ln1_bias);
    push(prefix + "/ff1/weight", layer.ff1_w);
    push(prefix + "/ff1/bias", layer.ff1_b);
    push(prefix + "/ff2/weight", layer.ff2_w);
    push(prefix + "/ff2/bias", layer.ff2_b);
    push(prefix + "/ln2/gain", layer.ln2_gain);
    push(prefix + "/ln2/bias", layer.ln2_bias);
  }
  push("generator/final_ln/gain", generator.final_ln_gain);
  push("generator/final_ln/bias", generator.final_ln_bias);
  push("generator/output/weight", generator.output_w);
  return params;
}

void IihtModel::zero_grads() {
  for (auto& [path, tensor] : parameters()) tensor.zero_grad();
}

PipelineForward pipeline_forward(
    const IihtModel& model, const ReportRecord& record,
    const IndicatorTemplates& templates, const IndicatorVocab& word_vocab, Phase phase,
    const std::map<std::size_t, std::vector<double>>& overrides) {
  PipelineForward out;
  out.x = extract_features(model.encoder, record);
  out.d = indicator_embeddings(model.classifier, out.x);
  const StateAttention attention = state_attention(model.classifier, out.d);
  out.alpha = attention.alpha;
  out.d_hat = attention.d_hat;

  const Tensor labels = labels_tensor(record.labels);
  if (phase == Phase::kTrain &&
      (labels.shape()[0] != model.config.indicators ||
       labels.shape()[1] != model.config.states)) {
    throw ContractError("pipeline: record " + record.id + " labels are " +
                        shape_to_string(labels.shape()));
  }
  out.coefficients = substitution_coefficients(out.alpha, labels, phase, overrides);
  out.s_hat = state_substitute(model.classifier, out.coefficients);

  std::vector<Tensor> indicator_info;
  indicator_info.reserve(model.config.indicators);
  for (std::size_t t = 0; t < model.config.indicators; ++t) {
    std::vector<double> coeff_row(model.config.states);
    for (std::size_t m = 0; m < model.config.states; ++m) {
      coeff_row[m] = out.coefficients.at(t, m);
    }
    const auto word_ids = indicator_to_words(templates, word_vocab, t, coeff_row);
    indicator_info.push_back(
        encode_indicator(model.expansion, word_ids, row(out.s_hat, t)));
  }
  out.memory = build_memory(model.generator, out.x, indicator_info);
  return out;
}

}  // namespace iiht
