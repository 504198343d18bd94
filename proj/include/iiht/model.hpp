#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "iiht/classifier.hpp"
#include "iiht/corpus.hpp"
#include "iiht/expansion.hpp"
#include "iiht/generator.hpp"
#include "iiht/templates.hpp"
#include "iiht/tokenizer.hpp"

namespace iiht {

struct ModelConfig {
  std::size_t indicators = 11;      // T
  std::size_t states = 3;           // M
  std::size_t feature_dim = 64;     // F
  std::size_t embed_dim = 64;       // e (512 at paper scale)
  std::size_t heads = 4;            // H
  std::size_t layers = 2;           // Z
  std::size_t vocab_size = 0;       // v, from the trained subword vocabulary
  std::size_t word_vocab_size = 0;  // |W|, from the indicator vocabulary
  std::size_t image_h = 4;
  std::size_t image_w = 44;
  bool passthrough_features = false;
  double dropout = 0.1;

  std::string to_json() const;
  static ModelConfig from_json(const std::string& text);
};

using NamedParams = std::vector<std::pair<std::string, Tensor>>;

// The full pipeline: visual encoder, classifier, indicator expansion and
// generator, with a canonical-path parameter registry for the optimizer and
// checkpoints.
struct IihtModel {
  ModelConfig config;
  VisualEncoder encoder;
  ClassifierParams classifier;
  ExpansionParams expansion;
  GeneratorParams generator;

  static IihtModel init(const ModelConfig& config, Rng& rng);

  // Stable ordering; paths identify tensors across save/load.
  NamedParams parameters();
  void zero_grads();
};

struct PipelineForward {
  Tensor x;             // [1 x F]
  Tensor d;             // [T x e]
  Tensor alpha;         // [T x M]
  Tensor d_hat;         // [T x e] diagnostic
  Tensor coefficients;  // effective Eq-style state mixture rows [T x M]
  Tensor s_hat;         // [T x e]
  Tensor memory;        // [T+1 x e]
};

// Classifier -> state substitution -> expansion -> generator memory. During
// training the substitution and phrase selection use the record labels;
// during inference they use the attention rows, with optional per-indicator
// one-hot overrides in either phase.
PipelineForward pipeline_forward(
    const IihtModel& model, const ReportRecord& record,
    const IndicatorTemplates& templates, const IndicatorVocab& word_vocab, Phase phase,
    const std::map<std::size_t, std::vector<double>>& overrides = {});

}  // namespace iiht
