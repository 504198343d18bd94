#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "iiht/metrics.hpp"
#include "iiht/model.hpp"

namespace iiht {

struct GenerationResult {
  std::vector<std::size_t> token_ids;           // emitted tokens, <eos> included
  std::string text;                             // decoded report
  std::vector<std::vector<double>> step_probs;  // full p_n per emitted token
  std::vector<std::vector<double>> alpha;       // classifier confidences [T][M]
  std::map<std::size_t, std::size_t> applied_overrides;  // indicator -> state
  double log_prob = 0.0;                        // sum of log p(chosen)
};

struct DecodeOptions {
  enum class Mode { kGreedy, kBeam };
  Mode mode = Mode::kGreedy;
  std::size_t beam_width = 1;
  std::size_t max_len = 128;
  bool hard_states = false;       // re-one-hot alpha before the substitution
  bool length_normalize = false;  // divide beam scores by emitted length

  static DecodeOptions greedy(std::size_t max_len = 128);
  static DecodeOptions beam(std::size_t width, std::size_t max_len = 128);
};

// Autoregressive report generation through the inference path: predicted
// states (soft mixture by default), optional per-indicator overrides, then
// greedy or beam decoding. Ties prefer the lower token id.
GenerationResult generate(const IihtModel& model, const ReportRecord& record,
                          const SubwordVocab& vocab,
                          const IndicatorTemplates& templates,
                          const IndicatorVocab& word_vocab,
                          const std::map<std::size_t, std::size_t>& overrides,
                          const DecodeOptions& options);

struct StatePrediction {
  std::vector<std::vector<double>> alpha;  // [T][M]
  std::vector<std::size_t> states;         // argmax per indicator
};

StatePrediction predict_states(const IihtModel& model, const ReportRecord& record);

// Greedy-decodes every record and scores generations against references,
// plus classifier state accuracy.
EvalReport run_evaluation(const IihtModel& model,
                          const std::vector<ReportRecord>& records,
                          const SubwordVocab& vocab,
                          const IndicatorTemplates& templates,
                          const IndicatorVocab& word_vocab, std::size_t max_len);

}  // namespace iiht
