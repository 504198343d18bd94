#include "iiht/decoding.hpp"

#include <algorithm>
#include <cmath>

#include "iiht/errors.hpp"
#include "iiht/training.hpp"

namespace iiht {

namespace {

std::map<std::size_t, std::vector<double>> one_hot_overrides(
    const std::map<std::size_t, std::size_t>& overrides, std::size_t indicators,
    std::size_t states) {
  std::map<std::size_t, std::vector<double>> rows;
  for (const auto& [t, m] : overrides) {
    if (t >= indicators) {
      throw ContractError("override for unknown indicator " + std::to_string(t));
    }
    if (m >= states) {
      throw ContractError("override state " + std::to_string(m) +
                          " out of range for indicator " + std::to_string(t));
    }
    std::vector<double> row(states, 0.0);
    row[m] = 1.0;
    rows[t] = std::move(row);
  }
  return rows;
}

struct Hypothesis {
  std::vector<std::size_t> emitted;
  std::vector<std::vector<double>> step_probs;
  double log_prob = 0.0;
  bool done = false;
};

bool better(const Hypothesis& a, const Hypothesis& b, bool length_normalize) {
  const double score_a = length_normalize && !a.emitted.empty()
                             ? a.log_prob / static_cast<double>(a.emitted.size())
                             : a.log_prob;
  const double score_b = length_normalize && !b.emitted.empty()
                             ? b.log_prob / static_cast<double>(b.emitted.size())
                             : b.log_prob;
  if (score_a != score_b) return score_a > score_b;
  return a.emitted < b.emitted;  // ties prefer the lower token ids
}

std::vector<double> next_distribution(const IihtModel& model, const Tensor& memory,
                                      const std::vector<std::size_t>& prefix) {
  Rng unused(0);
  const Tensor hidden =
      generator_forward(model.generator, memory, prefix, 0.0, false, unused);
  const std::size_t last = hidden.shape()[0] - 1;
  const Tensor probs =
      token_distribution(model.generator, slice(hidden, 0, last, last + 1));
  return probs.data();
}

}  // namespace

DecodeOptions DecodeOptions::greedy(std::size_t max_len) {
  DecodeOptions options;
  options.mode = Mode::kGreedy;
  options.max_len = max_len;
  return options;
}

DecodeOptions DecodeOptions::beam(std::size_t width, std::size_t max_len) {
  DecodeOptions options;
  options.mode = Mode::kBeam;
  options.beam_width = width;
  options.max_len = max_len;
  return options;
}

GenerationResult generate(const IihtModel& model, const ReportRecord& record,
                          const SubwordVocab& vocab,
                          const IndicatorTemplates& templates,
                          const IndicatorVocab& word_vocab,
                          const std::map<std::size_t, std::size_t>& overrides,
                          const DecodeOptions& options) {
  if (options.max_len == 0) throw ContractError("generate: max_len must be positive");
  if (options.mode == DecodeOptions::Mode::kBeam && options.beam_width == 0) {
    throw ContractError("generate: beam width must be positive");
  }
  NoGradGuard no_grad;

  auto override_rows =
      one_hot_overrides(overrides, model.config.indicators, model.config.states);
  PipelineForward forward = pipeline_forward(model, record, templates, word_vocab,
                                             Phase::kInfer, override_rows);
  if (options.hard_states) {
    // Re-one-hot the non-overridden rows at their argmax.
    for (std::size_t t = 0; t < model.config.indicators; ++t) {
      if (override_rows.count(t)) continue;
      std::size_t best = 0;
      for (std::size_t m = 1; m < model.config.states; ++m) {
        if (forward.alpha.at(t, m) > forward.alpha.at(t, best)) best = m;
      }
      std::vector<double> row(model.config.states, 0.0);
      row[best] = 1.0;
      override_rows[t] = std::move(row);
    }
    forward = pipeline_forward(model, record, templates, word_vocab, Phase::kInfer,
                               override_rows);
  }

  GenerationResult result;
  result.applied_overrides = overrides;
  for (std::size_t t = 0; t < model.config.indicators; ++t) {
    std::vector<double> row(model.config.states);
    for (std::size_t m = 0; m < model.config.states; ++m) {
      row[m] = forward.alpha.at(t, m);
    }
    result.alpha.push_back(std::move(row));
  }

  const std::size_t width =
      options.mode == DecodeOptions::Mode::kGreedy ? 1 : options.beam_width;
  std::vector<Hypothesis> beam(1);
  while (true) {
    bool all_done = true;
    for (const auto& hyp : beam) {
      all_done = all_done && (hyp.done || hyp.emitted.size() >= options.max_len);
    }
    if (all_done) break;

    std::vector<Hypothesis> pool;
    for (const auto& hyp : beam) {
      if (hyp.done || hyp.emitted.size() >= options.max_len) {
        pool.push_back(hyp);
        continue;
      }
      std::vector<std::size_t> prefix;
      prefix.push_back(SubwordVocab::kBos);
      prefix.insert(prefix.end(), hyp.emitted.begin(), hyp.emitted.end());
      const std::vector<double> probs = next_distribution(model, forward.memory, prefix);
      for (std::size_t token = 0; token < probs.size(); ++token) {
        Hypothesis next = hyp;
        next.emitted.push_back(token);
        next.step_probs.push_back(probs);
        next.log_prob += std::log(probs[token]);
        next.done = token == SubwordVocab::kEos;
        pool.push_back(std::move(next));
      }
    }
    std::sort(pool.begin(), pool.end(),
              [&options](const Hypothesis& a, const Hypothesis& b) {
                return better(a, b, options.length_normalize);
              });
    if (pool.size() > width) pool.resize(width);
    beam = std::move(pool);
  }

  std::sort(beam.begin(), beam.end(),
            [&options](const Hypothesis& a, const Hypothesis& b) {
              return better(a, b, options.length_normalize);
            });
  Hypothesis& best = beam.front();
  result.token_ids = std::move(best.emitted);
  result.step_probs = std::move(best.step_probs);
  result.log_prob = best.log_prob;
  result.text = decode(vocab, result.token_ids);
  return result;
}

StatePrediction predict_states(const IihtModel& model, const ReportRecord& record) {
  NoGradGuard no_grad;
  const Tensor x = extract_features(model.encoder, record);
  const Tensor d = indicator_embeddings(model.classifier, x);
  const Tensor alpha = state_attention(model.classifier, d).alpha;
  StatePrediction prediction;
  for (std::size_t t = 0; t < model.config.indicators; ++t) {
    std::vector<double> row(model.config.states);
    std::size_t best = 0;
    for (std::size_t m = 0; m < model.config.states; ++m) {
      row[m] = alpha.at(t, m);
      if (row[m] > row[best]) best = m;
    }
    prediction.alpha.push_back(std::move(row));
    prediction.states.push_back(best);
  }
  return prediction;
}

EvalReport run_evaluation(const IihtModel& model,
                          const std::vector<ReportRecord>& records,
                          const SubwordVocab& vocab,
                          const IndicatorTemplates& templates,
                          const IndicatorVocab& word_vocab, std::size_t max_len) {
  if (records.empty()) throw ContractError("evaluate: empty record set");
  std::vector<std::string> candidates, references;
  std::vector<std::vector<std::size_t>> predicted, labels;
  for (const auto& record : records) {
    const GenerationResult generated = generate(model, record, vocab, templates,
                                                word_vocab, {},
                                                DecodeOptions::greedy(max_len));
    candidates.push_back(generated.text);
    references.push_back(record.report);
    predicted.push_back(predict_states(model, record).states);
    std::vector<std::size_t> truth;
    for (std::size_t t = 0; t < record.labels.size(); ++t) {
      truth.push_back(record.state_of(t));
    }
    labels.push_back(std::move(truth));
  }
  EvalReport report;
  report.bleu1 = bleu_n(candidates, references, 1);
  report.bleu2 = bleu_n(candidates, references, 2);
  report.bleu3 = bleu_n(candidates, references, 3);
  report.bleu4 = bleu_n(candidates, references, 4);
  report.rouge_l = rouge_l(candidates, references);
  report.meteor = meteor_exact(candidates, references);
  report.states = state_accuracy(predicted, labels, model.config.states);
  report.n_pairs = records.size();
  return report;
}

}  // namespace iiht
