#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "iiht/model.hpp"

namespace iiht {

struct TrainConfig {
  double lambda_blend = 0.5;     // weight on the generator loss
  double learning_rate = 1e-3;   // paper preset uses 1e-6
  double weight_decay = 1e-4;
  std::size_t batch_size = 8;
  std::size_t epochs = 200;
  std::uint64_t seed = 0;
  double clip_norm = 1.0;        // <= 0 disables clipping

  void validate() const;  // ConfigError on violation
  // Published hyperparameters: lr 1e-6, weight decay 1e-4, batch 8,
  // 300 epochs, lambda 0.5 (embed dim 512 lives in ModelConfig).
  static TrainConfig paper_preset();

  std::string to_json() const;
  static TrainConfig from_json(const std::string& text);
};

// L = lambda * L_G + (1 - lambda) * L_C. At exactly 0 or 1 the inactive
// branch is excluded from the graph, so its parameters see no gradient.
Tensor total_loss(const Tensor& generator_loss, const Tensor& classifier_loss,
                  double lambda_blend);

struct AdamWState {
  struct Moments {
    std::vector<double> m;
    std::vector<double> v;
  };
  std::map<std::string, Moments> slots;
  std::size_t step = 0;
};

// Decoupled weight decay update (beta1 0.9, beta2 0.999, eps 1e-8, bias
// correction). Parameters without an accumulated gradient are skipped;
// non-finite gradients abort with the parameter path.
void adamw_step(NamedParams& params, AdamWState& state, double learning_rate,
                double weight_decay);

// Scales all gradients so the global norm is at most max_norm; returns the
// pre-clip norm.
double clip_gradients(NamedParams& params, double max_norm);

struct EpochStats {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double generator_loss = 0.0;
  double classifier_loss = 0.0;
  double state_accuracy = 0.0;
};

struct TrainResult {
  std::vector<EpochStats> log;
  bool diverged = false;
  std::size_t steps = 0;
};

std::string metrics_csv_header();
std::string metrics_csv_row(const EpochStats& stats);

// Joint teacher-forced optimization of the blended loss. Deterministic under
// the config seed; on divergence the parameters are rolled back to the end
// of the last finite epoch. `csv` (optional) receives the per-epoch log.
TrainResult train(IihtModel& model, const Corpus& corpus, const SubwordVocab& vocab,
                  const IndicatorTemplates& templates, const IndicatorVocab& word_vocab,
                  const TrainConfig& config, AdamWState& optimizer,
                  std::ostream* csv = nullptr);

// Teacher-forced next-token accuracy over a record set (no dropout).
double token_accuracy(const IihtModel& model, const std::vector<ReportRecord>& records,
                      const SubwordVocab& vocab, const IndicatorTemplates& templates,
                      const IndicatorVocab& word_vocab);

// Mean per-indicator argmax accuracy of the classifier over a record set.
double classifier_accuracy(const IihtModel& model,
                           const std::vector<ReportRecord>& records);

// Binary checkpoint: magic "IIHT", version, step counter, RNG state, config
// snapshot, then length-prefixed canonical-path tensor records (params and
// optimizer moments), little-endian f64 payloads.
void save_checkpoint(const std::string& path, IihtModel& model,
                     const AdamWState& optimizer, const TrainConfig& config,
                     const Rng& rng);

struct LoadedCheckpoint {
  IihtModel model;
  AdamWState optimizer;
  TrainConfig config;
  Rng rng;
};

LoadedCheckpoint load_checkpoint(const std::string& path);

// Shapes/step/config summary for the `inspect` subcommand.
std::string describe_checkpoint(const std::string& path);

}  // namespace iiht
