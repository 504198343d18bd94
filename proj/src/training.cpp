#include "iiht/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "iiht/errors.hpp"

namespace iiht {

namespace {

constexpr double kBeta1 = 0.9;
constexpr double kBeta2 = 0.999;
constexpr double kEps = 1e-8;
constexpr char kMagic[4] = {'I', 'I', 'H', 'T'};
constexpr std::uint32_t kVersion = 1;

struct EncodedReport {
  std::vector<std::size_t> input;   // <bos> + tokens
  std::vector<std::size_t> target;  // tokens + <eos>
};

EncodedReport encode_report(const SubwordVocab& vocab, const std::string& report) {
  EncodedReport out;
  const auto ids = encode(vocab, report);
  out.input.push_back(SubwordVocab::kBos);
  out.input.insert(out.input.end(), ids.begin(), ids.end());
  out.target = ids;
  out.target.push_back(SubwordVocab::kEos);
  return out;
}

struct BatchLosses {
  Tensor generator;
  Tensor classifier;
};

// Teacher-forced losses over a group of records (training conditioning).
BatchLosses batch_losses(const IihtModel& model,
                         const std::vector<const ReportRecord*>& records,
                         const std::vector<const EncodedReport*>& encodings,
                         const IndicatorTemplates& templates,
                         const IndicatorVocab& word_vocab, double lambda_blend,
                         bool train_flag, Rng& rng) {
  const bool need_generator = lambda_blend > 0.0;
  const bool need_classifier = lambda_blend < 1.0;
  std::vector<Tensor> probs;
  std::vector<std::vector<std::size_t>> targets;
  Tensor classifier_sum;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const ReportRecord& record = *records[i];
    const PipelineForward forward =
        pipeline_forward(model, record, templates, word_vocab, Phase::kTrain);
    if (need_classifier) {
      const Tensor loss =
          multilabel_loss(forward.alpha, labels_tensor(record.labels));
      classifier_sum = classifier_sum.defined() ? add(classifier_sum, loss) : loss;
    }
    if (need_generator) {
      const Tensor hidden =
          generator_forward(model.generator, forward.memory, encodings[i]->input,
                            model.config.dropout, train_flag, rng);
      probs.push_back(token_distribution(model.generator, hidden));
      targets.push_back(encodings[i]->target);
    }
  }
  BatchLosses out;
  if (need_generator) {
    out.generator = generator_loss(probs, targets, SubwordVocab::kPad);
  }
  if (need_classifier) {
    out.classifier =
        scale(classifier_sum, 1.0 / static_cast<double>(records.size()));
  }
  return out;
}

void write_bytes(std::ostream& out, const void* data, std::size_t size) {
  out.write(static_cast<const char*>(data), static_cast<std::streamsize>(size));
}

void write_u32(std::ostream& out, std::uint32_t v) { write_bytes(out, &v, 4); }
void write_u64(std::ostream& out, std::uint64_t v) { write_bytes(out, &v, 8); }

void write_string(std::ostream& out, const std::string& s) {
  write_u32(out, static_cast<std::uint32_t>(s.size()));
  write_bytes(out, s.data(), s.size());
}

void write_record(std::ostream& out, std::uint8_t kind, const std::string& path,
                  const Shape& shape, const std::vector<double>& data) {
  write_bytes(out, &kind, 1);
  write_string(out, path);
  write_u32(out, static_cast<std::uint32_t>(shape.size()));
  for (std::size_t d : shape) write_u64(out, d);
  write_bytes(out, data.data(), data.size() * sizeof(double));
}

void read_bytes(std::istream& in, void* data, std::size_t size, const char* what) {
  in.read(static_cast<char*>(data), static_cast<std::streamsize>(size));
  if (!in) throw ValidationError(std::string("checkpoint: truncated ") + what);
}

std::uint32_t read_u32(std::istream& in, const char* what) {
  std::uint32_t v = 0;
  read_bytes(in, &v, 4, what);
  return v;
}

std::uint64_t read_u64(std::istream& in, const char* what) {
  std::uint64_t v = 0;
  read_bytes(in, &v, 8, what);
  return v;
}

std::string read_string(std::istream& in, const char* what) {
  const std::uint32_t len = read_u32(in, what);
  std::string s(len, '\0');
  read_bytes(in, s.data(), len, what);
  return s;
}

struct RawRecord {
  std::uint8_t kind = 0;  // 0 parameter, 1 adam m, 2 adam v
  std::string path;
  Shape shape;
  std::vector<double> data;
};

RawRecord read_record(std::istream& in) {
  RawRecord rec;
  read_bytes(in, &rec.kind, 1, "record kind");
  rec.path = read_string(in, "record path");
  const std::uint32_t ndim = read_u32(in, "record rank");
  for (std::uint32_t d = 0; d < ndim; ++d) {
    rec.shape.push_back(static_cast<std::size_t>(read_u64(in, "record dims")));
  }
  rec.data.resize(shape_numel(rec.shape));
  read_bytes(in, rec.data.data(), rec.data.size() * sizeof(double), "record payload");
  return rec;
}

}  // namespace

void TrainConfig::validate() const {
  if (lambda_blend < 0.0 || lambda_blend > 1.0) {
    throw ConfigError("train: lambda " + std::to_string(lambda_blend) +
                      " outside [0,1]");
  }
  if (learning_rate <= 0.0) throw ConfigError("train: learning rate must be positive");
  if (weight_decay < 0.0) throw ConfigError("train: negative weight decay");
  if (batch_size == 0) throw ConfigError("train: batch size must be positive");
}

TrainConfig TrainConfig::paper_preset() {
  TrainConfig config;
  config.lambda_blend = 0.5;
  config.learning_rate = 1e-6;
  config.weight_decay = 1e-4;
  config.batch_size = 8;
  config.epochs = 300;
  return config;
}

std::string TrainConfig::to_json() const {
  nlohmann::ordered_json j;
  j["lambda"] = lambda_blend;
  j["learning_rate"] = learning_rate;
  j["weight_decay"] = weight_decay;
  j["batch_size"] = batch_size;
  j["epochs"] = epochs;
  j["seed"] = seed;
  j["clip_norm"] = clip_norm;
  return j.dump();
}

TrainConfig TrainConfig::from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text, nullptr, false);
  if (j.is_discarded()) throw ValidationError("train config: malformed JSON");
  TrainConfig config;
  config.lambda_blend = j.at("lambda").get<double>();
  config.learning_rate = j.at("learning_rate").get<double>();
  config.weight_decay = j.at("weight_decay").get<double>();
  config.batch_size = j.at("batch_size").get<std::size_t>();
  config.epochs = j.at("epochs").get<std::size_t>();
  config.seed = j.at("seed").get<std::uint64_t>();
  config.clip_norm = j.at("clip_norm").get<double>();
  return config;
}

Tensor total_loss(const Tensor& generator_loss, const Tensor& classifier_loss,
                  double lambda_blend) {
  if (lambda_blend < 0.0 || lambda_blend > 1.0) {
    throw ConfigError("total_loss: lambda " + std::to_string(lambda_blend) +
                      " outside [0,1]");
  }
  if (lambda_blend == 0.0) return classifier_loss;
  if (lambda_blend == 1.0) return generator_loss;
  return add(scale(generator_loss, lambda_blend),
             scale(classifier_loss, 1.0 - lambda_blend));
}

void adamw_step(NamedParams& params, AdamWState& state, double learning_rate,
                double weight_decay) {
  state.step += 1;
  const double bias1 = 1.0 - std::pow(kBeta1, static_cast<double>(state.step));
  const double bias2 = 1.0 - std::pow(kBeta2, static_cast<double>(state.step));
  for (auto& [path, tensor] : params) {
    if (!tensor.has_grad()) continue;
    const auto& grad = tensor.grad();
    for (double g : grad) {
      if (!std::isfinite(g)) {
        throw NumericError("adamw: non-finite gradient at " + path);
      }
    }
    auto& slot = state.slots[path];
    if (slot.m.empty()) {
      slot.m.assign(tensor.size(), 0.0);
      slot.v.assign(tensor.size(), 0.0);
    }
    auto& data = tensor.data();
    for (std::size_t i = 0; i < data.size(); ++i) {
      slot.m[i] = kBeta1 * slot.m[i] + (1.0 - kBeta1) * grad[i];
      slot.v[i] = kBeta2 * slot.v[i] + (1.0 - kBeta2) * grad[i] * grad[i];
      const double m_hat = slot.m[i] / bias1;
      const double v_hat = slot.v[i] / bias2;
      data[i] -= learning_rate * (m_hat / (std::sqrt(v_hat) + kEps) +
                                  weight_decay * data[i]);
    }
  }
}

double clip_gradients(NamedParams& params, double max_norm) {
  double sq_norm = 0.0;
  for (auto& [path, tensor] : params) {
    if (!tensor.has_grad()) continue;
    for (double g : tensor.grad()) sq_norm += g * g;
  }
  const double norm = std::sqrt(sq_norm);
  if (max_norm > 0.0 && norm > max_norm) {
    const double factor = max_norm / norm;
    for (auto& [path, tensor] : params) {
      if (!tensor.has_grad()) continue;
      for (double& g : tensor.grad_ref()) g *= factor;
    }
  }
  return norm;
}

std::string metrics_csv_header() {
  return "epoch,train_loss,val_loss,L_G,L_C,state_acc";
}

std::string metrics_csv_row(const EpochStats& stats) {
  std::ostringstream out;
  out.precision(17);
  out << stats.epoch << "," << stats.train_loss << "," << stats.val_loss << ","
      << stats.generator_loss << "," << stats.classifier_loss << ","
      << stats.state_accuracy;
  return out.str();
}

TrainResult train(IihtModel& model, const Corpus& corpus, const SubwordVocab& vocab,
                  const IndicatorTemplates& templates, const IndicatorVocab& word_vocab,
                  const TrainConfig& config, AdamWState& optimizer, std::ostream* csv) {
  config.validate();
  if (corpus.train.empty()) throw ContractError("train: empty training split");

  std::vector<EncodedReport> train_encodings;
  train_encodings.reserve(corpus.train.size());
  for (const auto& record : corpus.train) {
    train_encodings.push_back(encode_report(vocab, record.report));
  }
  // Validation metrics fall back to the training split when no val records.
  const std::vector<ReportRecord>& val_split =
      corpus.val.empty() ? corpus.train : corpus.val;
  std::vector<EncodedReport> val_encodings;
  val_encodings.reserve(val_split.size());
  for (const auto& record : val_split) {
    val_encodings.push_back(encode_report(vocab, record.report));
  }

  Rng rng(config.seed);
  NamedParams params = model.parameters();
  TrainResult result;
  if (csv) *csv << metrics_csv_header() << "\n";

  std::vector<std::vector<double>> last_good;
  auto snapshot = [&params, &last_good]() {
    last_good.clear();
    for (auto& [path, tensor] : params) last_good.push_back(tensor.data());
  };
  auto rollback = [&params, &last_good]() {
    if (last_good.empty()) return;
    for (std::size_t i = 0; i < params.size(); ++i) {
      params[i].second.data() = last_good[i];
    }
  };
  snapshot();

  std::vector<std::size_t> order(corpus.train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[rng.below(i)]);
    }
    double epoch_total = 0.0, epoch_g = 0.0, epoch_c = 0.0;
    std::size_t seen = 0;
    bool finite = true;
    for (std::size_t start = 0; start < order.size() && finite;
         start += config.batch_size) {
      const std::size_t stop = std::min(order.size(), start + config.batch_size);
      std::vector<const ReportRecord*> records;
      std::vector<const EncodedReport*> encodings;
      for (std::size_t i = start; i < stop; ++i) {
        records.push_back(&corpus.train[order[i]]);
        encodings.push_back(&train_encodings[order[i]]);
      }
      model.zero_grads();
      try {
        const BatchLosses losses =
            batch_losses(model, records, encodings, templates, word_vocab,
                         config.lambda_blend, /*train_flag=*/true, rng);
        const Tensor loss =
            total_loss(losses.generator, losses.classifier, config.lambda_blend);
        if (!std::isfinite(loss.value())) {
          finite = false;
          break;
        }
        backward(loss);
        clip_gradients(params, config.clip_norm);
        adamw_step(params, optimizer, config.learning_rate, config.weight_decay);
        result.steps += 1;
        const double l = static_cast<double>(records.size());
        epoch_total += loss.value() * l;
        if (losses.generator.defined()) epoch_g += losses.generator.value() * l;
        if (losses.classifier.defined()) epoch_c += losses.classifier.value() * l;
        seen += records.size();
      } catch (const NumericError&) {
        finite = false;
      }
    }
    if (!finite) {
      rollback();
      result.diverged = true;
      break;
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.train_loss = epoch_total / static_cast<double>(seen);
    stats.generator_loss = epoch_g / static_cast<double>(seen);
    stats.classifier_loss = epoch_c / static_cast<double>(seen);
    {
      NoGradGuard no_grad;
      std::vector<const ReportRecord*> records;
      std::vector<const EncodedReport*> encodings;
      for (std::size_t i = 0; i < val_split.size(); ++i) {
        records.push_back(&val_split[i]);
        encodings.push_back(&val_encodings[i]);
      }
      const BatchLosses losses =
          batch_losses(model, records, encodings, templates, word_vocab,
                       config.lambda_blend, /*train_flag=*/false, rng);
      stats.val_loss =
          total_loss(losses.generator, losses.classifier, config.lambda_blend).value();
    }
    stats.state_accuracy = classifier_accuracy(model, val_split);
    result.log.push_back(stats);
    if (csv) *csv << metrics_csv_row(stats) << "\n";
    snapshot();
  }
  return result;
}

double token_accuracy(const IihtModel& model, const std::vector<ReportRecord>& records,
                      const SubwordVocab& vocab, const IndicatorTemplates& templates,
                      const IndicatorVocab& word_vocab) {
  NoGradGuard no_grad;
  Rng unused(0);
  std::size_t correct = 0, total = 0;
  for (const auto& record : records) {
    const EncodedReport encoded = encode_report(vocab, record.report);
    const PipelineForward forward =
        pipeline_forward(model, record, templates, word_vocab, Phase::kTrain);
    const Tensor hidden = generator_forward(model.generator, forward.memory,
                                            encoded.input, 0.0, false, unused);
    const Tensor probs = token_distribution(model.generator, hidden);
    const std::size_t vocab_size = probs.shape()[1];
    for (std::size_t j = 0; j < encoded.target.size(); ++j) {
      std::size_t best = 0;
      for (std::size_t t = 1; t < vocab_size; ++t) {
        if (probs.at(j, t) > probs.at(j, best)) best = t;
      }
      correct += best == encoded.target[j] ? 1 : 0;
      total += 1;
    }
  }
  return total == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(total);
}

double classifier_accuracy(const IihtModel& model,
                           const std::vector<ReportRecord>& records) {
  NoGradGuard no_grad;
  std::size_t correct = 0, total = 0;
  for (const auto& record : records) {
    const Tensor x = extract_features(model.encoder, record);
    const Tensor d = indicator_embeddings(model.classifier, x);
    const Tensor alpha = state_attention(model.classifier, d).alpha;
    for (std::size_t t = 0; t < model.config.indicators; ++t) {
      std::size_t best = 0;
      for (std::size_t m = 1; m < model.config.states; ++m) {
        if (alpha.at(t, m) > alpha.at(t, best)) best = m;
      }
      correct += best == record.state_of(t) ? 1 : 0;
      total += 1;
    }
  }
  return total == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(total);
}

void save_checkpoint(const std::string& path, IihtModel& model,
                     const AdamWState& optimizer, const TrainConfig& config,
                     const Rng& rng) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint: " + path);
  write_bytes(out, kMagic, 4);
  write_u32(out, kVersion);
  write_u64(out, optimizer.step);
  for (std::uint64_t word : rng.state()) write_u64(out, word);

  nlohmann::ordered_json snapshot;
  snapshot["model"] = nlohmann::ordered_json::parse(model.config.to_json());
  snapshot["train"] = nlohmann::ordered_json::parse(config.to_json());
  write_string(out, snapshot.dump());

  NamedParams params = model.parameters();
  std::uint32_t count = 0;
  for (auto& [p, t] : params) {
    count += 1;
    if (optimizer.slots.count(p)) count += 2;
  }
  write_u32(out, count);
  for (auto& [p, t] : params) {
    write_record(out, 0, p, t.shape(), t.data());
    auto it = optimizer.slots.find(p);
    if (it != optimizer.slots.end()) {
      write_record(out, 1, p, t.shape(), it->second.m);
      write_record(out, 2, p, t.shape(), it->second.v);
    }
  }
  if (!out) throw IoError("failed while writing checkpoint: " + path);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path);
  char magic[4];
  read_bytes(in, magic, 4, "magic");
  if (std::memcmp(magic, kMagic, 4) != 0) {
    throw ValidationError("checkpoint: bad magic in " + path);
  }
  const std::uint32_t version = read_u32(in, "version");
  if (version != kVersion) {
    throw ValidationError("checkpoint: unsupported version " + std::to_string(version));
  }
  LoadedCheckpoint loaded;
  loaded.optimizer.step = read_u64(in, "step");
  std::array<std::uint64_t, 4> rng_state{};
  for (auto& word : rng_state) word = read_u64(in, "rng state");
  loaded.rng.set_state(rng_state);

  const std::string snapshot_text = read_string(in, "config snapshot");
  const auto snapshot = nlohmann::json::parse(snapshot_text, nullptr, false);
  if (snapshot.is_discarded()) throw ValidationError("checkpoint: malformed config");
  const ModelConfig model_config = ModelConfig::from_json(snapshot.at("model").dump());
  loaded.config = TrainConfig::from_json(snapshot.at("train").dump());

  Rng init_rng(0);
  loaded.model = IihtModel::init(model_config, init_rng);

  NamedParams params = loaded.model.parameters();
  std::map<std::string, Tensor*> by_path;
  for (auto& [p, t] : params) by_path[p] = &t;
  std::map<std::string, bool> filled;

  const std::uint32_t count = read_u32(in, "record count");
  for (std::uint32_t i = 0; i < count; ++i) {
    RawRecord rec = read_record(in);
    auto it = by_path.find(rec.path);
    if (it == by_path.end()) {
      throw ValidationError("checkpoint: unknown tensor path " + rec.path);
    }
    if (rec.kind == 0) {
      if (it->second->shape() != rec.shape) {
        throw ValidationError("checkpoint: tensor " + rec.path + " has shape " +
                              shape_to_string(rec.shape) + ", model expects " +
                              shape_to_string(it->second->shape()));
      }
      it->second->data() = std::move(rec.data);
      filled[rec.path] = true;
    } else if (rec.kind == 1) {
      loaded.optimizer.slots[rec.path].m = std::move(rec.data);
    } else if (rec.kind == 2) {
      loaded.optimizer.slots[rec.path].v = std::move(rec.data);
    } else {
      throw ValidationError("checkpoint: unknown record kind " +
                            std::to_string(rec.kind));
    }
  }
  for (auto& [p, t] : params) {
    if (!filled.count(p)) {
      throw ValidationError("checkpoint: missing tensor " + p);
    }
  }
  return loaded;
}

std::string describe_checkpoint(const std::string& path) {
  LoadedCheckpoint loaded = load_checkpoint(path);
  std::ostringstream out;
  out << "checkpoint: " << path << "\n";
  out << "step: " << loaded.optimizer.step << "\n";
  out << "model config: " << loaded.model.config.to_json() << "\n";
  out << "train config: " << loaded.config.to_json() << "\n";
  std::size_t total = 0;
  for (auto& [p, t] : loaded.model.parameters()) {
    out << "  " << p << " " << shape_to_string(t.shape()) << "\n";
    total += t.size();
  }
  out << "total parameters: " << total << "\n";
  return out.str();
}

}  // namespace iiht
