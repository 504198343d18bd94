#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "iiht/decoding.hpp"
#include "iiht/gradcheck.hpp"
#include "iiht/metrics.hpp"
#include "iiht/model.hpp"
#include "iiht/training.hpp"

namespace {

namespace fs = std::filesystem;
using namespace iiht;

std::uint64_t default_seed() {
  if (const char* env = std::getenv("IIHT_SEED")) {
    return std::strtoull(env, nullptr, 10);
  }
  return 0;
}

IndicatorTemplates resolve_templates(const std::string& path) {
  return path.empty() ? default_templates() : load_templates(path);
}

std::map<std::size_t, std::size_t> parse_overrides(
    const std::vector<std::string>& specs, const IndicatorTemplates& templates) {
  std::map<std::size_t, std::size_t> overrides;
  for (const std::string& spec : specs) {
    const std::size_t eq = spec.find('=');
    if (eq == std::string::npos || eq == 0 || eq + 1 >= spec.size()) {
      throw ContractError("--set expects indicator=state, got \"" + spec + "\"");
    }
    std::string name = spec.substr(0, eq);
    for (char& c : name) {
      if (c == '_') c = ' ';
    }
    const std::string state = spec.substr(eq + 1);
    overrides[templates.indicator_id(name)] = templates.state_id(state);
  }
  return overrides;
}

struct TrainArtifacts {
  IihtModel model;
  SubwordVocab vocab;
  IndicatorTemplates templates = default_templates();
  IndicatorVocab word_vocab;
};

TrainArtifacts load_artifacts(const std::string& checkpoint_path,
                              const std::string& vocab_path,
                              const std::string& merges_path,
                              const std::string& templates_path) {
  TrainArtifacts artifacts;
  LoadedCheckpoint loaded = load_checkpoint(checkpoint_path);
  artifacts.model = std::move(loaded.model);
  artifacts.vocab = load_vocab(vocab_path, merges_path);
  artifacts.templates = resolve_templates(templates_path);
  artifacts.word_vocab = build_indicator_vocab(artifacts.templates.all_phrases());
  if (artifacts.vocab.size() != artifacts.model.config.vocab_size) {
    throw ValidationError("vocabulary has " + std::to_string(artifacts.vocab.size()) +
                          " tokens but the checkpoint expects " +
                          std::to_string(artifacts.model.config.vocab_size));
  }
  return artifacts;
}

std::string sibling(const std::string& base, const std::string& suffix) {
  return base + suffix;
}

int run_synth_data(const std::string& out_dir, CorpusSpec& spec,
                   const std::string& templates_path) {
  const IndicatorTemplates templates = resolve_templates(templates_path);
  spec.indicators = templates.indicator_count();
  spec.states = templates.state_count();
  const Corpus corpus = generate(spec, templates);
  fs::create_directories(out_dir);
  save_jsonl(corpus.train, (fs::path(out_dir) / "train.jsonl").string());
  save_jsonl(corpus.val, (fs::path(out_dir) / "val.jsonl").string());
  save_jsonl(corpus.test, (fs::path(out_dir) / "test.jsonl").string());
  save_templates(templates, (fs::path(out_dir) / "templates.txt").string());
  std::cout << "wrote " << corpus.train.size() << "/" << corpus.val.size() << "/"
            << corpus.test.size() << " records to " << out_dir << "\n";
  return 0;
}

int run_train(const std::string& corpus_dir, const std::string& checkpoint_path,
              const std::string& vocab_path, const std::string& merges_path,
              const std::string& templates_path, const std::string& log_path,
              ModelConfig& model_config, TrainConfig& train_config,
              std::size_t bpe_size) {
  Corpus corpus;
  corpus.train = load_jsonl((fs::path(corpus_dir) / "train.jsonl").string());
  const fs::path val_path = fs::path(corpus_dir) / "val.jsonl";
  if (fs::exists(val_path)) corpus.val = load_jsonl(val_path.string());
  if (corpus.train.empty()) {
    throw ValidationError("training split in " + corpus_dir + " is empty");
  }

  std::string templates_file = templates_path;
  if (templates_file.empty()) {
    const fs::path candidate = fs::path(corpus_dir) / "templates.txt";
    if (fs::exists(candidate)) templates_file = candidate.string();
  }
  const IndicatorTemplates templates = resolve_templates(templates_file);
  const IndicatorVocab word_vocab = build_indicator_vocab(templates.all_phrases());

  std::vector<std::string> reports;
  for (const auto& record : corpus.train) reports.push_back(record.report);
  const SubwordVocab vocab = train_bpe(reports, bpe_size);
  if (vocab.reached_fixpoint) {
    std::cerr << "note: BPE reached fixpoint at " << vocab.size()
              << " tokens (target " << bpe_size << ")\n";
  }

  const ReportRecord& first = corpus.train.front();
  model_config.indicators = templates.indicator_count();
  model_config.states = templates.state_count();
  model_config.vocab_size = vocab.size();
  model_config.word_vocab_size = word_vocab.size();
  model_config.passthrough_features = !first.has_images();
  if (model_config.passthrough_features) {
    model_config.feature_dim = first.features.size();
  } else {
    model_config.image_h = first.image_h;
    model_config.image_w = first.image_w;
  }

  Rng init_rng(train_config.seed);
  IihtModel model = IihtModel::init(model_config, init_rng);
  AdamWState optimizer;

  std::ofstream csv;
  if (!log_path.empty()) {
    csv.open(log_path);
    if (!csv) throw IoError("cannot write metrics log: " + log_path);
  }
  const TrainResult result =
      train(model, corpus, vocab, templates, word_vocab, train_config, optimizer,
            log_path.empty() ? nullptr : &csv);

  Rng train_rng(train_config.seed);
  save_checkpoint(checkpoint_path, model, optimizer, train_config, train_rng);
  save_vocab(vocab, vocab_path, merges_path);
  // Keep a copy next to the checkpoint so generate/evaluate find it by default.
  save_templates(templates, sibling(checkpoint_path, ".templates.txt"));

  if (result.diverged) {
    std::cerr << "training diverged; checkpoint holds the last finite epoch\n";
    return 2;
  }
  if (!result.log.empty()) {
    const EpochStats& last = result.log.back();
    std::cout << "trained " << result.steps << " steps; final train loss "
              << last.train_loss << ", val loss " << last.val_loss
              << ", state accuracy " << last.state_accuracy << "\n";
  }
  std::cout << "checkpoint: " << checkpoint_path << "\n";
  return 0;
}

int run_generate(const std::string& checkpoint_path, const std::string& vocab_path,
                 const std::string& merges_path, const std::string& templates_path,
                 const std::string& corpus_path, const std::string& record_id,
                 const std::vector<std::string>& set_specs, std::size_t beam_width,
                 std::size_t max_len, bool hard_states, bool length_normalize,
                 const std::string& out_path) {
  TrainArtifacts artifacts =
      load_artifacts(checkpoint_path, vocab_path, merges_path, templates_path);
  const auto records = load_jsonl(corpus_path);
  if (records.empty()) throw ValidationError("no records in " + corpus_path);
  const ReportRecord* record = &records.front();
  if (!record_id.empty()) {
    record = nullptr;
    for (const auto& candidate : records) {
      if (candidate.id == record_id) {
        record = &candidate;
        break;
      }
    }
    if (!record) {
      throw ValidationError("record id \"" + record_id + "\" not found in " +
                            corpus_path);
    }
  }

  const auto overrides = parse_overrides(set_specs, artifacts.templates);
  DecodeOptions options =
      beam_width > 1 ? DecodeOptions::beam(beam_width, max_len)
                     : DecodeOptions::greedy(max_len);
  options.hard_states = hard_states;
  options.length_normalize = length_normalize;
  const GenerationResult result =
      generate(artifacts.model, *record, artifacts.vocab, artifacts.templates,
               artifacts.word_vocab, overrides, options);

  std::cout << "record: " << record->id << "\n";
  std::cout << "report: " << result.text << "\n";
  std::cout << "log-probability: " << result.log_prob << "\n";
  std::cout << "indicator states (alpha):\n";
  for (std::size_t t = 0; t < result.alpha.size(); ++t) {
    std::cout << "  " << artifacts.templates.indicator_name(t) << ":";
    std::size_t best = 0;
    for (std::size_t m = 0; m < result.alpha[t].size(); ++m) {
      if (result.alpha[t][m] > result.alpha[t][best]) best = m;
      std::cout << " " << artifacts.templates.state_name(m) << "="
                << result.alpha[t][m];
    }
    std::cout << " -> " << artifacts.templates.state_name(best);
    if (result.applied_overrides.count(t)) {
      std::cout << " (override: "
                << artifacts.templates.state_name(result.applied_overrides.at(t))
                << ")";
    }
    std::cout << "\n";
  }
  if (!out_path.empty()) {
    std::ofstream out(out_path);
    if (!out) throw IoError("cannot write output: " + out_path);
    out << result.text << "\n";
  }
  return 0;
}

int run_evaluate(const std::string& checkpoint_path, const std::string& vocab_path,
                 const std::string& merges_path, const std::string& templates_path,
                 const std::string& corpus_path, std::size_t max_len,
                 const std::string& out_path) {
  TrainArtifacts artifacts =
      load_artifacts(checkpoint_path, vocab_path, merges_path, templates_path);
  const auto records = load_jsonl(corpus_path);
  const EvalReport report =
      run_evaluation(artifacts.model, records, artifacts.vocab, artifacts.templates,
                     artifacts.word_vocab, max_len);
  const std::string json = report.to_json();
  std::cout << json << "\n";
  if (!out_path.empty()) {
    std::ofstream out(out_path);
    if (!out) throw IoError("cannot write evaluation report: " + out_path);
    out << json << "\n";
  }
  return 0;
}

int run_gradcheck(std::uint64_t seed, std::size_t instances, double tol) {
  const auto reports = run_gradcheck_suite(seed, instances, tol);
  for (const auto& report : reports) {
    std::cout << (report.passed ? "[pass] " : "[FAIL] ") << report.name << ": "
              << report.instances << " instances, " << report.entries
              << " entries, max relative error " << report.max_rel_err << "\n";
  }
  return gradcheck_all_passed(reports) ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"image-to-indicator hierarchical report generation pipeline"};
  app.require_subcommand(1);

  // synth-data
  auto* synth = app.add_subcommand("synth-data", "generate a synthetic corpus");
  std::string synth_out = "data";
  std::string synth_templates;
  CorpusSpec spec;
  spec.seed = default_seed();
  synth->add_option("--out", synth_out, "output directory");
  synth->add_option("--seed", spec.seed, "corpus seed");
  synth->add_option("--train", spec.n_train, "training records");
  synth->add_option("--val", spec.n_val, "validation records");
  synth->add_option("--test", spec.n_test, "test records");
  synth->add_option("--noise", spec.noise_sigma, "pixel noise sigma");
  synth->add_option("--views", spec.views, "images per record");
  synth->add_option("--cell-h", spec.cell_h, "cell height in pixels");
  synth->add_option("--cell-w", spec.cell_w, "cell width in pixels");
  synth->add_option("--templates", synth_templates, "templates file");

  // train
  auto* train_cmd = app.add_subcommand("train", "train on a corpus directory");
  std::string train_corpus = "data";
  std::string train_checkpoint = "model.iiht";
  std::string train_vocab, train_merges, train_templates, train_log;
  ModelConfig model_config;
  TrainConfig train_config;
  train_config.seed = default_seed();
  std::size_t bpe_size = 512;
  bool preset_paper = false;
  train_cmd->add_option("--corpus", train_corpus, "corpus directory");
  train_cmd->add_option("--checkpoint", train_checkpoint, "checkpoint output path");
  train_cmd->add_option("--vocab", train_vocab, "vocabulary output path");
  train_cmd->add_option("--merges", train_merges, "merges output path");
  train_cmd->add_option("--templates", train_templates, "templates file");
  train_cmd->add_option("--log", train_log, "metrics CSV path");
  auto* opt_lambda =
      train_cmd->add_option("--lambda", train_config.lambda_blend, "loss blend weight");
  auto* opt_lr =
      train_cmd->add_option("--lr", train_config.learning_rate, "learning rate");
  auto* opt_wd =
      train_cmd->add_option("--wd", train_config.weight_decay, "weight decay");
  auto* opt_batch = train_cmd->add_option("--batch", train_config.batch_size, "batch size");
  auto* opt_epochs = train_cmd->add_option("--epochs", train_config.epochs, "epochs");
  train_cmd->add_option("--seed", train_config.seed, "training seed");
  train_cmd->add_option("--clip", train_config.clip_norm, "gradient clip norm");
  auto* opt_hidden =
      train_cmd->add_option("--hidden", model_config.embed_dim, "hidden dimension e");
  train_cmd->add_option("--heads", model_config.heads, "attention heads");
  train_cmd->add_option("--layers", model_config.layers, "transformer layers");
  train_cmd->add_option("--dropout", model_config.dropout, "sublayer dropout");
  train_cmd->add_option("--features", model_config.feature_dim,
                        "visual feature dimension (tiny-conv mode)");
  train_cmd->add_option("--bpe-size", bpe_size, "subword vocabulary target size");
  train_cmd->add_flag("--preset-paper", preset_paper,
                      "published hyperparameters (e=512, lr=1e-6, wd=1e-4, batch 8, "
                      "300 epochs, lambda 0.5)");

  // generate
  auto* gen = app.add_subcommand("generate", "decode a report for one record");
  std::string gen_checkpoint = "model.iiht";
  std::string gen_vocab, gen_merges, gen_templates, gen_corpus, gen_id, gen_out;
  std::vector<std::string> gen_sets;
  std::size_t gen_beam = 1, gen_max_len = 128;
  bool gen_hard = false, gen_norm = false;
  gen->add_option("--checkpoint", gen_checkpoint, "checkpoint path");
  gen->add_option("--vocab", gen_vocab, "vocabulary path");
  gen->add_option("--merges", gen_merges, "merges path");
  gen->add_option("--templates", gen_templates, "templates file");
  gen->add_option("--corpus", gen_corpus, "records file (JSONL)")->required();
  gen->add_option("--id", gen_id, "record id (default: first record)");
  gen->add_option("--set", gen_sets,
                  "indicator=state override, repeatable (underscores for spaces)");
  gen->add_option("--beam", gen_beam, "beam width (1 = greedy)");
  gen->add_option("--max-len", gen_max_len, "maximum emitted tokens");
  gen->add_flag("--hard-states", gen_hard, "re-one-hot predicted states");
  gen->add_flag("--length-normalize", gen_norm, "normalize beam scores by length");
  gen->add_option("--out", gen_out, "write the report text to a file");

  // evaluate
  auto* eval = app.add_subcommand("evaluate", "score generations against references");
  std::string eval_checkpoint = "model.iiht";
  std::string eval_vocab, eval_merges, eval_templates, eval_corpus, eval_out;
  std::size_t eval_max_len = 128;
  eval->add_option("--checkpoint", eval_checkpoint, "checkpoint path");
  eval->add_option("--vocab", eval_vocab, "vocabulary path");
  eval->add_option("--merges", eval_merges, "merges path");
  eval->add_option("--templates", eval_templates, "templates file");
  eval->add_option("--corpus", eval_corpus, "records file (JSONL)")->required();
  eval->add_option("--max-len", eval_max_len, "maximum emitted tokens");
  eval->add_option("--out", eval_out, "write the JSON report to a file");

  // gradcheck
  auto* grad = app.add_subcommand("gradcheck", "finite-difference gradient suite");
  std::uint64_t grad_seed = default_seed();
  std::size_t grad_instances = 100;
  double grad_tol = 1e-4;
  grad->add_option("--seed", grad_seed, "suite seed");
  grad->add_option("--instances", grad_instances, "instances per case");
  grad->add_option("--tol", grad_tol, "relative error tolerance");

  // inspect
  auto* inspect = app.add_subcommand("inspect", "summarize a checkpoint");
  std::string inspect_checkpoint;
  inspect->add_option("--checkpoint", inspect_checkpoint, "checkpoint path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*synth) return run_synth_data(synth_out, spec, synth_templates);
    if (*train_cmd) {
      if (preset_paper) {
        const TrainConfig preset = TrainConfig::paper_preset();
        if (!*opt_lambda) train_config.lambda_blend = preset.lambda_blend;
        if (!*opt_lr) train_config.learning_rate = preset.learning_rate;
        if (!*opt_wd) train_config.weight_decay = preset.weight_decay;
        if (!*opt_batch) train_config.batch_size = preset.batch_size;
        if (!*opt_epochs) train_config.epochs = preset.epochs;
        if (!*opt_hidden) model_config.embed_dim = 512;
      }
      if (train_vocab.empty()) train_vocab = train_checkpoint + ".vocab.txt";
      if (train_merges.empty()) train_merges = train_checkpoint + ".merges.txt";
      return run_train(train_corpus, train_checkpoint, train_vocab, train_merges,
                       train_templates, train_log, model_config, train_config,
                       bpe_size);
    }
    if (*gen) {
      if (gen_vocab.empty()) gen_vocab = gen_checkpoint + ".vocab.txt";
      if (gen_merges.empty()) gen_merges = gen_checkpoint + ".merges.txt";
      if (gen_templates.empty()) {
        const std::string candidate = gen_checkpoint + ".templates.txt";
        if (fs::exists(candidate)) gen_templates = candidate;
      }
      return run_generate(gen_checkpoint, gen_vocab, gen_merges, gen_templates,
                          gen_corpus, gen_id, gen_sets, gen_beam, gen_max_len,
                          gen_hard, gen_norm, gen_out);
    }
    if (*eval) {
      if (eval_vocab.empty()) eval_vocab = eval_checkpoint + ".vocab.txt";
      if (eval_merges.empty()) eval_merges = eval_checkpoint + ".merges.txt";
      if (eval_templates.empty()) {
        const std::string candidate = eval_checkpoint + ".templates.txt";
        if (fs::exists(candidate)) eval_templates = candidate;
      }
      return run_evaluate(eval_checkpoint, eval_vocab, eval_merges, eval_templates,
                          eval_corpus, eval_max_len, eval_out);
    }
    if (*grad) return run_gradcheck(grad_seed, grad_instances, grad_tol);
    if (*inspect) {
      std::cout << describe_checkpoint(inspect_checkpoint);
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
