#include "iiht/gradcheck.hpp"

#include <functional>

#include "iiht/classifier.hpp"
#include "iiht/corpus.hpp"
#include "iiht/generator.hpp"
#include "iiht/model.hpp"
#include "iiht/ops.hpp"
#include "iiht/training.hpp"

namespace iiht {

namespace {

struct CaseInstance {
  std::vector<Tensor> leaves;
  std::function<Tensor()> build;
};

using CaseBuilder = std::function<CaseInstance(std::uint64_t)>;

Tensor leaf(const Shape& shape, Rng& rng, double stddev = 1.0) {
  return Tensor::randn(shape, rng, stddev, /*requires_grad=*/true);
}

// Random readout weights turn any op output into a scalar loss; a plain sum
// would miss index permutation bugs.
std::function<Tensor()> readout(Rng& rng, std::function<Tensor()> forward) {
  auto probe = std::make_shared<Tensor>();
  return [probe, forward = std::move(forward), seed = rng.next()]() {
    Tensor out = forward();
    if (!probe->defined()) {
      Rng probe_rng(seed);
      *probe = Tensor::randn(out.shape(), probe_rng);
    }
    return sum_all(mul(out, *probe));
  };
}

// Keeps sampled values away from a kink so central differences stay valid.
Tensor leaf_with_margin(const Shape& shape, Rng& rng, double margin) {
  std::vector<double> data(shape_numel(shape));
  for (auto& v : data) {
    const double sign = rng.uniform01() < 0.5 ? -1.0 : 1.0;
    v = sign * rng.uniform(margin, margin + 1.0);
  }
  return Tensor::from_data(shape, std::move(data), true);
}

CaseInstance binary_case(std::uint64_t seed, const Shape& a_shape, const Shape& b_shape,
                         Tensor (*op)(const Tensor&, const Tensor&)) {
  Rng rng(seed);
  CaseInstance instance;
  instance.leaves = {leaf(a_shape, rng), leaf(b_shape, rng)};
  auto a = instance.leaves[0];
  auto b = instance.leaves[1];
  instance.build = readout(rng, [a, b, op]() { return op(a, b); });
  return instance;
}

CaseInstance unary_case(std::uint64_t seed, const Shape& shape,
                        std::function<Tensor(const Tensor&)> op, double margin = 0.0) {
  Rng rng(seed);
  CaseInstance instance;
  instance.leaves = {margin > 0.0 ? leaf_with_margin(shape, rng, margin)
                                  : leaf(shape, rng)};
  auto a = instance.leaves[0];
  instance.build = readout(rng, [a, op = std::move(op)]() { return op(a); });
  return instance;
}

CaseInstance positive_unary_case(std::uint64_t seed, const Shape& shape,
                                 std::function<Tensor(const Tensor&)> op) {
  Rng rng(seed);
  std::vector<double> data(shape_numel(shape));
  for (auto& v : data) v = rng.uniform(0.2, 2.0);
  CaseInstance instance;
  instance.leaves = {Tensor::from_data(shape, std::move(data), true)};
  auto a = instance.leaves[0];
  instance.build = readout(rng, [a, op = std::move(op)]() { return op(a); });
  return instance;
}

ReportRecord random_image_record(Rng& rng, std::size_t h, std::size_t w,
                                 std::size_t indicators, std::size_t states) {
  ReportRecord record;
  record.id = "gradcheck";
  record.image_h = h;
  record.image_w = w;
  std::vector<double> pixels(h * w);
  for (auto& p : pixels) p = rng.uniform01();
  record.images.push_back(std::move(pixels));
  for (std::size_t t = 0; t < indicators; ++t) {
    std::vector<int> row(states, 0);
    row[rng.below(states)] = 1;
    record.labels.push_back(std::move(row));
  }
  record.report = "gradcheck";
  return record;
}

// Eq-style classification loss through the tiny conv encoder, the indicator
// projections and the state attention.
CaseInstance classification_loss_case(std::uint64_t seed) {
  Rng rng(seed);
  const std::size_t indicators = 3, states = 3, feature_dim = 4, embed_dim = 4;
  auto encoder = std::make_shared<VisualEncoder>(
      VisualEncoder::tiny_conv(feature_dim, 3, 4, rng));
  auto params = std::make_shared<ClassifierParams>(
      ClassifierParams::init(indicators, states, feature_dim, embed_dim, rng));
  auto record = std::make_shared<ReportRecord>(random_image_record(rng, 3, 4,
                                                                   indicators, states));
  CaseInstance instance;
  instance.leaves = {encoder->conv1_w, encoder->conv1_b, encoder->conv2_w,
                     encoder->conv2_b, encoder->proj_w, encoder->proj_b};
  for (std::size_t t = 0; t < indicators; ++t) {
    instance.leaves.push_back(params->w[t]);
    instance.leaves.push_back(params->b[t]);
  }
  instance.leaves.push_back(params->s);
  instance.build = [encoder, params, record]() {
    const Tensor x = extract_features(*encoder, *record);
    const Tensor d = indicator_embeddings(*params, x);
    const Tensor alpha = state_attention(*params, d).alpha;
    return multilabel_loss(alpha, labels_tensor(record->labels));
  };
  return instance;
}

// Eq-style generation loss through the masked attention stack, with dropout
// active under a per-instance fixed mask seed.
CaseInstance generation_loss_case(std::uint64_t seed) {
  Rng rng(seed);
  const std::size_t embed_dim = 8, heads = 2, layers = 1, vocab = 12,
                    feature_dim = 4, memory_rows = 3;
  auto params = std::make_shared<GeneratorParams>(GeneratorParams::init(
      embed_dim, heads, layers, vocab, feature_dim, memory_rows, rng));
  auto memory = std::make_shared<Tensor>(leaf({memory_rows, embed_dim}, rng, 0.5));
  auto tokens = std::make_shared<std::vector<std::size_t>>();
  auto targets = std::make_shared<std::vector<std::vector<std::size_t>>>(1);
  tokens->push_back(1);  // <bos>
  for (std::size_t i = 0; i < 3; ++i) {
    tokens->push_back(4 + rng.below(vocab - 4));
    (*targets)[0].push_back(4 + rng.below(vocab - 4));
  }
  (*targets)[0].push_back(2);  // <eos>
  const std::uint64_t mask_seed = rng.next();

  CaseInstance instance;
  instance.leaves.push_back(*memory);
  instance.leaves.push_back(params->token_embedding);
  instance.leaves.push_back(params->adapter_w);
  instance.leaves.push_back(params->adapter_b);
  instance.leaves.push_back(params->seg_visual);
  instance.leaves.push_back(params->seg_indicator);
  for (auto& block : params->blocks) {
    for (Tensor* t : {&block.wq, &block.bq, &block.wk, &block.bk, &block.wv, &block.bv,
                      &block.wo, &block.bo, &block.ln1_gain, &block.ln1_bias,
                      &block.ff1_w, &block.ff1_b, &block.ff2_w, &block.ff2_b,
                      &block.ln2_gain, &block.ln2_bias}) {
      instance.leaves.push_back(*t);
    }
  }
  instance.leaves.push_back(params->final_ln_gain);
  instance.leaves.push_back(params->final_ln_bias);
  instance.leaves.push_back(params->output_w);

  instance.build = [params, memory, tokens, targets, mask_seed]() {
    Rng dropout_rng(mask_seed);
    const Tensor hidden =
        generator_forward(*params, *memory, *tokens, 0.1, true, dropout_rng);
    const Tensor probs = token_distribution(*params, hidden);
    return generator_loss({probs}, *targets, SubwordVocab::kPad);
  };
  return instance;
}

struct BlendedWorld {
  IndicatorTemplates templates = IndicatorTemplates({"pneumonia", "fracture"},
                                                    {"uncertain", "negative",
                                                     "positive"});
  IndicatorVocab word_vocab;
  SubwordVocab vocab;

  BlendedWorld() {
    word_vocab = build_indicator_vocab(templates.all_phrases());
    std::vector<std::string> corpus;
    for (std::size_t t = 0; t < templates.indicator_count(); ++t) {
      for (std::size_t m = 0; m < templates.state_count(); ++m) {
        corpus.push_back(templates.sentence(t, m));
      }
    }
    vocab = train_bpe(corpus, 48);
  }
};

// The full blended objective end to end on a passthrough-feature record.
CaseInstance blended_loss_case(std::uint64_t seed, const BlendedWorld& world) {
  Rng rng(seed);
  ModelConfig config;
  config.indicators = world.templates.indicator_count();
  config.states = world.templates.state_count();
  config.feature_dim = 6;
  config.embed_dim = 4;
  config.heads = 2;
  config.layers = 1;
  config.vocab_size = world.vocab.size();
  config.word_vocab_size = world.word_vocab.size();
  config.passthrough_features = true;
  config.dropout = 0.1;
  auto model = std::make_shared<IihtModel>(IihtModel::init(config, rng));

  auto record = std::make_shared<ReportRecord>();
  record->id = "gradcheck";
  for (std::size_t f = 0; f < config.feature_dim; ++f) {
    record->features.push_back(rng.uniform01());
  }
  std::string report;
  for (std::size_t t = 0; t < config.indicators; ++t) {
    std::vector<int> row(config.states, 0);
    const std::size_t m = rng.below(config.states);
    row[m] = 1;
    record->labels.push_back(std::move(row));
    if (t) report += ' ';
    report += world.templates.sentence(t, m);
  }
  record->report = std::move(report);

  auto encoded = std::make_shared<std::vector<std::size_t>>();
  encoded->push_back(SubwordVocab::kBos);
  for (std::size_t id : encode(world.vocab, record->report)) encoded->push_back(id);
  auto targets = std::make_shared<std::vector<std::vector<std::size_t>>>(1);
  (*targets)[0].assign(encoded->begin() + 1, encoded->end());
  (*targets)[0].push_back(SubwordVocab::kEos);
  const std::uint64_t mask_seed = rng.next();

  CaseInstance instance;
  for (auto& [path, tensor] : model->parameters()) instance.leaves.push_back(tensor);
  const BlendedWorld* world_ptr = &world;
  instance.build = [model, record, encoded, targets, mask_seed, world_ptr]() {
    Rng dropout_rng(mask_seed);
    const PipelineForward forward = pipeline_forward(
        *model, *record, world_ptr->templates, world_ptr->word_vocab, Phase::kTrain);
    const Tensor l_c = multilabel_loss(forward.alpha, labels_tensor(record->labels));
    const Tensor hidden = generator_forward(model->generator, forward.memory, *encoded,
                                            model->config.dropout, true, dropout_rng);
    const Tensor probs = token_distribution(model->generator, hidden);
    const Tensor l_g = generator_loss({probs}, *targets, SubwordVocab::kPad);
    return total_loss(l_g, l_c, 0.5);
  };
  return instance;
}

}  // namespace

std::vector<GradCheckReport> run_gradcheck_suite(std::uint64_t seed,
                                                 std::size_t instances_per_case,
                                                 double tol) {
  std::vector<std::pair<std::string, CaseBuilder>> cases;

  cases.emplace_back("add", [](std::uint64_t s) {
    return binary_case(s, {2, 3}, {3}, &add);
  });
  cases.emplace_back("sub", [](std::uint64_t s) {
    return binary_case(s, {2, 2}, {2, 2}, &sub);
  });
  cases.emplace_back("mul", [](std::uint64_t s) {
    return binary_case(s, {2, 3}, {2, 1}, &mul);
  });
  cases.emplace_back("emax", [](std::uint64_t s) {
    Rng rng(s);
    CaseInstance instance;
    instance.leaves = {leaf_with_margin({4}, rng, 0.1), leaf_with_margin({4}, rng, 1.3)};
    auto a = instance.leaves[0];
    auto b = instance.leaves[1];
    instance.build = readout(rng, [a, b]() { return emax(a, b); });
    return instance;
  });
  cases.emplace_back("scale", [](std::uint64_t s) {
    return unary_case(s, {3}, [](const Tensor& a) { return scale(a, -1.7); });
  });
  cases.emplace_back("matmul", [](std::uint64_t s) {
    return binary_case(s, {2, 3}, {3, 2}, &matmul);
  });
  cases.emplace_back("transpose", [](std::uint64_t s) {
    return unary_case(s, {2, 3}, [](const Tensor& a) { return transpose(a); });
  });
  cases.emplace_back("reshape", [](std::uint64_t s) {
    return unary_case(s, {2, 3}, [](const Tensor& a) { return reshape(a, {3, 2}); });
  });
  cases.emplace_back("concat", [](std::uint64_t s) {
    Rng rng(s);
    CaseInstance instance;
    instance.leaves = {leaf({2, 2}, rng), leaf({1, 2}, rng), leaf({2, 2}, rng)};
    auto a = instance.leaves[0];
    auto b = instance.leaves[1];
    auto c = instance.leaves[2];
    instance.build = readout(rng, [a, b, c]() {
      return concat({concat({a, b}, 0), c}, 0);
    });
    return instance;
  });
  cases.emplace_back("slice", [](std::uint64_t s) {
    return unary_case(s, {3, 4}, [](const Tensor& a) { return slice(a, 1, 1, 3); });
  });
  cases.emplace_back("embedding_lookup", [](std::uint64_t s) {
    Rng rng(s);
    CaseInstance instance;
    instance.leaves = {leaf({4, 3}, rng)};
    auto table = instance.leaves[0];
    // Repeated id exercises fan-out accumulation into one row.
    std::vector<std::size_t> ids = {0, 2, 2, rng.below(4)};
    instance.build = readout(rng, [table, ids]() {
      return embedding_lookup(table, ids);
    });
    return instance;
  });
  cases.emplace_back("relu", [](std::uint64_t s) {
    return unary_case(s, {4}, [](const Tensor& a) { return relu(a); }, 0.1);
  });
  cases.emplace_back("tanh", [](std::uint64_t s) {
    return unary_case(s, {4}, [](const Tensor& a) { return tanh(a); });
  });
  cases.emplace_back("sigmoid", [](std::uint64_t s) {
    return unary_case(s, {4}, [](const Tensor& a) { return sigmoid(a); });
  });
  cases.emplace_back("log", [](std::uint64_t s) {
    return positive_unary_case(s, {4}, [](const Tensor& a) { return log(a); });
  });
  cases.emplace_back("log_clamped", [](std::uint64_t s) {
    return positive_unary_case(s, {4}, [](const Tensor& a) {
      return log_clamped(a, 1e-12);
    });
  });
  cases.emplace_back("sum", [](std::uint64_t s) {
    return unary_case(s, {2, 2}, [](const Tensor& a) { return sum_all(a); });
  });
  cases.emplace_back("mean", [](std::uint64_t s) {
    return unary_case(s, {4}, [](const Tensor& a) { return mean_all(a); });
  });
  cases.emplace_back("softmax", [](std::uint64_t s) {
    return unary_case(s, {2, 3}, [](const Tensor& a) { return softmax(a, 1); });
  });
  cases.emplace_back("layer_norm", [](std::uint64_t s) {
    return unary_case(s, {2, 4}, [](const Tensor& a) { return layer_norm(a); });
  });
  cases.emplace_back("dropout", [](std::uint64_t s) {
    Rng rng(s);
    CaseInstance instance;
    instance.leaves = {leaf({2, 4}, rng)};
    auto a = instance.leaves[0];
    const std::uint64_t mask_seed = rng.next();
    instance.build = readout(rng, [a, mask_seed]() {
      Rng mask_rng(mask_seed);
      return dropout(a, 0.5, true, mask_rng);
    });
    return instance;
  });
  cases.emplace_back("masked_fill", [](std::uint64_t s) {
    Rng rng(s);
    CaseInstance instance;
    instance.leaves = {leaf({2, 3}, rng)};
    auto a = instance.leaves[0];
    std::vector<double> mask_data(6, 0.0);
    for (auto& m : mask_data) m = rng.uniform01() < 0.4 ? 1.0 : 0.0;
    const Tensor mask = Tensor::from_data({2, 3}, std::move(mask_data));
    instance.build = readout(rng, [a, mask]() { return masked_fill(a, mask, -5.0); });
    return instance;
  });
  cases.emplace_back("im2col", [](std::uint64_t s) {
    return unary_case(s, {2, 3, 4}, [](const Tensor& a) {
      return im2col(a, 2, 2, 1, 1);
    });
  });

  cases.emplace_back("loss_classification", &classification_loss_case);
  cases.emplace_back("loss_generation", &generation_loss_case);
  BlendedWorld world;
  cases.emplace_back("loss_blended", [&world](std::uint64_t s) {
    return blended_loss_case(s, world);
  });

  std::vector<GradCheckReport> reports;
  for (auto& [name, builder] : cases) {
    GradCheckReport report;
    report.name = name;
    for (std::size_t i = 0; i < instances_per_case; ++i) {
      CaseInstance instance = builder(seed * 1000003ULL + i * 7919ULL + 17ULL);
      for (const Tensor& t : instance.leaves) report.entries += t.size();
      const double err = max_fd_rel_error(instance.leaves, instance.build);
      report.max_rel_err = std::max(report.max_rel_err, err);
      report.instances += 1;
    }
    report.passed = report.max_rel_err < tol;
    reports.push_back(std::move(report));
  }
  return reports;
}

bool gradcheck_all_passed(const std::vector<GradCheckReport>& reports) {
  for (const auto& report : reports) {
    if (!report.passed) return false;
  }
  return !reports.empty();
}

}  // namespace iiht
