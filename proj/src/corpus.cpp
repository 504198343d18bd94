#include "iiht/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "iiht/errors.hpp"
#include "iiht/rng.hpp"

namespace iiht {

namespace {

using ordered_json = nlohmann::ordered_json;

std::vector<int> one_hot(std::size_t m, std::size_t states) {
  std::vector<int> row(states, 0);
  row[m] = 1;
  return row;
}

std::size_t sample_state(const std::vector<double>& prior, Rng& rng) {
  const double u = rng.uniform01();
  double cumulative = 0.0;
  for (std::size_t m = 0; m < prior.size(); ++m) {
    cumulative += prior[m];
    if (u < cumulative) return m;
  }
  return prior.size() - 1;
}

ReportRecord make_record(const CorpusSpec& spec, const IndicatorTemplates& templates,
                         const std::string& id, Rng& rng) {
  ReportRecord record;
  record.id = id;
  record.image_h = spec.image_h();
  record.image_w = spec.image_w();

  std::vector<std::size_t> states(spec.indicators);
  for (std::size_t t = 0; t < spec.indicators; ++t) {
    const std::vector<double>& prior =
        spec.priors.empty() ? std::vector<double>(spec.states, 1.0 / spec.states)
                            : spec.priors[t];
    states[t] = sample_state(prior, rng);
    record.labels.push_back(one_hot(states[t], spec.states));
  }

  for (std::size_t view = 0; view < spec.views; ++view) {
    std::vector<double> pixels(record.image_h * record.image_w);
    for (std::size_t y = 0; y < record.image_h; ++y) {
      for (std::size_t x = 0; x < record.image_w; ++x) {
        const std::size_t t = std::min(x / spec.cell_w, spec.indicators - 1);
        double v = state_intensity(templates, states[t]);
        if (spec.noise_sigma > 0.0) v += spec.noise_sigma * rng.normal();
        pixels[y * record.image_w + x] = std::clamp(v, 0.0, 1.0);
      }
    }
    record.images.push_back(std::move(pixels));
  }

  std::string report;
  for (std::size_t t = 0; t < spec.indicators; ++t) {
    if (t) report += ' ';
    report += templates.sentence(t, states[t]);
  }
  record.report = std::move(report);
  return record;
}

ordered_json record_to_json(const ReportRecord& record) {
  ordered_json j;
  j["id"] = record.id;
  if (!record.features.empty()) {
    j["features"] = record.features;
  } else {
    ordered_json images = ordered_json::array();
    for (const auto& pixels : record.images) {
      ordered_json image;
      image["h"] = record.image_h;
      image["w"] = record.image_w;
      image["pixels"] = pixels;
      images.push_back(std::move(image));
    }
    j["images"] = std::move(images);
  }
  j["labels"] = record.labels;
  j["report"] = record.report;
  return j;
}

ReportRecord record_from_json(const ordered_json& j, std::size_t line_no) {
  auto fail = [line_no](const std::string& what) -> ValidationError {
    return ValidationError("line " + std::to_string(line_no) + ": " + what);
  };
  ReportRecord record;
  if (!j.contains("id") || !j["id"].is_string()) throw fail("missing string field \"id\"");
  record.id = j["id"].get<std::string>();

  const bool has_features = j.contains("features");
  const bool has_images = j.contains("images");
  if (has_features == has_images) {
    throw fail("record " + record.id + ": exactly one of \"features\"/\"images\" required");
  }
  if (has_features) {
    record.features = j["features"].get<std::vector<double>>();
    if (record.features.empty()) throw fail("record " + record.id + ": empty features");
  } else {
    for (const auto& image : j["images"]) {
      const std::size_t h = image.at("h").get<std::size_t>();
      const std::size_t w = image.at("w").get<std::size_t>();
      auto pixels = image.at("pixels").get<std::vector<double>>();
      if (pixels.size() != h * w) {
        throw fail("record " + record.id + ": image pixel count " +
                   std::to_string(pixels.size()) + " != h*w");
      }
      if (!record.images.empty() && (h != record.image_h || w != record.image_w)) {
        throw fail("record " + record.id + ": inconsistent view sizes");
      }
      record.image_h = h;
      record.image_w = w;
      record.images.push_back(std::move(pixels));
    }
    if (record.images.empty()) throw fail("record " + record.id + ": empty image list");
  }

  if (!j.contains("labels")) throw fail("record " + record.id + ": missing labels");
  record.labels = j["labels"].get<std::vector<std::vector<int>>>();
  for (std::size_t t = 0; t < record.labels.size(); ++t) {
    int sum = 0;
    for (int v : record.labels[t]) {
      if (v != 0 && v != 1) sum = -1000;
      sum += v;
    }
    if (sum != 1) {
      throw fail("record " + record.id + ": label row " + std::to_string(t) +
                 " is not one-hot");
    }
  }

  if (!j.contains("report") || !j["report"].is_string()) {
    throw fail("record " + record.id + ": missing report");
  }
  record.report = j["report"].get<std::string>();
  if (record.report.empty()) throw fail("record " + record.id + ": empty report");
  return record;
}

}  // namespace

std::size_t ReportRecord::state_of(std::size_t t) const {
  if (t >= labels.size()) {
    throw ContractError("record " + id + ": indicator " + std::to_string(t) +
                        " out of range");
  }
  const auto& row = labels[t];
  return static_cast<std::size_t>(
      std::max_element(row.begin(), row.end()) - row.begin());
}

void CorpusSpec::validate() const {
  if (indicators == 0 || states == 0) throw ConfigError("corpus: counts must be positive");
  if (cell_h == 0 || cell_w == 0) throw ConfigError("corpus: cell size must be positive");
  if (views == 0) throw ConfigError("corpus: need at least one view per record");
  if (noise_sigma < 0.0) throw ConfigError("corpus: negative noise sigma");
  if (!priors.empty()) {
    if (priors.size() != indicators) {
      throw ConfigError("corpus: priors must have one row per indicator");
    }
    for (const auto& row : priors) {
      if (row.size() != states) throw ConfigError("corpus: prior row has wrong arity");
      double sum = 0.0;
      for (double p : row) {
        if (p < 0.0) throw ConfigError("corpus: negative prior probability");
        sum += p;
      }
      if (std::abs(sum - 1.0) > 1e-9) {
        throw ConfigError("corpus: prior row sums to " + std::to_string(sum));
      }
    }
  }
}

double state_intensity(const IndicatorTemplates& templates, std::size_t state_id) {
  const std::string& name = templates.state_name(state_id);
  if (name == "negative") return 0.2;
  if (name == "uncertain") return 0.5;
  if (name == "positive") return 0.8;
  // Custom state sets spread evenly over the intensity range.
  return static_cast<double>(state_id + 1) /
         static_cast<double>(templates.state_count() + 1);
}

Corpus generate(const CorpusSpec& spec, const IndicatorTemplates& templates) {
  spec.validate();
  if (templates.indicator_count() != spec.indicators ||
      templates.state_count() != spec.states) {
    throw ConfigError("corpus: template set covers " +
                      std::to_string(templates.indicator_count()) + "x" +
                      std::to_string(templates.state_count()) +
                      " but spec asks for " + std::to_string(spec.indicators) + "x" +
                      std::to_string(spec.states));
  }
  Rng rng(spec.seed);
  Corpus corpus;
  for (std::size_t i = 0; i < spec.n_train; ++i) {
    corpus.train.push_back(make_record(spec, templates, "train-" + std::to_string(i), rng));
  }
  for (std::size_t i = 0; i < spec.n_val; ++i) {
    corpus.val.push_back(make_record(spec, templates, "val-" + std::to_string(i), rng));
  }
  for (std::size_t i = 0; i < spec.n_test; ++i) {
    corpus.test.push_back(make_record(spec, templates, "test-" + std::to_string(i), rng));
  }
  return corpus;
}

std::vector<ReportRecord> load_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open corpus file: " + path);
  std::vector<ReportRecord> records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    ordered_json j = ordered_json::parse(line, nullptr, false);
    if (j.is_discarded()) {
      throw ValidationError("line " + std::to_string(line_no) + ": malformed JSON in " +
                            path);
    }
    try {
      records.push_back(record_from_json(j, line_no));
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return records;
}

void save_jsonl(const std::vector<ReportRecord>& records, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write corpus file: " + path);
  for (const auto& record : records) {
    out << record_to_json(record).dump() << "\n";
  }
}

}  // namespace iiht
