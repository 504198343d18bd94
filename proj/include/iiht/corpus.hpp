#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "iiht/templates.hpp"

namespace iiht {

// One dataset example: multi-view images (or a precomputed feature vector),
// per-indicator one-hot state labels, and the reference report.
struct ReportRecord {
  std::string id;
  std::size_t image_h = 0;
  std::size_t image_w = 0;
  std::vector<std::vector<double>> images;  // r views, row-major h*w in [0,1]
  std::vector<double> features;             // alternative to images
  std::vector<std::vector<int>> labels;     // T rows, each one-hot over M
  std::string report;

  bool has_images() const { return !images.empty(); }
  std::size_t state_of(std::size_t t) const;  // argmax of label row t
};

struct CorpusSpec {
  std::size_t indicators = 11;  // T, must match the template set
  std::size_t states = 3;       // M
  std::uint64_t seed = 0;
  std::size_t n_train = 32;
  std::size_t n_val = 8;
  std::size_t n_test = 8;
  std::size_t cell_h = 4;  // image is cell_h x (cell_w * T)
  std::size_t cell_w = 4;
  std::size_t views = 1;   // images per record
  double noise_sigma = 0.05;
  std::vector<std::vector<double>> priors;  // T x M; empty means uniform

  std::size_t image_h() const { return cell_h; }
  std::size_t image_w() const { return cell_w * indicators; }
  void validate() const;  // ConfigError on violation
};

struct Corpus {
  std::vector<ReportRecord> train;
  std::vector<ReportRecord> val;
  std::vector<ReportRecord> test;
};

// Deterministic synthetic corpus: states drawn from the priors; each image
// cell t carries intensity 0.2 / 0.5 / 0.8 for negative / uncertain /
// positive plus clamped gaussian noise; reports concatenate the template
// sentences in indicator order.
Corpus generate(const CorpusSpec& spec, const IndicatorTemplates& templates);

double state_intensity(const IndicatorTemplates& templates, std::size_t state_id);

std::vector<ReportRecord> load_jsonl(const std::string& path);
void save_jsonl(const std::vector<ReportRecord>& records, const std::string& path);

}  // namespace iiht
