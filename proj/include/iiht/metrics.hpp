#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace iiht {

// Metric tokenization is lowercase whitespace splitting on detokenized text,
// independent of the subword vocabulary.
std::vector<std::string> metric_tokenize(const std::string& text);

// Corpus-level BLEU-n: clipped n-gram precision geometric mean over orders
// 1..n with brevity penalty; zero-count precisions smoothed by add-epsilon
// (1e-9) on numerator and denominator, so identical corpora score exactly 1.
double bleu_n(const std::vector<std::string>& candidates,
              const std::vector<std::string>& references, std::size_t n);

// Mean per-pair LCS F-measure with recall-heavy beta = 1.2.
double rouge_l(const std::vector<std::string>& candidates,
               const std::vector<std::string>& references);

// Exact-match unigram stage only: alignment maximizes matches then minimizes
// chunks; F_mean = 10PR/(R+9P), penalty 0.5*(chunks/matches)^3. Reported as
// "METEOR-exact" (no stemming or synonymy).
double meteor_exact(const std::vector<std::string>& candidates,
                    const std::vector<std::string>& references);

struct StateAccuracyReport {
  std::vector<double> per_indicator;
  // confusion[t][m][m'] counts records with true state m predicted as m'.
  std::vector<std::vector<std::vector<std::size_t>>> confusion;
  double overall = 0.0;
};

// predicted/labels: [record][indicator] state ids, shapes must agree.
StateAccuracyReport state_accuracy(const std::vector<std::vector<std::size_t>>& predicted,
                                   const std::vector<std::vector<std::size_t>>& labels,
                                   std::size_t states);

struct EvalReport {
  double bleu1 = 0.0;
  double bleu2 = 0.0;
  double bleu3 = 0.0;
  double bleu4 = 0.0;
  double rouge_l = 0.0;
  double meteor = 0.0;  // METEOR-exact
  StateAccuracyReport states;
  std::size_t n_pairs = 0;

  std::string to_json() const;
};

}  // namespace iiht
