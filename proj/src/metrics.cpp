#include "iiht/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include <json.hpp>

#include "iiht/errors.hpp"

namespace iiht {

namespace {

constexpr double kBleuEps = 1e-9;

void check_pairing(const std::vector<std::string>& candidates,
                   const std::vector<std::string>& references, const char* metric) {
  if (candidates.empty()) {
    throw ContractError(std::string(metric) + ": empty candidate list");
  }
  if (candidates.size() != references.size()) {
    throw ContractError(std::string(metric) + ": " +
                        std::to_string(candidates.size()) + " candidates vs " +
                        std::to_string(references.size()) + " references");
  }
}

std::map<std::string, std::size_t> ngram_counts(const std::vector<std::string>& tokens,
                                                std::size_t n) {
  std::map<std::string, std::size_t> counts;
  if (tokens.size() < n) return counts;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
    std::string key;
    for (std::size_t j = 0; j < n; ++j) {
      key += tokens[i + j];
      key += '\x1f';
    }
    counts[key] += 1;
  }
  return counts;
}

std::size_t lcs_length(const std::vector<std::string>& a,
                       const std::vector<std::string>& b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), curr(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      curr[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], curr[j - 1]);
    }
    std::swap(prev, curr);
  }
  return prev[b.size()];
}

// Chunk-minimizing exact-match alignment. Branch-and-bound over which
// reference position each matched candidate token maps to; the chunk count
// is monotone along a branch, so partial counts prune. A first pass stops at
// the first complete alignment (chunk-extension tried first), guaranteeing a
// valid bound before the budgeted exhaustive pass; duplicate-heavy pairs
// that trip the budget keep the best alignment found, which is exact for the
// short sequences the oracles cover.
struct AlignmentSearch {
  const std::vector<std::string>& cand;
  const std::vector<std::string>& ref;
  std::map<std::string, std::size_t> needed;     // matches still required per token
  std::map<std::string, std::size_t> cand_left;  // candidate occurrences ahead
  std::vector<bool> ref_used;
  std::size_t best_chunks;
  std::size_t budget = 0;
  bool stop_at_first_leaf = false;

  AlignmentSearch(const std::vector<std::string>& c, const std::vector<std::string>& r,
                  const std::map<std::string, std::size_t>& matches)
      : cand(c), ref(r), needed(matches), ref_used(r.size(), false),
        best_chunks(c.size() + 1) {
    for (const auto& token : cand) cand_left[token] += 1;
  }

  void run() {
    stop_at_first_leaf = true;
    budget = cand.size() + 2;
    search(0, 0, false, ref.size());
    stop_at_first_leaf = false;
    budget = 500000;
    search(0, 0, false, ref.size());
  }

  void search(std::size_t pos, std::size_t chunks, bool prev_matched,
              std::size_t prev_ref) {
    if (chunks >= best_chunks || budget == 0) return;
    --budget;
    if (pos == cand.size()) {
      best_chunks = chunks;
      if (stop_at_first_leaf) budget = 0;
      return;
    }
    const std::string& token = cand[pos];
    auto needed_it = needed.find(token);
    const std::size_t want = needed_it == needed.end() ? 0 : needed_it->second;

    if (want > 0) {
      if (prev_matched && prev_ref + 1 < ref.size() && !ref_used[prev_ref + 1] &&
          ref[prev_ref + 1] == token) {
        apply_match(pos, chunks, prev_ref + 1, /*extends=*/true);
      }
      for (std::size_t j = 0; j < ref.size(); ++j) {
        if (ref_used[j] || ref[j] != token) continue;
        if (prev_matched && j == prev_ref + 1) continue;  // handled above
        apply_match(pos, chunks, j, false);
      }
    }
    // Skipping is allowed only while later occurrences can still cover the
    // required match count.
    auto left_it = cand_left.find(token);
    if (left_it->second > want) {
      left_it->second -= 1;
      // An unmatched candidate token breaks chunk adjacency.
      search(pos + 1, chunks, false, prev_ref);
      left_it->second += 1;
    }
  }

  void apply_match(std::size_t pos, std::size_t chunks, std::size_t j, bool extends) {
    const std::string& token = cand[pos];
    ref_used[j] = true;
    needed[token] -= 1;
    cand_left[token] -= 1;
    search(pos + 1, chunks + (extends ? 0 : 1), true, j);
    cand_left[token] += 1;
    needed[token] += 1;
    ref_used[j] = false;
  }
};

double meteor_pair(const std::vector<std::string>& cand,
                   const std::vector<std::string>& ref) {
  if (cand.empty() || ref.empty()) return 0.0;
  std::map<std::string, std::size_t> cand_counts, ref_counts;
  for (const auto& t : cand) cand_counts[t] += 1;
  for (const auto& t : ref) ref_counts[t] += 1;
  std::map<std::string, std::size_t> matches;
  std::size_t m = 0;
  for (const auto& [token, count] : cand_counts) {
    auto it = ref_counts.find(token);
    if (it == ref_counts.end()) continue;
    const std::size_t shared = std::min(count, it->second);
    if (shared > 0) {
      matches[token] = shared;
      m += shared;
    }
  }
  if (m == 0) return 0.0;

  AlignmentSearch search(cand, ref, matches);
  search.run();
  const double chunks = static_cast<double>(search.best_chunks);
  const double matched = static_cast<double>(m);
  const double precision = matched / static_cast<double>(cand.size());
  const double recall = matched / static_cast<double>(ref.size());
  const double f_mean = 10.0 * precision * recall / (recall + 9.0 * precision);
  const double penalty = 0.5 * std::pow(chunks / matched, 3.0);
  return f_mean * (1.0 - penalty);
}

}  // namespace

std::vector<std::string> metric_tokenize(const std::string& text) {
  std::string folded = text;
  for (char& c : folded) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  }
  std::vector<std::string> tokens;
  std::istringstream in(folded);
  std::string token;
  while (in >> token) tokens.push_back(token);
  return tokens;
}

double bleu_n(const std::vector<std::string>& candidates,
              const std::vector<std::string>& references, std::size_t n) {
  check_pairing(candidates, references, "bleu");
  if (n == 0) throw ContractError("bleu: order must be at least 1");

  std::vector<double> matches(n, 0.0), totals(n, 0.0);
  double cand_len = 0.0, ref_len = 0.0;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const auto cand = metric_tokenize(candidates[i]);
    const auto ref = metric_tokenize(references[i]);
    cand_len += static_cast<double>(cand.size());
    ref_len += static_cast<double>(ref.size());
    for (std::size_t k = 1; k <= n; ++k) {
      const auto cand_grams = ngram_counts(cand, k);
      const auto ref_grams = ngram_counts(ref, k);
      for (const auto& [gram, count] : cand_grams) {
        auto it = ref_grams.find(gram);
        const std::size_t clipped = it == ref_grams.end() ? 0 : std::min(count, it->second);
        matches[k - 1] += static_cast<double>(clipped);
      }
      totals[k - 1] +=
          cand.size() >= k ? static_cast<double>(cand.size() - k + 1) : 0.0;
    }
  }
  if (cand_len == 0.0) return 0.0;

  double log_precision = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    log_precision += std::log((matches[k] + kBleuEps) / (totals[k] + kBleuEps));
  }
  log_precision /= static_cast<double>(n);
  const double brevity =
      cand_len >= ref_len ? 1.0 : std::exp(1.0 - ref_len / cand_len);
  return brevity * std::exp(log_precision);
}

double rouge_l(const std::vector<std::string>& candidates,
               const std::vector<std::string>& references) {
  check_pairing(candidates, references, "rouge_l");
  constexpr double beta = 1.2;
  constexpr double beta_sq = beta * beta;
  double total = 0.0;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const auto cand = metric_tokenize(candidates[i]);
    const auto ref = metric_tokenize(references[i]);
    if (cand.empty() || ref.empty()) continue;
    const double lcs = static_cast<double>(lcs_length(cand, ref));
    if (lcs == 0.0) continue;
    const double recall = lcs / static_cast<double>(ref.size());
    const double precision = lcs / static_cast<double>(cand.size());
    total += (1.0 + beta_sq) * recall * precision / (recall + beta_sq * precision);
  }
  return total / static_cast<double>(candidates.size());
}

double meteor_exact(const std::vector<std::string>& candidates,
                    const std::vector<std::string>& references) {
  check_pairing(candidates, references, "meteor");
  double total = 0.0;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    total += meteor_pair(metric_tokenize(candidates[i]), metric_tokenize(references[i]));
  }
  return total / static_cast<double>(candidates.size());
}

StateAccuracyReport state_accuracy(const std::vector<std::vector<std::size_t>>& predicted,
                                   const std::vector<std::vector<std::size_t>>& labels,
                                   std::size_t states) {
  if (predicted.size() != labels.size()) {
    throw ContractError("state_accuracy: " + std::to_string(predicted.size()) +
                        " predictions vs " + std::to_string(labels.size()) + " labels");
  }
  StateAccuracyReport report;
  if (predicted.empty()) return report;
  const std::size_t indicators = labels[0].size();
  report.per_indicator.assign(indicators, 0.0);
  report.confusion.assign(
      indicators, std::vector<std::vector<std::size_t>>(
                      states, std::vector<std::size_t>(states, 0)));
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    if (predicted[i].size() != indicators || labels[i].size() != indicators) {
      throw ContractError("state_accuracy: ragged rows at record " + std::to_string(i));
    }
    for (std::size_t t = 0; t < indicators; ++t) {
      const std::size_t truth = labels[i][t];
      const std::size_t guess = predicted[i][t];
      if (truth >= states || guess >= states) {
        throw ContractError("state_accuracy: state id out of range at record " +
                            std::to_string(i));
      }
      report.confusion[t][truth][guess] += 1;
      if (truth == guess) report.per_indicator[t] += 1.0;
    }
  }
  double sum = 0.0;
  for (auto& acc : report.per_indicator) {
    acc /= static_cast<double>(predicted.size());
    sum += acc;
  }
  report.overall = sum / static_cast<double>(indicators);
  return report;
}

std::string EvalReport::to_json() const {
  nlohmann::ordered_json j;
  j["bleu1"] = bleu1;
  j["bleu2"] = bleu2;
  j["bleu3"] = bleu3;
  j["bleu4"] = bleu4;
  j["rouge_l"] = rouge_l;
  j["meteor_exact"] = meteor;
  j["state_accuracy"] = states.overall;
  j["per_indicator_accuracy"] = states.per_indicator;
  j["confusion"] = states.confusion;
  j["n_pairs"] = n_pairs;
  return j.dump(2);
}

}  // namespace iiht
