#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "iiht/errors.hpp"
#include "iiht/metrics.hpp"
#include "iiht/rng.hpp"
#include "metric_oracles.hpp"

using namespace iiht;
using iiht::testing::oracle_bleu;
using iiht::testing::oracle_meteor_pair;
using iiht::testing::oracle_rouge;

namespace {

std::string random_sentence(Rng& rng, const std::vector<std::string>& words,
                            std::size_t min_len, std::size_t max_len) {
  const std::size_t len = min_len + rng.below(max_len - min_len + 1);
  std::string out;
  for (std::size_t i = 0; i < len; ++i) {
    if (i) out += ' ';
    out += words[rng.below(words.size())];
  }
  return out;
}

}  // namespace

TEST_CASE("identical corpora score exactly one on BLEU") {
  const std::vector<std::string> texts = {"no pleural effusion is seen .",
                                          "pneumonia is present ."};
  for (std::size_t n = 1; n <= 4; ++n) {
    CHECK(bleu_n(texts, texts, n) == 1.0);
  }
}

TEST_CASE("disjoint candidates score at epsilon scale") {
  const double score = bleu_n({"alpha beta gamma"}, {"delta epsilon zeta"}, 1);
  CHECK(score < 1e-6);
  CHECK(score >= 0.0);
}

TEST_CASE("BLEU matches the brute-force counting oracle on random pairs") {
  Rng rng(71);
  const std::vector<std::string> words = {"no",  "lung", "seen", "is",  "clear",
                                          "the", "and",  "mild", "left"};
  std::vector<std::string> cands, refs;
  for (int i = 0; i < 20; ++i) {
    cands.push_back(random_sentence(rng, words, 3, 12));
    refs.push_back(random_sentence(rng, words, 3, 12));
  }
  for (std::size_t n = 1; n <= 4; ++n) {
    CHECK(std::abs(bleu_n(cands, refs, n) - oracle_bleu(cands, refs, n)) < 1e-9);
  }
}

TEST_CASE("BLEU-n does not increase with n when matches nest") {
  const std::vector<std::string> cands = {"the lung is clear today"};
  const std::vector<std::string> refs = {"the lung is clear now"};
  double previous = 1.0;
  for (std::size_t n = 1; n <= 4; ++n) {
    const double score = bleu_n(cands, refs, n);
    CHECK(score <= previous + 1e-12);
    previous = score;
  }
}

TEST_CASE("BLEU is invariant under pair permutation") {
  Rng rng(72);
  const std::vector<std::string> words = {"a", "b", "c", "d"};
  std::vector<std::string> cands, refs;
  for (int i = 0; i < 8; ++i) {
    cands.push_back(random_sentence(rng, words, 2, 6));
    refs.push_back(random_sentence(rng, words, 2, 6));
  }
  const double base = bleu_n(cands, refs, 2);
  std::vector<std::size_t> order = {5, 3, 7, 1, 0, 6, 2, 4};
  std::vector<std::string> cands_shuffled, refs_shuffled;
  for (std::size_t i : order) {
    cands_shuffled.push_back(cands[i]);
    refs_shuffled.push_back(refs[i]);
  }
  CHECK(bleu_n(cands_shuffled, refs_shuffled, 2) == doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("the brevity penalty bites short candidates") {
  const double short_score = bleu_n({"the lung"}, {"the lung is clear today"}, 1);
  CHECK(short_score < 1.0);
  CHECK(short_score == doctest::Approx(std::exp(1.0 - 5.0 / 2.0)).epsilon(1e-9));
}

TEST_CASE("empty candidate lists are rejected") {
  CHECK_THROWS_AS(bleu_n({}, {}, 1), ContractError);
  CHECK_THROWS_AS(rouge_l({}, {}), ContractError);
  CHECK_THROWS_AS(meteor_exact({}, {}), ContractError);
  CHECK_THROWS_AS(bleu_n({"a"}, {"a", "b"}, 1), ContractError);
}

TEST_CASE("ROUGE-L trivial pairs") {
  CHECK(rouge_l({"the lung is clear"}, {"the lung is clear"}) == 1.0);
  CHECK(rouge_l({"alpha beta"}, {"gamma delta"}) == 0.0);
}

TEST_CASE("ROUGE-L matches the exhaustive subsequence oracle") {
  Rng rng(73);
  const std::vector<std::string> words = {"no", "lung", "seen", "is", "clear"};
  std::vector<std::string> cands, refs;
  for (int i = 0; i < 25; ++i) {
    cands.push_back(random_sentence(rng, words, 1, 10));
    refs.push_back(random_sentence(rng, words, 1, 10));
  }
  CHECK(std::abs(rouge_l(cands, refs) - oracle_rouge(cands, refs)) < 1e-12);
}

TEST_CASE("METEOR on an identical five-token pair follows the closed form") {
  const std::vector<std::string> pair = {"the heart size is normal"};
  // One contiguous chunk over m = 5 matches.
  const double expected = 1.0 - 0.5 * std::pow(1.0 / 5.0, 3.0);
  CHECK(meteor_exact(pair, pair) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("METEOR of disjoint pairs is zero") {
  CHECK(meteor_exact({"alpha beta"}, {"gamma delta"}) == 0.0);
}

TEST_CASE("METEOR matches the exhaustive alignment oracle on short pairs") {
  Rng rng(74);
  const std::vector<std::string> words = {"a", "b", "c"};
  for (int trial = 0; trial < 120; ++trial) {
    const std::string cand = random_sentence(rng, words, 1, 6);
    const std::string ref = random_sentence(rng, words, 1, 6);
    const double got = meteor_exact({cand}, {ref});
    const double expected = oracle_meteor_pair(cand, ref);
    INFO("cand=\"", cand, "\" ref=\"", ref, "\"");
    CHECK(std::abs(got - expected) < 1e-12);
  }
}

TEST_CASE("METEOR prefers contiguous alignments") {
  // Same unigram counts, different fragmentation.
  const double contiguous = meteor_exact({"a b c"}, {"a b c"});
  const double fragmented = meteor_exact({"a x b y c"}, {"a b c"});
  CHECK(contiguous > fragmented);
}

TEST_CASE("averaged metrics are invariant under pair permutation") {
  const std::vector<std::string> cands = {"a b", "c d", "a c"};
  const std::vector<std::string> refs = {"a c", "c d", "b a"};
  const double rouge_base = rouge_l(cands, refs);
  const double meteor_base = meteor_exact(cands, refs);
  const std::vector<std::string> cands_p = {cands[2], cands[0], cands[1]};
  const std::vector<std::string> refs_p = {refs[2], refs[0], refs[1]};
  CHECK(rouge_l(cands_p, refs_p) == doctest::Approx(rouge_base).epsilon(1e-12));
  CHECK(meteor_exact(cands_p, refs_p) == doctest::Approx(meteor_base).epsilon(1e-12));
}

TEST_CASE("perfect state predictions give unit accuracy and diagonal confusion") {
  const std::vector<std::vector<std::size_t>> labels = {{0, 1, 2}, {2, 1, 0}};
  const StateAccuracyReport report = state_accuracy(labels, labels, 3);
  for (double acc : report.per_indicator) CHECK(acc == 1.0);
  CHECK(report.overall == 1.0);
  for (std::size_t t = 0; t < 3; ++t) {
    for (std::size_t m = 0; m < 3; ++m) {
      for (std::size_t m2 = 0; m2 < 3; ++m2) {
        if (m != m2) CHECK(report.confusion[t][m][m2] == 0);
      }
    }
  }
}

TEST_CASE("a constant predictor on uniform labels sits near 1/M") {
  Rng rng(75);
  const std::size_t n = 3000, states = 3;
  std::vector<std::vector<std::size_t>> labels(n), predicted(n);
  for (std::size_t i = 0; i < n; ++i) {
    labels[i] = {rng.below(states)};
    predicted[i] = {1};  // constant guess
  }
  const StateAccuracyReport report = state_accuracy(predicted, labels, states);
  const double sigma = std::sqrt((1.0 / 3.0) * (2.0 / 3.0) / double(n));
  CHECK(std::abs(report.overall - 1.0 / 3.0) < 4.0 * sigma);
}

TEST_CASE("confusion row sums equal per-state label counts") {
  Rng rng(76);
  const std::size_t n = 200, states = 3, indicators = 2;
  std::vector<std::vector<std::size_t>> labels(n), predicted(n);
  std::vector<std::vector<std::size_t>> per_state(indicators,
                                                  std::vector<std::size_t>(states, 0));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t t = 0; t < indicators; ++t) {
      labels[i].push_back(rng.below(states));
      predicted[i].push_back(rng.below(states));
      per_state[t][labels[i][t]] += 1;
    }
  }
  const StateAccuracyReport report = state_accuracy(predicted, labels, states);
  for (std::size_t t = 0; t < indicators; ++t) {
    for (std::size_t m = 0; m < states; ++m) {
      std::size_t row_sum = 0;
      for (std::size_t m2 = 0; m2 < states; ++m2) row_sum += report.confusion[t][m][m2];
      CHECK(row_sum == per_state[t][m]);
    }
  }
}

TEST_CASE("misaligned shapes are rejected") {
  CHECK_THROWS_AS(state_accuracy({{0}}, {{0}, {1}}, 3), ContractError);
  CHECK_THROWS_AS(state_accuracy({{0, 1}}, {{0}}, 3), ContractError);
}
