#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "iiht/errors.hpp"
#include "iiht/rng.hpp"
#include "iiht/tokenizer.hpp"

using namespace iiht;

namespace {

// Independent encode oracle: every step enumerates all applicable
// (rank, position) pairs and applies the smallest.
std::vector<std::size_t> oracle_encode(const SubwordVocab& vocab,
                                       const std::string& text) {
  std::vector<std::size_t> ids;
  for (auto symbols : symbolize(text)) {
    while (true) {
      std::size_t best_rank = vocab.merges.size();
      std::size_t best_pos = 0;
      for (std::size_t r = 0; r < vocab.merges.size(); ++r) {
        if (r >= best_rank) break;
        for (std::size_t i = 0; i + 1 < symbols.size(); ++i) {
          if (symbols[i] == vocab.merges[r].first &&
              symbols[i + 1] == vocab.merges[r].second) {
            best_rank = r;
            best_pos = i;
            break;
          }
        }
      }
      if (best_rank == vocab.merges.size()) break;
      symbols[best_pos] += symbols[best_pos + 1];
      symbols.erase(symbols.begin() + static_cast<std::ptrdiff_t>(best_pos) + 1);
    }
    for (const auto& s : symbols) ids.push_back(vocab.id_of(s));
  }
  return ids;
}

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("hand-simulated merge sequence on a repeated letter") {
  // Vocabulary grows 5 -> 6 -> 7; both merges appear once the target admits
  // them.
  const SubwordVocab vocab = train_bpe({"aaaa"}, 7);
  REQUIRE(vocab.merges.size() == 2);
  CHECK(vocab.merges[0] == std::pair<std::string, std::string>{"a", "a"});
  CHECK(vocab.merges[1] == std::pair<std::string, std::string>{"aa", "aa"});
  CHECK(vocab.tokens.size() == 7);
  CHECK(vocab.tokens[4] == "a");
  CHECK(vocab.tokens[5] == "aa");
  CHECK(vocab.tokens[6] == "aaaa");
  CHECK(!vocab.reached_fixpoint);

  const auto ids = encode(vocab, "aaaa");
  REQUIRE(ids.size() == 1);
  CHECK(vocab.tokens[ids[0]] == "aaaa");

  // At a size bound of 6 only the first merge fits.
  const SubwordVocab smaller = train_bpe({"aaaa"}, 6);
  REQUIRE(smaller.merges.size() == 1);
  CHECK(smaller.merges[0] == std::pair<std::string, std::string>{"a", "a"});
}

TEST_CASE("an unreachable target stops at the fixpoint with a warning") {
  const SubwordVocab vocab = train_bpe({"aaaa"}, 100);
  CHECK(vocab.reached_fixpoint);
  CHECK(vocab.tokens.size() == 7);  // specials, a, aa, aaaa
}

TEST_CASE("empty documents contribute nothing") {
  const SubwordVocab vocab = train_bpe({"", "ab"}, 20);
  CHECK(vocab.tokens[4] == "a");
  CHECK(vocab.tokens[5] == "b");
  const auto ids = encode(vocab, "");
  CHECK(ids.empty());
  CHECK(decode(vocab, ids) == "");
}

TEST_CASE("training is deterministic") {
  const std::vector<std::string> corpus = {"no pleural effusion is seen .",
                                           "pleural effusion is present ."};
  const SubwordVocab a = train_bpe(corpus, 64);
  const SubwordVocab b = train_bpe(corpus, 64);
  CHECK(a.tokens == b.tokens);
  CHECK(a.merges == b.merges);
}

TEST_CASE("target below the base alphabet is rejected") {
  CHECK_THROWS_AS(train_bpe({"abc"}, 7), ContractError);
  CHECK_THROWS_AS(train_bpe({}, 10), ContractError);
}

TEST_CASE("round trip on covered text") {
  const SubwordVocab vocab = train_bpe({"pleural effusion is seen"}, 40);
  for (const std::string text :
       {std::string("pleural effusion"), std::string(""), std::string("a  b"),
        std::string(" leading and trailing "), std::string("pleural effusion is seen")}) {
    // Unknown letters in the probes fall back to single symbols that the
    // training text covered.
    bool covered = true;
    for (char c : text) {
      covered = covered && (c == ' ' || std::string("pleurafsion b").find(c) !=
                                            std::string::npos);
    }
    if (!covered) continue;
    CHECK(decode(vocab, encode(vocab, text)) == text);
  }
}

TEST_CASE("case folding happens before tokenization") {
  const SubwordVocab vocab = train_bpe({"pleural effusion"}, 30);
  CHECK(decode(vocab, encode(vocab, "Pleural EFFUSION")) == "pleural effusion");
}

TEST_CASE("unknown bytes map to the unk id and nothing else emits specials") {
  const SubwordVocab vocab = train_bpe({"abc abc"}, 16);
  const auto ids = encode(vocab, "abcz");
  REQUIRE(!ids.empty());
  CHECK(ids.back() == SubwordVocab::kUnk);
  for (std::size_t i = 0; i + 1 < ids.size(); ++i) {
    CHECK(ids[i] >= 4);
    CHECK(ids[i] < vocab.size());
  }
}

TEST_CASE("greedy encode equals the exhaustive merge-order oracle") {
  Rng rng(31);
  const std::string alphabet = "abc";
  std::vector<std::string> corpus;
  for (int doc = 0; doc < 12; ++doc) {
    std::string text;
    for (int i = 0; i < 12; ++i) {
      if (i && rng.uniform01() < 0.2) text += ' ';
      text += alphabet[rng.below(alphabet.size())];
    }
    corpus.push_back(text);
  }
  const SubwordVocab vocab = train_bpe(corpus, 40);

  for (int trial = 0; trial < 300; ++trial) {
    std::string text;
    const std::size_t len = rng.below(9);
    for (std::size_t i = 0; i < len; ++i) {
      const std::size_t pick = rng.below(alphabet.size() + 1);
      text += pick == alphabet.size() ? ' ' : alphabet[pick];
    }
    CHECK(encode(vocab, text) == oracle_encode(vocab, text));
  }
}

TEST_CASE("round trip identity over a whole training corpus") {
  std::vector<std::string> corpus = {
      "no pneumothorax is seen .", "pneumonia is present .",
      "lung opacity cannot be excluded .", "no fracture is seen ."};
  const SubwordVocab vocab = train_bpe(corpus, 128);
  for (const auto& report : corpus) {
    CHECK(decode(vocab, encode(vocab, report)) == report);
  }
}

TEST_CASE("vocabulary and merges files round trip") {
  const SubwordVocab vocab = train_bpe({"no pleural effusion is seen ."}, 48);
  const std::string vocab_path = temp_path("iiht_vocab_test.txt");
  const std::string merges_path = temp_path("iiht_merges_test.txt");
  save_vocab(vocab, vocab_path, merges_path);
  const SubwordVocab loaded = load_vocab(vocab_path, merges_path);
  CHECK(loaded.tokens == vocab.tokens);
  CHECK(loaded.merges == vocab.merges);
  CHECK(decode(loaded, encode(loaded, "no pleural effusion is seen .")) ==
        "no pleural effusion is seen .");
  std::remove(vocab_path.c_str());
  std::remove(merges_path.c_str());
}

TEST_CASE("vocabulary loader rejects a bad header") {
  const std::string vocab_path = temp_path("iiht_bad_vocab.txt");
  const std::string merges_path = temp_path("iiht_bad_merges.txt");
  {
    std::FILE* f = std::fopen(vocab_path.c_str(), "w");
    std::fputs("not-a-header\n<pad>\n", f);
    std::fclose(f);
    f = std::fopen(merges_path.c_str(), "w");
    std::fclose(f);
  }
  CHECK_THROWS_AS(load_vocab(vocab_path, merges_path), ValidationError);
  CHECK_THROWS_AS(load_vocab(temp_path("iiht_missing.txt"), merges_path), IoError);
  std::remove(vocab_path.c_str());
  std::remove(merges_path.c_str());
}

TEST_CASE("indicator vocabulary covers template phrases with dense ids") {
  const IndicatorVocab vocab =
      build_indicator_vocab({{"pleural", "effusion", "negative"},
                             {"pneumonia", "positive"},
                             {"pleural", "effusion", "positive"}});
  CHECK(vocab.id_of("pleural") == 0);
  CHECK(vocab.id_of("effusion") == 1);
  CHECK(vocab.id_of("negative") == 2);
  CHECK(vocab.id_of("pneumonia") == 3);
  CHECK(vocab.id_of("positive") == 4);
  CHECK(vocab.word_of(3) == "pneumonia");
  CHECK_THROWS_AS(vocab.id_of("missing"), ContractError);
  CHECK_THROWS_AS(vocab.word_of(99), ContractError);
}
