#pragma once

#include <cstddef>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace iiht {

// Byte-pair subword vocabulary for report text. Spaces are carried as a
// U+2581 marker prefix on the following unit, so decode is an exact inverse
// on case-folded text; merges never cross unit boundaries.
struct SubwordVocab {
  static constexpr std::size_t kPad = 0;
  static constexpr std::size_t kBos = 1;
  static constexpr std::size_t kEos = 2;
  static constexpr std::size_t kUnk = 3;

  std::vector<std::string> tokens;  // dense ids, specials at 0..3
  std::vector<std::pair<std::string, std::string>> merges;  // application order
  bool reached_fixpoint = false;  // target_size was unreachable

  std::size_t size() const { return tokens.size(); }
  std::size_t id_of(const std::string& token) const;  // kUnk when absent
  void rebuild_index();

 private:
  std::unordered_map<std::string, std::size_t> index_;
};

// Deterministic BPE training: merge the most frequent adjacent pair, ties
// broken lexicographically, until the vocabulary reaches target_size or no
// pair remains (fixpoint, flagged).
SubwordVocab train_bpe(const std::vector<std::string>& corpus, std::size_t target_size);

// Greedy encode: repeatedly apply the earliest-trained merge present
// (leftmost occurrence first). Unknown symbols map to kUnk; specials are
// never produced otherwise.
std::vector<std::size_t> encode(const SubwordVocab& vocab, const std::string& text);
std::string decode(const SubwordVocab& vocab, const std::vector<std::size_t>& ids);

// Case-fold + split into marker-prefixed units of base symbols. Exposed for
// the encode oracle in tests.
std::vector<std::vector<std::string>> symbolize(const std::string& text);

void save_vocab(const SubwordVocab& vocab, const std::string& vocab_path,
                const std::string& merges_path);
SubwordVocab load_vocab(const std::string& vocab_path, const std::string& merges_path);

// Whole-word vocabulary covering indicator names and state words.
struct IndicatorVocab {
  std::vector<std::string> words;

  std::size_t size() const { return words.size(); }
  std::size_t id_of(const std::string& word) const;  // ContractError when absent
  const std::string& word_of(std::size_t id) const;
};

IndicatorVocab build_indicator_vocab(const std::vector<std::vector<std::string>>& phrases);

}  // namespace iiht
