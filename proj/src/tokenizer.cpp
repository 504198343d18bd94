#include "iiht/tokenizer.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

#include "iiht/errors.hpp"

namespace iiht {

namespace {

const std::string kSpaceMarker = "\xE2\x96\x81";  // U+2581
const char* kSpecials[4] = {"<pad>", "<bos>", "<eos>", "<unk>"};

std::string fold_lower(const std::string& text) {
  std::string out = text;
  for (char& c : out) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  }
  return out;
}

}  // namespace

std::size_t SubwordVocab::id_of(const std::string& token) const {
  auto it = index_.find(token);
  return it == index_.end() ? kUnk : it->second;
}

void SubwordVocab::rebuild_index() {
  index_.clear();
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    index_.emplace(tokens[i], i);
  }
}

std::vector<std::vector<std::string>> symbolize(const std::string& text) {
  const std::string folded = fold_lower(text);
  std::vector<std::vector<std::string>> units;
  std::size_t i = 0;
  while (i < folded.size()) {
    std::vector<std::string> unit;
    if (folded[i] == ' ') {
      unit.push_back(kSpaceMarker);
      ++i;
    } else if (i == 0) {
      // first unit carries no marker
    }
    while (i < folded.size() && folded[i] != ' ') {
      unit.push_back(std::string(1, folded[i]));
      ++i;
    }
    units.push_back(std::move(unit));
  }
  return units;
}

SubwordVocab train_bpe(const std::vector<std::string>& corpus, std::size_t target_size) {
  if (corpus.empty()) throw ContractError("train_bpe: empty corpus");

  // Deterministic unit table: distinct symbol sequences with counts, ordered
  // by their flattened string form.
  std::map<std::string, std::pair<std::vector<std::string>, std::size_t>> unit_table;
  std::map<std::string, bool> base_symbols;
  for (const std::string& doc : corpus) {
    for (auto& unit : symbolize(doc)) {
      if (unit.empty()) continue;
      std::string key;
      for (const auto& s : unit) key += s;
      auto it = unit_table.find(key);
      if (it == unit_table.end()) {
        for (const auto& s : unit) base_symbols[s] = true;
        unit_table.emplace(key, std::make_pair(unit, std::size_t{1}));
      } else {
        it->second.second += 1;
      }
    }
  }

  SubwordVocab vocab;
  for (const char* s : kSpecials) vocab.tokens.push_back(s);
  for (const auto& [sym, _] : base_symbols) vocab.tokens.push_back(sym);
  if (target_size <= vocab.tokens.size()) {
    throw ContractError("train_bpe: target_size " + std::to_string(target_size) +
                        " must exceed specials + " +
                        std::to_string(base_symbols.size()) + " distinct base symbols");
  }

  std::map<std::string, bool> known;
  for (const auto& t : vocab.tokens) known[t] = true;

  while (vocab.tokens.size() < target_size) {
    std::map<std::pair<std::string, std::string>, std::size_t> pair_counts;
    for (const auto& [key, entry] : unit_table) {
      const auto& symbols = entry.first;
      for (std::size_t i = 0; i + 1 < symbols.size(); ++i) {
        pair_counts[{symbols[i], symbols[i + 1]}] += entry.second;
      }
    }
    if (pair_counts.empty()) {
      vocab.reached_fixpoint = true;
      break;
    }
    // Highest frequency wins; std::map order gives the lexicographic tie-break.
    std::pair<std::string, std::string> best;
    std::size_t best_count = 0;
    for (const auto& [pair, count] : pair_counts) {
      if (count > best_count) {
        best = pair;
        best_count = count;
      }
    }
    const std::string merged = best.first + best.second;
    vocab.merges.push_back(best);
    if (!known.count(merged)) {
      vocab.tokens.push_back(merged);
      known[merged] = true;
    }
    for (auto& [key, entry] : unit_table) {
      auto& symbols = entry.first;
      std::vector<std::string> next;
      next.reserve(symbols.size());
      std::size_t i = 0;
      while (i < symbols.size()) {
        if (i + 1 < symbols.size() && symbols[i] == best.first &&
            symbols[i + 1] == best.second) {
          next.push_back(merged);
          i += 2;
        } else {
          next.push_back(symbols[i]);
          ++i;
        }
      }
      symbols = std::move(next);
    }
  }

  vocab.rebuild_index();
  return vocab;
}

std::vector<std::size_t> encode(const SubwordVocab& vocab, const std::string& text) {
  std::map<std::pair<std::string, std::string>, std::size_t> rank;
  for (std::size_t i = 0; i < vocab.merges.size(); ++i) {
    rank.emplace(vocab.merges[i], i);
  }
  std::vector<std::size_t> ids;
  for (auto& symbols : symbolize(text)) {
    while (symbols.size() > 1) {
      std::size_t best_rank = vocab.merges.size();
      std::size_t best_pos = 0;
      for (std::size_t i = 0; i + 1 < symbols.size(); ++i) {
        auto it = rank.find({symbols[i], symbols[i + 1]});
        if (it != rank.end() && it->second < best_rank) {
          best_rank = it->second;
          best_pos = i;
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

std::string decode(const SubwordVocab& vocab, const std::vector<std::size_t>& ids) {
  std::string joined;
  for (std::size_t id : ids) {
    if (id >= vocab.tokens.size()) {
      throw ContractError("decode: id " + std::to_string(id) + " out of range");
    }
    if (id == SubwordVocab::kPad || id == SubwordVocab::kBos || id == SubwordVocab::kEos) {
      continue;
    }
    joined += vocab.tokens[id];
  }
  std::string out;
  out.reserve(joined.size());
  std::size_t i = 0;
  while (i < joined.size()) {
    if (joined.compare(i, kSpaceMarker.size(), kSpaceMarker) == 0) {
      out += ' ';
      i += kSpaceMarker.size();
    } else {
      out += joined[i];
      ++i;
    }
  }
  return out;
}

void save_vocab(const SubwordVocab& vocab, const std::string& vocab_path,
                const std::string& merges_path) {
  std::ofstream vf(vocab_path);
  if (!vf) throw IoError("cannot write vocabulary file: " + vocab_path);
  vf << "bpe-vocab v1 size=" << vocab.tokens.size() << "\n";
  for (const auto& t : vocab.tokens) vf << t << "\n";

  std::ofstream mf(merges_path);
  if (!mf) throw IoError("cannot write merges file: " + merges_path);
  for (const auto& [l, r] : vocab.merges) mf << l << " " << r << "\n";
}

SubwordVocab load_vocab(const std::string& vocab_path, const std::string& merges_path) {
  std::ifstream vf(vocab_path);
  if (!vf) throw IoError("cannot open vocabulary file: " + vocab_path);
  std::string header;
  std::getline(vf, header);
  std::size_t declared = 0;
  {
    std::istringstream hs(header);
    std::string magic, version, size_field;
    hs >> magic >> version >> size_field;
    if (magic != "bpe-vocab" || version != "v1" ||
        size_field.rfind("size=", 0) != 0) {
      throw ValidationError("bad vocabulary header: \"" + header + "\"");
    }
    declared = static_cast<std::size_t>(std::stoull(size_field.substr(5)));
  }
  SubwordVocab vocab;
  std::string line;
  while (std::getline(vf, line)) vocab.tokens.push_back(line);
  if (vocab.tokens.size() != declared) {
    throw ValidationError("vocabulary file declares " + std::to_string(declared) +
                          " tokens but contains " + std::to_string(vocab.tokens.size()));
  }
  for (std::size_t i = 0; i < 4; ++i) {
    if (vocab.tokens.size() <= i || vocab.tokens[i] != kSpecials[i]) {
      throw ValidationError(std::string("vocabulary is missing special token ") +
                            kSpecials[i] + " at id " + std::to_string(i));
    }
  }

  std::ifstream mf(merges_path);
  if (!mf) throw IoError("cannot open merges file: " + merges_path);
  std::size_t line_no = 0;
  while (std::getline(mf, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::size_t sep = line.find(' ');
    if (sep == std::string::npos || sep == 0 || sep + 1 >= line.size()) {
      throw ValidationError("merges file line " + std::to_string(line_no) +
                            ": expected \"left right\"");
    }
    vocab.merges.emplace_back(line.substr(0, sep), line.substr(sep + 1));
  }
  vocab.rebuild_index();
  for (const auto& [l, r] : vocab.merges) {
    if (vocab.id_of(l + r) == SubwordVocab::kUnk && l + r != kSpecials[3]) {
      throw ValidationError("merge output \"" + l + r + "\" missing from vocabulary");
    }
  }
  return vocab;
}

std::size_t IndicatorVocab::id_of(const std::string& word) const {
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (words[i] == word) return i;
  }
  throw ContractError("indicator vocabulary does not contain word \"" + word + "\"");
}

const std::string& IndicatorVocab::word_of(std::size_t id) const {
  if (id >= words.size()) {
    throw ContractError("indicator vocabulary id " + std::to_string(id) + " out of range");
  }
  return words[id];
}

IndicatorVocab build_indicator_vocab(const std::vector<std::vector<std::string>>& phrases) {
  IndicatorVocab vocab;
  for (const auto& phrase : phrases) {
    for (const auto& word : phrase) {
      if (std::find(vocab.words.begin(), vocab.words.end(), word) == vocab.words.end()) {
        vocab.words.push_back(word);
      }
    }
  }
  return vocab;
}

}  // namespace iiht
