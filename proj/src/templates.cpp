#include "iiht/templates.hpp"

#include <fstream>
#include <map>
#include <sstream>

#include "iiht/errors.hpp"

namespace iiht {

namespace {

std::vector<std::string> split_words(const std::string& text) {
  std::vector<std::string> words;
  std::istringstream in(text);
  std::string w;
  while (in >> w) words.push_back(w);
  return words;
}

std::string join_words(const std::vector<std::string>& words) {
  std::string out;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (i) out += ' ';
    out += words[i];
  }
  return out;
}

}  // namespace

IndicatorTemplates::IndicatorTemplates(std::vector<std::string> indicator_names,
                                       std::vector<std::string> state_names)
    : indicator_names_(std::move(indicator_names)),
      state_names_(std::move(state_names)) {
  const std::size_t t_count = indicator_names_.size();
  const std::size_t m_count = state_names_.size();
  if (t_count == 0 || m_count == 0) {
    throw ContractError("templates: need at least one indicator and one state");
  }
  phrases_.resize(t_count);
  sentences_.resize(t_count);
  for (std::size_t t = 0; t < t_count; ++t) {
    phrases_[t].resize(m_count);
    sentences_[t].resize(m_count);
    const std::string& name = indicator_names_[t];
    for (std::size_t m = 0; m < m_count; ++m) {
      std::vector<std::string> phrase = split_words(name);
      phrase.push_back(state_names_[m]);
      phrases_[t][m] = std::move(phrase);
      const std::string& state = state_names_[m];
      if (state == "negative") {
        sentences_[t][m] = "no " + name + " is seen .";
      } else if (state == "positive") {
        sentences_[t][m] = name + " is present .";
      } else if (state == "uncertain") {
        sentences_[t][m] = name + " cannot be excluded .";
      } else {
        sentences_[t][m] = name + " is " + state + " .";
      }
    }
  }
}

const std::string& IndicatorTemplates::indicator_name(std::size_t t) const {
  if (t >= indicator_names_.size()) {
    throw ContractError("templates: indicator id " + std::to_string(t) + " out of range");
  }
  return indicator_names_[t];
}

const std::string& IndicatorTemplates::state_name(std::size_t m) const {
  if (m >= state_names_.size()) {
    throw ContractError("templates: state id " + std::to_string(m) + " out of range");
  }
  return state_names_[m];
}

std::size_t IndicatorTemplates::indicator_id(const std::string& name) const {
  for (std::size_t t = 0; t < indicator_names_.size(); ++t) {
    if (indicator_names_[t] == name) return t;
  }
  throw ContractError("templates: unknown indicator \"" + name + "\"");
}

std::size_t IndicatorTemplates::state_id(const std::string& name) const {
  for (std::size_t m = 0; m < state_names_.size(); ++m) {
    if (state_names_[m] == name) return m;
  }
  throw ContractError("templates: unknown state \"" + name + "\"");
}

void IndicatorTemplates::check_ids(std::size_t t, std::size_t m) const {
  if (t >= indicator_count() || m >= state_count()) {
    throw ContractError("templates: pair (" + std::to_string(t) + "," +
                        std::to_string(m) + ") out of range");
  }
}

const std::vector<std::string>& IndicatorTemplates::phrase(std::size_t t,
                                                           std::size_t m) const {
  check_ids(t, m);
  return phrases_[t][m];
}

const std::string& IndicatorTemplates::sentence(std::size_t t, std::size_t m) const {
  check_ids(t, m);
  return sentences_[t][m];
}

std::vector<std::vector<std::string>> IndicatorTemplates::all_phrases() const {
  std::vector<std::vector<std::string>> out;
  for (const auto& per_indicator : phrases_) {
    for (const auto& phrase : per_indicator) out.push_back(phrase);
  }
  return out;
}

IndicatorTemplates IndicatorTemplates::rebuild(
    std::vector<std::string> indicator_names, std::vector<std::string> state_names,
    std::vector<std::vector<std::string>> sentences) {
  IndicatorTemplates out(std::move(indicator_names), std::move(state_names));
  if (sentences.size() != out.indicator_count()) {
    throw ContractError("templates: sentence table has wrong indicator count");
  }
  for (const auto& per_indicator : sentences) {
    if (per_indicator.size() != out.state_count()) {
      throw ContractError("templates: sentence table has wrong state count");
    }
  }
  out.sentences_ = std::move(sentences);
  return out;
}

IndicatorTemplates default_templates() {
  return IndicatorTemplates(
      {"cardiomediastinal silhouette", "pneumothorax", "granuloma", "consolidation",
       "pleural effusion", "pneumonia", "lung opacity", "pulmonary edema",
       "cardiomegaly", "atelectasis", "fracture"},
      {"uncertain", "negative", "positive"});
}

void save_templates(const IndicatorTemplates& templates, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write templates file: " + path);
  for (std::size_t t = 0; t < templates.indicator_count(); ++t) {
    for (std::size_t m = 0; m < templates.state_count(); ++m) {
      out << t << "|" << m << "|" << join_words(templates.phrase(t, m)) << "|"
          << templates.sentence(t, m) << "\n";
    }
  }
}

IndicatorTemplates load_templates(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open templates file: " + path);

  // Phrase convention: indicator words followed by the state word, so names
  // are recoverable from the file without extra columns.
  std::map<std::size_t, std::string> names;
  std::map<std::size_t, std::string> states;
  std::map<std::pair<std::size_t, std::size_t>,
           std::pair<std::vector<std::string>, std::string>>
      entries;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= line.size(); ++i) {
      if (i == line.size() || line[i] == '|') {
        fields.push_back(line.substr(start, i - start));
        start = i + 1;
      }
    }
    if (fields.size() != 4) {
      throw ValidationError("templates line " + std::to_string(line_no) +
                            ": expected 4 |-separated fields");
    }
    const std::size_t t = static_cast<std::size_t>(std::stoull(fields[0]));
    const std::size_t m = static_cast<std::size_t>(std::stoull(fields[1]));
    std::vector<std::string> phrase = split_words(fields[2]);
    if (phrase.size() < 2) {
      throw ValidationError("templates line " + std::to_string(line_no) +
                            ": phrase needs indicator words plus a state word");
    }
    const std::string state = phrase.back();
    const std::string name =
        join_words(std::vector<std::string>(phrase.begin(), phrase.end() - 1));
    if (auto it = names.find(t); it != names.end() && it->second != name) {
      throw ValidationError("templates line " + std::to_string(line_no) +
                            ": indicator " + std::to_string(t) + " renamed");
    }
    if (auto it = states.find(m); it != states.end() && it->second != state) {
      throw ValidationError("templates line " + std::to_string(line_no) + ": state " +
                            std::to_string(m) + " renamed");
    }
    names[t] = name;
    states[m] = state;
    entries[{t, m}] = {std::move(phrase), fields[3]};
  }
  if (names.empty()) throw ValidationError("templates file is empty: " + path);

  const std::size_t t_count = names.rbegin()->first + 1;
  const std::size_t m_count = states.rbegin()->first + 1;
  std::vector<std::string> name_list(t_count), state_list(m_count);
  for (std::size_t t = 0; t < t_count; ++t) {
    auto it = names.find(t);
    if (it == names.end()) {
      throw ValidationError("templates file skips indicator id " + std::to_string(t));
    }
    name_list[t] = it->second;
  }
  for (std::size_t m = 0; m < m_count; ++m) {
    auto it = states.find(m);
    if (it == states.end()) {
      throw ValidationError("templates file skips state id " + std::to_string(m));
    }
    state_list[m] = it->second;
  }

  IndicatorTemplates templates(name_list, state_list);
  for (std::size_t t = 0; t < t_count; ++t) {
    for (std::size_t m = 0; m < m_count; ++m) {
      auto it = entries.find({t, m});
      if (it == entries.end()) {
        throw ValidationError("templates file is missing pair (" + std::to_string(t) +
                              "," + std::to_string(m) + ")");
      }
    }
  }
  // Keep the file's exact sentences; phrases already match by construction
  // of the name/state columns.
  std::vector<std::vector<std::string>> sentences(t_count,
                                                  std::vector<std::string>(m_count));
  for (auto& [key, value] : entries) sentences[key.first][key.second] = value.second;
  return IndicatorTemplates::rebuild(name_list, state_list, std::move(sentences));
}

}  // namespace iiht
