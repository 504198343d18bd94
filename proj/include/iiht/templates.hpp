#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace iiht {

// Phrase and sentence templates for every (indicator, state) pair. Phrases
// feed the expansion encoder as word sequences; sentences are the textual
// realization used to assemble reports. Editable via a plain text file.
class IndicatorTemplates {
 public:
  IndicatorTemplates(std::vector<std::string> indicator_names,
                     std::vector<std::string> state_names);

  std::size_t indicator_count() const { return indicator_names_.size(); }
  std::size_t state_count() const { return state_names_.size(); }

  const std::string& indicator_name(std::size_t t) const;
  const std::string& state_name(std::size_t m) const;
  std::size_t indicator_id(const std::string& name) const;  // ContractError when absent
  std::size_t state_id(const std::string& name) const;

  // Word sequence for (t, m), e.g. {"pleural","effusion","negative"}.
  const std::vector<std::string>& phrase(std::size_t t, std::size_t m) const;
  // Full sentence for (t, m), lowercase, space separated.
  const std::string& sentence(std::size_t t, std::size_t m) const;

  std::vector<std::vector<std::string>> all_phrases() const;

  // Construction with explicit sentences (file loading path).
  static IndicatorTemplates rebuild(std::vector<std::string> indicator_names,
                                    std::vector<std::string> state_names,
                                    std::vector<std::vector<std::string>> sentences);

 private:
  void check_ids(std::size_t t, std::size_t m) const;

  std::vector<std::string> indicator_names_;
  std::vector<std::string> state_names_;
  std::vector<std::vector<std::vector<std::string>>> phrases_;  // [t][m]
  std::vector<std::vector<std::string>> sentences_;             // [t][m]
};

// The default eleven indicators with states {uncertain, negative, positive}.
IndicatorTemplates default_templates();

// Line format: "indicator_id|state_id|phrase words...|template sentence".
void save_templates(const IndicatorTemplates& templates, const std::string& path);
IndicatorTemplates load_templates(const std::string& path);

}  // namespace iiht
