#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "ctxcal/prompt.hpp"

namespace ctxcal {

/// A format plus the optional descriptive fields carried in corpus files.
struct FormatRecord {
  PromptFormat format;
  std::vector<std::string> label_names;
  std::string note;
};

/// Line-delimited JSON format corpus. One object per line with the keys
/// `format_id`, `preamble`, `example_template`, `test_template`,
/// `separator`; `label_names` and `note` are optional. Blank lines and lines
/// starting with `#` are skipped; unknown keys are ignored.
class FormatCorpus {
 public:
  FormatCorpus() = default;
  explicit FormatCorpus(std::vector<FormatRecord> records);

  static FormatCorpus load(const std::filesystem::path& path);
  static FormatCorpus parse(std::string_view text);

  const std::vector<FormatRecord>& records() const { return records_; }
  const FormatRecord* find(std::string_view format_id) const;
  /// Throws ConfigError for unknown ids.
  const PromptFormat& require(std::string_view format_id) const;

 private:
  std::vector<FormatRecord> records_;
};

std::string to_jsonl_line(const FormatRecord& record);

}  // namespace ctxcal
