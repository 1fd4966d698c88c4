#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "ctxcal/prompt.hpp"

namespace ctxcal {

enum class TaskKind { kClassification, kGeneration };

std::string to_string(TaskKind kind);
TaskKind parse_task_kind(std::string_view s);

struct DatasetItem {
  std::string id;
  std::string text;
  /// Label name (classification) or answer span (generation).
  std::string gold;
};

/// A task with its splits. Split vectors hold indices into `items`.
///
/// On disk: a JSON manifest
///
///   {"name": ..., "task_kind": "classification" | "generation",
///    "data": "items.jsonl",
///    "label_space": ["Positive", ...] or [{"name": ..., "token": ...}, ...],
///    "splits": {"train": [ids], "validation": [ids], "test": [ids]},
///    "cf_template": "{cf}", "answer_prefix": " "}
///
/// plus a JSONL file of {id, text, label} or {id, text, answer} records.
struct TaskDataset {
  std::string name;
  TaskKind kind = TaskKind::kClassification;
  LabelSpace label_space;
  std::vector<DatasetItem> items;
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
  std::vector<std::size_t> test;
  /// Where the content-free string goes in the test slot, e.g. "{cf} was born in".
  std::string cf_template = "{cf}";
  /// Generation answers are scored through `answer_prefix + answer`.
  std::string answer_prefix = " ";

  /// Throws DatasetError on duplicate ids, out-of-range or overlapping
  /// splits, gold labels outside the label space, or an empty test split.
  void validate() const;

  /// Training pool as labeled examples, in split order.
  std::vector<LabeledExample> train_pool() const;
  const DatasetItem& at(std::size_t index) const { return items.at(index); }

  static TaskDataset load(const std::filesystem::path& manifest);
};

}  // namespace ctxcal
