#include "ctxcal/dataset.hpp"

#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "ctxcal/error.hpp"

namespace ctxcal {

using nlohmann::json;

std::string to_string(TaskKind kind) {
  return kind == TaskKind::kClassification ? "classification" : "generation";
}

TaskKind parse_task_kind(std::string_view s) {
  if (s == "classification") return TaskKind::kClassification;
  if (s == "generation") return TaskKind::kGeneration;
  throw DatasetError("unknown task_kind '" + std::string(s) + "'");
}

void TaskDataset::validate() const {
  std::set<std::string> ids;
  for (const auto& item : items) {
    if (item.id.empty()) throw DatasetError("dataset item with an empty id");
    if (!ids.insert(item.id).second) throw DatasetError("duplicate item id '" + item.id + "'");
    if (kind == TaskKind::kClassification && !label_space.index_of(item.gold)) {
      throw DatasetError("item '" + item.id + "' has label '" + item.gold + "' outside the label space");
    }
  }
  if (kind == TaskKind::kClassification && label_space.size() < 2) {
    throw DatasetError("classification dataset needs at least two labels");
  }
  std::set<std::size_t> seen;
  for (const auto* split : {&train, &validation, &test}) {
    for (auto i : *split) {
      if (i >= items.size()) throw DatasetError("split index out of range");
      if (!seen.insert(i).second) throw DatasetError("item '" + items[i].id + "' appears in more than one split");
    }
  }
  if (test.empty()) throw DatasetError("dataset '" + name + "' has an empty test split");
  if (cf_template.find("{cf}") == std::string::npos) throw DatasetError("cf_template must contain {cf}");
}

std::vector<LabeledExample> TaskDataset::train_pool() const {
  std::vector<LabeledExample> out;
  out.reserve(train.size());
  for (auto i : train) out.push_back({items[i].text, items[i].gold});
  return out;
}

namespace {

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DatasetError("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

LabelSpace parse_label_space(const json& j) {
  std::vector<Label> labels;
  for (const auto& l : j) {
    if (l.is_string()) {
      labels.push_back({l.get<std::string>(), " " + l.get<std::string>()});
    } else {
      const auto name = l.at("name").get<std::string>();
      labels.push_back({name, l.value("token", " " + name)});
    }
  }
  return LabelSpace(std::move(labels));
}

}  // namespace

TaskDataset TaskDataset::load(const std::filesystem::path& manifest) {
  TaskDataset ds;
  try {
    const auto m = json::parse(read_file(manifest));
    ds.name = m.value("name", manifest.stem().string());
    ds.kind = parse_task_kind(m.at("task_kind").get<std::string>());
    ds.cf_template = m.value("cf_template", ds.cf_template);
    ds.answer_prefix = m.value("answer_prefix", ds.answer_prefix);
    if (m.contains("label_space")) ds.label_space = parse_label_space(m.at("label_space"));

    const auto data_path = manifest.parent_path() / m.at("data").get<std::string>();
    const auto gold_key = ds.kind == TaskKind::kClassification ? "label" : "answer";
    std::istringstream lines(read_file(data_path));
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(lines, line)) {
      ++lineno;
      if (line.empty() || line == "\r") continue;
      try {
        const auto r = json::parse(line);
        ds.items.push_back({r.at("id").get<std::string>(), r.at("text").get<std::string>(),
                            r.at(gold_key).get<std::string>()});
      } catch (const json::exception& e) {
        throw DatasetError(data_path.string() + ":" + std::to_string(lineno) + ": " + e.what());
      }
    }

    std::map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < ds.items.size(); ++i) index.emplace(ds.items[i].id, i);
    const auto& splits = m.at("splits");
    for (auto [key, target] : {std::pair{"train", &ds.train}, std::pair{"validation", &ds.validation},
                               std::pair{"test", &ds.test}}) {
      if (!splits.contains(key)) continue;
      for (const auto& id : splits.at(key)) {
        const auto it = index.find(id.get<std::string>());
        if (it == index.end()) throw DatasetError(std::string(key) + " split names unknown item '" + id.get<std::string>() + "'");
        target->push_back(it->second);
      }
    }
  } catch (const json::exception& e) {
    throw DatasetError(manifest.string() + ": " + e.what());
  }
  ds.validate();
  return ds;
}

}  // namespace ctxcal
