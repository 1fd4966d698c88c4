#include "ctxcal/format_corpus.hpp"

#include <fstream>
#include <sstream>
#include <unordered_set>

#include <json.hpp>

#include "ctxcal/error.hpp"

namespace ctxcal {

using nlohmann::json;

FormatCorpus::FormatCorpus(std::vector<FormatRecord> records) : records_(std::move(records)) {
  std::unordered_set<std::string> ids;
  for (const auto& r : records_) {
    if (r.format.format_id.empty()) throw TemplateError("format record without format_id");
    if (!ids.insert(r.format.format_id).second) {
      throw TemplateError("duplicate format_id '" + r.format.format_id + "'");
    }
    r.format.validate();
  }
}

FormatCorpus FormatCorpus::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open format corpus " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

FormatCorpus FormatCorpus::parse(std::string_view text) {
  std::vector<FormatRecord> records;
  std::istringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos || line.front() == '#') continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw TemplateError("format corpus line " + std::to_string(lineno) + ": " + e.what());
    }
    FormatRecord r;
    try {
      r.format.format_id = j.at("format_id").get<std::string>();
      r.format.preamble = j.value("preamble", "");
      r.format.example_template = j.at("example_template").get<std::string>();
      r.format.test_template = j.at("test_template").get<std::string>();
      r.format.separator = j.value("separator", "\n\n");
      r.label_names = j.value("label_names", std::vector<std::string>{});
      r.note = j.value("note", "");
    } catch (const json::exception& e) {
      throw TemplateError("format corpus line " + std::to_string(lineno) + ": " + e.what());
    }
    records.push_back(std::move(r));
  }
  return FormatCorpus(std::move(records));
}

const FormatRecord* FormatCorpus::find(std::string_view format_id) const {
  for (const auto& r : records_) {
    if (r.format.format_id == format_id) return &r;
  }
  return nullptr;
}

const PromptFormat& FormatCorpus::require(std::string_view format_id) const {
  if (const auto* r = find(format_id)) return r->format;
  throw ConfigError("unknown format_id '" + std::string(format_id) + "'");
}

std::string to_jsonl_line(const FormatRecord& record) {
  nlohmann::ordered_json j;
  j["format_id"] = record.format.format_id;
  j["preamble"] = record.format.preamble;
  j["example_template"] = record.format.example_template;
  j["test_template"] = record.format.test_template;
  j["separator"] = record.format.separator;
  if (!record.label_names.empty()) j["label_names"] = record.label_names;
  if (!record.note.empty()) j["note"] = record.note;
  return j.dump();
}

}  // namespace ctxcal
