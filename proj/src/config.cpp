#include "ctxcal/config.hpp"

#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "ctxcal/error.hpp"

namespace ctxcal {

using nlohmann::json;

namespace {

void reject_unknown(const json& j, const std::set<std::string>& known, const std::string& where) {
  for (const auto& [key, value] : j.items()) {
    if (!known.count(key)) throw ConfigError("unknown key '" + key + "' in " + where);
  }
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

MockLMConfig parse_mock(const json& j) {
  MockLMConfig m;
  if (j.contains("base_weights")) m.base_weights = j.at("base_weights").get<std::map<std::string, double>>();
  m.majority_strength = j.value("majority_strength", m.majority_strength);
  m.recency_decay = j.value("recency_decay", m.recency_decay);
  m.noise_seed = j.value("noise_seed", m.noise_seed);
  m.noise_scale = j.value("noise_scale", m.noise_scale);
  if (j.contains("lexicon")) m.lexicon = j.at("lexicon").get<std::map<std::string, std::string>>();
  m.evidence_strength = j.value("evidence_strength", m.evidence_strength);
  m.stop_token = j.value("stop_token", m.stop_token);
  return m;
}

BackendConfig parse_backend(const json& j, const std::filesystem::path& base) {
  BackendConfig b;
  b.kind = j.value("kind", b.kind);
  if (b.kind == "mock") {
    reject_unknown(j,
                   {"kind", "base_weights", "majority_strength", "recency_decay", "noise_seed", "noise_scale",
                    "lexicon", "evidence_strength", "stop_token"},
                   "backend");
    b.mock = parse_mock(j);
  } else if (b.kind == "http") {
    reject_unknown(j,
                   {"kind", "base_url", "path", "model", "auth_header", "auth_scheme", "timeout_ms", "max_parallel",
                    "top_k", "max_retries", "backoff_initial_ms", "backoff_max_ms", "max_requests_per_second",
                    "fixture", "fixture_mode"},
                   "backend");
    auto& h = b.http;
    h.base_url = j.value("base_url", h.base_url);
    h.path = j.value("path", h.path);
    h.model = j.value("model", h.model);
    h.auth_header = j.value("auth_header", h.auth_header);
    h.auth_scheme = j.value("auth_scheme", h.auth_scheme);
    h.timeout_ms = j.value("timeout_ms", h.timeout_ms);
    h.max_parallel = j.value("max_parallel", h.max_parallel);
    h.top_k = j.value("top_k", h.top_k);
    h.max_retries = j.value("max_retries", h.max_retries);
    h.backoff_initial_ms = j.value("backoff_initial_ms", h.backoff_initial_ms);
    h.backoff_max_ms = j.value("backoff_max_ms", h.backoff_max_ms);
    h.max_requests_per_second = j.value("max_requests_per_second", h.max_requests_per_second);
    if (j.contains("fixture")) b.fixture = resolve(base, j.at("fixture").get<std::string>());
    const auto mode = j.value("fixture_mode", b.fixture.empty() ? "live" : "replay");
    if (mode == "live") {
      b.fixture_mode = FixtureMode::kLive;
    } else if (mode == "record") {
      b.fixture_mode = FixtureMode::kRecord;
    } else if (mode == "replay") {
      b.fixture_mode = FixtureMode::kReplay;
    } else {
      throw ConfigError("fixture_mode must be live, record or replay");
    }
  } else {
    throw ConfigError("backend kind must be \"mock\" or \"http\", got '" + b.kind + "'");
  }
  return b;
}

}  // namespace

RunConfig parse_run_config(std::string_view text, const std::filesystem::path& base) {
  RunConfig c;
  try {
    const auto j = json::parse(text);
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    reject_unknown(j,
                   {"backend", "dataset", "formats", "out", "format_ids", "shots", "training_sets", "permutations",
                    "permutation_cap", "calibration_modes", "cf_inputs", "cf_input_sets", "seed", "budget",
                    "parallel", "top_k", "label_top_k", "missing_token", "max_tokens", "stop", "item_parallel"},
                   "config");
    if (j.contains("backend")) c.backend = parse_backend(j.at("backend"), base);
    if (j.contains("dataset")) c.dataset = resolve(base, j.at("dataset").get<std::string>());
    if (j.contains("formats")) c.formats = resolve(base, j.at("formats").get<std::string>());
    if (j.contains("out")) c.out = resolve(base, j.at("out").get<std::string>());

    auto& s = c.sweep;
    auto& axes = s.axes;
    axes.format_ids = j.value("format_ids", axes.format_ids);
    axes.shots = j.value("shots", axes.shots);
    axes.training_sets = j.value("training_sets", axes.training_sets);
    axes.permutation_cap = j.value("permutation_cap", axes.permutation_cap);
    if (j.contains("permutations")) {
      const auto& p = j.at("permutations");
      if (p.is_string() && p == "one") {
        axes.permutations = PermutationPolicy::kOne;
      } else if (p.is_string() && p == "all") {
        axes.permutations = PermutationPolicy::kAll;
      } else if (p.is_object() && p.contains("sample")) {
        axes.permutations = PermutationPolicy::kSample;
        axes.permutation_samples = p.at("sample").get<std::size_t>();
      } else {
        throw ConfigError("permutations must be \"one\", \"all\" or {\"sample\": N}");
      }
    }
    if (j.contains("calibration_modes")) {
      axes.modes.clear();
      for (const auto& m : j.at("calibration_modes")) axes.modes.push_back(parse_calibration_mode(m.get<std::string>()));
    }
    if (j.contains("cf_inputs") && j.contains("cf_input_sets")) {
      throw ConfigError("give either cf_inputs or cf_input_sets, not both");
    }
    if (j.contains("cf_inputs")) {
      axes.cf_input_sets = {CfInputSet{"default", j.at("cf_inputs").get<std::vector<std::string>>()}};
    }
    if (j.contains("cf_input_sets")) {
      axes.cf_input_sets.clear();
      std::set<std::string> ids;
      for (const auto& set : j.at("cf_input_sets")) {
        CfInputSet cf{set.at("id").get<std::string>(), set.at("inputs").get<std::vector<std::string>>()};
        if (!ids.insert(cf.id).second) throw ConfigError("duplicate cf_input_sets id '" + cf.id + "'");
        axes.cf_input_sets.push_back(std::move(cf));
      }
    }
    s.seed = j.value("seed", s.seed);
    s.budget = j.value("budget", s.budget);
    s.parallel = j.value("parallel", s.parallel);
    s.eval.top_k = j.value("top_k", s.eval.top_k);
    s.eval.parallel = j.value("item_parallel", s.eval.parallel);
    s.eval.label_probs.top_k = j.value("label_top_k", s.eval.label_probs.top_k);
    const auto missing = j.value("missing_token", "error");
    if (missing == "error") {
      s.eval.label_probs.missing = MissingTokenPolicy::kError;
    } else if (missing == "epsilon") {
      s.eval.label_probs.missing = MissingTokenPolicy::kEpsilon;
    } else {
      throw ConfigError("missing_token must be \"error\" or \"epsilon\"");
    }
    s.eval.generation.max_tokens = j.value("max_tokens", s.eval.generation.max_tokens);
    s.eval.generation.stop = j.value("stop", s.eval.generation.stop);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("invalid config: ") + e.what());
  }
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str(), path.parent_path());
}

void RunConfig::validate() const {
  auto must_exist = [](const std::filesystem::path& p, const char* what) {
    if (p.empty()) throw ConfigError(std::string("config does not name a ") + what);
    if (!std::filesystem::exists(p)) throw ConfigError(std::string(what) + " not found: " + p.string());
  };
  must_exist(dataset, "dataset");
  must_exist(formats, "format corpus");
  if (backend.kind == "mock") {
    backend.mock.validate();
  } else if (backend.kind == "http") {
    if (backend.fixture_mode == FixtureMode::kReplay) {
      must_exist(backend.fixture, "fixture");
    } else if (backend.http.base_url.empty()) {
      throw ConfigError("http backend needs base_url");
    }
    if (backend.fixture_mode == FixtureMode::kRecord && backend.fixture.empty()) {
      throw ConfigError("record mode needs a fixture path");
    }
  } else {
    throw ConfigError("backend kind must be \"mock\" or \"http\"");
  }
  if (sweep.parallel == 0) throw ConfigError("parallel must be at least 1");
}

std::unique_ptr<LanguageModel> make_backend(const BackendConfig& config) {
  if (config.kind == "mock") return std::make_unique<MockLM>(config.mock);
  if (config.kind != "http") throw ConfigError("backend kind must be \"mock\" or \"http\"");
  auto http = config.http;
  if (const char* key = std::getenv(kApiKeyEnv)) http.api_key = key;
  std::unique_ptr<HttpTransport> transport;
  switch (config.fixture_mode) {
    case FixtureMode::kReplay:
      transport = std::make_unique<ReplayTransport>(config.fixture);
      break;
    case FixtureMode::kRecord:
      transport = std::make_unique<RecordingTransport>(make_live_transport(http.base_url, http.timeout_ms),
                                                       config.fixture);
      break;
    case FixtureMode::kLive:
      transport = make_live_transport(http.base_url, http.timeout_ms);
      break;
  }
  return std::make_unique<HttpBackend>(std::move(http), std::move(transport));
}

}  // namespace ctxcal
