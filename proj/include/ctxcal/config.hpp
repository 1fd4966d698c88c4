#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <string_view>

#include "ctxcal/backend.hpp"
#include "ctxcal/http_backend.hpp"
#include "ctxcal/mock_lm.hpp"
#include "ctxcal/sweep.hpp"

namespace ctxcal {

/// Name of the environment variable holding the API secret.
inline constexpr const char* kApiKeyEnv = "CTXCAL_API_KEY";

enum class FixtureMode { kLive, kRecord, kReplay };

struct BackendConfig {
  /// "mock" or "http".
  std::string kind = "mock";
  MockLMConfig mock;
  HttpBackendConfig http;
  std::filesystem::path fixture;
  FixtureMode fixture_mode = FixtureMode::kLive;
};

/// Declarative run description. Relative paths are resolved against the
/// directory of the config file.
struct RunConfig {
  BackendConfig backend;
  std::filesystem::path dataset;
  std::filesystem::path formats;
  std::filesystem::path out = "out";
  SweepOptions sweep;

  /// Throws ConfigError when referenced files are missing or the backend
  /// description is inconsistent.
  void validate() const;
};

/// Throws ConfigError on malformed JSON, wrong types or unknown keys.
RunConfig parse_run_config(std::string_view json_text, const std::filesystem::path& base_dir);
RunConfig load_run_config(const std::filesystem::path& path);

/// Builds the configured backend. The API key is read from CTXCAL_API_KEY.
std::unique_ptr<LanguageModel> make_backend(const BackendConfig& config);

}  // namespace ctxcal
