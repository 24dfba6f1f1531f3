#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "persona/catalog.hpp"
#include "persona/error.hpp"
#include "persona/eval.hpp"
#include "persona/filter.hpp"
#include "persona/prefix.hpp"
#include "persona/provider.hpp"
#include "persona/store.hpp"

namespace persona {

struct StageParams {
  int n_personal = 100;
  int n_divergent = 100;
  int question_batch = 20;
  int cots = 5;
  int per_cot = 10;
  std::size_t window = 20;
  std::size_t k = 4;
  FarthestMode farthest = FarthestMode::Sum;
  std::size_t judge_batch = 5;
  int judge_retries = 3;
  double judge_temperature = 1.0;
  std::vector<PrefixKind> prefix_kinds = {PrefixKind::None,    PrefixKind::Random,      PrefixKind::Tag,
                                          PrefixKind::Fewshot, PrefixKind::Persona,     PrefixKind::PersonaGpt4,
                                          PrefixKind::Name,    PrefixKind::PersonaGold};
  ShotStrategy shot_strategy = ShotStrategy::Random;
  int fewshot_shots = 2;
  int persona_shots = 4;
  int folds = 5;
  Aggregation aggregation = Aggregation::Mean;
  std::string chat_template = "raw";
};

struct RunConfig {
  std::string scale = "full";  // full | desk
  std::uint64_t seed = 0;
  std::string data_dir = "data";
  /// Source catalog; empty uses the built-in reference catalog.
  std::string catalog_path;
  std::size_t max_axes = 0;
  std::size_t max_per_axis = 0;
  std::size_t workers = 4;
  bool mock = false;
  bool mock_outage = false;
  /// Persist every provider response under <data_dir>/cache.
  bool cache = true;
  HttpConfig http;
  StageParams params;

  static RunConfig full();
  static RunConfig desk();
  static RunConfig preset(const std::string& scale);
};

void to_json(nlohmann::json& j, const RunConfig& c);
/// Missing fields keep the values already in `c`.
void merge_config(const nlohmann::json& j, RunConfig& c);

/// ConfigError on invalid values; scale=full pins the published constants.
void validate_config(const RunConfig& c);

/// Digest of the fields that affect a stage's outputs.
std::string stage_config_hash(const RunConfig& c, const std::string& stage);

/// Process exit status for a failure: 2 for provider failures, 1 otherwise.
int exit_code_for(const Error& e);

struct StageReport {
  std::string stage;
  nlohmann::json counts = nlohmann::json::object();
  std::vector<std::string> warnings;
  std::size_t provider_calls = 0;
};

class Pipeline {
 public:
  /// Builds the provider chain from the config (mock or HTTP, optionally cached).
  explicit Pipeline(RunConfig config, std::ostream* log = nullptr);
  /// Uses the given provider as is.
  Pipeline(RunConfig config, std::shared_ptr<Provider> provider, std::ostream* log = nullptr);

  const RunConfig& config() const { return config_; }
  Provider& provider() { return *provider_; }
  std::string path(const std::string& name) const;

  StageReport catalog();
  StageReport prompts();
  StageReport candidates();
  StageReport finalists();
  StageReport pairs();
  StageReport prefixes();
  StageReport folds();
  StageReport eval();
  StageReport reports();

  /// Every stage in order, then bundle validation.
  std::vector<StageReport> run_all();
  ValidationReport validate() const;

  /// Provider calls that reached the underlying service (cache misses).
  std::size_t upstream_calls() const;

 private:
  StageReport begin(const std::string& stage) const;
  void finish(StageReport& r, const std::map<std::string, std::string>& inputs, const std::set<std::string>& keys);
  Catalog load_catalog_artifact() const;
  void note(const std::string& msg) const;

  RunConfig config_;
  std::shared_ptr<Provider> provider_;
  std::shared_ptr<MockProvider> mock_;
  std::shared_ptr<CachingProvider> caching_;
  std::shared_ptr<ResponseStore> cache_store_;
  std::shared_ptr<Provider> upstream_;
  std::ostream* log_ = nullptr;
  std::size_t calls_at_begin_ = 0;
};

}  // namespace persona
