#pragma once

#include <optional>
#include <regex>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "persona/promptgen.hpp"
#include "persona/provider.hpp"

namespace persona {

struct CoT {
  std::string axis;
  std::vector<std::string> categories;
  std::string chosen_category;
  std::string response;
};

struct Candidate {
  std::string id;
  std::string prompt_id;
  std::string text;
  int cot_index = 0;
  std::string chosen_category;
  std::optional<double> reward;
  std::optional<EmbeddingVec> embedding;
};

void to_json(nlohmann::json& j, const CoT& c);
void from_json(const nlohmann::json& j, CoT& c);
void to_json(nlohmann::json& j, const Candidate& c);
void from_json(const nlohmann::json& j, Candidate& c);

/// Parse the "Axis / Categories / Chosen category / Response" format.
/// Returns nullopt on any missing field, more than eight categories, or a chosen
/// category outside the list.
std::optional<CoT> parse_cot(const std::string& text);

struct CategoryConstraint {
  std::string axis;
  std::vector<std::string> categories;
};

struct SamplerOptions {
  std::uint64_t seed = 0;
  int max_retries = 3;
  std::size_t workers = 1;
  std::string model;
};

/// `m` chain-of-thought completions for the prompt. Divergent prompts must pass
/// the axis' ground-truth categories.
std::vector<CoT> sample_cots(Provider& provider, const PromptRecord& prompt,
                             const std::optional<CategoryConstraint>& constraint, int m = 5,
                             const SamplerOptions& opts = {});

class ArtifactRules {
 public:
  explicit ArtifactRules(std::vector<std::string> patterns);
  static ArtifactRules defaults();

  const std::vector<std::string>& patterns() const { return patterns_; }
  bool matches(const std::string& text) const;
  std::string apply(const std::string& text) const;

 private:
  std::vector<std::string> patterns_;
  std::vector<std::regex> compiled_;
};

/// Remove identity-revealing artifacts. Returns `text` unchanged when no rule
/// matches; throws Errc::EmptyAfterStrip if stripping leaves nothing.
std::string strip_artifacts(const std::string& text, const ArtifactRules& rules);

/// `per_cot` responses per CoT, each conditioned on a uniformly drawn category of
/// that CoT, generated with the diverse sampling preset.
std::vector<Candidate> sample_candidates(Provider& provider, const PromptRecord& prompt, const std::vector<CoT>& cots,
                                         int per_cot, const ArtifactRules& rules, const SamplerOptions& opts = {});

}  // namespace persona
