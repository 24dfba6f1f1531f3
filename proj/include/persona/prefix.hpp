#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "persona/catalog.hpp"
#include "persona/judge.hpp"
#include "persona/provider.hpp"
#include "persona/rouge.hpp"

namespace persona {

enum class PrefixKind { None, Random, Tag, Fewshot, Persona, PersonaGpt4, Name, PersonaGold };

std::string to_string(PrefixKind k);
PrefixKind parse_prefix_kind(const std::string& s);
const std::vector<PrefixKind>& all_prefix_kinds();

enum class ShotStrategy { Random, Bm25, Embedding };

std::string to_string(ShotStrategy s);
ShotStrategy parse_shot_strategy(const std::string& s);

struct Prefix {
  std::string persona_id;
  PrefixKind kind = PrefixKind::None;
  std::string text;
  std::vector<std::string> shots_used;  // prompt ids
  ShotStrategy shot_strategy = ShotStrategy::Random;
  std::optional<std::string> generator_model;
  std::size_t word_count = 0;
};

void to_json(nlohmann::json& j, const Prefix& p);
void from_json(const nlohmann::json& j, Prefix& p);

std::string tag_for(std::size_t persona_index);

/// Default shot count: 2 for fewshot, 4 for the inferred personas, 0 otherwise.
int default_shots(PrefixKind kind);

/// Okapi BM25 over rouge_tokens. Returns one score per document.
std::vector<double> bm25_scores(const std::vector<std::string>& documents, const std::string& query, double k1 = 1.5,
                                double b = 0.75);

/// Pick n shots from `pool` (the persona's training pairs). Random is seeded;
/// bm25 and embedding rank pool questions against `query`; ties go to the lower
/// prompt id.
std::vector<const PreferencePair*> select_shots(ShotStrategy strategy, const std::vector<const PreferencePair*>& pool,
                                                std::size_t n, const std::string& query, std::uint64_t seed,
                                                Provider* provider);

struct PrefixOptions {
  ShotStrategy strategy = ShotStrategy::Random;
  int n_shots = 0;  // 0 = default_shots(kind)
  std::uint64_t seed = 0;
  std::string inference_model;
  std::string judge_model;
};

/// Build one prefix. `train_pairs` are the persona's training pairs; `index` is
/// the persona's position in the catalog (used for tags). Kinds none, random,
/// tag and name never touch the provider.
Prefix build_prefix(PrefixKind kind, const Persona& persona, std::size_t index,
                    const std::vector<const PreferencePair*>& train_pairs, Provider* provider,
                    const PrefixOptions& opts = {});

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;
  std::size_t n = 0;
};

MeanStd mean_std(const std::vector<double>& xs);

struct PrefixQualityColumn {
  PrefixKind kind;
  MeanStd r1;
  std::optional<MeanStd> r1_random;  // nullopt when no other persona exists
  MeanStd words;
};

struct PrefixQualityReport {
  std::vector<PrefixQualityColumn> columns;
};

/// ROUGE-1 F1 of each prefix against its own persona's gold and against the gold
/// of a seeded random other persona, plus word counts. Columns: fewshot, persona,
/// persona_gpt4, persona_gold; other kinds carry no persona text and are skipped.
PrefixQualityReport prefix_quality_report(const std::vector<Prefix>& prefixes, const std::map<std::string, Prefix>& golds,
                                          std::uint64_t seed);

/// Rows "R1", "R1 (random)", "# words"; one column per kind.
std::string prefix_quality_csv(const PrefixQualityReport& r);

}  // namespace persona
