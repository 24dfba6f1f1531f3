#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "persona/catalog.hpp"
#include "persona/judge.hpp"
#include "persona/prefix.hpp"
#include "persona/promptgen.hpp"
#include "persona/provider.hpp"

namespace persona {

enum class Aggregation { Mean, Sum };

std::string to_string(Aggregation a);
Aggregation parse_aggregation(const std::string& s);

struct ScoringJob {
  std::string model_endpoint;
  PrefixKind prefix_kind = PrefixKind::None;
  Aggregation aggregation = Aggregation::Mean;
  std::string dataset_ref;
  /// raw | zephyr | chatml
  std::string chat_template_id = "raw";
  /// Per-question shot retrieval for fewshot prefixes.
  ShotStrategy shot_strategy = ShotStrategy::Random;
  int n_shots = 2;
  std::uint64_t seed = 0;
  std::size_t workers = 1;
};

/// Wrap a user turn in the scoring model's chat template; the completion is
/// scored after the assistant header.
std::string apply_chat_template(const std::string& template_id, const std::string& user);

/// Question text conditioned on a prefix of the given kind.
std::string augment_prompt(PrefixKind kind, const std::string& prefix_text, const std::string& question);

struct EvalResult {
  std::string persona_id;
  QuestionKind question_kind = QuestionKind::Personal;
  PrefixKind prefix_kind = PrefixKind::None;
  std::size_t n = 0;
  double correct = 0.0;
  double accuracy = 0.0;
  double ci95 = 0.0;
};

double ci95(double accuracy, std::size_t n);

/// 1 if a > b, 0.5 on a tie, else 0.
double credit(double a, double b);

/// Score y_w and y_l of every pair under the job's prefix. `prefixes` maps
/// persona id to that persona's prefix of job.prefix_kind; `shot_pool` holds
/// training pairs for per-question fewshot retrieval (bm25 / embedding).
std::vector<EvalResult> preference_accuracy(Provider& provider, const ScoringJob& job,
                                            const std::vector<PreferencePair>& pairs,
                                            const std::map<std::string, Prefix>& prefixes,
                                            const std::vector<PreferencePair>& shot_pool = {});

/// Pooled accuracy over all results.
EvalResult pool_results(const std::vector<EvalResult>& results);

std::string eval_results_csv(const std::vector<EvalResult>& results);

struct Fold {
  int fold_id = 0;
  std::vector<std::string> train_persona_ids;
  std::vector<std::string> test_persona_ids;
};

void to_json(nlohmann::json& j, const Fold& f);
void from_json(const nlohmann::json& j, Fold& f);

/// Personas are shuffled within their primary axis and dealt to folds in turn;
/// the dealing position carries over from one axis to the next so fold sizes
/// stay balanced overall.
std::vector<Fold> stratified_folds(const Catalog& catalog, int k = 5, std::uint64_t seed = 0);

struct AxisAgreement {
  std::string axis_id;
  MeanStd concentration;
};

/// Per divergent prompt: personas labeled / distinct y_w chosen; mean and std
/// over the prompts of each axis.
std::vector<AxisAgreement> agreement_per_axis(const std::vector<PreferencePair>& pairs,
                                              const std::vector<PromptRecord>& prompts);

double cohen_kappa(const std::vector<std::string>& a, const std::vector<std::string>& b);
double cohen_kappa(const std::vector<int>& a, const std::vector<int>& b);

/// Nominal Krippendorff's alpha; rows are annotators, columns items, nullopt
/// marks a missing label.
double krippendorff_alpha(const std::vector<std::vector<std::optional<std::string>>>& labels);
double krippendorff_alpha(const std::vector<std::vector<std::optional<int>>>& labels);

struct ExternalPair {
  std::string prompt;
  std::string chosen;
  std::string rejected;
};

/// RewardBench-style JSONL {prompt, chosen, rejected}; FormatError on bad rows.
std::vector<ExternalPair> load_external_pairs(const std::string& path);

struct TaxRow {
  PrefixKind prefix_kind = PrefixKind::None;
  std::string persona_id;  // empty for no prefix
  std::size_t n = 0;
  double accuracy = 0.0;
  double ci95 = 0.0;
};

/// Reward accuracy on external pairs, once without a prefix and once per given
/// prefix.
std::vector<TaxRow> alignment_tax_score(Provider& provider, const ScoringJob& job, const std::vector<ExternalPair>& pairs,
                                        const std::vector<Prefix>& prefixes = {});

std::string tax_csv(const std::vector<TaxRow>& rows);

struct LengthRow {
  QuestionKind kind = QuestionKind::Personal;
  std::string axis_id;  // "all" aggregates every axis of the kind
  MeanStd y_w;
  MeanStd y_l;
  MeanStd delta;
};

using AxisOf = std::function<std::string(const PreferencePair&)>;

/// Axis of a pair: the prompt's axis for divergent questions, the persona's
/// primary axis for personal ones.
AxisOf axis_resolver(const Catalog& catalog, const std::vector<PromptRecord>& prompts);

std::vector<LengthRow> length_stats(const std::vector<PreferencePair>& pairs, const AxisOf& axis_of);

std::string length_csv(const std::vector<LengthRow>& rows);

}  // namespace persona
