#pragma once

#include <array>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "persona/catalog.hpp"
#include "persona/provider.hpp"

namespace persona {

enum class QuestionKind { Personal, Divergent };
enum class Split { Unassigned, Train, Test };

std::string to_string(QuestionKind k);
std::string to_string(Split s);
QuestionKind parse_question_kind(const std::string& s);
Split parse_split(const std::string& s);

struct PromptRecord {
  std::string id;
  std::string owner;  // persona id (personal) or axis id (divergent)
  std::vector<std::string> persona_ids;
  std::string text;
  QuestionKind kind = QuestionKind::Personal;
  Split split = Split::Unassigned;
  std::optional<std::string> axis_id;
  /// Personas for whom this training question is dropped by the multi-axis cap.
  std::vector<std::string> train_excluded_persona_ids;

  /// Personas that receive a preference pair for this question.
  std::vector<std::string> active_persona_ids() const;
};

void to_json(nlohmann::json& j, const PromptRecord& r);
void from_json(const nlohmann::json& j, PromptRecord& r);

std::string prompt_id(const std::string& owner, QuestionKind kind, const std::string& text);

/// Parse a numbered or bulleted list ("1.", "1)", "-" leaders).
std::vector<std::string> parse_question_list(const std::string& text);

struct PromptGenOptions {
  int batch = 20;
  /// Maximum provider requests; 0 selects 4 * ceil(n / batch) + 2.
  int max_requests = 0;
  std::uint64_t seed = 0;
  double dedup_rouge = 0.9;
  std::string model;
};

/// Accumulates unique questions: exact normalized match or ROUGE-1 F1 above the
/// threshold against an accepted question rejects the newcomer.
class QuestionDeduper {
 public:
  explicit QuestionDeduper(double threshold) : threshold_(threshold) {}
  bool accept(const std::string& text);
  const std::vector<std::string>& accepted() const { return accepted_; }

 private:
  double threshold_;
  std::vector<std::string> accepted_;
  std::vector<std::string> normalized_;
};

std::vector<PromptRecord> gen_personal_prompts(Provider& provider, const Persona& persona, int n,
                                               const std::vector<std::string>& axis_names,
                                               const PromptGenOptions& opts = {});

std::vector<PromptRecord> gen_divergent_prompts(Provider& provider, const Axis& axis,
                                                const std::vector<const Persona*>& personas, int n,
                                                const PromptGenOptions& opts = {});

struct SplitOptions {
  std::uint64_t seed = 0;
  /// Per-persona cap on training divergent questions for multi-axis personas;
  /// 0 uses the size of one axis' training half.
  std::size_t divergent_train_cap = 0;
};

/// Half train / half test per (owner, kind) group, then the multi-axis cap.
std::vector<PromptRecord> split_prompts(std::vector<PromptRecord> records, const SplitOptions& opts);

struct OverlapRow {
  std::string persona_id;
  std::vector<double> max_similarity;  // one per test prompt
  std::array<std::size_t, 10> histogram{};
  std::size_t above_threshold = 0;
  double mean = 0.0;
};

std::vector<OverlapRow> prompt_overlap_report(const std::vector<PromptRecord>& train,
                                              const std::vector<PromptRecord>& test, double threshold = 0.7);
std::string overlap_csv(const std::vector<OverlapRow>& rows);

}  // namespace persona
