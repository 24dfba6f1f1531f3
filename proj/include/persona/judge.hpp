#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "persona/catalog.hpp"
#include "persona/promptgen.hpp"
#include "persona/provider.hpp"
#include "persona/sampler.hpp"

namespace persona {

/// One pairwise question for the judge. Outputs are held in canonical order;
/// rendering exchanges them when `swap` is set.
struct JudgePair {
  std::string instruction;
  std::string input;
  std::string output_a;
  std::string output_b;
  bool swap = false;
};

struct Verdict {
  bool a_better = false;
  std::string rationale;

  bool operator==(const Verdict&) const = default;
};

/// Map a verdict about the rendered order back to canonical order (and back).
Verdict unswap(const Verdict& v, bool swap);

GenRequest render_judge_batch(const std::vector<JudgePair>& pairs, std::size_t batch = 5);

/// Verdicts found for examples 0..n-1; objects are matched in order of
/// appearance. A missing or malformed object leaves nullopt.
std::vector<std::optional<Verdict>> scan_judge_response(const std::string& text, std::size_t n);
/// Like scan_judge_response but all n are required; MalformedVerdictError otherwise.
std::vector<Verdict> parse_judge_response(const std::string& text, std::size_t n);

struct MatchRecord {
  int round = 0;
  std::string a_id;  // canonical order
  std::string b_id;
  bool swap = false;
  bool a_better = false;  // canonical order
  std::string winner_id;
  std::string rationale;
  int attempts = 0;
};

struct PreferencePair {
  std::string prompt_id;
  std::string persona_id;
  std::string prompt;  // question text x
  QuestionKind kind = QuestionKind::Personal;
  Split split = Split::Unassigned;
  std::string y_w;
  std::string y_l;
  std::string y_w_id;
  std::string y_l_id;
  std::vector<std::string> candidates;  // bracket order
  std::vector<MatchRecord> bracket;
  std::string judge_rationale;
};

void to_json(nlohmann::json& j, const MatchRecord& m);
void from_json(const nlohmann::json& j, MatchRecord& m);
void to_json(nlohmann::json& j, const PreferencePair& p);
void from_json(const nlohmann::json& j, PreferencePair& p);

struct TournamentJob {
  Persona persona;
  PromptRecord prompt;
  std::vector<Candidate> finalists;
};

struct TournamentFailure {
  std::string prompt_id;
  std::string persona_id;
  std::string reason;
  std::vector<MatchRecord> bracket;  // matches resolved before the failure
};

void to_json(nlohmann::json& j, const TournamentFailure& f);
void from_json(const nlohmann::json& j, TournamentFailure& f);

struct JudgeOptions {
  std::uint64_t seed = 0;
  std::size_t batch = 5;
  /// Re-queries of a malformed verdict before the tournament is abandoned.
  int max_retries = 3;
  std::size_t workers = 1;
  std::string model;
  double temperature = 1.0;
};

struct LabelingResult {
  std::vector<PreferencePair> pairs;  // job order, failed jobs omitted
  std::vector<TournamentFailure> failures;
  std::size_t requests = 0;
  std::size_t matches = 0;
};

/// Single elimination over each job's finalists. Seeded bracket order and
/// per-match a/b swap; matches of the same round across all jobs are batched
/// into judge requests of at most `batch` pairs. k finalists take k-1 matches;
/// an odd entrant out gets a bye.
LabelingResult label_tournaments(Provider& provider, const std::vector<TournamentJob>& jobs, const JudgeOptions& opts = {});

/// One tournament; TournamentIncomplete if any match stays unresolved.
PreferencePair run_tournament(Provider& provider, const Persona& persona, const PromptRecord& prompt,
                              const std::vector<Candidate>& finalists, const JudgeOptions& opts = {});

struct WinRateQuestion {
  std::string id;
  std::string persona_name;
  std::string text;
};

struct WinRateSystem {
  std::string name;
  std::map<std::string, std::string> generations;  // question id -> text
};

struct WinRateMatrix {
  std::vector<std::string> systems;
  std::vector<std::vector<double>> rate;  // NaN on the diagonal and for empty cells
  std::vector<std::vector<std::size_t>> compared;
  std::vector<std::vector<std::size_t>> failed;
};

/// Row system i's win rate against column system j under the personal judge.
WinRateMatrix win_rate_matrix(Provider& provider, const std::vector<WinRateSystem>& systems,
                              const std::vector<WinRateQuestion>& questions, const JudgeOptions& opts = {});

std::string win_rate_csv(const WinRateMatrix& m);

}  // namespace persona
