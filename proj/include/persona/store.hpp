#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "persona/catalog.hpp"
#include "persona/eval.hpp"
#include "persona/filter.hpp"
#include "persona/judge.hpp"
#include "persona/prefix.hpp"
#include "persona/promptgen.hpp"
#include "persona/sampler.hpp"

namespace persona {

// ---------------------------------------------------------------------------
// Files. Objects serialize with sorted keys, so output bytes depend only on content.

/// Write to a sibling temp file, then rename over `path`.
void write_text_atomic(const std::string& path, const std::string& text);
std::string read_text(const std::string& path);

void write_jsonl(const std::string& path, const std::vector<nlohmann::json>& rows);
/// MissingArtifact if absent, FormatError on an unparseable line.
std::vector<nlohmann::json> read_jsonl(const std::string& path);

void write_json(const std::string& path, const nlohmann::json& value);
nlohmann::json read_json(const std::string& path);

template <typename T>
void write_records(const std::string& path, const std::vector<T>& records) {
  std::vector<nlohmann::json> rows;
  rows.reserve(records.size());
  for (const auto& r : records) rows.emplace_back(r);
  write_jsonl(path, rows);
}

[[noreturn]] void throw_schema_error(const std::string& path, std::size_t row, const std::exception& e);

template <typename T>
std::vector<T> read_records(const std::string& path) {
  const auto rows = read_jsonl(path);
  std::vector<T> out;
  out.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    try {
      out.push_back(rows[i].get<T>());
    } catch (const nlohmann::json::exception& e) {
      throw_schema_error(path, i + 1, e);
    }
  }
  return out;
}

std::string file_digest(const std::string& path);
std::string json_digest(const nlohmann::json& value);

/// ISO-8601 UTC; honours SOURCE_DATE_EPOCH for reproducible artifacts.
std::string timestamp_now();

// ---------------------------------------------------------------------------
// Stage artifacts

/// One record per prompt in candidates.jsonl.
struct CandidateSet {
  std::string prompt_id;
  std::string status = "ok";  // ok | failed
  std::string error;
  std::vector<CoT> cots;
  std::vector<Candidate> candidates;
};

void to_json(nlohmann::json& j, const CandidateSet& c);
void from_json(const nlohmann::json& j, CandidateSet& c);

struct FinalistRecord {
  std::string prompt_id;
  std::vector<std::string> finalist_ids;
  std::size_t window_start = 0;
  double window_range = 0.0;
  std::vector<std::string> window_ids;
  std::string farthest = "sum";
  std::map<std::string, std::size_t> cluster_of;
  std::map<std::string, double> farthest_score;
};

void to_json(nlohmann::json& j, const FinalistRecord& f);
void from_json(const nlohmann::json& j, FinalistRecord& f);

// ---------------------------------------------------------------------------
// Manifests and resume

struct StageManifest {
  std::string stage;
  std::map<std::string, std::string> input_hashes;
  std::string config_hash;
  std::set<std::string> completed_keys;
  std::string created_at;
};

void to_json(nlohmann::json& j, const StageManifest& m);
void from_json(const nlohmann::json& j, StageManifest& m);

const std::vector<std::string>& stage_names();

void save_manifest(const std::string& path, const StageManifest& m);
/// CorruptManifest on unreadable content or an unknown stage.
StageManifest load_manifest(const std::string& path);

struct ResumePlan {
  std::vector<std::string> pending;  // in the order of `keys`
  bool stale = false;
  std::string warning;
};

/// Keys still to compute. When the config or any input hash differs from the
/// manifest, every key is pending and the plan is marked stale.
ResumePlan resume_plan(const StageManifest& manifest, const std::string& stage,
                       const std::map<std::string, std::string>& input_hashes, const std::string& config_hash,
                       const std::vector<std::string>& keys);

// ---------------------------------------------------------------------------
// Bundle

struct DatasetBundle {
  Catalog catalog;
  std::vector<PromptRecord> prompts;
  std::vector<PreferencePair> pairs;
  std::vector<Prefix> prefixes;
  std::vector<Fold> folds;
};

/// Reads catalog.json, prompts.jsonl, pairs.jsonl and, when present,
/// prefixes.jsonl and folds.json from a data directory.
DatasetBundle load_bundle(const std::string& dir);

struct BundleShape {
  /// Questions generated per persona (personal) and per axis (divergent).
  std::size_t personal_per_persona = 100;
  std::size_t divergent_per_axis = 100;
  /// Warn when the catalog is not the full 50-persona / 11-axis set.
  bool expect_full_catalog = false;
  /// Check per-persona pair counts at all.
  bool check_counts = true;
};

ValidationReport validate_bundle(const DatasetBundle& b, const BundleShape& shape = {});

/// Partition properties of a fold set over the given personas.
ValidationReport validate_folds(const std::vector<Fold>& folds, const Catalog& catalog);

struct DpoRow {
  std::string prompt;
  std::string chosen;
  std::string rejected;
  std::string persona_id;
  std::string prompt_id;
};

void to_json(nlohmann::json& j, const DpoRow& r);
void from_json(const nlohmann::json& j, DpoRow& r);

/// Training rows for the trainer: train-split pairs, prompt augmented with the
/// persona's prefix of `kind`; restricted to the fold's train personas if given.
std::vector<DpoRow> export_dpo(const DatasetBundle& b, PrefixKind kind, const std::optional<Fold>& fold = std::nullopt);

}  // namespace persona
