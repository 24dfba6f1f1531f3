#include "persona/store.hpp"

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "persona/error.hpp"
#include "persona/templates.hpp"
#include "persona/util.hpp"

namespace fs = std::filesystem;

namespace persona {

void write_text_atomic(const std::string& path, const std::string& text) {
  const fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  const fs::path tmp = target.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(Errc::MissingArtifact, "cannot write " + tmp.string());
    out << text;
    if (!out) throw Error(Errc::MissingArtifact, "write failed: " + tmp.string());
  }
  fs::rename(tmp, target);
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::MissingArtifact, "missing artifact " + path);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_jsonl(const std::string& path, const std::vector<nlohmann::json>& rows) {
  std::string text;
  for (const auto& r : rows) {
    text += r.dump();
    text += '\n';
  }
  write_text_atomic(path, text);
}

std::vector<nlohmann::json> read_jsonl(const std::string& path) {
  const std::string text = read_text(path);
  std::vector<nlohmann::json> rows;
  std::size_t lineno = 0;
  for (const auto& line : split_lines(text)) {
    ++lineno;
    if (trim(line).empty()) continue;
    auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded()) throw Error(Errc::FormatError, path + ":" + std::to_string(lineno) + ": invalid JSON");
    rows.push_back(std::move(j));
  }
  return rows;
}

void write_json(const std::string& path, const nlohmann::json& value) { write_text_atomic(path, value.dump(2) + "\n"); }

nlohmann::json read_json(const std::string& path) {
  auto j = nlohmann::json::parse(read_text(path), nullptr, false);
  if (j.is_discarded()) throw Error(Errc::FormatError, path + ": invalid JSON");
  return j;
}

void throw_schema_error(const std::string& path, std::size_t row, const std::exception& e) {
  throw Error(Errc::FormatError, path + ":" + std::to_string(row) + ": " + e.what());
}

std::string file_digest(const std::string& path) { return sha256_hex(read_text(path)); }

std::string json_digest(const nlohmann::json& value) { return sha256_hex(value.dump()); }

std::string timestamp_now() {
  std::time_t t = 0;
  if (const char* epoch = std::getenv("SOURCE_DATE_EPOCH"); epoch && *epoch) {
    t = static_cast<std::time_t>(std::strtoll(epoch, nullptr, 10));
  } else {
    t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  }
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// ---------------------------------------------------------------------------

void to_json(nlohmann::json& j, const CandidateSet& c) {
  j = {{"prompt_id", c.prompt_id}, {"status", c.status}, {"error", c.error}, {"cots", c.cots}, {"candidates", c.candidates}};
}

void from_json(const nlohmann::json& j, CandidateSet& c) {
  c.prompt_id = j.at("prompt_id").get<std::string>();
  c.status = j.value("status", "ok");
  c.error = j.value("error", "");
  c.cots = j.value("cots", std::vector<CoT>{});
  c.candidates = j.value("candidates", std::vector<Candidate>{});
}

void to_json(nlohmann::json& j, const FinalistRecord& f) {
  j = {{"prompt_id", f.prompt_id},
       {"finalist_ids", f.finalist_ids},
       {"window", {{"start", f.window_start}, {"range", f.window_range}, {"ids", f.window_ids}}},
       {"diagnostics", {{"farthest", f.farthest}, {"cluster_of", f.cluster_of}, {"farthest_score", f.farthest_score}}}};
}

void from_json(const nlohmann::json& j, FinalistRecord& f) {
  f.prompt_id = j.at("prompt_id").get<std::string>();
  f.finalist_ids = j.at("finalist_ids").get<std::vector<std::string>>();
  const auto& w = j.at("window");
  f.window_start = w.at("start").get<std::size_t>();
  f.window_range = w.at("range").get<double>();
  f.window_ids = w.value("ids", std::vector<std::string>{});
  if (j.contains("diagnostics")) {
    const auto& d = j["diagnostics"];
    f.farthest = d.value("farthest", "sum");
    f.cluster_of = d.value("cluster_of", std::map<std::string, std::size_t>{});
    f.farthest_score = d.value("farthest_score", std::map<std::string, double>{});
  }
}

// ---------------------------------------------------------------------------

const std::vector<std::string>& stage_names() {
  static const std::vector<std::string> names = {"personas", "prompts",  "candidates", "finalists",
                                                 "pairs",    "prefixes", "folds",      "eval"};
  return names;
}

void to_json(nlohmann::json& j, const StageManifest& m) {
  j = {{"stage", m.stage},
       {"input_hashes", m.input_hashes},
       {"config_hash", m.config_hash},
       {"completed_keys", m.completed_keys},
       {"created_at", m.created_at}};
}

void from_json(const nlohmann::json& j, StageManifest& m) {
  m.stage = j.at("stage").get<std::string>();
  m.input_hashes = j.at("input_hashes").get<std::map<std::string, std::string>>();
  m.config_hash = j.at("config_hash").get<std::string>();
  m.completed_keys = j.at("completed_keys").get<std::set<std::string>>();
  m.created_at = j.value("created_at", "");
}

void save_manifest(const std::string& path, const StageManifest& m) { write_json(path, nlohmann::json(m)); }

StageManifest load_manifest(const std::string& path) {
  const std::string text = read_text(path);
  auto j = nlohmann::json::parse(text, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw Error(Errc::CorruptManifest, path + ": not a JSON object");
  StageManifest m;
  try {
    m = j.get<StageManifest>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::CorruptManifest, path + ": " + e.what());
  }
  const auto& names = stage_names();
  if (std::find(names.begin(), names.end(), m.stage) == names.end()) {
    throw Error(Errc::CorruptManifest, path + ": unknown stage " + m.stage);
  }
  return m;
}

ResumePlan resume_plan(const StageManifest& manifest, const std::string& stage,
                       const std::map<std::string, std::string>& input_hashes, const std::string& config_hash,
                       const std::vector<std::string>& keys) {
  if (manifest.stage != stage) {
    throw Error(Errc::CorruptManifest, "manifest is for stage " + manifest.stage + ", not " + stage);
  }
  ResumePlan plan;
  if (manifest.config_hash != config_hash || manifest.input_hashes != input_hashes) {
    plan.stale = true;
    plan.warning = stage + ": config or inputs changed since the last run; recomputing every key";
    plan.pending = keys;
    return plan;
  }
  for (const auto& k : keys) {
    if (!manifest.completed_keys.count(k)) plan.pending.push_back(k);
  }
  return plan;
}

// ---------------------------------------------------------------------------

DatasetBundle load_bundle(const std::string& dir) {
  DatasetBundle b;
  b.catalog = load_catalog(dir + "/catalog.json");
  b.prompts = read_records<PromptRecord>(dir + "/prompts.jsonl");
  b.pairs = read_records<PreferencePair>(dir + "/pairs.jsonl");
  if (fs::exists(dir + "/prefixes.jsonl")) b.prefixes = read_records<Prefix>(dir + "/prefixes.jsonl");
  if (fs::exists(dir + "/folds.json")) {
    try {
      b.folds = read_json(dir + "/folds.json").get<std::vector<Fold>>();
    } catch (const nlohmann::json::exception& e) {
      throw Error(Errc::FormatError, dir + "/folds.json: " + e.what());
    }
  }
  return b;
}

namespace {

void violate(ValidationReport& r, std::string kind, std::string subject, std::string detail) {
  r.violations.push_back({std::move(kind), std::move(subject), std::move(detail)});
}

}  // namespace

ValidationReport validate_folds(const std::vector<Fold>& folds, const Catalog& catalog) {
  ValidationReport r;
  std::map<std::string, int> test_count;
  for (const auto& p : catalog.personas) test_count[p.id] = 0;
  for (const auto& f : folds) {
    std::set<std::string> train(f.train_persona_ids.begin(), f.train_persona_ids.end());
    std::set<std::string> test(f.test_persona_ids.begin(), f.test_persona_ids.end());
    for (const auto& id : test) {
      if (train.count(id)) violate(r, "fold_overlap", id, "fold " + std::to_string(f.fold_id));
      if (!test_count.count(id)) {
        violate(r, "dangling_persona", id, "fold " + std::to_string(f.fold_id));
        continue;
      }
      ++test_count[id];
    }
    if (train.size() + test.size() != catalog.personas.size()) {
      violate(r, "fold_incomplete", "fold " + std::to_string(f.fold_id),
              std::to_string(train.size() + test.size()) + " of " + std::to_string(catalog.personas.size()));
    }
  }
  for (const auto& [id, n] : test_count) {
    if (n != 1) violate(r, "fold_coverage", id, "tested in " + std::to_string(n) + " folds");
  }
  return r;
}

ValidationReport validate_bundle(const DatasetBundle& b, const BundleShape& shape) {
  ValidationReport r = validate_catalog(b.catalog);
  if (!shape.expect_full_catalog) r.warnings.clear();

  std::map<std::string, const PromptRecord*> prompts;
  for (const auto& p : b.prompts) {
    if (!prompts.emplace(p.id, &p).second) violate(r, "duplicate_prompt", p.id, "");
    for (const auto& pid : p.persona_ids) {
      if (!b.catalog.find_persona(pid)) violate(r, "dangling_persona", p.id, pid);
    }
    if (p.kind == QuestionKind::Divergent && !p.axis_id) violate(r, "missing_axis", p.id, "");
  }

  struct Counts {
    std::size_t train_personal = 0, train_divergent = 0, test_personal = 0, test_divergent = 0;
  };
  std::map<std::string, Counts> counts;
  std::set<std::pair<std::string, std::string>> seen;
  for (const auto& pair : b.pairs) {
    auto it = prompts.find(pair.prompt_id);
    if (it == prompts.end()) {
      violate(r, "dangling_prompt", pair.prompt_id, pair.persona_id);
      continue;
    }
    const auto& prompt = *it->second;
    if (!b.catalog.find_persona(pair.persona_id)) violate(r, "dangling_persona", pair.prompt_id, pair.persona_id);
    const auto active = prompt.active_persona_ids();
    if (std::find(active.begin(), active.end(), pair.persona_id) == active.end()) {
      violate(r, "persona_not_on_prompt", pair.prompt_id, pair.persona_id);
    }
    if (pair.split != prompt.split || pair.kind != prompt.kind) violate(r, "split_mismatch", pair.prompt_id, pair.persona_id);
    if (!seen.insert({pair.prompt_id, pair.persona_id}).second) violate(r, "duplicate_pair", pair.prompt_id, pair.persona_id);
    if (pair.y_w.empty() || pair.y_l.empty() || pair.y_w_id == pair.y_l_id) {
      violate(r, "degenerate_pair", pair.prompt_id, pair.persona_id);
    }
    auto& c = counts[pair.persona_id];
    const bool train = pair.split == Split::Train;
    const bool personal = pair.kind == QuestionKind::Personal;
    ++(train ? (personal ? c.train_personal : c.train_divergent) : (personal ? c.test_personal : c.test_divergent));
  }

  for (const auto& p : b.prefixes) {
    if (!b.catalog.find_persona(p.persona_id)) violate(r, "dangling_persona", "prefix " + to_string(p.kind), p.persona_id);
  }
  if (!b.folds.empty()) {
    for (auto& v : validate_folds(b.folds, b.catalog).violations) r.violations.push_back(std::move(v));
  }

  if (shape.check_counts) {
    const std::size_t half_personal = shape.personal_per_persona / 2;
    const std::size_t half_divergent = shape.divergent_per_axis / 2;
    for (const auto& persona : b.catalog.personas) {
      std::size_t axes = 0;
      for (const auto& m : persona.memberships) {
        if (b.catalog.find_axis(m.axis)) ++axes;
      }
      const Counts c = counts.count(persona.id) ? counts.at(persona.id) : Counts{};
      auto check = [&](const char* what, std::size_t got, std::size_t want) {
        if (got != want) {
          violate(r, "count_mismatch", persona.id,
                  std::string(what) + " " + std::to_string(got) + " (expected " + std::to_string(want) + ")");
        }
      };
      check("train personal", c.train_personal, half_personal);
      check("test personal", c.test_personal, half_personal);
      // Multi-axis personas keep one axis' worth of divergent training questions
      // and every test question.
      check("train divergent", c.train_divergent, axes ? half_divergent : 0);
      check("test divergent", c.test_divergent, half_divergent * axes);
    }
  }
  if (shape.expect_full_catalog && (b.catalog.personas.size() != 50 || b.catalog.axes.size() != 11)) {
    r.warnings.push_back("catalog has " + std::to_string(b.catalog.personas.size()) + " personas over " +
                         std::to_string(b.catalog.axes.size()) + " axes");
  }
  return r;
}

// ---------------------------------------------------------------------------

void to_json(nlohmann::json& j, const DpoRow& r) {
  j = {{"prompt", r.prompt}, {"chosen", r.chosen}, {"rejected", r.rejected}, {"persona_id", r.persona_id},
       {"prompt_id", r.prompt_id}};
}

void from_json(const nlohmann::json& j, DpoRow& r) {
  r.prompt = j.at("prompt").get<std::string>();
  r.chosen = j.at("chosen").get<std::string>();
  r.rejected = j.at("rejected").get<std::string>();
  r.persona_id = j.at("persona_id").get<std::string>();
  r.prompt_id = j.value("prompt_id", "");
}

std::vector<DpoRow> export_dpo(const DatasetBundle& b, PrefixKind kind, const std::optional<Fold>& fold) {
  std::set<std::string> include;
  if (fold) {
    include.insert(fold->train_persona_ids.begin(), fold->train_persona_ids.end());
  } else {
    for (const auto& p : b.catalog.personas) include.insert(p.id);
  }
  const bool needs_text = kind != PrefixKind::None && kind != PrefixKind::Random;
  std::map<std::string, const Prefix*> prefix_of;
  for (const auto& p : b.prefixes) {
    if (p.kind == kind) prefix_of[p.persona_id] = &p;
  }
  std::vector<DpoRow> rows;
  for (const auto& pair : b.pairs) {
    if (pair.split != Split::Train || !include.count(pair.persona_id)) continue;
    std::string prompt = pair.prompt;
    if (needs_text) {
      auto it = prefix_of.find(pair.persona_id);
      if (it == prefix_of.end()) throw Error(Errc::MissingPrefix, pair.persona_id + " has no " + to_string(kind) + " prefix");
      prompt = augment_prompt(kind, it->second->text, pair.prompt);
    }
    rows.push_back({std::move(prompt), pair.y_w, pair.y_l, pair.persona_id, pair.prompt_id});
  }
  return rows;
}

}  // namespace persona
