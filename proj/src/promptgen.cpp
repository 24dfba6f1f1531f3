#include "persona/promptgen.hpp"

#include <algorithm>
#include <cctype>
#include <set>
#include <sstream>

#include "persona/error.hpp"
#include "persona/rouge.hpp"
#include "persona/templates.hpp"
#include "persona/util.hpp"

namespace persona {

std::string to_string(QuestionKind k) { return k == QuestionKind::Personal ? "personal" : "divergent"; }

std::string to_string(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Test: return "test";
    case Split::Unassigned: break;
  }
  return "unassigned";
}

QuestionKind parse_question_kind(const std::string& s) {
  if (s == "personal") return QuestionKind::Personal;
  if (s == "divergent") return QuestionKind::Divergent;
  throw Error(Errc::FormatError, "unknown question kind: " + s);
}

Split parse_split(const std::string& s) {
  if (s == "train") return Split::Train;
  if (s == "test") return Split::Test;
  if (s == "unassigned" || s.empty()) return Split::Unassigned;
  throw Error(Errc::FormatError, "unknown split: " + s);
}

std::vector<std::string> PromptRecord::active_persona_ids() const {
  if (split != Split::Train || train_excluded_persona_ids.empty()) return persona_ids;
  std::vector<std::string> out;
  for (const auto& p : persona_ids) {
    if (std::find(train_excluded_persona_ids.begin(), train_excluded_persona_ids.end(), p) ==
        train_excluded_persona_ids.end()) {
      out.push_back(p);
    }
  }
  return out;
}

void to_json(nlohmann::json& j, const PromptRecord& r) {
  j = {{"id", r.id},
       {"owner", r.owner},
       {"persona_ids", r.persona_ids},
       {"text", r.text},
       {"kind", to_string(r.kind)},
       {"split", to_string(r.split)}};
  if (r.axis_id) j["axis_id"] = *r.axis_id;
  if (!r.train_excluded_persona_ids.empty()) j["train_excluded_persona_ids"] = r.train_excluded_persona_ids;
}

void from_json(const nlohmann::json& j, PromptRecord& r) {
  r.id = j.at("id").get<std::string>();
  r.owner = j.at("owner").get<std::string>();
  r.persona_ids = j.at("persona_ids").get<std::vector<std::string>>();
  r.text = j.at("text").get<std::string>();
  r.kind = parse_question_kind(j.at("kind").get<std::string>());
  r.split = parse_split(j.value("split", std::string()));
  r.axis_id = j.contains("axis_id") ? std::optional(j.at("axis_id").get<std::string>()) : std::nullopt;
  r.train_excluded_persona_ids = j.value("train_excluded_persona_ids", std::vector<std::string>{});
}

std::string prompt_id(const std::string& owner, QuestionKind kind, const std::string& text) {
  return "q_" + short_digest({"prompt", owner, to_string(kind), normalize_text(text)});
}

std::vector<std::string> parse_question_list(const std::string& text) {
  std::vector<std::string> out;
  for (const auto& raw : split_lines(text)) {
    std::string line = trim(raw);
    std::size_t i = 0;
    if (!line.empty() && (line[0] == '-' || line[0] == '*')) {
      i = 1;
    } else {
      while (i < line.size() && std::isdigit(static_cast<unsigned char>(line[i]))) ++i;
      if (i == 0 || i >= line.size() || (line[i] != '.' && line[i] != ')')) continue;
      ++i;
    }
    std::string q = trim(std::string_view(line).substr(i));
    if (!q.empty()) out.push_back(std::move(q));
  }
  return out;
}

bool QuestionDeduper::accept(const std::string& text) {
  const std::string norm = normalize_text(text);
  if (norm.empty()) return false;
  for (std::size_t i = 0; i < accepted_.size(); ++i) {
    if (normalized_[i] == norm) return false;
    if (rouge(text, accepted_[i]).f1 > threshold_) return false;
  }
  accepted_.push_back(text);
  normalized_.push_back(norm);
  return true;
}

namespace {

int request_budget(int n, const PromptGenOptions& opts) {
  if (opts.max_requests > 0) return opts.max_requests;
  return 4 * ((n + opts.batch - 1) / opts.batch) + 2;
}

template <typename Filter>
std::vector<std::string> collect_unique(Provider& provider, const std::string& prompt, int n,
                                        const PromptGenOptions& opts, const std::string& owner, Filter&& keep) {
  QuestionDeduper dedup(opts.dedup_rouge);
  const int budget = request_budget(n, opts);
  for (int r = 0; r < budget && static_cast<int>(dedup.accepted().size()) < n; ++r) {
    GenRequest req;
    req.messages = {{"user", prompt}};
    req.model = opts.model;
    req.seed = static_cast<std::int64_t>(derive_seed(opts.seed, owner + "#" + std::to_string(r)) >> 1);
    for (const auto& q : parse_question_list(provider.chat(req))) {
      if (static_cast<int>(dedup.accepted().size()) >= n) break;
      if (keep(q)) dedup.accept(q);
    }
  }
  if (static_cast<int>(dedup.accepted().size()) < n) {
    throw Error(Errc::GenerationBudgetExceeded, owner + ": " + std::to_string(dedup.accepted().size()) + "/" +
                                                    std::to_string(n) + " unique questions after " +
                                                    std::to_string(budget) + " requests");
  }
  return dedup.accepted();
}

}  // namespace

std::vector<PromptRecord> gen_personal_prompts(Provider& provider, const Persona& persona, int n,
                                               const std::vector<std::string>& axis_names,
                                               const PromptGenOptions& opts) {
  if (n < 1) throw Error(Errc::PreconditionFailed, "gen_personal_prompts: n must be >= 1");
  const std::string prompt = templates::personal_questions(persona.name, opts.batch, axis_names);
  const auto questions = collect_unique(provider, prompt, n, opts, persona.id, [](const std::string&) { return true; });
  std::vector<PromptRecord> out;
  for (const auto& q : questions) {
    PromptRecord r;
    r.id = prompt_id(persona.id, QuestionKind::Personal, q);
    r.owner = persona.id;
    r.persona_ids = {persona.id};
    r.text = q;
    r.kind = QuestionKind::Personal;
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<PromptRecord> gen_divergent_prompts(Provider& provider, const Axis& axis,
                                                const std::vector<const Persona*>& personas, int n,
                                                const PromptGenOptions& opts) {
  if (personas.size() < 2) throw Error(Errc::PreconditionFailed, "divergent questions need >= 2 personas");
  if (n < 1) throw Error(Errc::PreconditionFailed, "gen_divergent_prompts: n must be >= 1");
  std::vector<std::string> names, person_categories, ids;
  for (const Persona* p : personas) {
    names.push_back(p->name);
    ids.push_back(p->id);
    for (const auto& m : p->memberships) {
      if (m.axis == axis.id) person_categories.push_back(p->name + " (" + m.sub_category + ")");
    }
  }
  const std::string prompt = templates::divergent_questions(names, axis.name, person_categories, opts.batch);
  auto no_leak = [&](const std::string& q) {
    return std::none_of(axis.sub_categories.begin(), axis.sub_categories.end(),
                        [&](const std::string& cat) { return icontains(q, cat); });
  };
  const auto questions = collect_unique(provider, prompt, n, opts, axis.id, no_leak);
  std::vector<PromptRecord> out;
  for (const auto& q : questions) {
    PromptRecord r;
    r.id = prompt_id(axis.id, QuestionKind::Divergent, q);
    r.owner = axis.id;
    r.persona_ids = ids;
    r.text = q;
    r.kind = QuestionKind::Divergent;
    r.axis_id = axis.id;
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<PromptRecord> split_prompts(std::vector<PromptRecord> records, const SplitOptions& opts) {
  std::map<std::pair<std::string, int>, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < records.size(); ++i) {
    groups[{records[i].owner, static_cast<int>(records[i].kind)}].push_back(i);
  }
  for (auto& [key, idx] : groups) {
    if (idx.size() % 2 != 0) {
      throw Error(Errc::OddGroupSize, key.first + "/" + to_string(static_cast<QuestionKind>(key.second)) + " has " +
                                          std::to_string(idx.size()) + " records");
    }
    // Shuffle by content id so the assignment does not depend on input order.
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return records[a].id < records[b].id; });
    Rng rng(derive_seed(opts.seed, "split:" + key.first + ":" + std::to_string(key.second)));
    rng.shuffle(idx);
    for (std::size_t k = 0; k < idx.size(); ++k) {
      records[idx[k]].split = k < idx.size() / 2 ? Split::Train : Split::Test;
      records[idx[k]].train_excluded_persona_ids.clear();
    }
  }

  // Multi-axis cap on training divergent questions.
  std::map<std::string, std::vector<std::size_t>> train_div_by_persona;
  std::map<std::string, std::set<std::string>> axes_by_persona;
  std::map<std::string, std::size_t> axis_train_size;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    if (r.kind != QuestionKind::Divergent || r.split != Split::Train) continue;
    ++axis_train_size[r.owner];
    for (const auto& p : r.persona_ids) {
      train_div_by_persona[p].push_back(i);
      axes_by_persona[p].insert(r.owner);
    }
  }
  for (auto& [persona_id, idx] : train_div_by_persona) {
    const auto& axes = axes_by_persona[persona_id];
    if (axes.size() < 2) continue;
    std::size_t cap = opts.divergent_train_cap;
    if (cap == 0) {
      for (const auto& a : axes) cap = std::max(cap, axis_train_size[a]);
    }
    if (idx.size() <= cap) continue;
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return records[a].id < records[b].id; });
    Rng rng(derive_seed(opts.seed, "cap:" + persona_id));
    rng.shuffle(idx);
    for (std::size_t k = cap; k < idx.size(); ++k) records[idx[k]].train_excluded_persona_ids.push_back(persona_id);
  }
  for (auto& r : records) std::sort(r.train_excluded_persona_ids.begin(), r.train_excluded_persona_ids.end());
  return records;
}

std::vector<OverlapRow> prompt_overlap_report(const std::vector<PromptRecord>& train,
                                              const std::vector<PromptRecord>& test, double threshold) {
  if (train.empty() || test.empty()) throw Error(Errc::PreconditionFailed, "overlap report needs both splits");
  std::map<std::string, std::vector<const PromptRecord*>> train_by_persona, test_by_persona;
  for (const auto& r : train) {
    for (const auto& p : r.active_persona_ids()) train_by_persona[p].push_back(&r);
  }
  for (const auto& r : test) {
    for (const auto& p : r.persona_ids) test_by_persona[p].push_back(&r);
  }
  std::vector<OverlapRow> rows;
  for (const auto& [persona_id, tests] : test_by_persona) {
    OverlapRow row;
    row.persona_id = persona_id;
    const auto& trains = train_by_persona[persona_id];
    for (const PromptRecord* t : tests) {
      double best = 0.0;
      for (const PromptRecord* tr : trains) best = std::max(best, rouge(t->text, tr->text).f1);
      row.max_similarity.push_back(best);
      row.histogram[std::min<std::size_t>(9, static_cast<std::size_t>(best * 10.0))]++;
      if (best > threshold) ++row.above_threshold;
      row.mean += best;
    }
    row.mean /= static_cast<double>(tests.size());
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string overlap_csv(const std::vector<OverlapRow>& rows) {
  std::ostringstream out;
  out << "persona_id,n_test,mean_max_rouge1,above_0.7";
  for (int b = 0; b < 10; ++b) out << ",bin_" << b;
  out << '\n';
  for (const auto& r : rows) {
    out << r.persona_id << ',' << r.max_similarity.size() << ',' << r.mean << ',' << r.above_threshold;
    for (auto c : r.histogram) out << ',' << c;
    out << '\n';
  }
  return out.str();
}

}  // namespace persona
