#include "persona/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "persona/error.hpp"
#include "persona/templates.hpp"
#include "persona/util.hpp"

namespace persona {

std::string to_string(Aggregation a) { return a == Aggregation::Mean ? "mean" : "sum"; }

Aggregation parse_aggregation(const std::string& s) {
  if (s == "mean") return Aggregation::Mean;
  if (s == "sum") return Aggregation::Sum;
  throw Error(Errc::ConfigError, "aggregation must be mean|sum, got " + s);
}

std::string apply_chat_template(const std::string& template_id, const std::string& user) {
  if (template_id == "raw") return user;
  if (template_id == "zephyr") return "<|user|>\n" + user + "</s>\n<|assistant|>\n";
  if (template_id == "chatml") return "<|im_start|>user\n" + user + "<|im_end|>\n<|im_start|>assistant\n";
  throw Error(Errc::ConfigError, "unknown chat template: " + template_id);
}

std::string augment_prompt(PrefixKind kind, const std::string& prefix_text, const std::string& question) {
  switch (kind) {
    case PrefixKind::None:
    case PrefixKind::Random: return question;
    case PrefixKind::Tag: return templates::with_tag(prefix_text, question);
    case PrefixKind::Name: return templates::with_name(prefix_text, question);
    case PrefixKind::Fewshot: return templates::fewshot_query(prefix_text, question);
    case PrefixKind::Persona:
    case PrefixKind::PersonaGpt4:
    case PrefixKind::PersonaGold: return templates::with_persona(prefix_text, question);
  }
  return question;
}

double ci95(double accuracy, std::size_t n) {
  if (n == 0) return 0.0;
  return 1.96 * std::sqrt(accuracy * (1.0 - accuracy) / static_cast<double>(n));
}

double credit(double a, double b) {
  if (a > b) return 1.0;
  if (a == b) return 0.5;
  return 0.0;
}

namespace {

double aggregate(const ScoredCompletion& s, Aggregation agg) { return agg == Aggregation::Mean ? s.mean_logp : s.sum_logp; }

bool needs_prefix(PrefixKind k) { return k != PrefixKind::None && k != PrefixKind::Random; }

EvalResult finish(EvalResult r) {
  r.accuracy = r.n ? r.correct / static_cast<double>(r.n) : 0.0;
  r.ci95 = ci95(r.accuracy, r.n);
  return r;
}

}  // namespace

std::vector<EvalResult> preference_accuracy(Provider& provider, const ScoringJob& job,
                                            const std::vector<PreferencePair>& pairs,
                                            const std::map<std::string, Prefix>& prefixes,
                                            const std::vector<PreferencePair>& shot_pool) {
  const PrefixKind kind = job.prefix_kind;
  if (needs_prefix(kind)) {
    for (const auto& p : pairs) {
      auto it = prefixes.find(p.persona_id);
      if (it == prefixes.end() || it->second.kind != kind) {
        throw Error(Errc::MissingPrefix, p.persona_id + " has no " + to_string(kind) + " prefix");
      }
    }
  }
  const bool retrieve = kind == PrefixKind::Fewshot && job.shot_strategy != ShotStrategy::Random;
  std::map<std::string, std::vector<const PreferencePair*>> pool;
  if (retrieve) {
    for (const auto& p : shot_pool) pool[p.persona_id].push_back(&p);
  }

  const auto credits = parallel_map<double>(pairs.size(), job.workers, [&](std::size_t i) {
    const auto& p = pairs[i];
    if (kind == PrefixKind::Random) {
      Rng coin(derive_seed(job.seed, "coin|" + p.persona_id + "|" + p.prompt_id));
      return coin.coin() ? 1.0 : 0.0;
    }
    std::string prefix_text = needs_prefix(kind) ? prefixes.at(p.persona_id).text : std::string();
    if (retrieve) {
      std::vector<const PreferencePair*> candidates;
      for (auto* s : pool[p.persona_id]) {
        if (s->prompt_id != p.prompt_id) candidates.push_back(s);
      }
      const auto shots = select_shots(job.shot_strategy, candidates, static_cast<std::size_t>(job.n_shots), p.prompt,
                                      derive_seed(job.seed, p.prompt_id), &provider);
      std::vector<templates::Shot> qa;
      for (auto* s : shots) qa.emplace_back(s->prompt, s->y_w);
      prefix_text = templates::fewshot_prefix(qa);
    }
    const std::string prompt = apply_chat_template(job.chat_template_id, augment_prompt(kind, prefix_text, p.prompt));
    const double w = aggregate(provider.score_completion(prompt, p.y_w), job.aggregation);
    const double l = aggregate(provider.score_completion(prompt, p.y_l), job.aggregation);
    return credit(w, l);
  });

  std::map<std::pair<std::string, QuestionKind>, EvalResult> groups;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    auto& r = groups[{pairs[i].persona_id, pairs[i].kind}];
    r.persona_id = pairs[i].persona_id;
    r.question_kind = pairs[i].kind;
    r.prefix_kind = kind;
    ++r.n;
    r.correct += credits[i];
  }
  std::vector<EvalResult> out;
  for (auto& [key, r] : groups) out.push_back(finish(r));
  return out;
}

EvalResult pool_results(const std::vector<EvalResult>& results) {
  EvalResult total;
  total.persona_id = "all";
  for (const auto& r : results) {
    total.prefix_kind = r.prefix_kind;
    total.n += r.n;
    total.correct += r.correct;
  }
  return finish(total);
}

std::string eval_results_csv(const std::vector<EvalResult>& results) {
  std::ostringstream out;
  out.setf(std::ios::fixed);
  out.precision(4);
  out << "persona,question_kind,prefix,n,correct,accuracy,ci95\n";
  for (const auto& r : results) {
    out << r.persona_id << ',' << to_string(r.question_kind) << ',' << to_string(r.prefix_kind) << ',' << r.n << ','
        << r.correct << ',' << r.accuracy << ',' << r.ci95 << '\n';
  }
  return out.str();
}

// ---------------------------------------------------------------------------

void to_json(nlohmann::json& j, const Fold& f) {
  j = {{"fold_id", f.fold_id}, {"train_persona_ids", f.train_persona_ids}, {"test_persona_ids", f.test_persona_ids}};
}

void from_json(const nlohmann::json& j, Fold& f) {
  f.fold_id = j.at("fold_id").get<int>();
  f.train_persona_ids = j.at("train_persona_ids").get<std::vector<std::string>>();
  f.test_persona_ids = j.at("test_persona_ids").get<std::vector<std::string>>();
}

std::vector<Fold> stratified_folds(const Catalog& catalog, int k, std::uint64_t seed) {
  if (k < 2) throw Error(Errc::PreconditionFailed, "stratified_folds: k must be >= 2");
  std::map<std::string, int> fold_of;
  std::size_t cursor = 0;
  for (const auto& axis : catalog.axes) {
    std::vector<std::string> members;
    for (const auto& p : catalog.personas) {
      if (p.primary_axis == axis.id) members.push_back(p.id);
    }
    Rng rng(derive_seed(seed, "folds|" + axis.id));
    rng.shuffle(members);
    for (const auto& id : members) fold_of[id] = static_cast<int>(cursor++ % static_cast<std::size_t>(k));
  }
  for (const auto& p : catalog.personas) {
    if (!fold_of.count(p.id)) throw Error(Errc::PreconditionFailed, p.id + " has no primary axis");
  }
  std::vector<Fold> folds(static_cast<std::size_t>(k));
  for (int f = 0; f < k; ++f) {
    folds[static_cast<std::size_t>(f)].fold_id = f;
    for (const auto& p : catalog.personas) {
      auto& list = fold_of.at(p.id) == f ? folds[static_cast<std::size_t>(f)].test_persona_ids
                                          : folds[static_cast<std::size_t>(f)].train_persona_ids;
      list.push_back(p.id);
    }
  }
  return folds;
}

// ---------------------------------------------------------------------------

std::vector<AxisAgreement> agreement_per_axis(const std::vector<PreferencePair>& pairs,
                                              const std::vector<PromptRecord>& prompts) {
  std::map<std::string, const PromptRecord*> by_id;
  for (const auto& p : prompts) by_id[p.id] = &p;
  std::map<std::string, std::pair<std::set<std::string>, std::set<std::string>>> per_prompt;  // personas, winners
  for (const auto& p : pairs) {
    if (p.kind != QuestionKind::Divergent) continue;
    auto& [personas, winners] = per_prompt[p.prompt_id];
    personas.insert(p.persona_id);
    winners.insert(p.y_w_id.empty() ? p.y_w : p.y_w_id);
  }
  std::map<std::string, std::vector<double>> per_axis;
  for (const auto& [prompt_id, sets] : per_prompt) {
    auto it = by_id.find(prompt_id);
    if (it == by_id.end() || !it->second->axis_id) {
      throw Error(Errc::PreconditionFailed, "divergent pair references unknown prompt " + prompt_id);
    }
    per_axis[*it->second->axis_id].push_back(static_cast<double>(sets.first.size()) /
                                             static_cast<double>(sets.second.size()));
  }
  std::vector<AxisAgreement> out;
  for (const auto& [axis, xs] : per_axis) out.push_back({axis, mean_std(xs)});
  return out;
}

double cohen_kappa(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  if (a.size() != b.size() || a.empty()) {
    throw Error(Errc::LengthMismatch, std::to_string(a.size()) + " vs " + std::to_string(b.size()) + " labels");
  }
  const double n = static_cast<double>(a.size());
  std::map<std::string, double> ma;
  std::map<std::string, double> mb;
  double agree = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma[a[i]] += 1.0;
    mb[b[i]] += 1.0;
    if (a[i] == b[i]) agree += 1.0;
  }
  const double po = agree / n;
  double pe = 0.0;
  for (const auto& [label, count] : ma) {
    auto it = mb.find(label);
    if (it != mb.end()) pe += (count / n) * (it->second / n);
  }
  if (pe >= 1.0) return po >= 1.0 ? 1.0 : 0.0;
  return (po - pe) / (1.0 - pe);
}

double cohen_kappa(const std::vector<int>& a, const std::vector<int>& b) {
  std::vector<std::string> sa;
  std::vector<std::string> sb;
  for (int x : a) sa.push_back(std::to_string(x));
  for (int x : b) sb.push_back(std::to_string(x));
  return cohen_kappa(sa, sb);
}

double krippendorff_alpha(const std::vector<std::vector<std::optional<std::string>>>& labels) {
  if (labels.size() < 2) throw Error(Errc::PreconditionFailed, "krippendorff_alpha: need at least 2 annotators");
  std::size_t items = 0;
  for (const auto& row : labels) items = std::max(items, row.size());

  // Coincidence matrix over pairable values.
  std::map<std::pair<std::string, std::string>, double> o;
  for (std::size_t u = 0; u < items; ++u) {
    std::vector<std::string> values;
    for (const auto& row : labels) {
      if (u < row.size() && row[u]) values.push_back(*row[u]);
    }
    if (values.size() < 2) continue;
    const double w = 1.0 / static_cast<double>(values.size() - 1);
    for (std::size_t i = 0; i < values.size(); ++i) {
      for (std::size_t j = 0; j < values.size(); ++j) {
        if (i != j) o[{values[i], values[j]}] += w;
      }
    }
  }
  std::map<std::string, double> nc;
  double n = 0.0;
  double disagree = 0.0;
  for (const auto& [ck, v] : o) {
    nc[ck.first] += v;
    n += v;
    if (ck.first != ck.second) disagree += v;
  }
  if (n <= 0.0) throw Error(Errc::NoPairableValues, "no item has two or more labels");
  double expected = 0.0;
  for (const auto& [c, vc] : nc) {
    for (const auto& [k, vk] : nc) {
      if (c != k) expected += vc * vk;
    }
  }
  if (expected <= 0.0) return 1.0;
  return 1.0 - (n - 1.0) * disagree / expected;
}

double krippendorff_alpha(const std::vector<std::vector<std::optional<int>>>& labels) {
  std::vector<std::vector<std::optional<std::string>>> s;
  for (const auto& row : labels) {
    auto& out = s.emplace_back();
    for (const auto& v : row) out.push_back(v ? std::optional<std::string>(std::to_string(*v)) : std::nullopt);
  }
  return krippendorff_alpha(s);
}

// ---------------------------------------------------------------------------

std::vector<ExternalPair> load_external_pairs(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::MissingArtifact, path);
  std::vector<ExternalPair> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    auto j = nlohmann::json::parse(line, nullptr, false);
    auto str = [&](const char* key) -> std::string {
      if (j.is_discarded() || !j.is_object() || !j.contains(key) || !j[key].is_string()) {
        throw Error(Errc::FormatError, path + ":" + std::to_string(lineno) + ": expected string field " + key);
      }
      return j[key].get<std::string>();
    };
    out.push_back({str("prompt"), str("chosen"), str("rejected")});
  }
  return out;
}

std::vector<TaxRow> alignment_tax_score(Provider& provider, const ScoringJob& job, const std::vector<ExternalPair>& pairs,
                                        const std::vector<Prefix>& prefixes) {
  std::vector<const Prefix*> runs{nullptr};
  for (const auto& p : prefixes) runs.push_back(&p);
  std::vector<TaxRow> rows;
  for (const Prefix* prefix : runs) {
    const auto credits = parallel_map<double>(pairs.size(), job.workers, [&](std::size_t i) {
      const auto& p = pairs[i];
      const std::string x = prefix ? augment_prompt(prefix->kind, prefix->text, p.prompt) : p.prompt;
      const std::string prompt = apply_chat_template(job.chat_template_id, x);
      return credit(aggregate(provider.score_completion(prompt, p.chosen), job.aggregation),
                    aggregate(provider.score_completion(prompt, p.rejected), job.aggregation));
    });
    TaxRow row;
    if (prefix) {
      row.prefix_kind = prefix->kind;
      row.persona_id = prefix->persona_id;
    }
    row.n = pairs.size();
    double correct = 0.0;
    for (double c : credits) correct += c;
    row.accuracy = row.n ? correct / static_cast<double>(row.n) : 0.0;
    row.ci95 = ci95(row.accuracy, row.n);
    rows.push_back(row);
  }
  return rows;
}

std::string tax_csv(const std::vector<TaxRow>& rows) {
  std::ostringstream out;
  out.setf(std::ios::fixed);
  out.precision(4);
  out << "prefix,persona,n,accuracy,ci95\n";
  for (const auto& r : rows) {
    out << to_string(r.prefix_kind) << ',' << r.persona_id << ',' << r.n << ',' << r.accuracy << ',' << r.ci95 << '\n';
  }
  return out.str();
}

// ---------------------------------------------------------------------------

AxisOf axis_resolver(const Catalog& catalog, const std::vector<PromptRecord>& prompts) {
  std::map<std::string, std::string> prompt_axis;
  for (const auto& p : prompts) {
    if (p.axis_id) prompt_axis[p.id] = *p.axis_id;
  }
  std::map<std::string, std::string> persona_axis;
  for (const auto& p : catalog.personas) persona_axis[p.id] = p.primary_axis;
  return [prompt_axis, persona_axis](const PreferencePair& p) -> std::string {
    if (p.kind == QuestionKind::Divergent) {
      if (auto it = prompt_axis.find(p.prompt_id); it != prompt_axis.end()) return it->second;
    }
    if (auto it = persona_axis.find(p.persona_id); it != persona_axis.end()) return it->second;
    return "unknown";
  };
}

std::vector<LengthRow> length_stats(const std::vector<PreferencePair>& pairs, const AxisOf& axis_of) {
  struct Acc {
    std::vector<double> w, l, d;
  };
  std::map<std::pair<QuestionKind, std::string>, Acc> groups;
  for (const auto& p : pairs) {
    const double w = static_cast<double>(word_count(p.y_w));
    const double l = static_cast<double>(word_count(p.y_l));
    auto add = [&](const std::string& axis) {
      auto& g = groups[{p.kind, axis}];
      g.w.push_back(w);
      g.l.push_back(l);
      g.d.push_back(w - l);
    };
    add("all");
    if (axis_of) add(axis_of(p));
  }
  std::vector<LengthRow> rows;
  for (const auto& [key, g] : groups) rows.push_back({key.first, key.second, mean_std(g.w), mean_std(g.l), mean_std(g.d)});
  return rows;
}

std::string length_csv(const std::vector<LengthRow>& rows) {
  std::ostringstream out;
  out.setf(std::ios::fixed);
  out.precision(2);
  out << "question_kind,axis,n,y_w_mean,y_w_std,y_l_mean,y_l_std,delta_mean,delta_std\n";
  for (const auto& r : rows) {
    out << to_string(r.kind) << ',' << r.axis_id << ',' << r.delta.n << ',' << r.y_w.mean << ',' << r.y_w.std << ','
        << r.y_l.mean << ',' << r.y_l.std << ',' << r.delta.mean << ',' << r.delta.std << '\n';
  }
  return out.str();
}

}  // namespace persona
