#include "persona/judge.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "persona/error.hpp"
#include "persona/templates.hpp"
#include "persona/util.hpp"

namespace persona {

namespace {

constexpr const char* kBoolField = "Output (a) is better than Output (b)";
constexpr const char* kWhyField = "Concise explanation";

struct Span {
  std::size_t begin;
  std::size_t end;  // one past the closing brace
};

// Top-level {...} spans, honouring JSON string quoting.
std::vector<Span> brace_spans(const std::string& s) {
  std::vector<Span> out;
  int depth = 0;
  bool in_str = false;
  bool esc = false;
  std::size_t start = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const char c = s[i];
    if (in_str) {
      if (esc) {
        esc = false;
      } else if (c == '\\') {
        esc = true;
      } else if (c == '"') {
        in_str = false;
      }
      continue;
    }
    if (c == '"' && depth > 0) {
      in_str = true;
    } else if (c == '{') {
      if (depth++ == 0) start = i;
    } else if (c == '}' && depth > 0) {
      if (--depth == 0) out.push_back({start, i + 1});
    }
  }
  return out;
}

// Last "example <K>" label in s[from, to), if any.
std::optional<std::size_t> example_label(const std::string& s, std::size_t from, std::size_t to) {
  const std::string lower = to_lower(std::string_view(s).substr(from, to - from));
  std::optional<std::size_t> found;
  for (std::size_t at = lower.find("example "); at != std::string::npos; at = lower.find("example ", at + 1)) {
    std::size_t p = at + 8;
    std::size_t k = 0;
    bool digits = false;
    while (p < lower.size() && std::isdigit(static_cast<unsigned char>(lower[p]))) {
      k = k * 10 + static_cast<std::size_t>(lower[p] - '0');
      digits = true;
      ++p;
    }
    // "example 3-7" introduces a block rather than naming one object.
    if (digits && !(p < lower.size() && lower[p] == '-')) found = k;
  }
  return found;
}

std::optional<Verdict> to_verdict(const std::string& object) {
  auto j = nlohmann::json::parse(object, nullptr, false);
  if (j.is_discarded() || !j.is_object()) return std::nullopt;
  auto b = j.find(kBoolField);
  auto e = j.find(kWhyField);
  if (b == j.end() || !b->is_boolean() || e == j.end() || !e->is_string()) return std::nullopt;
  Verdict v{b->get<bool>(), trim(e->get<std::string>())};
  if (v.rationale.empty()) return std::nullopt;
  return v;
}

std::string slot_text(const JudgePair& p, bool a_slot) {
  return (a_slot != p.swap) ? p.output_a : p.output_b;
}

std::vector<std::vector<std::size_t>> chunk(const std::vector<std::size_t>& idx, std::size_t batch) {
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < idx.size(); i += batch) {
    out.emplace_back(idx.begin() + static_cast<std::ptrdiff_t>(i),
                     idx.begin() + static_cast<std::ptrdiff_t>(std::min(idx.size(), i + batch)));
  }
  return out;
}

struct Resolved {
  std::optional<Verdict> verdict;  // canonical order
  int attempts = 0;
};

// Batch every pair, re-query the ones whose verdict was missing or malformed.
std::vector<Resolved> resolve_pairs(Provider& provider, const std::vector<JudgePair>& pairs, const JudgeOptions& opts,
                                    std::size_t& requests) {
  if (opts.batch == 0) throw Error(Errc::PreconditionFailed, "judge batch must be >= 1");
  std::vector<Resolved> out(pairs.size());
  std::vector<std::size_t> todo(pairs.size());
  for (std::size_t i = 0; i < todo.size(); ++i) todo[i] = i;

  for (int attempt = 0; attempt <= opts.max_retries && !todo.empty(); ++attempt) {
    const auto batches = chunk(todo, opts.batch);
    const auto replies = parallel_map<std::string>(batches.size(), opts.workers, [&](std::size_t b) {
      std::vector<JudgePair> group;
      for (std::size_t i : batches[b]) group.push_back(pairs[i]);
      GenRequest req = render_judge_batch(group, opts.batch);
      req.model = opts.model;
      req.temperature = opts.temperature;
      req.seed = static_cast<std::int64_t>(derive_seed(opts.seed, "judge-attempt-" + std::to_string(attempt)) >> 1);
      return provider.chat(req);
    });
    requests += batches.size();
    std::vector<std::size_t> next;
    for (std::size_t b = 0; b < batches.size(); ++b) {
      const auto verdicts = scan_judge_response(replies[b], batches[b].size());
      for (std::size_t k = 0; k < batches[b].size(); ++k) {
        const std::size_t i = batches[b][k];
        out[i].attempts = attempt + 1;
        if (verdicts[k]) {
          out[i].verdict = unswap(*verdicts[k], pairs[i].swap);
        } else {
          next.push_back(i);
        }
      }
    }
    todo = std::move(next);
  }
  return out;
}

}  // namespace

Verdict unswap(const Verdict& v, bool swap) { return swap ? Verdict{!v.a_better, v.rationale} : v; }

GenRequest render_judge_batch(const std::vector<JudgePair>& pairs, std::size_t batch) {
  if (pairs.empty() || pairs.size() > batch) {
    throw Error(Errc::PreconditionFailed, "render_judge_batch: need 1.." + std::to_string(batch) + " pairs");
  }
  std::ostringstream u;
  u << "Great! Now I will give you " << pairs.size() << " examples in a row.\n\n";
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const std::string k = std::to_string(i + 3);
    const auto& p = pairs[i];
    u << "## Example " << k << ":\n"
      << "### Instruction for example " << k << ":\n" << p.instruction << "\n\n"
      << "### Input for example " << k << ":\n" << p.input << "\n\n"
      << "### Output (a) for example " << k << ":\n" << slot_text(p, true) << "\n\n"
      << "### Output (b) for example " << k << ":\n" << slot_text(p, false) << "\n\n";
  }
  u << "## Preferred output in JSON format for example 3";
  if (pairs.size() > 1) u << "-" << pairs.size() + 2;
  u << ":";

  GenRequest req;
  req.messages = templates::judge_preamble();
  req.messages.push_back({"user", u.str()});
  return req;
}

std::vector<std::optional<Verdict>> scan_judge_response(const std::string& text, std::size_t n) {
  std::vector<std::optional<Verdict>> out(n);
  std::vector<bool> seen(n, false);
  std::size_t prev_end = 0;
  std::size_t ordinal = 0;
  for (const auto& sp : brace_spans(text)) {
    std::size_t index = ordinal++;
    if (auto label = example_label(text, prev_end, sp.begin); label && *label >= 3 && *label < 3 + n) {
      index = *label - 3;
    }
    prev_end = sp.end;
    if (index >= n || seen[index]) continue;
    seen[index] = true;
    out[index] = to_verdict(text.substr(sp.begin, sp.end - sp.begin));
  }
  return out;
}

std::vector<Verdict> parse_judge_response(const std::string& text, std::size_t n) {
  if (n == 0) throw Error(Errc::PreconditionFailed, "parse_judge_response: n must be >= 1");
  auto found = scan_judge_response(text, n);
  std::vector<Verdict> out;
  for (std::size_t i = 0; i < n; ++i) {
    if (!found[i]) throw MalformedVerdictError(i, "no usable verdict for example " + std::to_string(i + 3));
    out.push_back(std::move(*found[i]));
  }
  return out;
}

// ---------------------------------------------------------------------------

void to_json(nlohmann::json& j, const MatchRecord& m) {
  j = {{"round", m.round},   {"a", m.a_id},          {"b", m.b_id},
       {"swap", m.swap},     {"a_better", m.a_better}, {"winner", m.winner_id},
       {"rationale", m.rationale}, {"attempts", m.attempts}};
}

void from_json(const nlohmann::json& j, MatchRecord& m) {
  m.round = j.at("round").get<int>();
  m.a_id = j.at("a").get<std::string>();
  m.b_id = j.at("b").get<std::string>();
  m.swap = j.at("swap").get<bool>();
  m.a_better = j.at("a_better").get<bool>();
  m.winner_id = j.at("winner").get<std::string>();
  m.rationale = j.at("rationale").get<std::string>();
  m.attempts = j.value("attempts", 1);
}

void to_json(nlohmann::json& j, const PreferencePair& p) {
  j = {{"prompt_id", p.prompt_id},
       {"persona_id", p.persona_id},
       {"prompt", p.prompt},
       {"kind", to_string(p.kind)},
       {"split", to_string(p.split)},
       {"y_w", p.y_w},
       {"y_l", p.y_l},
       {"y_w_id", p.y_w_id},
       {"y_l_id", p.y_l_id},
       {"candidates", p.candidates},
       {"bracket", p.bracket},
       {"judge_rationale", p.judge_rationale}};
}

void from_json(const nlohmann::json& j, PreferencePair& p) {
  p.prompt_id = j.at("prompt_id").get<std::string>();
  p.persona_id = j.at("persona_id").get<std::string>();
  p.prompt = j.at("prompt").get<std::string>();
  p.kind = parse_question_kind(j.at("kind").get<std::string>());
  p.split = parse_split(j.at("split").get<std::string>());
  p.y_w = j.at("y_w").get<std::string>();
  p.y_l = j.at("y_l").get<std::string>();
  p.y_w_id = j.value("y_w_id", "");
  p.y_l_id = j.value("y_l_id", "");
  p.candidates = j.value("candidates", std::vector<std::string>{});
  p.bracket = j.value("bracket", std::vector<MatchRecord>{});
  p.judge_rationale = j.value("judge_rationale", "");
}

void to_json(nlohmann::json& j, const TournamentFailure& f) {
  j = {{"prompt_id", f.prompt_id}, {"persona_id", f.persona_id}, {"reason", f.reason}, {"bracket", f.bracket}};
}

void from_json(const nlohmann::json& j, TournamentFailure& f) {
  f.prompt_id = j.at("prompt_id").get<std::string>();
  f.persona_id = j.at("persona_id").get<std::string>();
  f.reason = j.at("reason").get<std::string>();
  f.bracket = j.value("bracket", std::vector<MatchRecord>{});
}

// ---------------------------------------------------------------------------

namespace {

struct Live {
  const TournamentJob* job = nullptr;
  std::vector<const Candidate*> entrants;
  std::vector<std::string> order;
  std::vector<MatchRecord> bracket;
  std::string failure;
};

}  // namespace

LabelingResult label_tournaments(Provider& provider, const std::vector<TournamentJob>& jobs, const JudgeOptions& opts) {
  LabelingResult result;
  std::vector<Live> live(jobs.size());
  for (std::size_t t = 0; t < jobs.size(); ++t) {
    const auto& job = jobs[t];
    if (job.finalists.size() < 2) {
      throw Error(Errc::PreconditionFailed, job.prompt.id + ": a tournament needs at least 2 finalists");
    }
    live[t].job = &job;
    for (const auto& c : job.finalists) {
      for (const auto* e : live[t].entrants) {
        if (e->id == c.id) throw Error(Errc::PreconditionFailed, job.prompt.id + ": duplicate finalist " + c.id);
      }
      live[t].entrants.push_back(&c);
    }
  }

  // Per-job stream: bracket shuffle first, then one coin per match.
  std::vector<Rng> rngs;
  for (std::size_t t = 0; t < jobs.size(); ++t) {
    rngs.emplace_back(derive_seed(opts.seed, "bracket|" + jobs[t].persona.id + "|" + jobs[t].prompt.id));
    rngs[t].shuffle(live[t].entrants);
    for (const auto* c : live[t].entrants) live[t].order.push_back(c->id);
  }

  for (int round = 0;; ++round) {
    struct Slot {
      std::size_t job;
      const Candidate* a;
      const Candidate* b;
    };
    std::vector<Slot> slots;
    std::vector<JudgePair> pairs;
    for (std::size_t t = 0; t < live.size(); ++t) {
      auto& l = live[t];
      if (!l.failure.empty() || l.entrants.size() < 2) continue;
      for (std::size_t i = 0; i + 1 < l.entrants.size(); i += 2) {
        slots.push_back({t, l.entrants[i], l.entrants[i + 1]});
        pairs.push_back({templates::judge_instruction(l.job->persona.name), l.job->prompt.text, l.entrants[i]->text,
                         l.entrants[i + 1]->text, rngs[t].coin()});
      }
    }
    if (slots.empty()) break;

    JudgeOptions round_opts = opts;
    round_opts.seed = derive_seed(opts.seed, "round-" + std::to_string(round));
    const auto resolved = resolve_pairs(provider, pairs, round_opts, result.requests);
    result.matches += slots.size();

    std::vector<std::vector<const Candidate*>> next(live.size());
    for (std::size_t s = 0; s < slots.size(); ++s) {
      auto& l = live[slots[s].job];
      if (!resolved[s].verdict) {
        if (l.failure.empty()) {
          l.failure = "match " + slots[s].a->id + " vs " + slots[s].b->id + " unresolved after " +
                      std::to_string(resolved[s].attempts) + " attempts";
        }
        continue;
      }
      const auto& v = *resolved[s].verdict;
      MatchRecord m;
      m.round = round;
      m.a_id = slots[s].a->id;
      m.b_id = slots[s].b->id;
      m.swap = pairs[s].swap;
      m.a_better = v.a_better;
      m.winner_id = v.a_better ? m.a_id : m.b_id;
      m.rationale = v.rationale;
      m.attempts = resolved[s].attempts;
      l.bracket.push_back(m);
      next[slots[s].job].push_back(v.a_better ? slots[s].a : slots[s].b);
    }
    for (std::size_t t = 0; t < live.size(); ++t) {
      auto& l = live[t];
      if (!l.failure.empty() || l.entrants.size() < 2) continue;
      if (l.entrants.size() % 2 == 1) next[t].push_back(l.entrants.back());
      l.entrants = std::move(next[t]);
    }
  }

  for (auto& l : live) {
    const auto& job = *l.job;
    if (!l.failure.empty()) {
      result.failures.push_back({job.prompt.id, job.persona.id, l.failure, l.bracket});
      continue;
    }
    const auto& final_match = l.bracket.back();
    const std::string& loser = final_match.a_better ? final_match.b_id : final_match.a_id;
    auto text_of = [&](const std::string& id) {
      for (const auto& c : job.finalists) {
        if (c.id == id) return c.text;
      }
      return std::string();
    };
    PreferencePair p;
    p.prompt_id = job.prompt.id;
    p.persona_id = job.persona.id;
    p.prompt = job.prompt.text;
    p.kind = job.prompt.kind;
    p.split = job.prompt.split;
    p.y_w_id = final_match.winner_id;
    p.y_l_id = loser;
    p.y_w = text_of(p.y_w_id);
    p.y_l = text_of(p.y_l_id);
    p.candidates = l.order;
    p.bracket = std::move(l.bracket);
    p.judge_rationale = final_match.rationale;
    result.pairs.push_back(std::move(p));
  }
  return result;
}

PreferencePair run_tournament(Provider& provider, const Persona& persona, const PromptRecord& prompt,
                              const std::vector<Candidate>& finalists, const JudgeOptions& opts) {
  auto r = label_tournaments(provider, {TournamentJob{persona, prompt, finalists}}, opts);
  if (!r.failures.empty()) throw Error(Errc::TournamentIncomplete, prompt.id + ": " + r.failures.front().reason);
  return std::move(r.pairs.front());
}

// ---------------------------------------------------------------------------

WinRateMatrix win_rate_matrix(Provider& provider, const std::vector<WinRateSystem>& systems,
                              const std::vector<WinRateQuestion>& questions, const JudgeOptions& opts) {
  if (systems.size() < 2) throw Error(Errc::PreconditionFailed, "win_rate_matrix: need at least 2 systems");
  const std::size_t n = systems.size();
  const double nan = std::numeric_limits<double>::quiet_NaN();
  WinRateMatrix m;
  for (const auto& s : systems) m.systems.push_back(s.name);
  m.rate.assign(n, std::vector<double>(n, nan));
  m.compared.assign(n, std::vector<std::size_t>(n, 0));
  m.failed.assign(n, std::vector<std::size_t>(n, 0));

  struct Cell {
    std::size_t i;
    std::size_t j;
  };
  std::vector<Cell> cells;
  std::vector<JudgePair> pairs;
  Rng rng(derive_seed(opts.seed, "winrate"));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      for (const auto& q : questions) {
        auto gi = systems[i].generations.find(q.id);
        auto gj = systems[j].generations.find(q.id);
        if (gi == systems[i].generations.end() || gj == systems[j].generations.end()) {
          throw Error(Errc::PreconditionFailed, "generations not aligned on question " + q.id);
        }
        cells.push_back({i, j});
        pairs.push_back({templates::judge_instruction(q.persona_name), q.text, gi->second, gj->second, rng.coin()});
      }
    }
  }
  std::size_t requests = 0;
  const auto resolved = resolve_pairs(provider, pairs, opts, requests);
  std::vector<std::vector<std::size_t>> wins(n, std::vector<std::size_t>(n, 0));
  for (std::size_t c = 0; c < cells.size(); ++c) {
    const auto [i, j] = cells[c];
    if (!resolved[c].verdict) {
      ++m.failed[i][j];
      ++m.failed[j][i];
      continue;
    }
    ++m.compared[i][j];
    ++m.compared[j][i];
    ++wins[resolved[c].verdict->a_better ? i : j][resolved[c].verdict->a_better ? j : i];
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i != j && m.compared[i][j] > 0) {
        m.rate[i][j] = static_cast<double>(wins[i][j]) / static_cast<double>(m.compared[i][j]);
      }
    }
  }
  return m;
}

std::string win_rate_csv(const WinRateMatrix& m) {
  std::ostringstream out;
  out << "system";
  for (const auto& s : m.systems) out << ',' << s;
  out << ",compared,failed\n";
  out.setf(std::ios::fixed);
  out.precision(4);
  for (std::size_t i = 0; i < m.systems.size(); ++i) {
    out << m.systems[i];
    std::size_t compared = 0;
    std::size_t failed = 0;
    for (std::size_t j = 0; j < m.systems.size(); ++j) {
      out << ',';
      if (!std::isnan(m.rate[i][j])) out << m.rate[i][j];
      compared += m.compared[i][j];
      failed += m.failed[i][j];
    }
    out << ',' << compared << ',' << failed << '\n';
  }
  return out.str();
}

}  // namespace persona
