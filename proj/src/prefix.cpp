#include "persona/prefix.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>
#include <unordered_map>

#include "persona/error.hpp"
#include "persona/templates.hpp"
#include "persona/util.hpp"

namespace persona {

namespace {

const std::vector<std::pair<PrefixKind, const char*>> kKindNames = {
    {PrefixKind::None, "none"},       {PrefixKind::Random, "random"},           {PrefixKind::Tag, "tag"},
    {PrefixKind::Fewshot, "fewshot"}, {PrefixKind::Persona, "persona"},         {PrefixKind::PersonaGpt4, "persona_gpt4"},
    {PrefixKind::Name, "name"},       {PrefixKind::PersonaGold, "persona_gold"},
};

}  // namespace

std::string to_string(PrefixKind k) {
  for (const auto& [kind, name] : kKindNames) {
    if (kind == k) return name;
  }
  return "none";
}

PrefixKind parse_prefix_kind(const std::string& s) {
  for (const auto& [kind, name] : kKindNames) {
    if (s == name) return kind;
  }
  throw Error(Errc::ConfigError, "unknown prefix kind: " + s);
}

const std::vector<PrefixKind>& all_prefix_kinds() {
  static const std::vector<PrefixKind> kinds = [] {
    std::vector<PrefixKind> v;
    for (const auto& kv : kKindNames) v.push_back(kv.first);
    return v;
  }();
  return kinds;
}

std::string to_string(ShotStrategy s) {
  switch (s) {
    case ShotStrategy::Random: return "random";
    case ShotStrategy::Bm25: return "bm25";
    case ShotStrategy::Embedding: return "embedding";
  }
  return "random";
}

ShotStrategy parse_shot_strategy(const std::string& s) {
  if (s == "random") return ShotStrategy::Random;
  if (s == "bm25") return ShotStrategy::Bm25;
  if (s == "embedding") return ShotStrategy::Embedding;
  throw Error(Errc::ConfigError, "unknown shot strategy: " + s);
}

void to_json(nlohmann::json& j, const Prefix& p) {
  j = {{"persona_id", p.persona_id},
       {"kind", to_string(p.kind)},
       {"text", p.text},
       {"shots_used", p.shots_used},
       {"shot_strategy", to_string(p.shot_strategy)},
       {"generator_model", p.generator_model ? nlohmann::json(*p.generator_model) : nlohmann::json()},
       {"word_count", p.word_count}};
}

void from_json(const nlohmann::json& j, Prefix& p) {
  p.persona_id = j.at("persona_id").get<std::string>();
  p.kind = parse_prefix_kind(j.at("kind").get<std::string>());
  p.text = j.at("text").get<std::string>();
  p.shots_used = j.value("shots_used", std::vector<std::string>{});
  p.shot_strategy = parse_shot_strategy(j.value("shot_strategy", "random"));
  p.generator_model.reset();
  if (j.contains("generator_model") && j["generator_model"].is_string()) {
    p.generator_model = j["generator_model"].get<std::string>();
  }
  p.word_count = word_count(p.text);
}

std::string tag_for(std::size_t persona_index) { return "special_person_tag_" + std::to_string(persona_index); }

int default_shots(PrefixKind kind) {
  switch (kind) {
    case PrefixKind::Fewshot: return 2;
    case PrefixKind::Persona:
    case PrefixKind::PersonaGpt4: return 4;
    default: return 0;
  }
}

std::vector<double> bm25_scores(const std::vector<std::string>& documents, const std::string& query, double k1, double b) {
  std::vector<std::vector<std::string>> docs;
  std::unordered_map<std::string, std::size_t> df;
  double total_len = 0.0;
  for (const auto& d : documents) {
    docs.push_back(rouge_tokens(d));
    total_len += static_cast<double>(docs.back().size());
    for (const auto& t : std::set<std::string>(docs.back().begin(), docs.back().end())) ++df[t];
  }
  const double n = static_cast<double>(docs.size());
  const double avgdl = docs.empty() ? 0.0 : total_len / n;
  const auto terms = rouge_tokens(query);
  std::vector<double> scores(docs.size(), 0.0);
  for (std::size_t i = 0; i < docs.size(); ++i) {
    std::unordered_map<std::string, std::size_t> tf;
    for (const auto& t : docs[i]) ++tf[t];
    const double len = static_cast<double>(docs[i].size());
    for (const auto& t : terms) {
      auto it = tf.find(t);
      if (it == tf.end()) continue;
      const double d = static_cast<double>(df[t]);
      const double idf = std::log((n - d + 0.5) / (d + 0.5) + 1.0);
      const double f = static_cast<double>(it->second);
      scores[i] += idf * f * (k1 + 1.0) / (f + k1 * (1.0 - b + b * (avgdl > 0 ? len / avgdl : 0.0)));
    }
  }
  return scores;
}

std::vector<const PreferencePair*> select_shots(ShotStrategy strategy, const std::vector<const PreferencePair*>& pool,
                                                std::size_t n, const std::string& query, std::uint64_t seed,
                                                Provider* provider) {
  if (pool.size() < n) {
    throw Error(Errc::InsufficientShots, std::to_string(pool.size()) + " training pairs, " + std::to_string(n) + " shots");
  }
  std::vector<const PreferencePair*> sorted = pool;
  std::sort(sorted.begin(), sorted.end(), [](auto* a, auto* b) { return a->prompt_id < b->prompt_id; });
  if (strategy == ShotStrategy::Random) {
    Rng rng(derive_seed(seed, "shots"));
    rng.shuffle(sorted);
    sorted.resize(n);
    return sorted;
  }
  std::vector<double> scores;
  if (strategy == ShotStrategy::Bm25) {
    std::vector<std::string> docs;
    for (auto* p : sorted) docs.push_back(p->prompt);
    scores = bm25_scores(docs, query);
  } else {
    if (!provider) throw Error(Errc::PreconditionFailed, "embedding shot selection needs a provider");
    std::vector<std::string> texts{query};
    for (auto* p : sorted) texts.push_back(p->prompt);
    const auto vecs = provider->embed(texts);
    for (std::size_t i = 1; i < vecs.size(); ++i) scores.push_back(cosine(vecs[0], vecs[i]));
  }
  std::vector<std::size_t> order(sorted.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  std::vector<const PreferencePair*> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(sorted[order[i]]);
  return out;
}

Prefix build_prefix(PrefixKind kind, const Persona& persona, std::size_t index,
                    const std::vector<const PreferencePair*>& train_pairs, Provider* provider, const PrefixOptions& opts) {
  Prefix p;
  p.persona_id = persona.id;
  p.kind = kind;
  p.shot_strategy = opts.strategy;
  const std::size_t n_shots = static_cast<std::size_t>(opts.n_shots > 0 ? opts.n_shots : default_shots(kind));
  const std::uint64_t seed = derive_seed(opts.seed, "prefix|" + persona.id + "|" + to_string(kind));

  auto shots = [&] {
    // Persona inference uses a fixed seeded shot set; per-question retrieval
    // happens at scoring time.
    auto chosen = select_shots(ShotStrategy::Random, train_pairs, n_shots, "", seed, provider);
    std::vector<templates::Shot> out;
    for (auto* s : chosen) {
      out.emplace_back(s->prompt, s->y_w);
      p.shots_used.push_back(s->prompt_id);
    }
    return out;
  };
  auto ask = [&](const std::string& prompt, const std::string& model) {
    if (!provider) throw Error(Errc::PreconditionFailed, to_string(kind) + " prefix needs a provider");
    GenRequest req;
    req.messages = {{"user", prompt}};
    req.model = model;
    req.seed = static_cast<std::int64_t>(seed >> 1);
    p.generator_model = model;
    return trim(provider->chat(req));
  };
  auto need_name = [&] {
    if (trim(persona.name).empty()) throw Error(Errc::PreconditionFailed, persona.id + " has no name");
  };

  switch (kind) {
    case PrefixKind::None:
    case PrefixKind::Random: break;
    case PrefixKind::Tag: p.text = tag_for(index); break;
    case PrefixKind::Name:
      need_name();
      p.text = persona.name;
      break;
    case PrefixKind::Fewshot: p.text = templates::fewshot_prefix(shots()); break;
    case PrefixKind::Persona: p.text = ask(templates::persona_from_shots(shots()), opts.inference_model); break;
    case PrefixKind::PersonaGpt4: p.text = ask(templates::persona_from_shots(shots()), opts.judge_model); break;
    case PrefixKind::PersonaGold:
      need_name();
      p.text = ask(templates::persona_gold(persona.name), opts.judge_model);
      break;
  }
  if ((kind == PrefixKind::Persona || kind == PrefixKind::PersonaGpt4 || kind == PrefixKind::PersonaGold) &&
      p.text.empty()) {
    throw Error(Errc::EmptyParse, persona.id + ": empty " + to_string(kind) + " prefix");
  }
  p.word_count = word_count(p.text);
  return p;
}

MeanStd mean_std(const std::vector<double>& xs) {
  MeanStd m;
  m.n = xs.size();
  if (xs.empty()) return m;
  m.mean = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
  double ss = 0.0;
  for (double x : xs) ss += (x - m.mean) * (x - m.mean);
  m.std = std::sqrt(ss / static_cast<double>(xs.size()));
  return m;
}

PrefixQualityReport prefix_quality_report(const std::vector<Prefix>& prefixes, const std::map<std::string, Prefix>& golds,
                                          std::uint64_t seed) {
  std::vector<std::string> gold_ids;
  for (const auto& [id, g] : golds) gold_ids.push_back(id);

  std::map<PrefixKind, std::vector<const Prefix*>> by_kind;
  for (const auto& p : prefixes) {
    if (p.kind != PrefixKind::Fewshot && p.kind != PrefixKind::Persona && p.kind != PrefixKind::PersonaGpt4 &&
        p.kind != PrefixKind::PersonaGold) {
      continue;
    }
    if (!golds.count(p.persona_id)) throw Error(Errc::MissingGold, p.persona_id);
    by_kind[p.kind].push_back(&p);
  }
  // The gold column is always reported.
  if (!golds.empty() && !by_kind.count(PrefixKind::PersonaGold)) {
    for (const auto& kv : golds) by_kind[PrefixKind::PersonaGold].push_back(&kv.second);
  }

  PrefixQualityReport report;
  for (PrefixKind kind : all_prefix_kinds()) {
    auto it = by_kind.find(kind);
    if (it == by_kind.end() || it->second.empty()) continue;
    auto items = it->second;
    std::sort(items.begin(), items.end(), [](auto* a, auto* b) { return a->persona_id < b->persona_id; });
    std::vector<double> r1;
    std::vector<double> r1_random;
    std::vector<double> words;
    Rng rng(derive_seed(seed, "random-gold|" + to_string(kind)));
    for (const Prefix* p : items) {
      r1.push_back(rouge(p->text, golds.at(p->persona_id).text).f1);
      words.push_back(static_cast<double>(word_count(p->text)));
      if (gold_ids.size() > 1) {
        std::string other = p->persona_id;
        while (other == p->persona_id) other = gold_ids[rng.below(gold_ids.size())];
        r1_random.push_back(rouge(p->text, golds.at(other).text).f1);
      }
    }
    PrefixQualityColumn col{kind, mean_std(r1), std::nullopt, mean_std(words)};
    if (!r1_random.empty()) col.r1_random = mean_std(r1_random);
    report.columns.push_back(col);
  }
  return report;
}

std::string prefix_quality_csv(const PrefixQualityReport& r) {
  std::ostringstream out;
  out.setf(std::ios::fixed);
  auto cell = [&](const MeanStd& m, int precision) {
    out.precision(precision);
    out << ',' << m.mean << " ± " << m.std;
  };
  out << "metric";
  for (const auto& c : r.columns) out << ',' << to_string(c.kind);
  out << "\nR1";
  for (const auto& c : r.columns) cell(c.r1, 2);
  out << "\nR1 (random)";
  for (const auto& c : r.columns) {
    if (c.r1_random) {
      cell(*c.r1_random, 2);
    } else {
      out << ",n/a";
    }
  }
  out << "\n# words";
  for (const auto& c : r.columns) cell(c.words, 0);
  out << '\n';
  return out.str();
}

}  // namespace persona
