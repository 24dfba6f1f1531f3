#include <gtest/gtest.h>

#include <cmath>

#include "persona/error.hpp"
#include "persona/prefix.hpp"
#include "persona/rouge.hpp"
#include "persona/templates.hpp"
#include "persona/util.hpp"
#include "support.hpp"

using namespace persona;
using testing_support::ScriptedChat;

namespace {

PreferencePair pair(const std::string& id, const std::string& q, const std::string& yw) {
  PreferencePair p;
  p.prompt_id = id;
  p.persona_id = "ada";
  p.prompt = q;
  p.y_w = yw;
  p.y_l = "worse";
  p.split = Split::Train;
  return p;
}

std::string words(std::size_t n, const std::string& stem = "w") {
  std::string out;
  for (std::size_t i = 0; i < n; ++i) out += (i ? " " : "") + stem + std::to_string(i);
  return out;
}

Prefix pf(const std::string& persona, PrefixKind kind, const std::string& text) {
  Prefix p;
  p.persona_id = persona;
  p.kind = kind;
  p.text = text;
  p.word_count = word_count(text);
  return p;
}

}  // namespace

TEST(Rouge, Identities) {
  EXPECT_DOUBLE_EQ(rouge("the cat sat", "the cat sat").f1, 1.0);
  EXPECT_DOUBLE_EQ(rouge("alpha beta", "gamma delta").f1, 0.0);
  const auto r = rouge("the cat sat", "the cat ran");
  EXPECT_NEAR(r.precision, 2.0 / 3.0, 1e-12);
  EXPECT_NEAR(r.recall, 2.0 / 3.0, 1e-12);
  EXPECT_NEAR(r.f1, 2.0 / 3.0, 1e-12);
  EXPECT_DOUBLE_EQ(rouge("", "x").f1, 0.0);
}

TEST(Rouge, ClippedCountsAndTokenization) {
  // "the the the" vs "the cat": one clipped match, P = 1/3, R = 1/2.
  const auto r = rouge("The, the THE!", "the cat");
  EXPECT_NEAR(r.precision, 1.0 / 3.0, 1e-12);
  EXPECT_NEAR(r.recall, 0.5, 1e-12);
  EXPECT_EQ(rouge_tokens("What's up?"), (std::vector<std::string>{"whats", "up"}));
}

TEST(Rouge, LcsVariant) {
  EXPECT_EQ(lcs_length({"a", "b", "c", "d"}, {"a", "c", "d", "b"}), 3u);
  const auto r = rouge("a b c d", "a c d b", RougeVariant::RougeL);
  EXPECT_NEAR(r.f1, 0.75, 1e-12);
}

TEST(Prefix, TagNoneName) {
  MockProvider mock;
  const Persona ada{"ada", "Ada Lovelace", {}, {}, {}};
  const auto tag = build_prefix(PrefixKind::Tag, ada, 3, {}, nullptr);
  EXPECT_EQ(tag.text, "special_person_tag_3");
  const auto none = build_prefix(PrefixKind::None, ada, 0, {}, nullptr);
  EXPECT_EQ(none.text, "");
  EXPECT_EQ(none.word_count, 0u);
  EXPECT_EQ(build_prefix(PrefixKind::Name, ada, 0, {}, nullptr).text, "Ada Lovelace");
  EXPECT_EQ(mock.total_calls(), 0u);
}

TEST(Prefix, GoldWordCount) {
  ScriptedChat p([](const GenRequest& req, int) {
    EXPECT_EQ(req.model, "judge-model");
    EXPECT_NE(req.messages.back().content.find("Ada Lovelace"), std::string::npos);
    return words(203);
  });
  PrefixOptions o;
  o.judge_model = "judge-model";
  const auto g = build_prefix(PrefixKind::PersonaGold, Persona{"ada", "Ada Lovelace", {}, {}, {}}, 0, {}, &p, o);
  EXPECT_EQ(g.word_count, 203u);
  EXPECT_EQ(g.generator_model, std::optional<std::string>("judge-model"));
}

TEST(Prefix, ShotCountsAndModels) {
  std::vector<PreferencePair> store;
  for (int i = 0; i < 6; ++i) store.push_back(pair("q" + std::to_string(i), "question " + std::to_string(i), "answer " + std::to_string(i)));
  std::vector<const PreferencePair*> pool;
  for (auto& s : store) pool.push_back(&s);
  std::vector<std::string> models;
  ScriptedChat p([&](const GenRequest& req, int) {
    models.push_back(req.model);
    return std::string("Ada likes engines.");
  });
  PrefixOptions o;
  o.inference_model = "small";
  o.judge_model = "big";
  const Persona ada{"ada", "Ada", {}, {}, {}};
  const auto few = build_prefix(PrefixKind::Fewshot, ada, 0, pool, &p, o);
  EXPECT_EQ(few.shots_used.size(), 2u);
  EXPECT_EQ(p.calls, 0);
  const auto inferred = build_prefix(PrefixKind::Persona, ada, 0, pool, &p, o);
  EXPECT_EQ(inferred.shots_used.size(), 4u);
  build_prefix(PrefixKind::PersonaGpt4, ada, 0, pool, &p, o);
  EXPECT_EQ(models, (std::vector<std::string>{"small", "big"}));
  // Same seed, same shots.
  EXPECT_EQ(build_prefix(PrefixKind::Fewshot, ada, 0, pool, &p, o).shots_used, few.shots_used);
}

TEST(Prefix, InsufficientShots) {
  auto one = pair("q", "x", "y");
  try {
    build_prefix(PrefixKind::Fewshot, Persona{"ada", "Ada", {}, {}, {}}, 0, {&one}, nullptr);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::InsufficientShots);
  }
}

TEST(Shots, Bm25RanksLexicalMatchFirst) {
  auto a = pair("qa", "best running shoes for marathon", "x");
  auto b = pair("qb", "how to bake sourdough bread", "x");
  auto c = pair("qc", "marathon training plan for beginners", "x");
  const auto got = select_shots(ShotStrategy::Bm25, {&a, &b, &c}, 2, "marathon shoes", 0, nullptr);
  EXPECT_EQ(got[0]->prompt_id, "qa");
  EXPECT_EQ(got[1]->prompt_id, "qc");
}

TEST(Shots, Bm25HandValue) {
  // Two docs, query term in one: idf = ln((2-1+0.5)/(1+0.5)+1) = ln 2.
  const auto s = bm25_scores({"apple pie", "banana split"}, "apple");
  const double tf = 1.0, k1 = 1.5, b = 0.75, dl = 2.0, avg = 2.0;
  EXPECT_NEAR(s[0], std::log(2.0) * tf * (k1 + 1) / (tf + k1 * (1 - b + b * dl / avg)), 1e-12);
  EXPECT_DOUBLE_EQ(s[1], 0.0);
}

TEST(Shots, EmbeddingUsesProvider) {
  MockProvider mock;
  auto a = pair("qa", "alpha", "x");
  auto b = pair("qb", "beta", "x");
  const auto got = select_shots(ShotStrategy::Embedding, {&b, &a}, 1, "alpha", 0, &mock);
  EXPECT_EQ(got[0]->prompt_id, "qa");
}

TEST(PrefixReport, GoldIsOneAndColumnsFollowTable) {
  std::map<std::string, Prefix> golds;
  std::vector<Prefix> all;
  for (const std::string id : {"a", "b", "c"}) {
    golds[id] = pf(id, PrefixKind::PersonaGold, "gold " + id + " " + words(10, id));
    all.push_back(golds[id]);
    all.push_back(pf(id, PrefixKind::Fewshot, words(5, id)));
    all.push_back(pf(id, PrefixKind::Persona, "person " + id));
    all.push_back(pf(id, PrefixKind::PersonaGpt4, words(3, id)));
    all.push_back(pf(id, PrefixKind::Tag, "special_person_tag_0"));
    all.push_back(pf(id, PrefixKind::None, ""));
  }
  const auto rep = prefix_quality_report(all, golds, 1);
  ASSERT_EQ(rep.columns.size(), 4u);
  EXPECT_EQ(rep.columns[0].kind, PrefixKind::Fewshot);
  EXPECT_EQ(rep.columns[3].kind, PrefixKind::PersonaGold);
  EXPECT_DOUBLE_EQ(rep.columns[3].r1.mean, 1.0);
  EXPECT_DOUBLE_EQ(rep.columns[3].r1.std, 0.0);
  const auto csv = prefix_quality_csv(rep);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "metric,fewshot,persona,persona_gpt4,persona_gold");
  EXPECT_NE(csv.find("\nR1,"), std::string::npos);
  EXPECT_NE(csv.find("\nR1 (random),"), std::string::npos);
  EXPECT_NE(csv.find("\n# words,"), std::string::npos);
  EXPECT_NE(csv.find("1.00 ± 0.00"), std::string::npos);
}

TEST(PrefixReport, SinglePersonaRandomIsNa) {
  std::map<std::string, Prefix> golds = {{"a", pf("a", PrefixKind::PersonaGold, "gold text")}};
  const auto rep = prefix_quality_report({golds["a"]}, golds, 0);
  EXPECT_FALSE(rep.columns[0].r1_random);
  EXPECT_NE(prefix_quality_csv(rep).find("n/a"), std::string::npos);
}

TEST(PrefixReport, PartialCopyRecall) {
  // Prefix copies 30 of the gold's 100 distinct tokens and adds nothing else.
  const std::string gold = words(100, "g");
  std::string copy;
  for (int i = 0; i < 30; ++i) copy += (i ? " g" : "g") + std::to_string(i);
  std::map<std::string, Prefix> golds = {{"a", pf("a", PrefixKind::PersonaGold, gold)}};
  const auto rep = prefix_quality_report({pf("a", PrefixKind::Persona, copy)}, golds, 0);
  EXPECT_NEAR(rouge(copy, gold).recall, 0.3, 1e-12);
  EXPECT_NEAR(rep.columns[0].r1.mean, 2 * 1.0 * 0.3 / 1.3, 1e-12);
}

TEST(PrefixReport, MissingGold) {
  try {
    prefix_quality_report({pf("z", PrefixKind::Persona, "x")}, {}, 0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::MissingGold);
  }
}

TEST(MeanStd, Population) {
  const auto m = mean_std({1.0, 2.0, 3.0, 4.0});
  EXPECT_DOUBLE_EQ(m.mean, 2.5);
  EXPECT_NEAR(m.std, std::sqrt(1.25), 1e-12);
}

TEST(Prefix, JsonRoundTrip) {
  auto p = pf("a", PrefixKind::PersonaGpt4, "some text");
  p.shots_used = {"q1", "q2"};
  p.generator_model = "m";
  EXPECT_EQ(nlohmann::json(nlohmann::json(p).get<Prefix>()), nlohmann::json(p));
  for (auto k : all_prefix_kinds()) EXPECT_EQ(parse_prefix_kind(to_string(k)), k);
}
