#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "oracles.hpp"
#include "persona/catalog.hpp"
#include "persona/error.hpp"
#include "persona/eval.hpp"
#include "persona/store.hpp"
#include "persona/util.hpp"
#include "support.hpp"

using namespace persona;

namespace {

// Scores completions from a fixed table; records every prompt it saw.
class TableScorer : public MockProvider {
 public:
  std::map<std::string, std::vector<double>> table;
  std::vector<std::string> prompts;
  std::mutex mu;

 protected:
  ScoredCompletion do_score(const std::string& prompt, const std::string& completion) override {
    std::lock_guard lock(mu);
    prompts.push_back(prompt);
    auto it = table.find(completion);
    if (it == table.end()) return ScoredCompletion::from_logps({-1.0});
    return ScoredCompletion::from_logps(it->second);
  }
};

PreferencePair pp(const std::string& persona, const std::string& id, const std::string& yw, const std::string& yl,
                  QuestionKind kind = QuestionKind::Personal) {
  PreferencePair p;
  p.persona_id = persona;
  p.prompt_id = id;
  p.prompt = "question " + id;
  p.y_w = yw;
  p.y_l = yl;
  p.kind = kind;
  p.split = Split::Test;
  return p;
}

}  // namespace

TEST(Accuracy, OracleScorerIsPerfect) {
  TableScorer s;
  s.table = {{"good", {-0.1}}, {"bad", {-3.0}}};
  std::vector<PreferencePair> pairs;
  for (int i = 0; i < 10; ++i) pairs.push_back(pp("a", "q" + std::to_string(i), "good", "bad"));
  const auto r = preference_accuracy(s, ScoringJob{}, pairs, {});
  ASSERT_EQ(r.size(), 1u);
  EXPECT_DOUBLE_EQ(r[0].accuracy, 1.0);
  EXPECT_DOUBLE_EQ(r[0].ci95, 0.0);
}

TEST(Accuracy, ConstantScorerGetsHalfByTieCredit) {
  TableScorer s;
  std::vector<PreferencePair> pairs;
  for (int i = 0; i < 8; ++i) pairs.push_back(pp("a", "q" + std::to_string(i), "x" + std::to_string(i), "y" + std::to_string(i)));
  const auto r = preference_accuracy(s, ScoringJob{}, pairs, {});
  EXPECT_DOUBLE_EQ(r[0].accuracy, 0.5);
}

TEST(Accuracy, RandomBaseline) {
  MockProvider m;
  std::vector<PreferencePair> pairs;
  for (int i = 0; i < 10000; ++i) pairs.push_back(pp("p" + std::to_string(i % 50), "q" + std::to_string(i), "a", "b"));
  ScoringJob job;
  job.prefix_kind = PrefixKind::Random;
  job.seed = 2024;
  const auto pooled = pool_results(preference_accuracy(m, job, pairs, {}));
  EXPECT_EQ(pooled.n, 10000u);
  EXPECT_NEAR(pooled.accuracy, 0.5, 0.01);
  EXPECT_EQ(m.total_calls(), 0u);
}

TEST(Accuracy, SumAndMeanDisagreeOnLengthSkew) {
  TableScorer s;
  // Chosen is short and individually less likely per token; rejected is long.
  s.table = {{"short yes", {-1.0, -1.0}}, {"a much longer rejected answer here", {-0.5, -0.5, -0.5, -0.5, -0.5, -0.5}},
             {"fine", {-0.2}}, {"not fine", {-0.4, -0.4}}};
  const std::vector<PreferencePair> pairs = {pp("a", "q1", "short yes", "a much longer rejected answer here"),
                                             pp("a", "q2", "fine", "not fine")};
  ScoringJob sum;
  sum.aggregation = Aggregation::Sum;
  ScoringJob mean;
  mean.aggregation = Aggregation::Mean;
  const auto rs = preference_accuracy(s, sum, pairs, {});
  const auto rm = preference_accuracy(s, mean, pairs, {});
  EXPECT_DOUBLE_EQ(rs[0].correct, 2.0);
  EXPECT_DOUBLE_EQ(rm[0].correct, 1.0);
}

TEST(Accuracy, PrefixAndTemplateReachScorer) {
  TableScorer s;
  Prefix tag;
  tag.persona_id = "a";
  tag.kind = PrefixKind::Tag;
  tag.text = "special_person_tag_3";
  ScoringJob job;
  job.prefix_kind = PrefixKind::Tag;
  job.chat_template_id = "zephyr";
  preference_accuracy(s, job, {pp("a", "q", "w", "l")}, {{"a", tag}});
  ASSERT_EQ(s.prompts.size(), 2u);
  EXPECT_EQ(s.prompts[0], "<|user|>\nspecial_person_tag_3 question q</s>\n<|assistant|>\n");
}

TEST(Accuracy, MissingPrefix) {
  MockProvider m;
  ScoringJob job;
  job.prefix_kind = PrefixKind::PersonaGpt4;
  try {
    preference_accuracy(m, job, {pp("a", "q", "w", "l")}, {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::MissingPrefix);
  }
}

TEST(Accuracy, FewshotRetrievalExcludesSameQuestion) {
  TableScorer s;
  Prefix few;
  few.persona_id = "a";
  few.kind = PrefixKind::Fewshot;
  std::vector<PreferencePair> pool = {pp("a", "q", "POOL-SELF", "x"), pp("a", "r1", "POOL-R1", "x"), pp("a", "r2", "POOL-R2", "x")};
  ScoringJob job;
  job.prefix_kind = PrefixKind::Fewshot;
  job.shot_strategy = ShotStrategy::Bm25;
  job.n_shots = 2;
  preference_accuracy(s, job, {pp("a", "q", "w", "l")}, {{"a", few}}, pool);
  EXPECT_EQ(s.prompts[0].find("POOL-SELF"), std::string::npos);
  EXPECT_NE(s.prompts[0].find("POOL-R1"), std::string::npos);
}

TEST(Accuracy, GroupedByPersonaAndKindAndCsv) {
  TableScorer s;
  s.table = {{"good", {-0.1}}, {"bad", {-3.0}}};
  const auto r = preference_accuracy(s, ScoringJob{}, {pp("a", "1", "good", "bad"), pp("a", "2", "bad", "good", QuestionKind::Divergent),
                                                       pp("b", "3", "good", "bad")},
                                     {});
  ASSERT_EQ(r.size(), 3u);
  const auto csv = eval_results_csv(r);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "persona,question_kind,prefix,n,correct,accuracy,ci95");
  EXPECT_NEAR(ci95(0.5, 100), 1.96 * 0.05, 1e-12);
  EXPECT_DOUBLE_EQ(credit(1, 1), 0.5);
}

TEST(Templates, ChatFormats) {
  EXPECT_EQ(apply_chat_template("raw", "x"), "x");
  EXPECT_EQ(apply_chat_template("chatml", "x"), "<|im_start|>user\nx<|im_end|>\n<|im_start|>assistant\n");
  EXPECT_THROW(apply_chat_template("llama", "x"), Error);
  EXPECT_EQ(augment_prompt(PrefixKind::None, "", "Q?"), "Q?");
  EXPECT_EQ(augment_prompt(PrefixKind::Tag, "special_person_tag_3", "Q?"), "special_person_tag_3 Q?");
}

TEST(Folds, ReferenceCatalog) {
  const Catalog c = reference_catalog();
  const auto folds = stratified_folds(c, 5, 1);
  ASSERT_EQ(folds.size(), 5u);
  std::set<std::string> seen;
  for (const auto& f : folds) {
    EXPECT_EQ(f.test_persona_ids.size(), 10u);
    EXPECT_EQ(f.train_persona_ids.size(), 40u);
    for (const auto& id : f.test_persona_ids) {
      EXPECT_TRUE(seen.insert(id).second);
      EXPECT_EQ(std::count(f.train_persona_ids.begin(), f.train_persona_ids.end(), id), 0);
    }
    for (const auto& a : c.axes) {
      std::size_t primary = 0, in_fold = 0;
      for (const auto& p : c.personas) {
        if (p.primary_axis != a.id) continue;
        ++primary;
        in_fold += std::count(f.test_persona_ids.begin(), f.test_persona_ids.end(), p.id);
      }
      if (primary == 5) {
        EXPECT_EQ(in_fold, 1u) << a.id;
      }
    }
  }
  EXPECT_EQ(seen.size(), 50u);
  EXPECT_EQ(nlohmann::json(stratified_folds(c, 5, 1)), nlohmann::json(folds));
  EXPECT_NE(nlohmann::json(stratified_folds(c, 5, 2)), nlohmann::json(folds));
}

TEST(Agreement, Concentration) {
  PromptRecord div;
  div.id = "d";
  div.kind = QuestionKind::Divergent;
  div.axis_id = "ax";
  div.owner = "ax";
  PromptRecord div2 = div;
  div2.id = "d2";
  std::vector<PreferencePair> pairs;
  for (int i = 0; i < 5; ++i) {
    auto p = pp("p" + std::to_string(i), "d", "same", "x", QuestionKind::Divergent);
    p.y_w_id = "c_same";
    pairs.push_back(p);
  }
  for (int i = 0; i < 4; ++i) {
    auto p = pp("p" + std::to_string(i), "d2", "w", "x", QuestionKind::Divergent);
    p.y_w_id = "c" + std::to_string(i);
    pairs.push_back(p);
  }
  const auto a = agreement_per_axis(pairs, {div, div2});
  ASSERT_EQ(a.size(), 1u);
  EXPECT_EQ(a[0].concentration.n, 2u);
  EXPECT_DOUBLE_EQ(a[0].concentration.mean, 3.0);
  EXPECT_DOUBLE_EQ(a[0].concentration.std, 2.0);
}

TEST(Kappa, Identities) {
  EXPECT_DOUBLE_EQ(cohen_kappa(std::vector<int>{1, 0, 1, 1, 0}, std::vector<int>{1, 0, 1, 1, 0}), 1.0);
  EXPECT_NEAR(cohen_kappa(std::vector<int>{1, 0, 1, 0}, std::vector<int>{0, 1, 0, 1}), -1.0, 1e-12);
  EXPECT_DOUBLE_EQ(cohen_kappa(std::vector<std::string>{"x", "x"}, std::vector<std::string>{"x", "x"}), 1.0);
  EXPECT_THROW(cohen_kappa(std::vector<int>{1}, std::vector<int>{1, 0}), Error);
}

TEST(Kappa, IndependentNearZeroAndMatchesOracle) {
  Rng r(8);
  std::vector<int> a, b;
  for (int i = 0; i < 10000; ++i) {
    a.push_back(static_cast<int>(r.below(3)));
    b.push_back(static_cast<int>(r.below(3)));
  }
  const double k = cohen_kappa(a, b);
  EXPECT_NEAR(k, 0.0, 0.05);
  EXPECT_NEAR(k, oracle::kappa(a, b), 1e-12);
}

TEST(Alpha, PerfectAndSystematicDisagreement) {
  using M = std::vector<std::vector<std::optional<int>>>;
  EXPECT_DOUBLE_EQ(krippendorff_alpha(M{{1, 2, 3, 1}, {1, 2, 3, 1}}), 1.0);
  const M flip = {{1, 0, 1, 0}, {0, 1, 0, 1}};
  EXPECT_LT(krippendorff_alpha(flip), 0.0);
  // Hand count: every within-unit pair disagrees, D_o = 1; eight values 4/4,
  // D_e = 2*4*4/(8*7) = 32/56, alpha = 1 - 56/32 = -0.75.
  EXPECT_NEAR(krippendorff_alpha(flip), -0.75, 1e-12);
}

TEST(Alpha, PublishedWorkedExample) {
  // Four observers, twelve units, missing values; nominal alpha 0.743.
  using O = std::optional<int>;
  const O _ = std::nullopt;
  const std::vector<std::vector<O>> m = {
      {1, 2, 3, 3, 2, 1, 4, 1, 2, _, _, _},
      {1, 2, 3, 3, 2, 2, 4, 1, 2, 5, _, 3},
      {_, 3, 3, 3, 2, 3, 4, 2, 2, 5, 1, _},
      {1, 2, 3, 3, 2, 4, 4, 1, 2, 5, 1, _},
  };
  const double a = krippendorff_alpha(m);
  EXPECT_NEAR(a, oracle::alpha(m), 1e-9);
  EXPECT_NEAR(a, 0.743, 5e-4);
}

TEST(Alpha, StringsAndErrors) {
  using S = std::optional<std::string>;
  const std::vector<std::vector<S>> ok = {{S("a"), S("b")}, {S("a"), S("b")}};
  EXPECT_DOUBLE_EQ(krippendorff_alpha(ok), 1.0);
  const std::vector<std::vector<S>> none = {{S("a"), std::nullopt}, {std::nullopt, S("b")}};
  try {
    krippendorff_alpha(none);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::NoPairableValues);
  }
}

TEST(Alpha, MatchesOracleOnRandomMatrices) {
  Rng r(17);
  for (int t = 0; t < 50; ++t) {
    std::vector<std::vector<std::optional<int>>> m(3 + r.below(3), std::vector<std::optional<int>>(10));
    for (auto& row : m) {
      for (auto& v : row) {
        if (r.uniform() < 0.8) v = static_cast<int>(r.below(3));
      }
    }
    EXPECT_NEAR(krippendorff_alpha(m), oracle::alpha(m), 1e-9);
  }
}

TEST(Tax, OracleAndPrefixRows) {
  testing_support::TempDir dir("tax");
  write_jsonl(dir.str("rb.jsonl"), {{{"prompt", "p1"}, {"chosen", "good"}, {"rejected", "bad"}},
                                    {{"prompt", "p2"}, {"chosen", "good"}, {"rejected", "bad"}}});
  TableScorer s;
  s.table = {{"good", {-0.1}}, {"bad", {-3.0}}};
  Prefix tag;
  tag.persona_id = "a";
  tag.kind = PrefixKind::Tag;
  tag.text = "special_person_tag_0";
  const auto rows = alignment_tax_score(s, ScoringJob{}, load_external_pairs(dir.str("rb.jsonl")), {tag});
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].prefix_kind, PrefixKind::None);
  EXPECT_DOUBLE_EQ(rows[0].accuracy, 1.0);
  EXPECT_EQ(rows[1].persona_id, "a");
  write_text_atomic(dir.str("bad.jsonl"), "{\"prompt\": \"x\"}\n");
  EXPECT_THROW(load_external_pairs(dir.str("bad.jsonl")), Error);
}

TEST(Length, Fixtures) {
  auto axis = [](const PreferencePair&) { return std::string("ax"); };
  std::vector<PreferencePair> same = {pp("a", "1", "one two", "three four"), pp("a", "2", "x", "y")};
  auto rows = length_stats(same, axis);
  EXPECT_DOUBLE_EQ(rows[0].delta.mean, 0.0);
  EXPECT_DOUBLE_EQ(rows[0].delta.std, 0.0);

  auto ten = [](int base) {
    std::string s;
    for (int i = 0; i < base; ++i) s += "w ";
    return s;
  };
  std::vector<PreferencePair> longer = {pp("a", "1", ten(12), ten(2)), pp("a", "2", ten(15), ten(5))};
  rows = length_stats(longer, axis);
  EXPECT_DOUBLE_EQ(rows[0].delta.mean, 10.0);
  EXPECT_DOUBLE_EQ(rows[0].delta.std, 0.0);

  // Deltas 3, -1, 0, 5, 2, -3: mean 1.
  std::vector<PreferencePair> mixed = {pp("a", "1", ten(4), ten(1)), pp("a", "2", ten(1), ten(2)), pp("a", "3", ten(2), ten(2)),
                                       pp("a", "4", ten(6), ten(1)), pp("a", "5", ten(3), ten(1)), pp("a", "6", ten(1), ten(4))};
  rows = length_stats(mixed, axis);
  EXPECT_EQ(rows[0].axis_id, "all");
  EXPECT_DOUBLE_EQ(rows[0].delta.mean, 1.0);
  EXPECT_EQ(rows[1].axis_id, "ax");
}
