#include <gtest/gtest.h>

#include <cmath>
#include <regex>

#include "persona/error.hpp"
#include "persona/judge.hpp"
#include "persona/util.hpp"
#include "support.hpp"

using namespace persona;
using testing_support::RankJudge;
using testing_support::ScriptedChat;

namespace {

JudgePair jp(std::string a, std::string b, bool swap = false) { return {"Which would Ada prefer?", "a question", a, b, swap}; }

std::size_t examples_in(const GenRequest& req) {
  const std::string& body = req.messages.back().content;
  std::size_t n = 0;
  for (auto p = body.find("## Example "); p != std::string::npos; p = body.find("## Example ", p + 1)) ++n;
  return n;
}

std::string verdicts(std::size_t n, const std::function<bool(std::size_t)>& a_better) {
  std::string out;
  for (std::size_t i = 0; i < n; ++i) {
    out += "{\"Concise explanation\": \"why\", \"Output (a) is better than Output (b)\": " +
           std::string(a_better(i) ? "true" : "false") + "}\n";
  }
  return out;
}

Candidate finalist(const std::string& id) {
  Candidate c;
  c.id = id;
  c.prompt_id = "q";
  c.text = "response " + id;
  return c;
}

TournamentJob job(const std::string& persona, const std::string& prompt, const std::vector<std::string>& ids) {
  TournamentJob j;
  j.persona = Persona{persona, "Name " + persona, {}, {}, {}};
  j.prompt.id = prompt;
  j.prompt.text = "question " + prompt;
  j.prompt.persona_ids = {persona};
  j.prompt.split = Split::Train;
  for (const auto& id : ids) j.finalists.push_back(finalist(id));
  return j;
}

}  // namespace

TEST(JudgeRender, FiveExamplesNumberedThreeToSeven) {
  std::vector<JudgePair> ps;
  for (int i = 0; i < 5; ++i) ps.push_back(jp("a" + std::to_string(i), "b" + std::to_string(i)));
  const auto req = render_judge_batch(ps);
  const auto& body = req.messages.back().content;
  EXPECT_NE(body.find("Preferred output in JSON format for example 3-7"), std::string::npos);
  EXPECT_NE(body.find("## Example 7:"), std::string::npos);
  EXPECT_EQ(body.find("## Example 8:"), std::string::npos);
  EXPECT_EQ(examples_in(req), 5u);
  EXPECT_GT(req.messages.size(), 1u);
}

TEST(JudgeRender, SingleExample) {
  const auto body = render_judge_batch({jp("x", "y")}).messages.back().content;
  EXPECT_NE(body.find("for example 3:"), std::string::npos);
  EXPECT_EQ(body.find("3-"), std::string::npos);
  EXPECT_THROW(render_judge_batch({}), Error);
  EXPECT_THROW(render_judge_batch(std::vector<JudgePair>(6, jp("x", "y"))), Error);
}

TEST(JudgeRender, SwapExchangesSlots) {
  const auto body = render_judge_batch({jp("first", "second", true)}).messages.back().content;
  EXPECT_NE(body.find("### Output (a) for example 3:\nsecond"), std::string::npos);
  EXPECT_NE(body.find("### Output (b) for example 3:\nfirst"), std::string::npos);
  EXPECT_TRUE(unswap(Verdict{true, ""}, true) == (Verdict{false, ""}));
  EXPECT_TRUE(unswap(Verdict{true, ""}, false) == (Verdict{true, ""}));
}

TEST(JudgeParse, TwoObjects) {
  const auto v = parse_judge_response(verdicts(2, [](std::size_t i) { return i == 0; }), 2);
  ASSERT_EQ(v.size(), 2u);
  EXPECT_TRUE(v[0].a_better);
  EXPECT_FALSE(v[1].a_better);
  EXPECT_EQ(v[0].rationale, "why");
}

TEST(JudgeParse, MissingBooleanIsMalformed) {
  try {
    parse_judge_response("{\"Concise explanation\": \"x\", \"Output (a) is better than Output (b)\": true}\n"
                         "{\"Concise explanation\": \"y\"}",
                         2);
    FAIL();
  } catch (const MalformedVerdictError& e) {
    EXPECT_EQ(e.index(), 1u);
  }
}

TEST(JudgeParse, ProseBetweenObjectsAndBracesInStrings) {
  const std::string text =
      "Sure! For example 3:\n{\"Concise explanation\": \"uses {braces} and \\\"quotes\\\"\", "
      "\"Output (a) is better than Output (b)\": false}\nNow example 4, which was harder:\n"
      "```json\n{\"Output (a) is better than Output (b)\": true, \"Concise explanation\": \"b}\"}\n```";
  const auto v = parse_judge_response(text, 2);
  EXPECT_FALSE(v[0].a_better);
  EXPECT_EQ(v[0].rationale, "uses {braces} and \"quotes\"");
  EXPECT_TRUE(v[1].a_better);
}

TEST(JudgeParse, LabelsReorderAnswers) {
  const std::string text =
      "Example 4: {\"Concise explanation\": \"b\", \"Output (a) is better than Output (b)\": true}\n"
      "Example 3: {\"Concise explanation\": \"a\", \"Output (a) is better than Output (b)\": false}";
  const auto v = parse_judge_response(text, 2);
  EXPECT_EQ(v[0].rationale, "a");
  EXPECT_EQ(v[1].rationale, "b");
}

TEST(JudgeParse, ScanLeavesGaps) {
  const auto v = scan_judge_response("{\"Concise explanation\": \"a\", \"Output (a) is better than Output (b)\": 1}", 2);
  EXPECT_FALSE(v[0]);
  EXPECT_FALSE(v[1]);
}

TEST(Tournament, FourFinalistsThreeMatches) {
  std::map<std::string, int> rank = {{"response a", 3}, {"response b", 1}, {"response c", 4}, {"response d", 2}};
  RankJudge judge(rank);
  const auto p = run_tournament(judge, job("p", "q", {"a", "b", "c", "d"}).persona, job("p", "q", {}).prompt,
                                job("p", "q", {"a", "b", "c", "d"}).finalists, JudgeOptions{.seed = 5});
  EXPECT_EQ(p.bracket.size(), 3u);
  EXPECT_EQ(p.y_w_id, "c");
  EXPECT_EQ(p.bracket.back().round, 1);
  // The final's loser is y_l.
  EXPECT_TRUE(p.y_l_id == p.bracket.back().a_id || p.y_l_id == p.bracket.back().b_id);
  EXPECT_NE(p.y_l_id, p.y_w_id);
  EXPECT_EQ(p.y_w, "response c");
  EXPECT_EQ(p.prompt, "question q");
}

TEST(Tournament, TransitiveJudgeFindsArgmaxForEveryOrdering) {
  std::vector<int> perm = {0, 1, 2, 3};
  const std::vector<std::string> ids = {"a", "b", "c", "d"};
  do {
    std::map<std::string, int> rank;
    for (std::size_t i = 0; i < 4; ++i) rank["response " + ids[i]] = perm[i];
    const std::string want = ids[static_cast<std::size_t>(std::max_element(perm.begin(), perm.end()) - perm.begin())];
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      RankJudge judge(rank);
      const auto j = job("p", "q", ids);
      EXPECT_EQ(run_tournament(judge, j.persona, j.prompt, j.finalists, JudgeOptions{.seed = seed}).y_w_id, want);
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
}

TEST(Tournament, OddFieldGetsBye) {
  RankJudge judge({{"response a", 1}, {"response b", 3}, {"response c", 2}});
  const auto j = job("p", "q", {"a", "b", "c"});
  const auto p = run_tournament(judge, j.persona, j.prompt, j.finalists, JudgeOptions{.seed = 2});
  EXPECT_EQ(p.bracket.size(), 2u);
  EXPECT_EQ(p.y_w_id, "b");
}

TEST(Tournament, DeterministicUnderSeed) {
  MockProvider m1, m2;
  const auto j = job("p", "q", {"a", "b", "c", "d"});
  const auto p1 = run_tournament(m1, j.persona, j.prompt, j.finalists, JudgeOptions{.seed = 17});
  const auto p2 = run_tournament(m2, j.persona, j.prompt, j.finalists, JudgeOptions{.seed = 17});
  EXPECT_EQ(nlohmann::json(p1), nlohmann::json(p2));
}

TEST(Tournament, BatchesMatchesAcrossJobs) {
  std::map<std::string, int> rank;
  std::vector<TournamentJob> jobs;
  for (int i = 0; i < 10; ++i) {
    const std::string q = "q" + std::to_string(i);
    std::vector<std::string> ids;
    for (int k = 0; k < 4; ++k) {
      ids.push_back(q + "_" + std::to_string(k));
      rank["response " + ids.back()] = (k * 7 + i) % 4;
    }
    jobs.push_back(job("p", q, ids));
  }
  RankJudge judge(rank);
  const auto r = label_tournaments(judge, jobs, JudgeOptions{.seed = 1, .batch = 5, .max_retries = 3, .workers = 3});
  EXPECT_EQ(r.pairs.size(), 10u);
  EXPECT_EQ(r.matches, 30u);
  // Round one: 20 matches in 4 requests; final: 10 in 2.
  EXPECT_EQ(r.requests, 6u);
  for (int n : judge.batch_sizes) EXPECT_LE(n, 5);
}

TEST(Tournament, MalformedRetriedThenRecovered) {
  RankJudge judge({{"response a", 1}, {"response b", 2}});
  judge.garble_first = 2;
  const auto j = job("p", "q", {"a", "b"});
  const auto p = run_tournament(judge, j.persona, j.prompt, j.finalists, JudgeOptions{.seed = 0, .batch = 5, .max_retries = 3});
  EXPECT_EQ(p.y_w_id, "b");
  EXPECT_EQ(p.bracket[0].attempts, 3);
}

TEST(Tournament, RetriesExhausted) {
  ScriptedChat judge([](const GenRequest&, int) { return std::string("no json here"); });
  const auto j = job("p", "q", {"a", "b", "c", "d"});
  try {
    run_tournament(judge, j.persona, j.prompt, j.finalists, JudgeOptions{.seed = 0, .batch = 5, .max_retries = 2});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::TournamentIncomplete);
  }
  EXPECT_EQ(judge.calls, 3);
  const auto r = label_tournaments(judge, {j}, JudgeOptions{.seed = 0, .batch = 5, .max_retries = 2});
  EXPECT_TRUE(r.pairs.empty());
  ASSERT_EQ(r.failures.size(), 1u);
  EXPECT_EQ(r.failures[0].prompt_id, "q");
}

TEST(Tournament, PairJsonRoundTrip) {
  RankJudge judge({{"response a", 1}, {"response b", 2}, {"response c", 0}, {"response d", 5}});
  const auto j = job("p", "q", {"a", "b", "c", "d"});
  const auto p = run_tournament(judge, j.persona, j.prompt, j.finalists, JudgeOptions{.seed = 3});
  EXPECT_EQ(nlohmann::json(nlohmann::json(p).get<PreferencePair>()), nlohmann::json(p));
}

TEST(WinRate, SelfComparisonNearHalf) {
  Rng coin(5);
  ScriptedChat judge([&](const GenRequest& req, int) {
    return verdicts(examples_in(req), [&](std::size_t) { return coin.coin(); });
  });
  std::vector<WinRateQuestion> qs;
  WinRateSystem a{"a", {}}, b{"b", {}};
  for (int i = 0; i < 400; ++i) {
    const std::string id = "w" + std::to_string(i);
    qs.push_back({id, "Ada", "question " + id});
    a.generations[id] = b.generations[id] = "same answer " + id;
  }
  const auto m = win_rate_matrix(judge, {a, b}, qs);
  EXPECT_NEAR(m.rate[0][1], 0.5, 0.1);
  EXPECT_NEAR(m.rate[0][1] + m.rate[1][0], 1.0, 1e-12);
}

TEST(WinRate, LongerAlwaysWinsAndShape) {
  ScriptedChat judge([&](const GenRequest& req, int) {
    const std::string& body = req.messages.back().content;
    static const std::regex ex(R"(### Output \(a\) for example \d+:\n([^\n]*)\n\n### Output \(b\) for example \d+:\n([^\n]*)\n)");
    std::string out;
    for (auto it = std::sregex_iterator(body.begin(), body.end(), ex); it != std::sregex_iterator(); ++it) {
      out += verdicts(1, [&](std::size_t) { return (*it)[1].length() > (*it)[2].length(); });
    }
    return out;
  });
  std::vector<WinRateQuestion> qs;
  std::vector<WinRateSystem> sys = {{"long", {}}, {"mid", {}}, {"short", {}}, {"tiny", {}}};
  for (int i = 0; i < 12; ++i) {
    const std::string id = "w" + std::to_string(i);
    qs.push_back({id, "Ada", "q"});
    sys[0].generations[id] = std::string(40, 'x');
    sys[1].generations[id] = std::string(30, 'x');
    sys[2].generations[id] = std::string(20, 'x');
    sys[3].generations[id] = std::string(10, 'x');
  }
  const auto m = win_rate_matrix(judge, sys, qs, JudgeOptions{.seed = 9});
  std::size_t off = 0;
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t j = 0; j < 4; ++j) {
      if (i == j) {
        EXPECT_TRUE(std::isnan(m.rate[i][j]));
      } else {
        ++off;
        EXPECT_EQ(m.compared[i][j], 12u);
      }
    }
  }
  EXPECT_EQ(off, 12u);
  for (std::size_t j = 1; j < 4; ++j) EXPECT_DOUBLE_EQ(m.rate[0][j], 1.0);
  EXPECT_DOUBLE_EQ(m.rate[3][0], 0.0);
  const auto csv = win_rate_csv(m);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 5);
}
