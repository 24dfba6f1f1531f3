// Acceptance gate: one PASS/FAIL line per primary criterion; exit status is the
// number of failures.

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "oracles.hpp"
#include "persona/catalog.hpp"
#include "persona/error.hpp"
#include "persona/eval.hpp"
#include "persona/filter.hpp"
#include "persona/judge.hpp"
#include "persona/pipeline.hpp"
#include "persona/rouge.hpp"
#include "persona/store.hpp"
#include "support.hpp"

using namespace persona;
namespace fs = std::filesystem;

namespace {

constexpr double kFilterBudgetSeconds = 5.0;
constexpr double kPipelineBudgetSeconds = 300.0;
constexpr double kIdentityTol = 1e-9;
constexpr double kRandomBaselineTol = 0.01;
constexpr int kFilterInstances = 1000;
constexpr int kDiversityInstances = 500;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

int failures = 0;

void report(const std::string& name, bool ok, const std::string& detail) {
  std::cout << (ok ? "PASS " : "FAIL ") << name << " :: " << detail << std::endl;
  if (!ok) ++failures;
}

template <typename Fn>
void criterion(const std::string& name, Fn&& fn) {
  try {
    std::string detail;
    const bool ok = fn(detail);
    report(name, ok, detail);
  } catch (const std::exception& e) {
    report(name, false, std::string("exception: ") + e.what());
  }
}

std::vector<double> unit(Rng& rng, std::size_t dim) {
  std::vector<double> v(dim);
  double n = 0.0;
  for (auto& x : v) {
    x = rng.normal();
    n += x * x;
  }
  for (auto& x : v) x /= std::sqrt(n);
  return v;
}

bool filter_oracle(std::string& detail) {
  Rng rng(20240601);
  std::vector<std::vector<Candidate>> instances;
  for (int t = 0; t < kFilterInstances; ++t) {
    std::vector<Candidate> cs;
    for (int i = 0; i < 50; ++i) {
      // Every third instance uses coarse rewards so ties are exercised.
      double r = rng.normal();
      if (t % 3 == 0) r = std::round(r * 4.0) / 4.0;
      cs.push_back(testing_support::cand("c" + std::to_string(i), r));
    }
    instances.push_back(std::move(cs));
  }
  int mismatches = 0;
  const auto t0 = Clock::now();
  std::vector<WindowSelection> got;
  got.reserve(instances.size());
  for (const auto& cs : instances) got.push_back(reward_window(cs, 20));
  const double elapsed = seconds_since(t0);
  for (std::size_t t = 0; t < instances.size(); ++t) {
    const auto want = oracle::best_window(instances[t], 20);
    if (got[t].selected_ids != want.ids || got[t].range != want.range) ++mismatches;
  }
  std::ostringstream d;
  d << kFilterInstances << " instances n=50 w=20, mismatches=" << mismatches << ", runtime=" << elapsed << "s (limit "
    << kFilterBudgetSeconds << "s)";
  detail = d.str();
  return mismatches == 0 && elapsed < kFilterBudgetSeconds;
}

bool diversity(std::string& detail) {
  Rng rng(77);
  int bad_distinct = 0, bad_max = 0, bad_fixed_point = 0;
  for (int t = 0; t < kDiversityInstances; ++t) {
    std::vector<Candidate> cs;
    for (int i = 0; i < 20; ++i) cs.push_back(testing_support::cand("c" + std::to_string(i), 0.0, unit(rng, 16)));
    const auto mode = t % 2 == 0 ? FarthestMode::Sum : FarthestMode::Min;
    const auto d = diverse_select(cs, 4, static_cast<std::uint64_t>(t), mode);

    std::set<std::size_t> clusters;
    for (const auto& id : d.finalist_ids) clusters.insert(d.cluster_of.at(id));
    if (d.finalist_ids.size() != 4 || clusters.size() != 4) ++bad_distinct;

    // Reference score: Euclidean distance to the other centroids, reduced by sum or min.
    std::map<std::string, double> score;
    for (const auto& c : cs) {
      const auto& x = c.embedding->values;
      const std::size_t own = d.cluster_of.at(c.id);
      double acc = mode == FarthestMode::Sum ? 0.0 : INFINITY;
      for (std::size_t k = 0; k < d.centroids.size(); ++k) {
        if (k == own) continue;
        const double dist = oracle::euclid(x, d.centroids[k]);
        acc = mode == FarthestMode::Sum ? acc + dist : std::min(acc, dist);
      }
      score[c.id] = acc;
      // Converged clustering: every point sits with its nearest centroid.
      for (std::size_t k = 0; k < d.centroids.size(); ++k) {
        if (oracle::euclid(x, d.centroids[k]) < oracle::euclid(x, d.centroids[own]) - 1e-9) {
          ++bad_fixed_point;
          break;
        }
      }
    }
    for (const auto& id : d.finalist_ids) {
      const std::size_t k = d.cluster_of.at(id);
      for (const auto& c : cs) {
        if (d.cluster_of.at(c.id) == k && score[c.id] > score[id] + 1e-12) {
          ++bad_max;
          break;
        }
      }
    }
  }
  std::ostringstream o;
  o << kDiversityInstances << " instances (20 points, k=4, sum/min alternating): non-distinct=" << bad_distinct
    << ", non-max finalists=" << bad_max << ", points not at nearest centroid=" << bad_fixed_point;
  detail = o.str();
  return bad_distinct == 0 && bad_max == 0 && bad_fixed_point == 0;
}

bool tournament(std::string& detail) {
  const std::vector<std::string> ids = {"a", "b", "c", "d"};
  std::vector<int> perm = {0, 1, 2, 3};
  int runs = 0, wrong = 0, bad_matches = 0;
  do {
    std::map<std::string, int> rank;
    for (std::size_t i = 0; i < 4; ++i) rank["response " + ids[i]] = perm[i];
    const std::string want = ids[static_cast<std::size_t>(std::max_element(perm.begin(), perm.end()) - perm.begin())];
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      testing_support::RankJudge judge(rank);
      Persona persona{"p", "Ada", {}, {}, {}};
      PromptRecord prompt;
      prompt.id = "q";
      prompt.text = "question";
      std::vector<Candidate> finalists;
      for (const auto& id : ids) {
        Candidate c;
        c.id = id;
        c.text = "response " + id;
        finalists.push_back(c);
      }
      const auto pair = run_tournament(judge, persona, prompt, finalists, JudgeOptions{.seed = seed});
      ++runs;
      wrong += pair.y_w_id != want;
      bad_matches += pair.bracket.size() != 3;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  detail = std::to_string(runs) + " tournaments (24 orderings x 10 seeds), winner!=argmax: " + std::to_string(wrong) +
           ", brackets without 3 matches: " + std::to_string(bad_matches);
  return runs == 240 && wrong == 0 && bad_matches == 0;
}

bool full_pipeline(std::string& detail, std::vector<Prefix>& prefixes_out) {
  testing_support::TempDir dir("accept_full");
  RunConfig c = RunConfig::full();
  c.mock = true;
  c.cache = false;
  c.max_axes = 2;
  c.max_per_axis = 5;
  c.workers = 8;
  c.data_dir = dir.str("data");
  validate_config(c);
  const auto conns = HttpProvider::connections_attempted();
  const auto t0 = Clock::now();
  Pipeline p(c, nullptr);
  const auto reports = p.run_all();
  const auto v = p.validate();
  const double elapsed = seconds_since(t0);

  const auto b = load_bundle(c.data_dir);
  std::ostringstream o;
  bool ok = v.valid();
  for (const auto& x : v.violations) o << "[" << x.kind << " " << x.subject << "] ";

  // 100 personal questions per persona, 100 divergent per axis, halved.
  std::map<std::string, std::map<std::string, int>> per_persona;  // persona -> kind/split -> n
  for (const auto& pr : b.pairs) per_persona[pr.persona_id][to_string(pr.kind) + "/" + to_string(pr.split)]++;
  bool halves = per_persona.size() == 10;
  for (auto& [id, m] : per_persona) halves &= m["personal/train"] == 50 && m["personal/test"] == 50 && m["divergent/train"] == 50 &&
                                              m["divergent/test"] == 50;
  ok &= halves;

  // 50 candidates -> window of 20 -> 4 finalists.
  bool funnel = true;
  for (const auto& cs : read_records<CandidateSet>(c.data_dir + "/candidates.jsonl")) funnel &= cs.candidates.size() == 50;
  std::size_t n_final = 0;
  for (const auto& f : read_records<FinalistRecord>(c.data_dir + "/finalists.jsonl")) {
    ++n_final;
    funnel &= f.window_ids.size() == 20 && f.finalist_ids.size() == 4;
  }
  ok &= funnel && n_final > 0;

  bool brackets = true;
  for (const auto& pr : b.pairs) brackets &= pr.bracket.size() == 3 && pr.candidates.size() == 4;
  ok &= brackets;

  std::size_t requests = 0, matches = 0;
  for (const auto& r : reports) {
    if (r.stage == "pairs") {
      requests = r.counts.at("judge_requests").get<std::size_t>();
      matches = r.counts.at("matches").get<std::size_t>();
    }
  }
  const bool batched = matches == 3 * b.pairs.size() && requests * 5 >= matches && requests <= (matches + 4) / 5 + 2;
  ok &= batched;
  const auto new_conns = HttpProvider::connections_attempted() - conns;
  ok &= new_conns == 0 && elapsed < kPipelineBudgetSeconds;

  o << "validate=" << (v.valid() ? "ok" : "FAILED") << ", pairs=" << b.pairs.size() << ", 50/50 halves=" << halves
    << ", 50->20->4=" << funnel << ", 3 matches/pair=" << brackets << ", judge requests=" << requests << " for "
    << matches << " matches (batch 5)=" << batched << ", http connections=" << new_conns << ", runtime=" << elapsed
    << "s (limit " << kPipelineBudgetSeconds << "s)";
  detail = o.str();
  prefixes_out = b.prefixes;
  return ok;
}

std::map<std::string, std::string> snapshot(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = read_text(e.path().string());
  }
  return out;
}

bool determinism(std::string& detail) {
  setenv("SOURCE_DATE_EPOCH", "1700000000", 1);
  testing_support::TempDir a("accept_det_a"), b("accept_det_b");
  for (const auto* d : {&a, &b}) {
    const std::string cmd = std::string(PERSONA_CLI) + " --mock --scale desk --workers " + (d == &a ? "1" : "8") +
                            " --data " + d->str("data") + " pipeline all > /dev/null 2>&1";
    if (std::system(cmd.c_str()) != 0) {
      detail = "pipeline run failed: " + cmd;
      return false;
    }
  }
  const auto sa = snapshot(a.path() / "data"), sb = snapshot(b.path() / "data");
  std::vector<std::string> diff;
  for (const auto& [name, bytes] : sa) {
    auto it = sb.find(name);
    if (it == sb.end() || it->second != bytes) diff.push_back(name);
  }
  if (sa.size() != sb.size()) diff.push_back("<file set>");
  detail = "two `--mock --scale desk pipeline all` runs (workers 1 vs 8), " + std::to_string(sa.size()) +
           " artifacts compared, differing: " + (diff.empty() ? std::string("none") : join(diff, ","));
  return diff.empty() && sa.size() > 10;
}

bool metric_identities(std::string& detail) {
  std::ostringstream o;
  bool ok = true;
  auto check = [&](const std::string& name, double got, double want, double tol) {
    const bool pass = std::fabs(got - want) <= tol;
    ok &= pass;
    o << name << "=" << got << (pass ? "" : "(!)") << " ";
  };
  check("rouge(x,x)", rouge("the persona prefers short answers", "the persona prefers short answers").f1, 1.0, kIdentityTol);
  check("rouge(cat sat,cat ran)", rouge("the cat sat", "the cat ran").f1, 2.0 / 3.0, kIdentityTol);
  check("kappa(a,a)", cohen_kappa(std::vector<int>{1, 0, 2, 1, 0}, std::vector<int>{1, 0, 2, 1, 0}), 1.0, kIdentityTol);
  check("kappa(anti)", cohen_kappa(std::vector<int>{1, 0, 1, 0}, std::vector<int>{0, 1, 0, 1}), -1.0, kIdentityTol);
  check("alpha(perfect)", krippendorff_alpha(std::vector<std::vector<std::optional<int>>>{{1, 2, 3, 2}, {1, 2, 3, 2}, {1, std::nullopt, 3, 2}}),
        1.0, kIdentityTol);
  MockProvider m;
  std::vector<PreferencePair> pairs;
  for (int i = 0; i < 10000; ++i) {
    PreferencePair p;
    p.persona_id = "p" + std::to_string(i % 50);
    p.prompt_id = "q" + std::to_string(i);
    p.y_w = "a";
    p.y_l = "b";
    pairs.push_back(p);
  }
  ScoringJob job;
  job.prefix_kind = PrefixKind::Random;
  job.seed = 1;
  check("random-baseline(n=10000)", pool_results(preference_accuracy(m, job, pairs, {})).accuracy, 0.5, kRandomBaselineTol);
  detail = o.str();
  return ok;
}

bool prefix_report(std::string& detail, const std::vector<Prefix>& prefixes) {
  std::map<std::string, Prefix> golds;
  for (const auto& p : prefixes) {
    if (p.kind == PrefixKind::PersonaGold) golds[p.persona_id] = p;
  }
  const auto rep = prefix_quality_report(prefixes, golds, 0);
  const auto csv = prefix_quality_csv(rep);
  std::vector<std::string> lines;
  std::istringstream in(csv);
  for (std::string l; std::getline(in, l);) lines.push_back(l);
  const std::vector<std::string> heads = {"metric", "R1", "R1 (random)", "# words"};
  bool rows = lines.size() == 4;
  for (std::size_t i = 0; rows && i < 4; ++i) rows &= lines[i].rfind(heads[i] + ",", 0) == 0;
  const bool cols = rows && lines[0] == "metric,fewshot,persona,persona_gpt4,persona_gold";
  const auto& gold = rep.columns.back();
  const bool gold_one = gold.kind == PrefixKind::PersonaGold && gold.r1.mean == 1.0 && gold.r1.std == 0.0 &&
                        rows && lines[1].substr(lines[1].rfind(',') + 1) == "1.00 ± 0.00";
  detail = "rows {R1, R1 (random), # words}=" + std::string(rows ? "ok" : "bad") +
           ", columns {few-shot, persona, persona gpt4, persona gold}=" + (cols ? "ok" : "bad") +
           ", persona_gold R1=" + (rows ? lines[1].substr(lines[1].rfind(',') + 1) : "?") + " over " +
           std::to_string(golds.size()) + " personas";
  return rows && cols && gold_one;
}

bool folds(std::string& detail) {
  const Catalog c = reference_catalog();
  const auto fs = stratified_folds(c, 5, 0);
  bool sizes = fs.size() == 5, strata = true;
  std::set<std::string> covered;
  bool disjoint = true;
  for (const auto& f : fs) {
    sizes &= f.test_persona_ids.size() == 10 && f.train_persona_ids.size() == 40;
    for (const auto& id : f.test_persona_ids) {
      disjoint &= covered.insert(id).second;
      disjoint &= std::find(f.train_persona_ids.begin(), f.train_persona_ids.end(), id) == f.train_persona_ids.end();
    }
    for (const auto& a : c.axes) {
      std::size_t members = 0, in_fold = 0;
      for (const auto& p : c.personas) {
        if (p.primary_axis != a.id) continue;
        ++members;
        in_fold += std::count(f.test_persona_ids.begin(), f.test_persona_ids.end(), p.id);
      }
      if (members == 5) strata &= in_fold == 1;
    }
  }
  const bool cover = covered.size() == 50;
  const bool valid = validate_folds(fs, c).valid();
  detail = std::string("10 test/40 train per fold=") + (sizes ? "ok" : "bad") + ", 1 per 5-persona axis per fold=" +
           (strata ? "ok" : "bad") + ", disjoint tests=" + (disjoint ? "ok" : "bad") + ", union covers 50=" +
           (cover ? "ok" : "bad");
  return sizes && strata && disjoint && cover && valid;
}

class TableScorer : public MockProvider {
 public:
  std::map<std::string, std::vector<double>> table;

 protected:
  ScoredCompletion do_score(const std::string&, const std::string& completion) override {
    return ScoredCompletion::from_logps(table.at(completion));
  }
};

bool sum_vs_mean(std::string& detail) {
  // Chosen answers are short; rejected ones are long with likelier tokens.
  TableScorer s;
  s.table = {{"Yes, daily.", {-1.2, -1.0, -1.1}},
             {"Well, it really depends on many factors, but generally speaking, probably yes.", std::vector<double>(14, -0.6)},
             {"Tofu.", {-0.9, -0.4}},
             {"Perhaps some kind of soy product would be a reasonable choice here.", std::vector<double>(12, -0.5)}};
  std::vector<PreferencePair> pairs(2);
  pairs[0].persona_id = pairs[1].persona_id = "p";
  pairs[0].prompt_id = "q1";
  pairs[0].y_w = "Yes, daily.";
  pairs[0].y_l = "Well, it really depends on many factors, but generally speaking, probably yes.";
  pairs[1].prompt_id = "q2";
  pairs[1].y_w = "Tofu.";
  pairs[1].y_l = "Perhaps some kind of soy product would be a reasonable choice here.";
  int flipped = 0;
  std::ostringstream o;
  for (const auto& p : pairs) {
    ScoringJob sum, mean;
    sum.aggregation = Aggregation::Sum;
    mean.aggregation = Aggregation::Mean;
    const double cs = preference_accuracy(s, sum, {p}, {})[0].correct;
    const double cm = preference_accuracy(s, mean, {p}, {})[0].correct;
    flipped += cs != cm;
    o << p.prompt_id << ": sum=" << cs << " mean=" << cm << "; ";
  }
  detail = o.str() + "flipped pairs=" + std::to_string(flipped);
  return flipped >= 1;
}

}  // namespace

int main() {
  std::vector<Prefix> prefixes;
  criterion("filter_oracle_equivalence", filter_oracle);
  criterion("diversity_selection", diversity);
  criterion("tournament_correctness", tournament);
  criterion("full_scale_pipeline_shape", [&](std::string& d) { return full_pipeline(d, prefixes); });
  criterion("determinism", determinism);
  criterion("metric_identities", metric_identities);
  criterion("prefix_report_structure", [&](std::string& d) { return prefix_report(d, prefixes); });
  criterion("folds", folds);
  criterion("sum_vs_mean_flip", sum_vs_mean);
  std::cout << (failures == 0 ? "ALL PASS" : std::to_string(failures) + " FAILED") << std::endl;
  return failures == 0 ? 0 : 1;
}
