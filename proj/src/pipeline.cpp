#include "persona/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <map>
#include <set>
#include <sstream>

#include "persona/error.hpp"
#include "persona/judge.hpp"
#include "persona/promptgen.hpp"
#include "persona/sampler.hpp"
#include "persona/templates.hpp"
#include "persona/util.hpp"

namespace fs = std::filesystem;

namespace persona {

// ---------------------------------------------------------------------------
// Config

RunConfig RunConfig::full() { return RunConfig{}; }

RunConfig RunConfig::desk() {
  RunConfig c;
  c.scale = "desk";
  c.max_axes = 2;
  c.max_per_axis = 2;
  c.params.n_personal = 8;
  c.params.n_divergent = 8;
  c.params.cots = 2;
  c.params.per_cot = 5;
  c.params.window = 6;
  c.params.k = 3;
  return c;
}

RunConfig RunConfig::preset(const std::string& scale) {
  if (scale == "full") return full();
  if (scale == "desk") return desk();
  throw Error(Errc::ConfigError, "scale must be full|desk, got " + scale);
}

namespace {

nlohmann::json params_json(const StageParams& p) {
  std::vector<std::string> kinds;
  for (auto k : p.prefix_kinds) kinds.push_back(to_string(k));
  return {{"n_personal", p.n_personal},
          {"n_divergent", p.n_divergent},
          {"question_batch", p.question_batch},
          {"cots", p.cots},
          {"per_cot", p.per_cot},
          {"window", p.window},
          {"k", p.k},
          {"farthest", to_string(p.farthest)},
          {"judge_batch", p.judge_batch},
          {"judge_retries", p.judge_retries},
          {"judge_temperature", p.judge_temperature},
          {"prefix_kinds", kinds},
          {"shot_strategy", to_string(p.shot_strategy)},
          {"fewshot_shots", p.fewshot_shots},
          {"persona_shots", p.persona_shots},
          {"folds", p.folds},
          {"aggregation", to_string(p.aggregation)},
          {"chat_template", p.chat_template}};
}

void merge_params(const nlohmann::json& j, StageParams& p) {
  p.n_personal = j.value("n_personal", p.n_personal);
  p.n_divergent = j.value("n_divergent", p.n_divergent);
  p.question_batch = j.value("question_batch", p.question_batch);
  p.cots = j.value("cots", p.cots);
  p.per_cot = j.value("per_cot", p.per_cot);
  p.window = j.value("window", p.window);
  p.k = j.value("k", p.k);
  if (j.contains("farthest")) p.farthest = parse_farthest_mode(j["farthest"].get<std::string>());
  p.judge_batch = j.value("judge_batch", p.judge_batch);
  p.judge_retries = j.value("judge_retries", p.judge_retries);
  p.judge_temperature = j.value("judge_temperature", p.judge_temperature);
  if (j.contains("prefix_kinds")) {
    p.prefix_kinds.clear();
    for (const auto& k : j["prefix_kinds"]) p.prefix_kinds.push_back(parse_prefix_kind(k.get<std::string>()));
  }
  if (j.contains("shot_strategy")) p.shot_strategy = parse_shot_strategy(j["shot_strategy"].get<std::string>());
  p.fewshot_shots = j.value("fewshot_shots", p.fewshot_shots);
  p.persona_shots = j.value("persona_shots", p.persona_shots);
  p.folds = j.value("folds", p.folds);
  if (j.contains("aggregation")) p.aggregation = parse_aggregation(j["aggregation"].get<std::string>());
  p.chat_template = j.value("chat_template", p.chat_template);
}

}  // namespace

void to_json(nlohmann::json& j, const RunConfig& c) {
  j = {{"scale", c.scale},
       {"seed", c.seed},
       {"data_dir", c.data_dir},
       {"catalog_path", c.catalog_path},
       {"max_axes", c.max_axes},
       {"max_per_axis", c.max_per_axis},
       {"workers", c.workers},
       {"mock", c.mock},
       {"mock_outage", c.mock_outage},
       {"cache", c.cache},
       {"provider", c.http},
       {"params", params_json(c.params)}};
}

void merge_config(const nlohmann::json& j, RunConfig& c) {
  try {
    c.seed = j.value("seed", c.seed);
    c.data_dir = j.value("data_dir", c.data_dir);
    c.catalog_path = j.value("catalog_path", c.catalog_path);
    c.max_axes = j.value("max_axes", c.max_axes);
    c.max_per_axis = j.value("max_per_axis", c.max_per_axis);
    c.workers = j.value("workers", c.workers);
    c.mock = j.value("mock", c.mock);
    c.mock_outage = j.value("mock_outage", c.mock_outage);
    c.cache = j.value("cache", c.cache);
    if (j.contains("provider")) {
      nlohmann::json merged = c.http;
      merged.merge_patch(j["provider"]);
      c.http = merged.get<HttpConfig>();
    }
    if (j.contains("params")) merge_params(j["params"], c.params);
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::ConfigError, e.what());
  }
}

void validate_config(const RunConfig& c) {
  const auto& p = c.params;
  auto fail = [](const std::string& what) { throw Error(Errc::ConfigError, what); };
  if (c.scale != "full" && c.scale != "desk") fail("scale must be full|desk");
  if (p.n_personal < 2 || p.n_personal % 2) fail("n_personal must be even and >= 2");
  if (p.n_divergent < 2 || p.n_divergent % 2) fail("n_divergent must be even and >= 2");
  if (p.cots < 1 || p.per_cot < 1) fail("cots and per_cot must be >= 1");
  if (p.window < 2 || p.window > static_cast<std::size_t>(p.cots * p.per_cot)) fail("window must be in [2, cots*per_cot]");
  if (p.k < 2 || p.k > p.window) fail("k must be in [2, window]");
  if (p.judge_batch < 1) fail("judge_batch must be >= 1");
  if (p.folds < 2) fail("folds must be >= 2");
  if (c.workers < 1) fail("workers must be >= 1");
  if (c.scale == "full") {
    if (p.n_personal != 100 || p.n_divergent != 100) fail("scale=full requires 100 personal and 100 divergent questions");
    if (p.question_batch != 20) fail("scale=full requires question batches of 20");
    if (p.cots != 5 || p.per_cot != 10) fail("scale=full requires 5 CoTs x 10 responses");
    if (p.window != 20 || p.k != 4) fail("scale=full requires w=20 and k=4");
    if (p.judge_batch != 5) fail("scale=full requires judge batches of 5");
  }
}

std::string stage_config_hash(const RunConfig& c, const std::string& stage) {
  const auto p = params_json(c.params);
  const auto& m = c.http.models;
  nlohmann::json j = {{"stage", stage}, {"seed", c.seed}, {"mock", c.mock}};
  if (stage == "personas") {
    j["catalog_path"] = c.catalog_path;
    j["max_axes"] = c.max_axes;
    j["max_per_axis"] = c.max_per_axis;
  } else if (stage == "prompts") {
    j["params"] = {p["n_personal"], p["n_divergent"], p["question_batch"]};
    j["model"] = m.judge;
  } else if (stage == "candidates") {
    j["params"] = {p["cots"], p["per_cot"]};
    j["models"] = {m.generator, m.reward};
  } else if (stage == "finalists") {
    j["params"] = {p["window"], p["k"], p["farthest"]};
    j["model"] = m.embedding;
  } else if (stage == "pairs") {
    j["params"] = {p["judge_batch"], p["judge_retries"], p["judge_temperature"]};
    j["model"] = m.judge;
  } else if (stage == "prefixes") {
    j["params"] = {p["prefix_kinds"], p["shot_strategy"], p["fewshot_shots"], p["persona_shots"]};
    j["models"] = {m.inference, m.judge};
  } else if (stage == "folds") {
    j["params"] = {p["folds"]};
  } else {
    j["params"] = {p["prefix_kinds"], p["aggregation"], p["chat_template"], p["shot_strategy"], p["fewshot_shots"]};
    j["model"] = m.scorer;
  }
  return json_digest(j);
}

int exit_code_for(const Error& e) {
  switch (e.code()) {
    case Errc::TransportError:
    case Errc::RateLimited:
    case Errc::ScoringUnsupported:
    case Errc::DimensionMismatch:
    case Errc::FixtureMiss: return 2;
    default: return 1;
  }
}

// ---------------------------------------------------------------------------

namespace {

class CountingProvider : public Provider {
 public:
  explicit CountingProvider(std::shared_ptr<Provider> inner) : inner_(std::move(inner)) {}
  std::size_t calls() const { return calls_.load(); }

 protected:
  std::string do_chat(const GenRequest& req) override {
    ++calls_;
    return inner_->chat(req);
  }
  ScoredCompletion do_score(const std::string& prompt, const std::string& completion) override {
    ++calls_;
    return inner_->score_completion(prompt, completion);
  }
  std::vector<EmbeddingVec> do_embed(const std::vector<std::string>& texts) override {
    ++calls_;
    return inner_->embed(texts);
  }
  RewardScore do_reward(const std::string& prompt, const std::string& response) override {
    ++calls_;
    return inner_->reward(prompt, response);
  }

 private:
  std::shared_ptr<Provider> inner_;
  std::atomic<std::size_t> calls_{0};
};

bool recoverable_sampling_error(Errc c) {
  return c == Errc::CoTParseError || c == Errc::EmptyAfterStrip || c == Errc::EmptyParse;
}

}  // namespace

Pipeline::Pipeline(RunConfig config, std::ostream* log) : config_(std::move(config)), log_(log) {
  validate_config(config_);
  if (config_.mock) {
    mock_ = std::make_shared<MockProvider>(MockOptions{config_.seed, 64, config_.mock_outage});
    upstream_ = mock_;
  } else {
    upstream_ = std::make_shared<HttpProvider>(config_.http);
  }
  auto counting = std::make_shared<CountingProvider>(upstream_);
  upstream_ = counting;
  if (config_.cache) {
    fs::create_directories(path("cache"));
    cache_store_ = std::make_shared<ResponseStore>(path("cache/responses.jsonl"), true);
    caching_ = std::make_shared<CachingProvider>(counting, cache_store_);
    provider_ = caching_;
  } else {
    provider_ = counting;
  }
}

Pipeline::Pipeline(RunConfig config, std::shared_ptr<Provider> provider, std::ostream* log)
    : config_(std::move(config)), log_(log) {
  validate_config(config_);
  auto counting = std::make_shared<CountingProvider>(std::move(provider));
  upstream_ = counting;
  provider_ = counting;
}

std::string Pipeline::path(const std::string& name) const { return config_.data_dir + "/" + name; }

std::size_t Pipeline::upstream_calls() const { return static_cast<const CountingProvider&>(*upstream_).calls(); }

void Pipeline::note(const std::string& msg) const {
  if (log_) *log_ << msg << '\n';
}

StageReport Pipeline::begin(const std::string& stage) const {
  StageReport r;
  r.stage = stage;
  const_cast<Pipeline*>(this)->calls_at_begin_ = upstream_calls();
  note("[" + stage + "] start");
  return r;
}

void Pipeline::finish(StageReport& r, const std::map<std::string, std::string>& inputs, const std::set<std::string>& keys) {
  StageManifest m;
  m.stage = r.stage;
  m.input_hashes = inputs;
  m.config_hash = stage_config_hash(config_, r.stage);
  m.completed_keys = keys;
  m.created_at = timestamp_now();
  save_manifest(path("manifests/" + r.stage + ".json"), m);
  if (cache_store_) cache_store_->compact();
  r.provider_calls = upstream_calls() - calls_at_begin_;
  for (const auto& w : r.warnings) note("[" + r.stage + "] warning: " + w);
  note("[" + r.stage + "] done " + r.counts.dump() + " upstream calls " + std::to_string(r.provider_calls));
}

Catalog Pipeline::load_catalog_artifact() const {
  Catalog c = load_catalog(path("catalog.json"));
  c.resolve();
  return c;
}

// ---------------------------------------------------------------------------

StageReport Pipeline::catalog() {
  auto r = begin("personas");
  Catalog c = config_.catalog_path.empty() ? reference_catalog() : load_catalog(config_.catalog_path);
  c.resolve();
  std::map<std::string, std::string> inputs;
  if (!config_.catalog_path.empty()) inputs[config_.catalog_path] = file_digest(config_.catalog_path);
  c = c.subset(config_.max_axes, config_.max_per_axis);
  const auto report = validate_catalog(c);
  if (!report.valid()) {
    const auto& v = report.violations.front();
    throw Error(Errc::PreconditionFailed, "catalog invalid: " + v.kind + " " + v.subject + " " + v.detail);
  }
  save_catalog(c, path("catalog.json"));
  r.counts = {{"axes", c.axes.size()}, {"personas", c.personas.size()}};
  std::set<std::string> keys;
  for (const auto& p : c.personas) keys.insert(p.id);
  finish(r, inputs, keys);
  return r;
}

StageReport Pipeline::prompts() {
  auto r = begin("prompts");
  const Catalog cat = load_catalog_artifact();
  const auto& p = config_.params;
  std::vector<std::string> axis_names;
  for (const auto& a : cat.axes) axis_names.push_back(a.name);

  struct Owner {
    const Persona* persona = nullptr;
    const Axis* axis = nullptr;
  };
  std::vector<Owner> owners;
  for (const auto& persona : cat.personas) owners.push_back({&persona, nullptr});
  for (const auto& axis : cat.axes) {
    if (cat.personas_of(axis.id).size() >= 2) {
      owners.push_back({nullptr, &axis});
    } else {
      r.warnings.push_back(axis.id + ": fewer than 2 personas, no divergent questions");
    }
  }
  PromptGenOptions opts;
  opts.batch = p.question_batch;
  opts.seed = derive_seed(config_.seed, "prompts");
  opts.model = config_.http.models.judge;
  const auto groups = parallel_map<std::vector<PromptRecord>>(owners.size(), config_.workers, [&](std::size_t i) {
    if (owners[i].persona) return gen_personal_prompts(*provider_, *owners[i].persona, p.n_personal, axis_names, opts);
    return gen_divergent_prompts(*provider_, *owners[i].axis, cat.personas_of(owners[i].axis->id), p.n_divergent, opts);
  });
  std::vector<PromptRecord> all;
  for (const auto& g : groups) all.insert(all.end(), g.begin(), g.end());
  all = split_prompts(std::move(all), SplitOptions{derive_seed(config_.seed, "split"), 0});
  write_records(path("prompts.jsonl"), all);

  std::size_t personal = 0;
  std::size_t train = 0;
  std::set<std::string> keys;
  for (const auto& rec : all) {
    personal += rec.kind == QuestionKind::Personal;
    train += rec.split == Split::Train;
    keys.insert(rec.owner);
  }
  r.counts = {{"prompts", all.size()}, {"personal", personal}, {"divergent", all.size() - personal}, {"train", train}};
  finish(r, {{"catalog.json", file_digest(path("catalog.json"))}}, keys);
  return r;
}

StageReport Pipeline::candidates() {
  auto r = begin("candidates");
  const Catalog cat = load_catalog_artifact();
  const auto prompts = read_records<PromptRecord>(path("prompts.jsonl"));
  const std::map<std::string, std::string> inputs = {{"catalog.json", file_digest(path("catalog.json"))},
                                                     {"prompts.jsonl", file_digest(path("prompts.jsonl"))}};
  std::vector<std::string> ids;
  for (const auto& pr : prompts) ids.push_back(pr.id);

  // Resume: keep finished records when config and inputs are unchanged.
  std::map<std::string, CandidateSet> kept;
  std::vector<std::string> pending = ids;
  const std::string manifest_path = path("manifests/candidates.json");
  if (fs::exists(manifest_path) && fs::exists(path("candidates.jsonl"))) {
    const auto plan = resume_plan(load_manifest(manifest_path), "candidates", inputs,
                                  stage_config_hash(config_, "candidates"), ids);
    if (plan.stale) {
      r.warnings.push_back(plan.warning);
    } else {
      for (auto& cs : read_records<CandidateSet>(path("candidates.jsonl"))) kept[cs.prompt_id] = std::move(cs);
      pending = plan.pending;
    }
  }
  const std::set<std::string> pending_set(pending.begin(), pending.end());
  std::vector<const PromptRecord*> todo;
  for (const auto& pr : prompts) {
    if (pending_set.count(pr.id)) todo.push_back(&pr);
  }

  const auto& p = config_.params;
  const auto rules = ArtifactRules::defaults();
  // Provider failures abort the stage, but only after finished prompts are saved.
  std::vector<std::exception_ptr> aborts(todo.size());
  auto fresh = parallel_map<CandidateSet>(todo.size(), config_.workers, [&](std::size_t i) {
    const PromptRecord& pr = *todo[i];
    CandidateSet cs;
    cs.prompt_id = pr.id;
    std::optional<CategoryConstraint> constraint;
    if (pr.kind == QuestionKind::Divergent) {
      const Axis* axis = pr.axis_id ? cat.find_axis(*pr.axis_id) : nullptr;
      if (!axis) throw Error(Errc::PreconditionFailed, pr.id + ": divergent prompt with unknown axis");
      constraint = CategoryConstraint{axis->name, axis->sub_categories};
    }
    SamplerOptions so;
    so.seed = derive_seed(config_.seed, "sample|" + pr.id);
    so.model = config_.http.models.generator;
    try {
      cs.cots = sample_cots(*provider_, pr, constraint, p.cots, so);
      cs.candidates = sample_candidates(*provider_, pr, cs.cots, p.per_cot, rules, so);
      for (auto& c : cs.candidates) c.reward = provider_->reward(pr.text, c.text).value;
    } catch (const Error& e) {
      if (!recoverable_sampling_error(e.code())) {
        aborts[i] = std::current_exception();
        cs.status = "aborted";
        return cs;
      }
      cs.status = "failed";
      cs.error = e.what();
      cs.cots.clear();
      cs.candidates.clear();
    }
    return cs;
  });
  for (auto& cs : fresh) {
    if (cs.status != "aborted") kept[cs.prompt_id] = std::move(cs);
  }

  std::vector<CandidateSet> out;
  std::set<std::string> done;
  std::size_t failed = 0;
  std::size_t n_candidates = 0;
  for (const auto& id : ids) {
    auto it = kept.find(id);
    if (it == kept.end()) continue;
    if (it->second.status == "ok") {
      done.insert(id);
      n_candidates += it->second.candidates.size();
    } else {
      ++failed;
      r.warnings.push_back(id + ": " + it->second.error);
    }
    out.push_back(std::move(it->second));
  }
  write_records(path("candidates.jsonl"), out);
  r.counts = {{"prompts", out.size()}, {"sampled", todo.size()}, {"failed", failed}, {"candidates", n_candidates}};
  finish(r, inputs, done);
  for (const auto& e : aborts) {
    if (e) std::rethrow_exception(e);
  }
  return r;
}

StageReport Pipeline::finalists() {
  auto r = begin("finalists");
  const auto sets = read_records<CandidateSet>(path("candidates.jsonl"));
  const auto& p = config_.params;
  std::vector<const CandidateSet*> usable;
  for (const auto& cs : sets) {
    if (cs.status != "ok") continue;
    if (cs.candidates.size() < p.window) {
      r.warnings.push_back(cs.prompt_id + ": " + std::to_string(cs.candidates.size()) + " candidates, below window");
      continue;
    }
    usable.push_back(&cs);
  }
  const auto records = parallel_map<FinalistRecord>(usable.size(), config_.workers, [&](std::size_t i) {
    const CandidateSet& cs = *usable[i];
    const auto window = reward_window(cs.candidates, p.window);
    std::vector<Candidate> chosen;
    for (const auto& id : window.selected_ids) {
      for (const auto& c : cs.candidates) {
        if (c.id == id) chosen.push_back(c);
      }
    }
    std::vector<std::string> texts;
    for (const auto& c : chosen) texts.push_back(c.text);
    const auto vecs = provider_->embed(texts);
    for (std::size_t k = 0; k < chosen.size(); ++k) chosen[k].embedding = vecs[k];
    const auto sel = diverse_select(chosen, p.k, derive_seed(config_.seed, "kmeans|" + cs.prompt_id), p.farthest);
    FinalistRecord f;
    f.prompt_id = cs.prompt_id;
    f.finalist_ids = sel.finalist_ids;
    f.window_start = window.window_start;
    f.window_range = window.range;
    f.window_ids = window.selected_ids;
    f.farthest = to_string(p.farthest);
    f.cluster_of = sel.cluster_of;
    f.farthest_score = sel.farthest_score;
    return f;
  });
  write_records(path("finalists.jsonl"), records);
  std::set<std::string> keys;
  for (const auto& f : records) keys.insert(f.prompt_id);
  r.counts = {{"finalists", records.size()}, {"skipped", sets.size() - records.size()}};
  finish(r, {{"candidates.jsonl", file_digest(path("candidates.jsonl"))}}, keys);
  return r;
}

StageReport Pipeline::pairs() {
  auto r = begin("pairs");
  const Catalog cat = load_catalog_artifact();
  const auto prompts = read_records<PromptRecord>(path("prompts.jsonl"));
  const auto sets = read_records<CandidateSet>(path("candidates.jsonl"));
  const auto finals = read_records<FinalistRecord>(path("finalists.jsonl"));
  const std::map<std::string, std::string> inputs = {{"catalog.json", file_digest(path("catalog.json"))},
                                                     {"prompts.jsonl", file_digest(path("prompts.jsonl"))},
                                                     {"candidates.jsonl", file_digest(path("candidates.jsonl"))},
                                                     {"finalists.jsonl", file_digest(path("finalists.jsonl"))}};
  std::map<std::string, const PromptRecord*> prompt_of;
  for (const auto& pr : prompts) prompt_of[pr.id] = &pr;
  std::map<std::string, const CandidateSet*> set_of;
  for (const auto& cs : sets) set_of[cs.prompt_id] = &cs;

  // Divergent prompts: every persona of the axis judges the same finalists.
  std::vector<TournamentJob> jobs;
  std::vector<std::string> keys;
  for (const auto& f : finals) {
    const PromptRecord* pr = prompt_of.count(f.prompt_id) ? prompt_of[f.prompt_id] : nullptr;
    const CandidateSet* cs = set_of.count(f.prompt_id) ? set_of[f.prompt_id] : nullptr;
    if (!pr || !cs) throw Error(Errc::MissingArtifact, "finalists reference unknown prompt " + f.prompt_id);
    std::vector<Candidate> finalists;
    for (const auto& id : f.finalist_ids) {
      for (const auto& c : cs->candidates) {
        if (c.id == id) finalists.push_back(c);
      }
    }
    for (const auto& pid : pr->active_persona_ids()) {
      const Persona* persona = cat.find_persona(pid);
      if (!persona) throw Error(Errc::PreconditionFailed, pr->id + " references unknown persona " + pid);
      jobs.push_back({*persona, *pr, finalists});
      keys.push_back(pr->id + "|" + pid);
    }
  }

  std::map<std::string, PreferencePair> kept;
  std::vector<std::string> pending = keys;
  const std::string manifest_path = path("manifests/pairs.json");
  if (fs::exists(manifest_path) && fs::exists(path("pairs.jsonl"))) {
    const auto plan = resume_plan(load_manifest(manifest_path), "pairs", inputs, stage_config_hash(config_, "pairs"), keys);
    if (plan.stale) {
      r.warnings.push_back(plan.warning);
    } else {
      for (auto& pp : read_records<PreferencePair>(path("pairs.jsonl"))) {
        kept[pp.prompt_id + "|" + pp.persona_id] = std::move(pp);
      }
      pending = plan.pending;
    }
  }
  const std::set<std::string> pending_set(pending.begin(), pending.end());
  std::vector<TournamentJob> todo;
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    if (pending_set.count(keys[i])) todo.push_back(jobs[i]);
  }

  JudgeOptions jo;
  jo.seed = derive_seed(config_.seed, "judge");
  jo.batch = config_.params.judge_batch;
  jo.max_retries = config_.params.judge_retries;
  jo.workers = config_.workers;
  jo.model = config_.http.models.judge;
  jo.temperature = config_.params.judge_temperature;
  auto labeled = label_tournaments(*provider_, todo, jo);
  for (auto& pp : labeled.pairs) kept[pp.prompt_id + "|" + pp.persona_id] = std::move(pp);

  std::vector<PreferencePair> out;
  std::set<std::string> done;
  for (const auto& k : keys) {
    auto it = kept.find(k);
    if (it == kept.end()) continue;
    done.insert(k);
    out.push_back(std::move(it->second));
  }
  write_records(path("pairs.jsonl"), out);
  write_records(path("failures.jsonl"), labeled.failures);
  for (const auto& f : labeled.failures) r.warnings.push_back(f.prompt_id + "|" + f.persona_id + ": " + f.reason);
  r.counts = {{"pairs", out.size()},
              {"labeled", labeled.pairs.size()},
              {"failures", labeled.failures.size()},
              {"matches", labeled.matches},
              {"judge_requests", labeled.requests}};
  finish(r, inputs, done);
  return r;
}

StageReport Pipeline::prefixes() {
  auto r = begin("prefixes");
  const Catalog cat = load_catalog_artifact();
  const auto all_pairs = read_records<PreferencePair>(path("pairs.jsonl"));
  std::map<std::string, std::vector<const PreferencePair*>> train_of;
  for (const auto& pp : all_pairs) {
    if (pp.split == Split::Train) train_of[pp.persona_id].push_back(&pp);
  }
  const auto& p = config_.params;
  const auto built = parallel_map<std::vector<Prefix>>(cat.personas.size(), config_.workers, [&](std::size_t i) {
    const Persona& persona = cat.personas[i];
    std::vector<Prefix> out;
    for (PrefixKind kind : p.prefix_kinds) {
      PrefixOptions po;
      po.strategy = p.shot_strategy;
      po.n_shots = kind == PrefixKind::Fewshot ? p.fewshot_shots : default_shots(kind) ? p.persona_shots : 0;
      po.seed = derive_seed(config_.seed, "prefixes");
      po.inference_model = config_.http.models.inference;
      po.judge_model = config_.http.models.judge;
      out.push_back(build_prefix(kind, persona, i, train_of[persona.id], provider_.get(), po));
    }
    return out;
  });
  std::vector<Prefix> all;
  std::set<std::string> keys;
  for (const auto& group : built) {
    for (const auto& pf : group) {
      all.push_back(pf);
      keys.insert(pf.persona_id + "|" + to_string(pf.kind));
    }
  }
  write_records(path("prefixes.jsonl"), all);
  r.counts = {{"prefixes", all.size()}};
  finish(r, {{"catalog.json", file_digest(path("catalog.json"))}, {"pairs.jsonl", file_digest(path("pairs.jsonl"))}},
         keys);
  return r;
}

StageReport Pipeline::folds() {
  auto r = begin("folds");
  const Catalog cat = load_catalog_artifact();
  const auto folds = stratified_folds(cat, config_.params.folds, derive_seed(config_.seed, "folds"));
  write_json(path("folds.json"), nlohmann::json(folds));
  std::set<std::string> keys;
  for (const auto& f : folds) keys.insert(std::to_string(f.fold_id));
  r.counts = {{"folds", folds.size()}};
  finish(r, {{"catalog.json", file_digest(path("catalog.json"))}}, keys);
  return r;
}

StageReport Pipeline::eval() {
  auto r = begin("eval");
  const auto bundle = load_bundle(config_.data_dir);
  std::vector<PreferencePair> test;
  std::vector<PreferencePair> train;
  for (const auto& pp : bundle.pairs) (pp.split == Split::Test ? test : train).push_back(pp);

  std::vector<EvalResult> results;
  std::vector<EvalResult> pooled;
  for (PrefixKind kind : config_.params.prefix_kinds) {
    ScoringJob job;
    job.model_endpoint = config_.mock ? "mock" : config_.http.score_url;
    job.prefix_kind = kind;
    job.aggregation = config_.params.aggregation;
    job.dataset_ref = path("pairs.jsonl");
    job.chat_template_id = config_.params.chat_template;
    job.shot_strategy = config_.params.shot_strategy;
    job.n_shots = config_.params.fewshot_shots;
    job.seed = derive_seed(config_.seed, "eval");
    job.workers = config_.workers;
    std::map<std::string, Prefix> prefixes;
    for (const auto& pf : bundle.prefixes) {
      if (pf.kind == kind) prefixes[pf.persona_id] = pf;
    }
    auto res = preference_accuracy(*provider_, job, test, prefixes, train);
    for (QuestionKind qk : {QuestionKind::Personal, QuestionKind::Divergent}) {
      std::vector<EvalResult> sub;
      for (const auto& e : res) {
        if (e.question_kind == qk) sub.push_back(e);
      }
      if (sub.empty()) continue;
      auto total = pool_results(sub);
      total.question_kind = qk;
      pooled.push_back(total);
    }
    results.insert(results.end(), res.begin(), res.end());
  }
  write_text_atomic(path("results/accuracy.csv"), eval_results_csv(results));
  write_text_atomic(path("results/accuracy_summary.csv"), eval_results_csv(pooled));
  std::set<std::string> keys;
  for (PrefixKind k : config_.params.prefix_kinds) keys.insert(to_string(k));
  r.counts = {{"test_pairs", test.size()}, {"rows", results.size()}};
  finish(r,
         {{"pairs.jsonl", file_digest(path("pairs.jsonl"))},
          {"prefixes.jsonl", file_digest(path("prefixes.jsonl"))}},
         keys);
  return r;
}

StageReport Pipeline::reports() {
  auto r = begin("reports");
  const auto bundle = load_bundle(config_.data_dir);

  std::map<std::string, Prefix> golds;
  std::vector<Prefix> others;
  for (const auto& pf : bundle.prefixes) {
    if (pf.kind == PrefixKind::PersonaGold) golds[pf.persona_id] = pf;
    others.push_back(pf);
  }
  if (!golds.empty()) {
    const auto q = prefix_quality_report(others, golds, derive_seed(config_.seed, "prefix-report"));
    write_text_atomic(path("results/prefix_quality.csv"), prefix_quality_csv(q));
  }

  std::ostringstream agree;
  agree.setf(std::ios::fixed);
  agree.precision(4);
  agree << "axis,prompts,mean,std\n";
  for (const auto& a : agreement_per_axis(bundle.pairs, bundle.prompts)) {
    agree << a.axis_id << ',' << a.concentration.n << ',' << a.concentration.mean << ',' << a.concentration.std << '\n';
  }
  write_text_atomic(path("results/agreement.csv"), agree.str());
  write_text_atomic(path("results/length_stats.csv"),
                    length_csv(length_stats(bundle.pairs, axis_resolver(bundle.catalog, bundle.prompts))));

  std::vector<PromptRecord> train;
  std::vector<PromptRecord> test;
  for (const auto& pr : bundle.prompts) (pr.split == Split::Train ? train : test).push_back(pr);
  write_text_atomic(path("results/prompt_overlap.csv"), overlap_csv(prompt_overlap_report(train, test)));
  write_text_atomic(path("results/demographics.csv"), demographics_csv(demographics_report(bundle.catalog)));
  r.counts = {{"reports", golds.empty() ? 4 : 5}};
  r.provider_calls = upstream_calls() - calls_at_begin_;
  note("[reports] done");
  return r;
}

ValidationReport Pipeline::validate() const {
  BundleShape shape;
  shape.personal_per_persona = static_cast<std::size_t>(config_.params.n_personal);
  shape.divergent_per_axis = static_cast<std::size_t>(config_.params.n_divergent);
  shape.expect_full_catalog = config_.scale == "full" && config_.max_axes == 0 && config_.max_per_axis == 0;
  return validate_bundle(load_bundle(config_.data_dir), shape);
}

std::vector<StageReport> Pipeline::run_all() {
  std::vector<StageReport> out;
  out.push_back(catalog());
  out.push_back(prompts());
  out.push_back(candidates());
  out.push_back(finalists());
  out.push_back(pairs());
  out.push_back(prefixes());
  out.push_back(folds());
  out.push_back(eval());
  out.push_back(reports());
  return out;
}

}  // namespace persona
