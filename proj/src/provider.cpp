#include "persona/provider.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include "persona/error.hpp"
#include "persona/templates.hpp"
#include "persona/util.hpp"

namespace persona {

GenRequest GenRequest::diverse(std::vector<Message> messages) {
  GenRequest r;
  r.messages = std::move(messages);
  r.temperature = 2.0;
  r.top_p = 0.8;
  return r;
}

nlohmann::json to_json_value(const GenRequest& req) {
  nlohmann::json msgs = nlohmann::json::array();
  for (const auto& m : req.messages) msgs.push_back({{"role", m.role}, {"content", m.content}});
  nlohmann::json j = {{"messages", msgs},
                      {"temperature", req.temperature},
                      {"top_p", req.top_p},
                      {"max_tokens", req.max_tokens},
                      {"model", req.model}};
  if (req.seed) j["seed"] = *req.seed;
  return j;
}

std::string request_key(const GenRequest& req) { return sha256_hex(to_json_value(req).dump()); }

ScoredCompletion ScoredCompletion::from_logps(std::vector<double> logps) {
  ScoredCompletion s;
  s.token_logps = std::move(logps);
  double sum = 0.0;
  for (double v : s.token_logps) sum += v;
  s.sum_logp = sum;
  s.mean_logp = s.token_logps.empty() ? 0.0 : sum / static_cast<double>(s.token_logps.size());
  return s;
}

EmbeddingVec EmbeddingVec::normalized(std::vector<double> values) {
  double sq = 0.0;
  for (double v : values) sq += v * v;
  const double n = std::sqrt(sq);
  if (n > 0.0) {
    for (double& v : values) v /= n;
  }
  EmbeddingVec e;
  e.values = std::move(values);
  e.norm = n > 0.0 ? 1.0 : 0.0;
  return e;
}

double cosine(const EmbeddingVec& a, const EmbeddingVec& b) {
  if (a.values.size() != b.values.size()) throw Error(Errc::DimensionMismatch, "cosine of ragged vectors");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    dot += a.values[i] * b.values[i];
    na += a.values[i] * a.values[i];
    nb += b.values[i] * b.values[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return std::clamp(dot / std::sqrt(na * nb), -1.0, 1.0);
}

// ---------------------------------------------------------------------------
// Provider

std::string Provider::chat(const GenRequest& req) {
  if (req.messages.empty()) throw Error(Errc::PreconditionFailed, "chat: messages empty");
  if (req.temperature < 0.0) throw Error(Errc::PreconditionFailed, "chat: temperature < 0");
  if (!(req.top_p > 0.0 && req.top_p <= 1.0)) throw Error(Errc::PreconditionFailed, "chat: top_p outside (0,1]");
  if (req.max_tokens <= 0) throw Error(Errc::PreconditionFailed, "chat: max_tokens must be positive");
  return do_chat(req);
}

ScoredCompletion Provider::score_completion(const std::string& prompt, const std::string& completion) {
  if (trim(completion).empty()) throw Error(Errc::PreconditionFailed, "score_completion: empty completion");
  auto s = do_score(prompt, completion);
  if (s.token_logps.empty()) throw Error(Errc::ScoringUnsupported, "no completion logprobs returned");
  return s;
}

std::vector<EmbeddingVec> Provider::embed(const std::vector<std::string>& texts) {
  if (texts.empty()) throw Error(Errc::PreconditionFailed, "embed: no texts");
  auto out = do_embed(texts);
  if (out.size() != texts.size()) throw Error(Errc::DimensionMismatch, "embed: vector count differs from input");
  for (const auto& v : out) {
    if (v.values.size() != out.front().values.size()) throw Error(Errc::DimensionMismatch, "embed: ragged vectors");
  }
  return out;
}

RewardScore Provider::reward(const std::string& prompt, const std::string& response) {
  if (prompt.empty() || response.empty()) throw Error(Errc::PreconditionFailed, "reward: empty input");
  auto r = do_reward(prompt, response);
  if (!std::isfinite(r.value)) throw Error(Errc::TransportError, "reward: non-finite score");
  return r;
}

// ---------------------------------------------------------------------------
// Mock

namespace {

const std::vector<std::string> kTopics = {
    "budgeting",   "gardening",    "travel planning", "home cooking",  "public speaking", "meditation",
    "negotiation", "photography",  "volunteering",    "book clubs",    "road trips",      "journaling",
    "investing",   "parenting",    "fitness routines", "museum visits", "local history",   "podcasts",
    "board games", "hiking trails", "wine tasting",   "urban design",  "charity events",  "song writing",
    "interviews",  "sleep habits", "camping",         "recycling",     "language learning", "film festivals",
    "tax season",  "bird watching", "poetry",         "chess openings", "kitchen design",  "pet care",
    "retirement",  "mentoring",    "street food",     "stargazing"};
const std::vector<std::string> kThings = {
    "a weekend itinerary", "a reading list",     "a grocery plan",    "a toast",          "a short speech",
    "a packing checklist", "a morning routine",  "a thank-you note",  "a playlist",       "a family budget",
    "a garden layout",     "a study schedule",   "a dinner menu",     "a workout plan",   "a fundraising pitch",
    "a birthday surprise", "a podcast outline",  "a travel journal",  "a cover letter",   "a neighborhood guide",
    "a holiday tradition", "a volunteer roster", "a book summary",    "a debate outline", "a savings goal",
    "a hobby roadmap",     "a tasting menu",     "a memoir chapter",  "a lecture plan",   "a quiz night"};
const std::vector<std::string> kQualities = {
    "affordable", "memorable", "relaxing",  "ambitious",  "quiet",     "lively",    "thoughtful", "practical",
    "creative",   "healthy",   "nostalgic", "surprising", "low-key",   "elegant",   "playful",    "sustainable",
    "bold",       "humble",    "efficient", "traditional", "modern",   "scenic",    "cozy",       "rigorous"};
const std::vector<std::string> kPlaces = {
    "a small town",   "a big city",     "the countryside", "a beach house",  "a mountain cabin", "a college campus",
    "a busy office",  "a quiet library", "a street market", "a train journey", "a river cruise",  "a community hall",
    "a rooftop garden", "a local park", "a crowded stadium", "a tiny apartment"};
const std::vector<std::string> kQuestionForms = {
    "What are some {Q} ideas for {T} in {P}?",
    "How would you plan {H} around {T} with a {Q} twist?",
    "Can you suggest {H} that feels {Q} and fits {P}?",
    "What should I keep in mind about {T} when visiting {P}?",
    "Help me draft {H} inspired by {T}.",
    "Which {Q} approaches to {T} have worked well for people in {P}?",
    "Could you compare two {Q} ways of getting into {T}?",
    "What is a {Q} way to share {T} with friends at {P}?",
    "Give me {H} that mixes {T} and {T2}.",
    "Why do some people find {T} more {Q} than {T2}?",
    "What would make {H} about {T} feel {Q}?",
    "How can I turn {T} into {H} for {P}?"};
const std::vector<std::string> kFiller = {
    "honestly",   "values",    "prefers",   "detail",    "practical",  "community", "tradition", "freedom",
    "family",     "health",    "balance",   "evidence",  "comfort",    "ambition",  "curiosity", "loyalty",
    "fairness",   "creativity", "discipline", "humor",   "privacy",    "progress",  "stability", "faith",
    "adventure",  "learning",  "kindness",  "efficiency", "heritage",  "independence", "wellness", "generosity"};

const std::string& pick(const std::vector<std::string>& v, Rng& rng) { return v[rng.below(v.size())]; }

std::string between(const std::string& s, const std::string& open, const std::string& close, std::size_t from = 0) {
  const auto b = s.find(open, from);
  if (b == std::string::npos) return {};
  const auto start = b + open.size();
  const auto e = close.empty() ? std::string::npos : s.find(close, start);
  return s.substr(start, e == std::string::npos ? std::string::npos : e - start);
}

std::string mock_question(Rng& rng) {
  std::string q = pick(kQuestionForms, rng);
  q = replace_all(q, "{T2}", pick(kTopics, rng));
  q = replace_all(q, "{T}", pick(kTopics, rng));
  q = replace_all(q, "{Q}", pick(kQualities, rng));
  q = replace_all(q, "{P}", pick(kPlaces, rng));
  q = replace_all(q, "{H}", pick(kThings, rng));
  return q;
}

std::string mock_sentence(Rng& rng, const std::string& anchor) {
  std::ostringstream s;
  s << "For " << pick(kTopics, rng) << ", a " << pick(kQualities, rng) << " option is " << pick(kThings, rng) << " in "
    << pick(kPlaces, rng) << " that respects " << anchor << " and " << pick(kFiller, rng) << ".";
  return s.str();
}

std::string mock_paragraph(Rng& rng, const std::string& anchor, std::size_t min_words) {
  std::string out;
  while (word_count(out) < min_words) {
    if (!out.empty()) out += ' ';
    out += mock_sentence(rng, anchor);
  }
  return out;
}

std::vector<std::string> mock_categories(const std::string& axis, Rng& rng) {
  const std::size_t n = 3 + rng.below(4);
  std::vector<std::string> cats;
  std::vector<std::string> pool = kFiller;
  rng.shuffle(pool);
  for (std::size_t i = 0; i < n; ++i) cats.push_back(axis + " " + pool[i]);
  return cats;
}

std::string mock_judge(const std::string& user) {
  std::ostringstream out;
  for (int k = 3;; ++k) {
    const std::string ex = "## Example " + std::to_string(k) + ":\n";
    const auto at = user.find(ex);
    if (at == std::string::npos) break;
    const std::string ks = std::to_string(k);
    const std::string instruction =
        between(user, "### Instruction for example " + ks + ":\n", "\n\n### Input for example " + ks + ":\n", at);
    const std::string a =
        between(user, "### Output (a) for example " + ks + ":\n", "\n\n### Output (b) for example " + ks + ":\n", at);
    std::string b = between(user, "### Output (b) for example " + ks + ":\n", "", at);
    for (const char* stop : {"\n\n## Example ", "\n\n## Preferred output in JSON"}) {
      const auto cut = b.find(stop);
      if (cut != std::string::npos) b.resize(cut);
    }
    const std::string name = between(instruction, "Please simulate ", "'s preference");
    const double sa = MockProvider::judge_affinity(name, a);
    const double sb = MockProvider::judge_affinity(name, b);
    const bool a_better = sa != sb ? sa > sb : a < b;
    out << "### Preferred output in JSON format for example " << k << ":\n{\n\"Concise explanation\": \"Output ("
        << (a_better ? 'a' : 'b') << ") better matches what " << name << " is likely to value.\",\n"
        << "\"Output (a) is better than Output (b)\": " << (a_better ? "true" : "false") << "\n}\n\n";
  }
  return out.str();
}

}  // namespace

double MockProvider::pseudo_logp(std::string_view prompt, std::size_t index, std::string_view token) {
  const std::uint64_t h = hash_fields({prompt, std::to_string(index), token}, 0x1f2e3d4c);
  const double u = static_cast<double>(h >> 11) * 0x1.0p-53;
  return -6.0 + u * 5.9;
}

double MockProvider::judge_affinity(std::string_view persona_name, std::string_view text) {
  const std::uint64_t h = hash_fields({persona_name, text}, 0x7a3b);
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

void MockProvider::tick(bool is_chat) {
  ++total_calls_;
  if (is_chat) ++chat_calls_;
  if (opts_.outage) throw Error(Errc::TransportError, "mock outage: provider unreachable");
}

std::string MockProvider::do_chat(const GenRequest& req) {
  tick(true);
  std::string all;
  for (const auto& m : req.messages) {
    all += m.role;
    all += '\x1e';
    all += m.content;
  }
  const std::uint64_t h = hash_fields({all, req.model, std::to_string(req.seed.value_or(0))}, opts_.seed);
  Rng rng(h);
  const std::string& system = req.messages.front().role == "system" ? req.messages.front().content : std::string();
  const Message& last = req.messages.back();
  std::string user;
  for (const auto& m : req.messages) {
    if (m.role == "user") user = m.content;
  }

  // Candidate response: continue a CoT prefill.
  if (last.role == "assistant" && last.content.ends_with("Response:")) {
    const std::string category = trim(between(last.content, "Chosen category:", "\n"));
    std::string text;
    if (rng.below(10) == 0) text = "For our " + category + " audience, ";
    const std::size_t words = 25 + rng.below(60);
    text += mock_paragraph(rng, category, words);
    return " " + text;
  }
  if (system.find("selects the output that best follows the instruction") != std::string::npos) {
    return mock_judge(last.content);
  }
  if (system.find("think step by step on what the user might be expecting") != std::string::npos) {
    std::string axis;
    std::vector<std::string> cats;
    const std::string pinned = between(system, "Use the axis ", ". Assume the user");
    if (!pinned.empty()) {
      const auto sep = pinned.find(" and the categories ");
      axis = pinned.substr(0, sep);
      for (auto& c : split_lines(replace_all(pinned.substr(sep + 20), ", ", "\n"))) cats.push_back(trim(c));
    } else {
      axis = pick(templates::cot_axes(), rng);
      cats = mock_categories(axis, rng);
    }
    const std::string chosen = cats[rng.below(cats.size())];
    return "Axis: " + axis + "\nCategories: " + join(cats, ", ") + "\nChosen category: " + chosen +
           "\nResponse: " + mock_paragraph(rng, chosen, 30);
  }
  if (user.find("come up with a few (at most five) sub-categories") != std::string::npos) {
    const std::string axis = between(user, "Take ", " as an example axis");
    std::string out;
    for (int i = 1; i <= 5; ++i) {
      out += "- " + axis + " group " + std::to_string(i) + ", Mock Person " + std::to_string(rng.below(100000)) +
             ", A well known representative of " + axis + " group " + std::to_string(i) + ".\n";
    }
    return out;
  }
  if (user.find("Provide ") != std::string::npos &&
      (user.ends_with("might ask.") || user.ends_with("might ask IN COMMON."))) {
    const int n = std::max(1, std::atoi(between(user, "Provide ", " examples").c_str()));
    std::string out;
    for (int i = 1; i <= n; ++i) out += std::to_string(i) + ". " + mock_question(rng) + "\n";
    return out;
  }
  if (user.find("can you infer a few things about this person?") != std::string::npos) {
    std::vector<std::string> words;
    for (const auto& w : split_ws(user.substr(user.find("## User Question")))) {
      if (w.size() > 4 && w.find("##") == std::string::npos) words.push_back(w);
    }
    rng.shuffle(words);
    words.resize(std::min<std::size_t>(words.size(), 40));
    return "User Basic Information: The user asks about " + join(words, " ") + ". " + mock_paragraph(rng, "routine", 60) +
           "\n\nPreferences: " + mock_paragraph(rng, "detail", 80);
  }
  if (user.find("The person is ") != std::string::npos) {
    const std::string name = trim(between(user, "The person is ", "\n"));
    Rng person_rng(hash_fields({name}, opts_.seed));
    return "User Basic Information: " + name + " is a public figure. " + mock_paragraph(person_rng, name, 90) +
           "\n\nPreferences: " + mock_paragraph(person_rng, "their values", 100);
  }
  return mock_paragraph(rng, "the question", 40);
}

ScoredCompletion MockProvider::do_score(const std::string& prompt, const std::string& completion) {
  tick(false);
  std::vector<double> logps;
  const auto tokens = split_ws(completion);
  logps.reserve(tokens.size());
  for (std::size_t i = 0; i < tokens.size(); ++i) logps.push_back(pseudo_logp(prompt, i, tokens[i]));
  return ScoredCompletion::from_logps(std::move(logps));
}

std::vector<EmbeddingVec> MockProvider::do_embed(const std::vector<std::string>& texts) {
  tick(false);
  std::vector<EmbeddingVec> out;
  out.reserve(texts.size());
  for (const auto& t : texts) {
    // Feature hashing over lowercased tokens: texts sharing words land close.
    std::vector<double> v(opts_.embed_dim, 0.0);
    for (const auto& tok : split_ws(to_lower(t))) {
      const std::uint64_t h = hash_fields({tok}, opts_.seed ^ 0xe1);
      for (int r = 0; r < 4; ++r) {
        const std::uint64_t hr = mix64(h + static_cast<std::uint64_t>(r));
        v[hr % opts_.embed_dim] += (hr >> 63) ? 1.0 : -1.0;
      }
    }
    if (std::all_of(v.begin(), v.end(), [](double x) { return x == 0.0; })) v[0] = 1.0;
    out.push_back(EmbeddingVec::normalized(std::move(v)));
  }
  return out;
}

RewardScore MockProvider::do_reward(const std::string& prompt, const std::string& response) {
  tick(false);
  Rng rng(hash_fields({prompt, response}, opts_.seed ^ 0x4e));
  return {rng.normal()};
}

// ---------------------------------------------------------------------------
// Store / fixture / cache

std::string score_key(const std::string& prompt, const std::string& completion) {
  return sha256_hex(nlohmann::json({{"prompt", prompt}, {"completion", completion}}).dump());
}
std::string embed_key(const std::string& text) { return sha256_hex(nlohmann::json({{"text", text}}).dump()); }
std::string reward_key(const std::string& prompt, const std::string& response) {
  return sha256_hex(nlohmann::json({{"prompt", prompt}, {"response", response}}).dump());
}

ResponseStore::ResponseStore(std::string path, bool append) : path_(std::move(path)), append_(append) {
  std::ifstream in(path_);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    try {
      auto j = nlohmann::json::parse(line);
      entries_[j.at("op").get<std::string>() + ":" + j.at("key").get<std::string>()] = j.at("response");
    } catch (const nlohmann::json::exception& e) {
      throw Error(Errc::FormatError, path_ + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

std::optional<nlohmann::json> ResponseStore::get(const std::string& op, const std::string& key) const {
  std::lock_guard lock(mu_);
  auto it = entries_.find(op + ":" + key);
  if (it == entries_.end()) return std::nullopt;
  return std::optional<nlohmann::json>(std::in_place, it->second);
}

void ResponseStore::put(const std::string& op, const std::string& key, const nlohmann::json& response) {
  std::lock_guard lock(mu_);
  if (!entries_.emplace(op + ":" + key, response).second) return;
  if (append_ && !path_.empty()) {
    std::ofstream out(path_, std::ios::app);
    out << nlohmann::json({{"key", key}, {"op", op}, {"response", response}}).dump() << '\n';
  }
}

void ResponseStore::compact() const {
  if (path_.empty()) return;
  std::lock_guard lock(mu_);
  std::vector<std::pair<std::string, const nlohmann::json*>> sorted;
  for (const auto& [k, v] : entries_) sorted.emplace_back(k, &v);
  std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  const std::string tmp = path_ + ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    for (const auto& [k, v] : sorted) {
      const auto colon = k.find(':');
      out << nlohmann::json({{"key", k.substr(colon + 1)}, {"op", k.substr(0, colon)}, {"response", *v}}).dump() << '\n';
    }
  }
  std::filesystem::rename(tmp, path_);
}

std::size_t ResponseStore::size() const {
  std::lock_guard lock(mu_);
  return entries_.size();
}

FixtureProvider::FixtureProvider(const std::string& path) : store_(std::make_shared<ResponseStore>(path, false)) {}

nlohmann::json FixtureProvider::need(const std::string& op, const std::string& key) const {
  auto hit = store_->get(op, key);
  if (!hit) throw Error(Errc::FixtureMiss, op + " " + key.substr(0, 12) + " not recorded");
  return *hit;
}

std::string FixtureProvider::do_chat(const GenRequest& req) { return need("chat", request_key(req)).get<std::string>(); }

ScoredCompletion FixtureProvider::do_score(const std::string& prompt, const std::string& completion) {
  return ScoredCompletion::from_logps(need("score", score_key(prompt, completion)).get<std::vector<double>>());
}

std::vector<EmbeddingVec> FixtureProvider::do_embed(const std::vector<std::string>& texts) {
  std::vector<EmbeddingVec> out;
  for (const auto& t : texts) out.push_back(EmbeddingVec::normalized(need("embed", embed_key(t)).get<std::vector<double>>()));
  return out;
}

RewardScore FixtureProvider::do_reward(const std::string& prompt, const std::string& response) {
  return {need("reward", reward_key(prompt, response)).get<double>()};
}

std::string CachingProvider::do_chat(const GenRequest& req) {
  const auto key = request_key(req);
  if (auto hit = store_->get("chat", key)) {
    ++hits_;
    return hit->get<std::string>();
  }
  ++misses_;
  auto text = inner_->chat(req);
  store_->put("chat", key, text);
  return text;
}

ScoredCompletion CachingProvider::do_score(const std::string& prompt, const std::string& completion) {
  const auto key = score_key(prompt, completion);
  if (auto hit = store_->get("score", key)) {
    ++hits_;
    return ScoredCompletion::from_logps(hit->get<std::vector<double>>());
  }
  ++misses_;
  auto s = inner_->score_completion(prompt, completion);
  store_->put("score", key, s.token_logps);
  return s;
}

std::vector<EmbeddingVec> CachingProvider::do_embed(const std::vector<std::string>& texts) {
  std::vector<EmbeddingVec> out(texts.size());
  std::vector<std::string> missing;
  std::vector<std::size_t> missing_at;
  for (std::size_t i = 0; i < texts.size(); ++i) {
    if (auto hit = store_->get("embed", embed_key(texts[i]))) {
      ++hits_;
      out[i] = EmbeddingVec::normalized(hit->get<std::vector<double>>());
    } else {
      missing.push_back(texts[i]);
      missing_at.push_back(i);
    }
  }
  if (!missing.empty()) {
    ++misses_;
    auto fresh = inner_->embed(missing);
    for (std::size_t k = 0; k < fresh.size(); ++k) {
      store_->put("embed", embed_key(missing[k]), fresh[k].values);
      out[missing_at[k]] = std::move(fresh[k]);
    }
  }
  return out;
}

RewardScore CachingProvider::do_reward(const std::string& prompt, const std::string& response) {
  const auto key = reward_key(prompt, response);
  if (auto hit = store_->get("reward", key)) {
    ++hits_;
    return {hit->get<double>()};
  }
  ++misses_;
  auto r = inner_->reward(prompt, response);
  store_->put("reward", key, r.value);
  return r;
}

}  // namespace persona
