#include "persona/sampler.hpp"

#include <algorithm>

#include "persona/error.hpp"
#include "persona/templates.hpp"
#include "persona/util.hpp"

namespace persona {

void to_json(nlohmann::json& j, const CoT& c) {
  j = {{"axis", c.axis}, {"categories", c.categories}, {"chosen_category", c.chosen_category}, {"response", c.response}};
}

void from_json(const nlohmann::json& j, CoT& c) {
  c.axis = j.at("axis").get<std::string>();
  c.categories = j.at("categories").get<std::vector<std::string>>();
  c.chosen_category = j.at("chosen_category").get<std::string>();
  c.response = j.value("response", std::string());
}

void to_json(nlohmann::json& j, const Candidate& c) {
  j = {{"id", c.id},
       {"prompt_id", c.prompt_id},
       {"text", c.text},
       {"cot_index", c.cot_index},
       {"chosen_category", c.chosen_category}};
  if (c.reward) j["reward"] = *c.reward;
  if (c.embedding) j["embedding"] = c.embedding->values;
}

void from_json(const nlohmann::json& j, Candidate& c) {
  c.id = j.at("id").get<std::string>();
  c.prompt_id = j.at("prompt_id").get<std::string>();
  c.text = j.at("text").get<std::string>();
  c.cot_index = j.at("cot_index").get<int>();
  c.chosen_category = j.value("chosen_category", std::string());
  c.reward = j.contains("reward") ? std::optional(j.at("reward").get<double>()) : std::nullopt;
  if (j.contains("embedding")) c.embedding = EmbeddingVec::normalized(j.at("embedding").get<std::vector<double>>());
}

namespace {

std::optional<std::string> field_after(const std::string& line, std::string_view label) {
  const std::string lower = to_lower(line);
  if (!lower.starts_with(label)) return std::nullopt;
  return trim(std::string_view(line).substr(label.size()));
}

std::vector<std::string> split_categories(const std::string& s) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    auto comma = s.find(',', start);
    if (comma == std::string::npos) comma = s.size();
    std::string item = trim(std::string_view(s).substr(start, comma - start));
    if (!item.empty()) out.push_back(std::move(item));
    start = comma + 1;
  }
  return out;
}

const std::string* find_icase(const std::vector<std::string>& items, const std::string& needle) {
  const std::string n = to_lower(needle);
  for (const auto& it : items) {
    if (to_lower(it) == n) return &it;
  }
  return nullptr;
}

}  // namespace

std::optional<CoT> parse_cot(const std::string& text) {
  CoT cot;
  bool have_axis = false, have_cats = false, have_chosen = false, have_response = false;
  std::vector<std::string> response_lines;
  for (const auto& raw : split_lines(text)) {
    const std::string line = trim(raw);
    if (have_response) {
      response_lines.push_back(raw);
      continue;
    }
    if (auto v = field_after(line, "axis:")) {
      cot.axis = *v;
      have_axis = !v->empty();
    } else if (auto v2 = field_after(line, "categories:")) {
      cot.categories = split_categories(*v2);
      have_cats = !cot.categories.empty();
    } else if (auto v3 = field_after(line, "chosen category:")) {
      cot.chosen_category = *v3;
      have_chosen = !v3->empty();
    } else if (auto v4 = field_after(line, "response:")) {
      have_response = true;
      response_lines.push_back(*v4);
    }
  }
  cot.response = trim(join(response_lines, "\n"));
  if (!(have_axis && have_cats && have_chosen && have_response) || cot.response.empty()) return std::nullopt;
  if (cot.categories.size() > 8) return std::nullopt;
  const std::string* chosen = find_icase(cot.categories, cot.chosen_category);
  if (!chosen) return std::nullopt;
  cot.chosen_category = *chosen;
  return cot;
}

std::vector<CoT> sample_cots(Provider& provider, const PromptRecord& prompt,
                             const std::optional<CategoryConstraint>& constraint, int m, const SamplerOptions& opts) {
  if (prompt.kind == QuestionKind::Divergent && !constraint) {
    throw Error(Errc::PreconditionFailed, "divergent prompt " + prompt.id + " requires its axis categories");
  }
  if (m < 1) throw Error(Errc::PreconditionFailed, "sample_cots: m must be >= 1");
  const std::string system = constraint ? templates::cot_system_constrained(constraint->axis, constraint->categories)
                                        : templates::cot_system();
  std::vector<CoT> out;
  for (int i = 0; i < m; ++i) {
    std::optional<CoT> cot;
    for (int attempt = 0; attempt <= opts.max_retries && !cot; ++attempt) {
      GenRequest req;
      req.messages = {{"system", system}, {"user", prompt.text}};
      req.model = opts.model;
      req.seed = static_cast<std::int64_t>(
          derive_seed(opts.seed, "cot:" + prompt.id + ":" + std::to_string(i) + ":" + std::to_string(attempt)) >> 1);
      cot = parse_cot(provider.chat(req));
      if (cot && constraint) {
        const std::string* chosen = find_icase(constraint->categories, cot->chosen_category);
        if (!chosen) {
          cot.reset();
          continue;
        }
        cot->axis = constraint->axis;
        cot->categories = constraint->categories;
        cot->chosen_category = *chosen;
      }
    }
    if (!cot) {
      throw Error(Errc::CoTParseError, prompt.id + ": CoT " + std::to_string(i) + " unparseable after " +
                                           std::to_string(opts.max_retries + 1) + " attempts");
    }
    out.push_back(std::move(*cot));
  }
  return out;
}

ArtifactRules::ArtifactRules(std::vector<std::string> patterns) : patterns_(std::move(patterns)) {
  for (const auto& p : patterns_) {
    compiled_.emplace_back(p, std::regex::ECMAScript | std::regex::icase | std::regex::optimize);
  }
}

ArtifactRules ArtifactRules::defaults() {
  return ArtifactRules({
      R"(^\s*(Axis|Categories|Chosen category)\s*:[^\n]*\n?)",
      R"(^\s*Response\s*:\s*)",
      R"(^\s*For (our|the|all|my|you|those) [^,.!?\n]{0,60}?(audience|audiences|readers|folks|community|friends|fans|followers)\b[,:!]?\s*)",
      R"(^\s*As an? [^,.!?\n]{0,60}?(person|individual|user|follower|supporter|fan|member|believer|practitioner|enthusiast|professional|yourself)\b[,:]\s*)",
      R"(^\s*(Since|Because|Given that) you(\s+are|'re) an? [^,.!?\n]{0,60}?[,:]\s*)",
  });
}

bool ArtifactRules::matches(const std::string& text) const {
  return std::any_of(compiled_.begin(), compiled_.end(), [&](const std::regex& r) { return std::regex_search(text, r); });
}

std::string ArtifactRules::apply(const std::string& text) const {
  std::string out = text;
  for (int pass = 0; pass < 8; ++pass) {
    std::string before = out;
    for (const auto& r : compiled_) out = std::regex_replace(out, r, "");
    if (out == before) break;
  }
  return out;
}

std::string strip_artifacts(const std::string& text, const ArtifactRules& rules) {
  if (!rules.matches(text)) return text;
  std::string out = trim(rules.apply(text));
  if (out.empty()) throw Error(Errc::EmptyAfterStrip, "nothing left after stripping artifacts");
  return out;
}

std::vector<Candidate> sample_candidates(Provider& provider, const PromptRecord& prompt, const std::vector<CoT>& cots,
                                         int per_cot, const ArtifactRules& rules, const SamplerOptions& opts) {
  if (cots.empty()) throw Error(Errc::PreconditionFailed, "sample_candidates: no CoTs");
  if (per_cot < 1) throw Error(Errc::PreconditionFailed, "sample_candidates: per_cot must be >= 1");
  const std::size_t total = cots.size() * static_cast<std::size_t>(per_cot);
  const bool constrained = prompt.kind == QuestionKind::Divergent;

  return parallel_map<Candidate>(total, opts.workers, [&](std::size_t n) {
    const int c = static_cast<int>(n / static_cast<std::size_t>(per_cot));
    const int j = static_cast<int>(n % static_cast<std::size_t>(per_cot));
    const CoT& cot = cots[static_cast<std::size_t>(c)];
    const std::string key = prompt.id + ":" + std::to_string(c) + ":" + std::to_string(j);
    Rng rng(derive_seed(opts.seed, "cand:" + key));
    const std::string chosen = cot.categories[rng.below(cot.categories.size())];
    std::vector<std::string> order = cot.categories;
    rng.shuffle(order);
    const std::string system =
        constrained ? templates::cot_system_constrained(cot.axis, cot.categories) : templates::cot_system();

    Candidate cand;
    cand.id = "c_" + short_digest({"candidate", prompt.id, std::to_string(c), std::to_string(j)});
    cand.prompt_id = prompt.id;
    cand.cot_index = c;
    cand.chosen_category = chosen;
    for (int attempt = 0;; ++attempt) {
      GenRequest req = GenRequest::diverse(
          {{"system", system}, {"user", prompt.text}, {"assistant", templates::cot_prefill(cot.axis, order, chosen)}});
      req.model = opts.model;
      req.seed = static_cast<std::int64_t>(derive_seed(opts.seed, "gen:" + key + ":" + std::to_string(attempt)) >> 1);
      std::string text = provider.chat(req);
      // Some servers echo the whole format instead of continuing the prefill.
      if (auto parsed = parse_cot(text)) text = parsed->response;
      try {
        cand.text = strip_artifacts(trim(text), rules);
        if (!cand.text.empty()) break;
        throw Error(Errc::EmptyAfterStrip, "empty completion");
      } catch (const Error& e) {
        if (e.code() != Errc::EmptyAfterStrip || attempt >= opts.max_retries) throw;
      }
    }
    return cand;
  });
}

}  // namespace persona
