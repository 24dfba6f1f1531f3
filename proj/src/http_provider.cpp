#include <httplib.h>

#include <cmath>
#include <cstdlib>

#include "persona/error.hpp"
#include "persona/provider.hpp"
#include "persona/util.hpp"

namespace persona {

namespace {

std::atomic<std::uint64_t> g_connections{0};

struct Endpoint {
  std::string origin;  // scheme://host[:port]
  std::string path;
};

Endpoint split_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw Error(Errc::ConfigError, "endpoint url lacks scheme: " + url);
  const auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

long parse_retry_after_ms(const httplib::Result& res) {
  if (!res->has_header("Retry-After")) return 0;
  const std::string v = res->get_header_value("Retry-After");
  char* end = nullptr;
  const double secs = std::strtod(v.c_str(), &end);
  if (end == v.c_str() || !std::isfinite(secs) || secs < 0) return 0;
  return static_cast<long>(secs * 1000.0);
}

}  // namespace

long backoff_delay_ms(const RetryPolicy& policy, int attempt, double unit_draw) {
  const double raw = static_cast<double>(policy.base_delay_ms) * std::ldexp(1.0, attempt);
  const double capped = std::min(raw, static_cast<double>(policy.max_delay_ms));
  const double factor = 1.0 + policy.jitter * (2.0 * std::clamp(unit_draw, 0.0, 1.0) - 1.0);
  return static_cast<long>(std::llround(capped * factor));
}

void to_json(nlohmann::json& j, const HttpConfig& c) {
  j = {{"chat_url", c.chat_url},
       {"score_url", c.score_url},
       {"score_mode", c.score_mode},
       {"embed_url", c.embed_url},
       {"reward_url", c.reward_url},
       {"api_key_env", c.api_key_env},
       {"models",
        {{"generator", c.models.generator},
         {"judge", c.models.judge},
         {"inference", c.models.inference},
         {"embedding", c.models.embedding},
         {"reward", c.models.reward},
         {"scorer", c.models.scorer}}},
       {"retry",
        {{"max_attempts", c.retry.max_attempts},
         {"base_delay_ms", c.retry.base_delay_ms},
         {"max_delay_ms", c.retry.max_delay_ms},
         {"jitter", c.retry.jitter}}},
       {"max_in_flight", c.max_in_flight},
       {"timeout_s", c.timeout_s}};
}

void from_json(const nlohmann::json& j, HttpConfig& c) {
  c.chat_url = j.value("chat_url", c.chat_url);
  c.score_url = j.value("score_url", c.score_url);
  c.score_mode = j.value("score_mode", c.score_mode);
  c.embed_url = j.value("embed_url", c.embed_url);
  c.reward_url = j.value("reward_url", c.reward_url);
  c.api_key_env = j.value("api_key_env", c.api_key_env);
  if (j.contains("models")) {
    const auto& m = j.at("models");
    c.models.generator = m.value("generator", c.models.generator);
    c.models.judge = m.value("judge", c.models.judge);
    c.models.inference = m.value("inference", c.models.inference);
    c.models.embedding = m.value("embedding", c.models.embedding);
    c.models.reward = m.value("reward", c.models.reward);
    c.models.scorer = m.value("scorer", c.models.scorer);
  }
  if (j.contains("retry")) {
    const auto& r = j.at("retry");
    c.retry.max_attempts = r.value("max_attempts", c.retry.max_attempts);
    c.retry.base_delay_ms = r.value("base_delay_ms", c.retry.base_delay_ms);
    c.retry.max_delay_ms = r.value("max_delay_ms", c.retry.max_delay_ms);
    c.retry.jitter = r.value("jitter", c.retry.jitter);
  }
  c.max_in_flight = j.value("max_in_flight", c.max_in_flight);
  c.timeout_s = j.value("timeout_s", c.timeout_s);
  if (c.retry.max_attempts < 1) throw Error(Errc::ConfigError, "retry.max_attempts must be >= 1");
  if (c.max_in_flight < 1 || c.max_in_flight > 1024) throw Error(Errc::ConfigError, "max_in_flight outside [1,1024]");
}

HttpProvider::HttpProvider(HttpConfig cfg, Sleeper sleeper)
    : cfg_(std::move(cfg)),
      sleeper_(sleeper ? std::move(sleeper) : Sleeper([](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); })),
      in_flight_(static_cast<std::ptrdiff_t>(cfg_.max_in_flight)) {}

std::uint64_t HttpProvider::connections_attempted() { return g_connections.load(); }

std::vector<long> HttpProvider::backoff_log() const {
  std::lock_guard lock(log_mu_);
  return backoff_log_;
}

nlohmann::json HttpProvider::post_json(const std::string& url, const nlohmann::json& body) {
  const Endpoint ep = split_url(url);
  httplib::Headers headers;
  if (const char* key = std::getenv(cfg_.api_key_env.c_str()); key && *key) {
    headers.emplace("Authorization", std::string("Bearer ") + key);
  }
  const std::string payload = body.dump();

  in_flight_.acquire();
  struct Release {
    std::counting_semaphore<1024>& s;
    ~Release() { s.release(); }
  } release{in_flight_};

  httplib::Client client(ep.origin);
  client.set_connection_timeout(cfg_.timeout_s, 0);
  client.set_read_timeout(cfg_.timeout_s, 0);

  std::string last_error = "no attempt made";
  long last_retry_after = -1;
  for (int attempt = 0; attempt < cfg_.retry.max_attempts; ++attempt) {
    ++g_connections;
    auto res = client.Post(ep.path, headers, payload, "application/json");
    long retry_after = 0;
    if (!res) {
      last_error = "transport: " + httplib::to_string(res.error());
      last_retry_after = -1;
    } else if (res->status == 200) {
      try {
        return nlohmann::json::parse(res->body);
      } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::TransportError, url + ": unparseable body: " + e.what());
      }
    } else if (res->status == 429) {
      retry_after = parse_retry_after_ms(res);
      last_retry_after = retry_after;
      last_error = "HTTP 429 rate limited";
    } else if (res->status >= 500) {
      last_error = "HTTP " + std::to_string(res->status);
      last_retry_after = -1;
    } else if (res->status == 404 || res->status == 501) {
      throw Error(Errc::ScoringUnsupported, url + ": HTTP " + std::to_string(res->status));
    } else {
      throw Error(Errc::TransportError, url + ": HTTP " + std::to_string(res->status) + ": " + res->body);
    }
    if (attempt + 1 == cfg_.retry.max_attempts) break;
    long delay = 0;
    {
      std::lock_guard lock(log_mu_);
      Rng rng(jitter_state_++);
      delay = std::max(retry_after, backoff_delay_ms(cfg_.retry, attempt, rng.uniform()));
      backoff_log_.push_back(delay);
    }
    sleeper_(std::chrono::milliseconds(delay));
  }
  if (last_retry_after >= 0) throw RateLimitedError(last_retry_after, url + ": " + last_error);
  throw Error(Errc::TransportError, url + ": " + last_error + " after " + std::to_string(cfg_.retry.max_attempts) +
                                        " attempts");
}

std::string HttpProvider::do_chat(const GenRequest& req) {
  nlohmann::json body = to_json_value(req);
  body["model"] = req.model.empty() ? cfg_.models.generator : req.model;
  if (req.messages.back().role == "assistant") {
    // Continue the final assistant turn instead of opening a new one.
    body["continue_final_message"] = true;
    body["add_generation_prompt"] = false;
  }
  const auto res = post_json(cfg_.chat_url, body);
  try {
    return res.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::TransportError, "chat: unexpected response shape: " + std::string(e.what()));
  }
}

ScoredCompletion HttpProvider::do_score(const std::string& prompt, const std::string& completion) {
  if (cfg_.score_mode == "echo") {
    const nlohmann::json body = {{"model", cfg_.models.scorer}, {"prompt", prompt + completion}, {"max_tokens", 0},
                                 {"echo", true}, {"logprobs", 0}};
    const auto res = post_json(cfg_.score_url, body);
    const auto& choice = res.at("choices").at(0);
    if (!choice.contains("logprobs") || choice["logprobs"].is_null()) {
      throw Error(Errc::ScoringUnsupported, "endpoint returned no logprobs");
    }
    const auto& lp = choice["logprobs"];
    const auto offsets = lp.at("text_offset").get<std::vector<long>>();
    const auto& values = lp.at("token_logprobs");
    std::vector<double> logps;
    for (std::size_t i = 0; i < offsets.size(); ++i) {
      if (offsets[i] >= static_cast<long>(prompt.size()) && !values[i].is_null()) logps.push_back(values[i].get<double>());
    }
    return ScoredCompletion::from_logps(std::move(logps));
  }
  const auto res = post_json(cfg_.score_url, {{"model", cfg_.models.scorer}, {"prompt", prompt}, {"completion", completion}});
  if (!res.contains("token_logps")) throw Error(Errc::ScoringUnsupported, "score response lacks token_logps");
  return ScoredCompletion::from_logps(res.at("token_logps").get<std::vector<double>>());
}

std::vector<EmbeddingVec> HttpProvider::do_embed(const std::vector<std::string>& texts) {
  const auto res = post_json(cfg_.embed_url, {{"model", cfg_.models.embedding}, {"input", texts}});
  std::vector<EmbeddingVec> out;
  std::size_t dim = 0;
  for (const auto& item : res.at("data")) {
    auto v = item.at("embedding").get<std::vector<double>>();
    if (dim == 0) dim = v.size();
    if (v.size() != dim) throw Error(Errc::DimensionMismatch, "embedding endpoint returned ragged vectors");
    out.push_back(EmbeddingVec::normalized(std::move(v)));
  }
  return out;
}

RewardScore HttpProvider::do_reward(const std::string& prompt, const std::string& response) {
  const auto res = post_json(cfg_.reward_url, {{"model", cfg_.models.reward}, {"prompt", prompt}, {"response", response}});
  return {res.at("reward").get<double>()};
}

}  // namespace persona
