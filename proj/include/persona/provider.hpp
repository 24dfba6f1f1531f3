#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

namespace persona {

struct Message {
  std::string role;  // system | user | assistant
  std::string content;

  bool operator==(const Message&) const = default;
};

struct GenRequest {
  std::vector<Message> messages;
  double temperature = 1.0;
  double top_p = 1.0;
  int max_tokens = 512;
  std::optional<std::int64_t> seed;
  /// Model identifier; empty selects the provider's generator model.
  std::string model;

  /// t=2.0, top_p=0.8; used only for candidate response sampling.
  static GenRequest diverse(std::vector<Message> messages);
};

/// Stable digest of every field that affects the completion.
std::string request_key(const GenRequest& req);
nlohmann::json to_json_value(const GenRequest& req);

struct ScoredCompletion {
  std::vector<double> token_logps;
  double mean_logp = 0.0;
  double sum_logp = 0.0;

  static ScoredCompletion from_logps(std::vector<double> logps);
};

struct EmbeddingVec {
  std::vector<double> values;
  double norm = 0.0;

  /// Scale to unit L2 norm; zero vectors are left as-is.
  static EmbeddingVec normalized(std::vector<double> values);
};

double cosine(const EmbeddingVec& a, const EmbeddingVec& b);

struct RewardScore {
  double value = 0.0;
};

/// Uniform contract to language-model services. Public entry points validate
/// preconditions and delegate to the do_* hooks.
class Provider {
 public:
  virtual ~Provider() = default;

  std::string chat(const GenRequest& req);
  ScoredCompletion score_completion(const std::string& prompt, const std::string& completion);
  std::vector<EmbeddingVec> embed(const std::vector<std::string>& texts);
  RewardScore reward(const std::string& prompt, const std::string& response);

 protected:
  virtual std::string do_chat(const GenRequest& req) = 0;
  virtual ScoredCompletion do_score(const std::string& prompt, const std::string& completion) = 0;
  virtual std::vector<EmbeddingVec> do_embed(const std::vector<std::string>& texts) = 0;
  virtual RewardScore do_reward(const std::string& prompt, const std::string& response) = 0;
};

// ---------------------------------------------------------------------------
// Mock

struct MockOptions {
  std::uint64_t seed = 0;
  std::size_t embed_dim = 64;
  /// Every call throws TransportError; exercises outage handling.
  bool outage = false;
};

/// Deterministic stand-in for every service. Chat recognises the pipeline's
/// prompt templates and answers in the format each one asks for.
class MockProvider : public Provider {
 public:
  explicit MockProvider(MockOptions opts = {}) : opts_(opts) {}

  std::uint64_t chat_calls() const { return chat_calls_.load(); }
  std::uint64_t total_calls() const { return total_calls_.load(); }

  /// Logprob assigned to `token` at `index` after `prompt`, in [-6, -0.1].
  static double pseudo_logp(std::string_view prompt, std::size_t index, std::string_view token);
  /// Preference score the mock judge assigns `text` for the named persona.
  static double judge_affinity(std::string_view persona_name, std::string_view text);

 protected:
  std::string do_chat(const GenRequest& req) override;
  ScoredCompletion do_score(const std::string& prompt, const std::string& completion) override;
  std::vector<EmbeddingVec> do_embed(const std::vector<std::string>& texts) override;
  RewardScore do_reward(const std::string& prompt, const std::string& response) override;

 private:
  void tick(bool is_chat);

  MockOptions opts_;
  std::atomic<std::uint64_t> chat_calls_{0};
  std::atomic<std::uint64_t> total_calls_{0};
};

// ---------------------------------------------------------------------------
// Response cache and fixture replay share one JSONL record format:
//   {"key": <digest>, "op": "chat"|"score"|"embed"|"reward", "response": <json>}

std::string score_key(const std::string& prompt, const std::string& completion);
std::string embed_key(const std::string& text);
std::string reward_key(const std::string& prompt, const std::string& response);

class ResponseStore {
 public:
  ResponseStore() = default;
  /// Loads existing records; new records are appended when `append` is true.
  ResponseStore(std::string path, bool append);

  std::optional<nlohmann::json> get(const std::string& op, const std::string& key) const;
  void put(const std::string& op, const std::string& key, const nlohmann::json& response);
  std::size_t size() const;
  /// Rewrite the backing file sorted by (op, key) so its bytes do not depend on
  /// the order in which concurrent calls finished.
  void compact() const;

 private:
  std::string path_;
  bool append_ = false;
  mutable std::mutex mu_;
  std::unordered_map<std::string, nlohmann::json> entries_;
};

/// Replays recorded responses; a miss is Errc::FixtureMiss.
class FixtureProvider : public Provider {
 public:
  explicit FixtureProvider(const std::string& path);
  explicit FixtureProvider(std::shared_ptr<ResponseStore> store) : store_(std::move(store)) {}

 protected:
  std::string do_chat(const GenRequest& req) override;
  ScoredCompletion do_score(const std::string& prompt, const std::string& completion) override;
  std::vector<EmbeddingVec> do_embed(const std::vector<std::string>& texts) override;
  RewardScore do_reward(const std::string& prompt, const std::string& response) override;

 private:
  nlohmann::json need(const std::string& op, const std::string& key) const;
  std::shared_ptr<ResponseStore> store_;
};

/// Persists every call of the wrapped provider; hits never reach it.
class CachingProvider : public Provider {
 public:
  CachingProvider(std::shared_ptr<Provider> inner, std::shared_ptr<ResponseStore> store)
      : inner_(std::move(inner)), store_(std::move(store)) {}

  std::uint64_t hits() const { return hits_.load(); }
  std::uint64_t misses() const { return misses_.load(); }

 protected:
  std::string do_chat(const GenRequest& req) override;
  ScoredCompletion do_score(const std::string& prompt, const std::string& completion) override;
  std::vector<EmbeddingVec> do_embed(const std::vector<std::string>& texts) override;
  RewardScore do_reward(const std::string& prompt, const std::string& response) override;

 private:
  std::shared_ptr<Provider> inner_;
  std::shared_ptr<ResponseStore> store_;
  std::atomic<std::uint64_t> hits_{0};
  std::atomic<std::uint64_t> misses_{0};
};

// ---------------------------------------------------------------------------
// OpenAI-compatible HTTP

struct RetryPolicy {
  int max_attempts = 5;
  long base_delay_ms = 500;
  long max_delay_ms = 30000;
  /// Fractional jitter: the delay is scaled by a factor in [1-jitter, 1+jitter].
  double jitter = 0.2;
};

/// Delay before retry number `attempt` (0-based): base * 2^attempt, jittered, capped.
long backoff_delay_ms(const RetryPolicy& policy, int attempt, double unit_draw);

struct ModelIds {
  std::string generator = "HuggingFaceH4/zephyr-7b-beta";
  std::string judge = "gpt-4-0613";
  std::string inference = "HuggingFaceH4/zephyr-7b-beta";
  std::string embedding = "sentence-transformers/sentence-t5-xxl";
  std::string reward = "sfairXC/FsfairX-LLaMA3-RM-v0.1";
  std::string scorer = "HuggingFaceH4/zephyr-7b-beta";
};

struct HttpConfig {
  std::string chat_url = "http://127.0.0.1:8000/v1/chat/completions";
  std::string score_url = "http://127.0.0.1:8001/score";
  /// "score" posts {prompt, completion}; "echo" uses /v1/completions with echo+logprobs.
  std::string score_mode = "score";
  std::string embed_url = "http://127.0.0.1:8000/v1/embeddings";
  std::string reward_url = "http://127.0.0.1:8002/reward";
  std::string api_key_env = "OPENAI_API_KEY";
  ModelIds models;
  RetryPolicy retry;
  std::size_t max_in_flight = 8;
  int timeout_s = 120;
};

void to_json(nlohmann::json& j, const HttpConfig& c);
void from_json(const nlohmann::json& j, HttpConfig& c);

class HttpProvider : public Provider {
 public:
  using Sleeper = std::function<void(std::chrono::milliseconds)>;

  explicit HttpProvider(HttpConfig cfg, Sleeper sleeper = {});

  /// Connections attempted by any HttpProvider in this process.
  static std::uint64_t connections_attempted();
  /// Delays slept between retries, for tests.
  std::vector<long> backoff_log() const;

 protected:
  std::string do_chat(const GenRequest& req) override;
  ScoredCompletion do_score(const std::string& prompt, const std::string& completion) override;
  std::vector<EmbeddingVec> do_embed(const std::vector<std::string>& texts) override;
  RewardScore do_reward(const std::string& prompt, const std::string& response) override;

 private:
  nlohmann::json post_json(const std::string& url, const nlohmann::json& body);

  HttpConfig cfg_;
  Sleeper sleeper_;
  std::counting_semaphore<1024> in_flight_;
  mutable std::mutex log_mu_;
  std::vector<long> backoff_log_;
  std::uint64_t jitter_state_ = 0x5eed;
};

}  // namespace persona
