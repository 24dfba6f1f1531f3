#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <random>
#include <regex>
#include <string>
#include <vector>

#include "persona/judge.hpp"
#include "persona/provider.hpp"
#include "persona/sampler.hpp"

namespace testing_support {

namespace fs = std::filesystem;

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::mt19937_64 gen(std::random_device{}());
    path_ = fs::temp_directory_path() / ("persona_" + tag + "_" + std::to_string(gen()));
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  const fs::path& path() const { return path_; }
  std::string str(const std::string& name = "") const { return name.empty() ? path_.string() : (path_ / name).string(); }

 private:
  fs::path path_;
};

inline persona::Candidate cand(std::string id, double reward, std::vector<double> emb = {}) {
  persona::Candidate c;
  c.id = std::move(id);
  c.prompt_id = "q";
  c.text = "text of " + c.id;
  c.reward = reward;
  if (!emb.empty()) c.embedding = persona::EmbeddingVec{emb, 0.0};
  return c;
}

// Judge that prefers the output with the higher rank in `rank` (keyed by exact
// text). Reads the rendered batch back so slot swaps are exercised end to end.
class RankJudge : public persona::Provider {
 public:
  explicit RankJudge(std::map<std::string, int> rank) : rank_(std::move(rank)) {}
  int requests = 0;
  std::vector<int> batch_sizes;
  // Number of leading requests answered with garbage.
  int garble_first = 0;

 protected:
  std::string do_chat(const persona::GenRequest& req) override {
    std::lock_guard lock(mu_);
    ++requests;
    const std::string& body = req.messages.back().content;
    static const std::regex ex(R"(### Output \(a\) for example (\d+):\n([\s\S]*?)\n\n### Output \(b\) for example \d+:\n([\s\S]*?)\n\n)");
    std::string out;
    int n = 0;
    for (auto it = std::sregex_iterator(body.begin(), body.end(), ex); it != std::sregex_iterator(); ++it) {
      const bool a_better = rank_.at((*it)[2].str()) > rank_.at((*it)[3].str());
      out += "Example " + (*it)[1].str() + ":\n{\"Concise explanation\": \"ranked\", \"Output (a) is better than Output (b)\": " +
             (a_better ? "true" : "false") + "}\n";
      ++n;
    }
    batch_sizes.push_back(n);
    if (garble_first > 0) {
      --garble_first;
      return "I cannot decide.";
    }
    return out;
  }
  persona::ScoredCompletion do_score(const std::string&, const std::string&) override { return {}; }
  std::vector<persona::EmbeddingVec> do_embed(const std::vector<std::string>& t) override {
    return std::vector<persona::EmbeddingVec>(t.size());
  }
  persona::RewardScore do_reward(const std::string&, const std::string&) override { return {}; }

 private:
  std::mutex mu_;
  std::map<std::string, int> rank_;
};

// Chat answered by a callback; other operations use the mock.
class ScriptedChat : public persona::MockProvider {
 public:
  using Fn = std::function<std::string(const persona::GenRequest&, int call)>;
  explicit ScriptedChat(Fn fn) : fn_(std::move(fn)) {}
  int calls = 0;

 protected:
  std::string do_chat(const persona::GenRequest& req) override {
    std::lock_guard lock(mu_);
    return fn_(req, calls++);
  }

 private:
  std::mutex mu_;
  Fn fn_;
};

}  // namespace testing_support
