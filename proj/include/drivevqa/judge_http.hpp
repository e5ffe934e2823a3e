#pragma once

// Live judge over a chat-completion style HTTP endpoint.

#include <chrono>
#include <cstdlib>
#include <string>

#include <httplib.h>

#include "drivevqa/judge.hpp"
#include "drivevqa/jsonl.hpp"

namespace drivevqa {

struct HttpJudgeConfig {
  std::string url;  // e.g. https://api.example.com/v1/chat/completions
  std::string api_key;
  std::string model = "gpt-3.5-turbo";
  std::chrono::milliseconds timeout{30000};

  /// DRIVEVQA_JUDGE_URL, DRIVEVQA_JUDGE_API_KEY, DRIVEVQA_JUDGE_MODEL.
  static HttpJudgeConfig from_env() {
    HttpJudgeConfig cfg;
    if (const char* v = std::getenv("DRIVEVQA_JUDGE_URL")) cfg.url = v;
    if (const char* v = std::getenv("DRIVEVQA_JUDGE_API_KEY")) cfg.api_key = v;
    if (const char* v = std::getenv("DRIVEVQA_JUDGE_MODEL")) cfg.model = v;
    return cfg;
  }
};

class HttpJudge final : public JudgeClient {
 public:
  explicit HttpJudge(HttpJudgeConfig cfg) : cfg_(std::move(cfg)) {
    const auto scheme = cfg_.url.find("://");
    if (scheme == std::string::npos) throw JudgeUnavailable("judge URL must include a scheme: '" + cfg_.url + "'");
    const auto path = cfg_.url.find('/', scheme + 3);
    origin_ = cfg_.url.substr(0, path);
    path_ = path == std::string::npos ? "/" : cfg_.url.substr(path);
  }

  std::string grade(const JudgeRequest& request) override {
    const json body{{"model", cfg_.model},
                    {"temperature", 0},
                    {"messages",
                     json::array({{{"role", "system"}, {"content", "You are a strict grader."}},
                                  {{"role", "user"}, {"content", grading_prompt(request)}}})}};
    httplib::Client client(origin_);
    if (!client.is_valid()) throw JudgeUnavailable("invalid judge endpoint '" + origin_ + "'");
    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(cfg_.timeout);
    const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(cfg_.timeout - secs);
    client.set_connection_timeout(secs.count(), usecs.count());
    client.set_read_timeout(secs.count(), usecs.count());
    httplib::Headers headers;
    if (!cfg_.api_key.empty()) headers.emplace("Authorization", "Bearer " + cfg_.api_key);
    auto res = client.Post(path_, headers, body.dump(), "application/json");
    if (!res) throw JudgeUnavailable("request failed: " + httplib::to_string(res.error()));
    if (res->status != 200) throw JudgeUnavailable("HTTP status " + std::to_string(res->status));
    try {
      const json reply = json::parse(res->body);
      return reply.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const json::exception& e) {
      throw JudgeUnavailable(std::string("malformed completion body: ") + e.what());
    }
  }

 private:
  HttpJudgeConfig cfg_;
  std::string origin_;
  std::string path_;
};

}  // namespace drivevqa
