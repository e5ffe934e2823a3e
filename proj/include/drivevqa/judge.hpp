#pragma once

// LLM-judge scoring: a pluggable client, a seeded offline stub, verdict
// parsing and retrying, bounded-concurrency scoring over a corpus.

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cstdint>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

namespace drivevqa {

class JudgeUnavailable : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class UnparsableVerdict : public std::runtime_error {
 public:
  explicit UnparsableVerdict(std::string reply)
      : std::runtime_error("no score in 0-100 found in judge reply"), reply_(std::move(reply)) {}
  const std::string& reply() const noexcept { return reply_; }

 private:
  std::string reply_;
};

struct JudgeRequest {
  std::string question;
  std::string reference;
  std::string prediction;
};

inline std::string grading_prompt(const JudgeRequest& r) {
  std::string p;
  p += "You are grading an answer to a question about a driving scene.\n";
  p += "Question: " + r.question + "\n";
  p += "Reference answer: " + r.reference + "\n";
  p += "Predicted answer: " + r.prediction + "\n";
  p += "Rate how well the predicted answer matches the reference on a scale from 0 to 100. ";
  p += "Reply with the score first, e.g. \"Score: 75\".";
  return p;
}

/// First maximal digit run whose value lies in [0, 100].
inline std::optional<int> find_verdict(std::string_view reply) {
  std::size_t i = 0;
  while (i < reply.size()) {
    if (!std::isdigit(static_cast<unsigned char>(reply[i]))) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < reply.size() && std::isdigit(static_cast<unsigned char>(reply[j]))) ++j;
    const std::string_view digits = reply.substr(i, j - i);
    if (digits.size() <= 3) {
      int v = 0;
      for (char c : digits) v = v * 10 + (c - '0');
      if (v <= 100) return v;
    }
    i = j;
  }
  return std::nullopt;
}

inline int parse_verdict(std::string_view reply) {
  if (auto v = find_verdict(reply)) return *v;
  throw UnparsableVerdict(std::string(reply));
}

class JudgeClient {
 public:
  virtual ~JudgeClient() = default;
  /// Returns the raw reply text. Throws JudgeUnavailable on transport failure.
  virtual std::string grade(const JudgeRequest& request) = 0;
};

/// Deterministic replies from a seeded hash of (prediction, reference).
class StubJudge final : public JudgeClient {
 public:
  explicit StubJudge(std::uint64_t seed = 0) : seed_(seed) {}

  int score_for(const JudgeRequest& r) const {
    std::uint64_t h = 1469598103934665603ULL ^ (seed_ * 0x9e3779b97f4a7c15ULL);
    auto feed = [&h](std::string_view s) {
      for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
      }
    };
    feed(r.prediction);
    feed("\x1f");
    feed(r.reference);
    return static_cast<int>(h % 101);
  }

  std::string grade(const JudgeRequest& r) override {
    return "Score: " + std::to_string(score_for(r));
  }

 private:
  std::uint64_t seed_;
};

struct JudgeOptions {
  int max_retries = 2;   // extra attempts after the first
  int max_in_flight = 4;
};

struct JudgeOutcome {
  double score = 0.0;
  int attempts = 0;
  std::optional<std::string> diagnostic;
};

struct JudgeResult {
  double mean = 0.0;
  std::vector<JudgeOutcome> per_pair;
};

/// Retries on JudgeUnavailable / UnparsableVerdict; a pair that never yields a
/// verdict scores 0 and carries the last error as its diagnostic.
inline JudgeOutcome judge_one(JudgeClient& client, const JudgeRequest& request, const JudgeOptions& opts) {
  JudgeOutcome out;
  const int attempts = 1 + std::max(0, opts.max_retries);
  for (int a = 0; a < attempts; ++a) {
    out.attempts = a + 1;
    try {
      out.score = parse_verdict(client.grade(request));
      out.diagnostic.reset();
      return out;
    } catch (const UnparsableVerdict& e) {
      out.diagnostic = std::string("unparsable verdict: ") + e.reply();
    } catch (const JudgeUnavailable& e) {
      out.diagnostic = std::string("judge unavailable: ") + e.what();
    }
  }
  out.score = 0.0;
  return out;
}

inline JudgeResult judge_scores(const std::vector<JudgeRequest>& requests, JudgeClient& client,
                                const JudgeOptions& opts = {}) {
  JudgeResult result;
  result.per_pair.resize(requests.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < requests.size(); i = next++) {
      result.per_pair[i] = judge_one(client, requests[i], opts);
    }
  };
  const auto workers = static_cast<std::size_t>(std::max(1, opts.max_in_flight));
  std::vector<std::thread> pool;
  for (std::size_t w = 1; w < std::min(workers, requests.size()); ++w) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  double sum = 0.0;
  for (const auto& o : result.per_pair) sum += o.score;
  result.mean = requests.empty() ? 0.0 : sum / static_cast<double>(requests.size());
  return result;
}

}  // namespace drivevqa
