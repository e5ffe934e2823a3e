#pragma once

// Corpus scoring: Accuracy, BLEU-1..4, ROUGE-L, CIDEr, coordinate Match,
// judge score, and the weighted final score.

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "drivevqa/core.hpp"
#include "drivevqa/judge.hpp"
#include "drivevqa/jsonl.hpp"

namespace drivevqa {

struct EvalPair {
  std::string question_id;
  std::string category;
  std::string prediction;
  std::vector<std::string> references;  // non-empty
  bool closed_form = false;
  std::string question;
};

class MetricError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class EmptyCorpus : public MetricError {
 public:
  EmptyCorpus() : MetricError("empty corpus") {}
};
class EmptySelection : public MetricError {
 public:
  EmptySelection() : MetricError("no closed-form pairs to score") {}
};
class NoReferenceTags : public MetricError {
 public:
  NoReferenceTags() : MetricError("corpus has no reference coordinate tags") {}
};
class WeightMismatch : public MetricError {
 public:
  explicit WeightMismatch(const std::string& metric)
      : MetricError("metric '" + metric + "' has non-zero weight but was not computed") {}
};
class InvalidWeights : public MetricError {
 public:
  using MetricError::MetricError;
};

// ---------------------------------------------------------------------------
// Text normalization
// ---------------------------------------------------------------------------

/// Lowercase, every ASCII punctuation character is its own token, whitespace
/// separates.
inline std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) tokens.push_back(std::move(cur));
    cur.clear();
  };
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (c < 128 && std::isspace(c)) {
      flush();
    } else if (c < 128 && std::ispunct(c)) {
      flush();
      tokens.emplace_back(1, ch);
    } else {
      cur.push_back(c < 128 ? static_cast<char>(std::tolower(c)) : ch);
    }
  }
  flush();
  return tokens;
}

/// Trim, lowercase, drop trailing punctuation: "A." -> "a".
inline std::string normalize_answer(std::string_view s) {
  auto is_space = [](char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; };
  auto is_punct = [](char c) { return std::ispunct(static_cast<unsigned char>(c)) != 0; };
  std::size_t b = 0, e = s.size();
  while (b < e && is_space(s[b])) ++b;
  while (e > b && (is_space(s[e - 1]) || is_punct(s[e - 1]))) --e;
  std::string out(s.substr(b, e - b));
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

/// Multiple-choice letter or yes/no.
inline bool is_closed_form_answer(std::string_view answer) {
  const std::string n = normalize_answer(answer);
  return n == "yes" || n == "no" || (n.size() == 1 && n[0] >= 'a' && n[0] <= 'd');
}

// ---------------------------------------------------------------------------
// Accuracy
// ---------------------------------------------------------------------------

inline bool closed_form_correct(const EvalPair& p) {
  const std::string pred = normalize_answer(p.prediction);
  return std::any_of(p.references.begin(), p.references.end(),
                     [&](const std::string& r) { return normalize_answer(r) == pred; });
}

inline double accuracy_score(const std::vector<EvalPair>& pairs) {
  std::size_t n = 0, hits = 0;
  for (const auto& p : pairs) {
    if (!p.closed_form) continue;
    ++n;
    hits += closed_form_correct(p) ? 1 : 0;
  }
  if (n == 0) throw EmptySelection();
  return static_cast<double>(hits) / static_cast<double>(n);
}

// ---------------------------------------------------------------------------
// N-gram helpers
// ---------------------------------------------------------------------------

namespace detail {

using NgramCounts = std::map<std::string, int>;

inline NgramCounts ngram_counts(const std::vector<std::string>& tokens, int n) {
  NgramCounts counts;
  if (static_cast<int>(tokens.size()) < n) return counts;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
    std::string key = tokens[i];
    for (int k = 1; k < n; ++k) {
      key += '\x1f';
      key += tokens[i + k];
    }
    ++counts[key];
  }
  return counts;
}

inline std::vector<std::vector<std::string>> tokenize_all(const std::vector<std::string>& texts) {
  std::vector<std::vector<std::string>> out;
  out.reserve(texts.size());
  for (const auto& t : texts) out.push_back(tokenize(t));
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// BLEU
// ---------------------------------------------------------------------------

enum class BleuSmoothing : std::uint8_t { None, Epsilon };

struct BleuOptions {
  BleuSmoothing smoothing = BleuSmoothing::None;
  double epsilon = 0.1;  // numerator used for zero-match orders under Epsilon
};

struct BleuScores {
  std::array<double, 4> bleu{};
  std::array<double, 4> matches{};
  std::array<double, 4> totals{};
  double candidate_length = 0.0;
  double reference_length = 0.0;
  double brevity_penalty = 1.0;
};

/// Corpus BLEU: clipped n-gram matches and candidate n-gram totals are summed
/// over the corpus; reference length is the closest reference per pair (ties
/// prefer the shorter one).
inline BleuScores bleu_scores(const std::vector<EvalPair>& pairs, const BleuOptions& opts = {}) {
  if (pairs.empty()) throw EmptyCorpus();
  BleuScores s;
  for (const auto& p : pairs) {
    const auto cand = tokenize(p.prediction);
    const auto refs = detail::tokenize_all(p.references);
    const double c = static_cast<double>(cand.size());
    s.candidate_length += c;
    double best = -1.0;
    for (const auto& r : refs) {
      const double len = static_cast<double>(r.size());
      if (best < 0 || std::abs(len - c) < std::abs(best - c) ||
          (std::abs(len - c) == std::abs(best - c) && len < best)) {
        best = len;
      }
    }
    s.reference_length += std::max(best, 0.0);
    for (int n = 1; n <= 4; ++n) {
      const auto cc = detail::ngram_counts(cand, n);
      std::map<std::string, int> max_ref;
      for (const auto& r : refs) {
        for (const auto& [g, k] : detail::ngram_counts(r, n)) max_ref[g] = std::max(max_ref[g], k);
      }
      for (const auto& [g, k] : cc) {
        const auto it = max_ref.find(g);
        s.matches[n - 1] += std::min(k, it == max_ref.end() ? 0 : it->second);
        s.totals[n - 1] += k;
      }
    }
  }
  if (s.candidate_length == 0.0) {
    s.brevity_penalty = 0.0;
    return s;
  }
  s.brevity_penalty = s.candidate_length < s.reference_length
                          ? std::exp(1.0 - s.reference_length / s.candidate_length)
                          : 1.0;
  double log_sum = 0.0;
  bool zero = false;
  for (int n = 1; n <= 4; ++n) {
    double m = s.matches[n - 1];
    const double t = s.totals[n - 1];
    if (m == 0.0 && t > 0.0 && opts.smoothing == BleuSmoothing::Epsilon) m = opts.epsilon;
    if (m == 0.0 || t == 0.0) zero = true;
    if (!zero) log_sum += std::log(m / t);
    s.bleu[n - 1] = zero ? 0.0 : s.brevity_penalty * std::exp(log_sum / n);
  }
  return s;
}

// ---------------------------------------------------------------------------
// ROUGE-L
// ---------------------------------------------------------------------------

inline std::size_t lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

/// Precision and recall are each maximized over the references, then combined
/// into an F-measure weighted by beta.
inline double rouge_l_pair(const EvalPair& p, double beta = 1.2) {
  const auto cand = tokenize(p.prediction);
  double best_p = 0.0, best_r = 0.0;
  for (const auto& ref : p.references) {
    const auto r = tokenize(ref);
    const auto lcs = static_cast<double>(lcs_length(cand, r));
    if (!cand.empty()) best_p = std::max(best_p, lcs / static_cast<double>(cand.size()));
    if (!r.empty()) best_r = std::max(best_r, lcs / static_cast<double>(r.size()));
  }
  if (best_p == 0.0 || best_r == 0.0) return 0.0;
  const double b2 = beta * beta;
  return (1.0 + b2) * best_p * best_r / (best_r + b2 * best_p);
}

inline double rouge_l_score(const std::vector<EvalPair>& pairs, double beta = 1.2) {
  if (pairs.empty()) throw EmptyCorpus();
  double sum = 0.0;
  for (const auto& p : pairs) sum += rouge_l_pair(p, beta);
  return sum / static_cast<double>(pairs.size());
}

// ---------------------------------------------------------------------------
// CIDEr
// ---------------------------------------------------------------------------

struct CiderOptions {
  double scale = 10.0;
  int max_n = 4;
};

struct CiderResult {
  double score = 0.0;
  std::vector<double> per_pair;
  std::optional<std::string> warning;  // set for a degenerate corpus
};

/// TF-IDF n-gram cosine similarity, IDF = log(N / df) over the pairs' reference
/// sets (df floored at 1 for unseen n-grams), averaged over references and
/// orders 1..max_n, scaled. A corpus whose reference n-grams all have zero IDF
/// scores 0 with a warning.
inline CiderResult cider_score(const std::vector<EvalPair>& pairs, const CiderOptions& opts = {}) {
  if (pairs.empty()) throw EmptyCorpus();
  const std::size_t n_docs = pairs.size();
  const int max_n = std::max(1, opts.max_n);

  std::vector<std::vector<std::string>> cands;
  std::vector<std::vector<std::vector<std::string>>> refs;
  for (const auto& p : pairs) {
    cands.push_back(tokenize(p.prediction));
    refs.push_back(detail::tokenize_all(p.references));
  }

  CiderResult result;
  result.per_pair.assign(n_docs, 0.0);
  const double log_n = std::log(static_cast<double>(n_docs));
  bool any_positive_idf = false;

  for (int n = 1; n <= max_n; ++n) {
    std::unordered_map<std::string, std::size_t> df;
    std::vector<std::vector<detail::NgramCounts>> ref_counts(n_docs);
    for (std::size_t i = 0; i < n_docs; ++i) {
      std::set<std::string> seen;
      for (const auto& r : refs[i]) {
        ref_counts[i].push_back(detail::ngram_counts(r, n));
        for (const auto& [g, k] : ref_counts[i].back()) seen.insert(g);
      }
      for (const auto& g : seen) ++df[g];
    }
    auto idf = [&](const std::string& g) {
      const auto it = df.find(g);
      const double d = it == df.end() ? 1.0 : static_cast<double>(it->second);
      return log_n - std::log(d);
    };
    for (const auto& [g, d] : df) {
      if (d < n_docs) any_positive_idf = true;
    }
    auto weigh = [&](const detail::NgramCounts& counts) {
      std::map<std::string, double> vec;
      for (const auto& [g, k] : counts) vec[g] = k * idf(g);
      return vec;
    };
    auto norm = [](const std::map<std::string, double>& v) {
      double s = 0.0;
      for (const auto& [g, w] : v) s += w * w;
      return std::sqrt(s);
    };
    for (std::size_t i = 0; i < n_docs; ++i) {
      const auto hyp = weigh(detail::ngram_counts(cands[i], n));
      const double hyp_norm = norm(hyp);
      double sim_sum = 0.0;
      for (const auto& rc : ref_counts[i]) {
        const auto ref = weigh(rc);
        const double ref_norm = norm(ref);
        if (hyp_norm == 0.0 || ref_norm == 0.0) continue;
        double dot = 0.0;
        for (const auto& [g, w] : hyp) {
          const auto it = ref.find(g);
          if (it != ref.end()) dot += w * it->second;
        }
        sim_sum += dot / (hyp_norm * ref_norm);
      }
      if (!ref_counts[i].empty()) {
        result.per_pair[i] += sim_sum / static_cast<double>(ref_counts[i].size());
      }
    }
  }

  if (!any_positive_idf) {
    std::fill(result.per_pair.begin(), result.per_pair.end(), 0.0);
    result.warning = "degenerate corpus: every reference n-gram has zero IDF";
    return result;
  }
  double sum = 0.0;
  for (auto& v : result.per_pair) {
    v = opts.scale * v / static_cast<double>(max_n);
    sum += v;
  }
  result.score = sum / static_cast<double>(n_docs);
  return result;
}

// ---------------------------------------------------------------------------
// Match
// ---------------------------------------------------------------------------

struct MatchOptions {
  double threshold_px = 16.0;
};

struct PairMatch {
  std::size_t matched = 0;
  std::size_t total = 0;
};

struct MatchResult {
  double score = 0.0;  // percentage
  std::size_t matched = 0;
  std::size_t total = 0;
  std::vector<PairMatch> per_pair;
};

/// Reference tags (from the first reference) are visited in order; each takes
/// the nearest unused predicted tag on the same camera within the threshold.
inline PairMatch match_tags(const std::vector<KeyObjectTag>& pred, const std::vector<KeyObjectTag>& ref,
                            double threshold_px) {
  PairMatch m;
  m.total = ref.size();
  std::vector<bool> used(pred.size(), false);
  for (const auto& r : ref) {
    std::optional<std::size_t> best;
    double best_d = 0.0;
    for (std::size_t k = 0; k < pred.size(); ++k) {
      if (used[k] || pred[k].camera != r.camera) continue;
      const double d = std::hypot(pred[k].x - r.x, pred[k].y - r.y);
      if (d <= threshold_px && (!best || d < best_d)) {
        best = k;
        best_d = d;
      }
    }
    if (best) {
      used[*best] = true;
      ++m.matched;
    }
  }
  return m;
}

inline MatchResult match_score(const std::vector<EvalPair>& pairs, const MatchOptions& opts = {}) {
  MatchResult result;
  for (const auto& p : pairs) {
    const auto pred = parse_key_object_tags(p.prediction);
    const auto ref = p.references.empty() ? std::vector<KeyObjectTag>{}
                                          : parse_key_object_tags(p.references.front());
    const PairMatch m = match_tags(pred, ref, opts.threshold_px);
    result.matched += m.matched;
    result.total += m.total;
    result.per_pair.push_back(m);
  }
  if (result.total == 0) throw NoReferenceTags();
  result.score = 100.0 * static_cast<double>(result.matched) / static_cast<double>(result.total);
  return result;
}

// ---------------------------------------------------------------------------
// Report and final score
// ---------------------------------------------------------------------------

struct MetricReport {
  std::optional<double> accuracy;
  std::optional<double> judge;
  std::optional<double> bleu_1, bleu_2, bleu_3, bleu_4;
  std::optional<double> rouge_l;
  std::optional<double> cider;
  std::optional<double> match;
  std::optional<double> final_score;
};

inline const std::vector<std::string>& metric_names() {
  static const std::vector<std::string> names = {"accuracy", "judge", "bleu_1", "bleu_2", "bleu_3",
                                                 "bleu_4",   "rouge_l", "cider", "match", "language"};
  return names;
}

/// "language" is mean(bleu_4, rouge_l, cider / 10).
inline std::optional<double> metric_value(const MetricReport& r, std::string_view name) {
  if (name == "accuracy") return r.accuracy;
  if (name == "judge") return r.judge;
  if (name == "bleu_1") return r.bleu_1;
  if (name == "bleu_2") return r.bleu_2;
  if (name == "bleu_3") return r.bleu_3;
  if (name == "bleu_4") return r.bleu_4;
  if (name == "rouge_l") return r.rouge_l;
  if (name == "cider") return r.cider;
  if (name == "match") return r.match;
  if (name == "language") {
    if (!r.bleu_4 || !r.rouge_l || !r.cider) return std::nullopt;
    return (*r.bleu_4 + *r.rouge_l + *r.cider / 10.0) / 3.0;
  }
  throw InvalidWeights("unknown metric '" + std::string(name) + "'");
}

inline double default_divisor(std::string_view metric) {
  return metric == "judge" || metric == "match" ? 100.0 : 1.0;
}

struct WeightTerm {
  double weight = 0.0;
  double divisor = 1.0;
};

struct ScoreWeights {
  std::map<std::string, WeightTerm> terms;

  /// Approximate challenge convention; not the official formula.
  static ScoreWeights defaults() {
    ScoreWeights w;
    w.terms["judge"] = {0.4, 100.0};
    w.terms["accuracy"] = {0.2, 1.0};
    w.terms["match"] = {0.2, 100.0};
    w.terms["language"] = {0.2, 1.0};
    return w;
  }

  static ScoreWeights single(const std::string& metric) {
    ScoreWeights w;
    w.terms[metric] = {1.0, default_divisor(metric)};
    return w;
  }

  /// {"metric": weight} or {"metric": {"weight": w, "divisor": d}}.
  static ScoreWeights from_json(const json& j) {
    if (!j.is_object()) throw InvalidWeights("weights must be a JSON object");
    ScoreWeights w;
    for (const auto& [name, v] : j.items()) {
      WeightTerm t{0.0, default_divisor(name)};
      if (v.is_number()) {
        t.weight = v.get<double>();
      } else if (v.is_object() && v.contains("weight") && v["weight"].is_number()) {
        t.weight = v["weight"].get<double>();
        if (v.contains("divisor")) {
          if (!v["divisor"].is_number()) throw InvalidWeights("divisor of '" + name + "' must be a number");
          t.divisor = v["divisor"].get<double>();
        }
      } else {
        throw InvalidWeights("weight of '" + name + "' must be a number or {weight, divisor}");
      }
      w.terms[name] = t;
    }
    w.validate();
    return w;
  }

  void validate() const {
    double sum = 0.0;
    for (const auto& [name, t] : terms) {
      const auto& known = metric_names();
      if (std::find(known.begin(), known.end(), name) == known.end()) {
        throw InvalidWeights("unknown metric '" + name + "'");
      }
      if (!(t.weight >= 0.0)) throw InvalidWeights("weight of '" + name + "' is negative");
      if (!(t.divisor > 0.0)) throw InvalidWeights("divisor of '" + name + "' must be positive");
      sum += t.weight;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw InvalidWeights("weights sum to " + std::to_string(sum) + ", not 1");
  }

  json to_json() const {
    json j = json::object();
    for (const auto& [name, t] : terms) j[name] = {{"weight", t.weight}, {"divisor", t.divisor}};
    return j;
  }
};

/// Σ weight_i · metric_i / divisor_i. Zero-weight terms may be absent.
inline double aggregate_final_score(const MetricReport& report, const ScoreWeights& weights) {
  double final_score = 0.0;
  for (const auto& [name, t] : weights.terms) {
    if (t.weight == 0.0) continue;
    const auto v = metric_value(report, name);
    if (!v) throw WeightMismatch(name);
    final_score += t.weight * (*v / t.divisor);
  }
  return final_score;
}

// ---------------------------------------------------------------------------
// Corpus evaluation
// ---------------------------------------------------------------------------

struct EvalConfig {
  bool accuracy = true;
  bool bleu = true;
  bool rouge_l = true;
  bool cider = true;
  bool match = true;
  bool judge = true;
  BleuOptions bleu_options;
  double rouge_beta = 1.2;
  CiderOptions cider_options;
  MatchOptions match_options;
  JudgeOptions judge_options;
  ScoreWeights weights = ScoreWeights::defaults();
};

struct EvalResult {
  MetricReport report;
  std::vector<std::string> diagnostics;
  json per_pair = json::array();
};

/// Runs every enabled metric. A failing metric is left absent and noted in
/// diagnostics; only when all enabled metrics fail does this throw.
inline EvalResult evaluate_corpus(const std::vector<EvalPair>& pairs, const EvalConfig& cfg,
                                  JudgeClient* judge = nullptr) {
  if (pairs.empty()) throw EmptyCorpus();
  EvalResult out;
  auto& rep = out.report;
  int enabled = 0, failed = 0;
  auto attempt = [&](bool on, const char* name, auto&& fn) {
    if (!on) return;
    ++enabled;
    try {
      fn();
    } catch (const std::exception& e) {
      ++failed;
      out.diagnostics.push_back(std::string(name) + ": " + e.what());
    }
  };

  std::vector<double> rouge_pp(pairs.size(), 0.0);
  std::vector<PairMatch> match_pp;
  std::vector<double> cider_pp;
  std::vector<JudgeOutcome> judge_pp;

  attempt(cfg.accuracy, "accuracy", [&] { rep.accuracy = accuracy_score(pairs); });
  attempt(cfg.bleu, "bleu", [&] {
    const auto b = bleu_scores(pairs, cfg.bleu_options);
    rep.bleu_1 = b.bleu[0];
    rep.bleu_2 = b.bleu[1];
    rep.bleu_3 = b.bleu[2];
    rep.bleu_4 = b.bleu[3];
  });
  attempt(cfg.rouge_l, "rouge_l", [&] {
    double sum = 0.0;
    for (std::size_t i = 0; i < pairs.size(); ++i) sum += rouge_pp[i] = rouge_l_pair(pairs[i], cfg.rouge_beta);
    rep.rouge_l = sum / static_cast<double>(pairs.size());
  });
  attempt(cfg.cider, "cider", [&] {
    auto c = cider_score(pairs, cfg.cider_options);
    if (c.warning) out.diagnostics.push_back("cider: " + *c.warning);
    rep.cider = c.score;
    cider_pp = std::move(c.per_pair);
  });
  attempt(cfg.match, "match", [&] {
    auto m = match_score(pairs, cfg.match_options);
    rep.match = m.score;
    match_pp = std::move(m.per_pair);
  });
  attempt(cfg.judge, "judge", [&] {
    if (judge == nullptr) throw JudgeUnavailable("no judge client configured");
    std::vector<JudgeRequest> reqs;
    for (const auto& p : pairs) reqs.push_back({p.question, p.references.front(), p.prediction});
    auto j = judge_scores(reqs, *judge, cfg.judge_options);
    rep.judge = j.mean;
    judge_pp = std::move(j.per_pair);
  });

  if (enabled > 0 && failed == enabled) {
    std::string msg = "every enabled metric failed";
    for (const auto& d : out.diagnostics) msg += "; " + d;
    throw MetricError(msg);
  }

  try {
    rep.final_score = aggregate_final_score(rep, cfg.weights);
  } catch (const MetricError& e) {
    out.diagnostics.push_back(std::string("final: ") + e.what());
  }

  for (std::size_t i = 0; i < pairs.size(); ++i) {
    json pj{{"question_id", pairs[i].question_id}, {"category", pairs[i].category}};
    if (cfg.accuracy && pairs[i].closed_form) pj["correct"] = closed_form_correct(pairs[i]);
    if (rep.rouge_l) pj["rouge_l"] = rouge_pp[i];
    if (!cider_pp.empty()) pj["cider"] = cider_pp[i];
    if (!match_pp.empty()) pj["match"] = {{"matched", match_pp[i].matched}, {"total", match_pp[i].total}};
    if (!judge_pp.empty()) {
      pj["judge"] = judge_pp[i].score;
      if (judge_pp[i].diagnostic) pj["judge_diagnostic"] = *judge_pp[i].diagnostic;
    }
    out.per_pair.push_back(std::move(pj));
  }
  return out;
}

inline json report_to_json(const MetricReport& r) {
  json j = json::object();
  auto put = [&](const char* k, const std::optional<double>& v) {
    if (v) j[k] = *v;
  };
  put("accuracy", r.accuracy);
  put("judge", r.judge);
  put("bleu_1", r.bleu_1);
  put("bleu_2", r.bleu_2);
  put("bleu_3", r.bleu_3);
  put("bleu_4", r.bleu_4);
  put("rouge_l", r.rouge_l);
  put("cider", r.cider);
  put("match", r.match);
  put("language", metric_value(r, "language"));
  put("final", r.final_score);
  return j;
}

// ---------------------------------------------------------------------------
// Prediction / reference files
// ---------------------------------------------------------------------------

struct ReferenceEntry {
  std::string question_id;
  std::vector<std::string> references;
  std::string category;
  bool closed_form = false;
  std::string question;
};

inline json reference_to_json(const ReferenceEntry& r) {
  json j{{"question_id", r.question_id},
         {"references", r.references},
         {"category", r.category},
         {"closed_form", r.closed_form}};
  if (!r.question.empty()) j["question"] = r.question;
  return j;
}

struct JoinedCorpus {
  std::vector<EvalPair> pairs;
  std::vector<std::string> diagnostics;
};

/// Predictions: {question_id, prediction}. References: {question_id,
/// references: [...], category, closed_form, question?}. Pairs follow the
/// reference file order; ids present on one side only become diagnostics.
inline JoinedCorpus join_prediction_files(const std::filesystem::path& predictions,
                                          const std::filesystem::path& references) {
  std::map<std::string, std::string> preds;
  JoinedCorpus out;
  for_each_jsonl(predictions, [&](const json& doc, std::size_t line) {
    const std::string where = location(predictions, line);
    const std::string id = require_string(doc, "question_id", where);
    if (!preds.emplace(id, require_string(doc, "prediction", where)).second) {
      out.diagnostics.push_back("duplicate prediction for '" + id + "' ignored");
    }
  });
  std::set<std::string> used;
  for_each_jsonl(references, [&](const json& doc, std::size_t line) {
    const std::string where = location(references, line);
    EvalPair p;
    p.question_id = require_string(doc, "question_id", where);
    const json& refs = require(doc, "references", where);
    if (!refs.is_array() || refs.empty()) throw SchemaError(where + "/references", "non-empty array", describe_json(refs));
    for (const auto& r : refs) {
      if (!r.is_string()) throw SchemaError(where + "/references", "strings", describe_json(r));
      p.references.push_back(r.get<std::string>());
    }
    p.category = doc.contains("category") && doc["category"].is_string() ? doc["category"].get<std::string>() : "";
    if (const auto it = doc.find("closed_form"); it != doc.end()) {
      if (!it->is_boolean()) throw SchemaError(where + "/closed_form", "boolean", describe_json(*it));
      p.closed_form = it->get<bool>();
    }
    if (const auto it = doc.find("question"); it != doc.end() && it->is_string()) p.question = it->get<std::string>();
    const auto pred = preds.find(p.question_id);
    if (pred == preds.end()) {
      out.diagnostics.push_back("no prediction for reference '" + p.question_id + "'");
      return;
    }
    if (!used.insert(p.question_id).second) {
      out.diagnostics.push_back("duplicate reference for '" + p.question_id + "' ignored");
      return;
    }
    p.prediction = pred->second;
    out.pairs.push_back(std::move(p));
  });
  for (const auto& [id, text] : preds) {
    if (!used.count(id)) out.diagnostics.push_back("no reference for prediction '" + id + "'");
  }
  return out;
}

}  // namespace drivevqa
