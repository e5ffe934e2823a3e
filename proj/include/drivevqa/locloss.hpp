#pragma once

// Combined text + location cross-entropy over a logits tensor:
//
//   total = lambda1 * CE(all positions) + lambda2 * CE(coordinate positions)
//
// with the analytic gradient with respect to the logits and a central
// finite-difference checker. Storage may be f32; all arithmetic is f64.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "drivevqa/core.hpp"
#include "drivevqa/jsonl.hpp"

namespace drivevqa {

// ---------------------------------------------------------------------------
// LGT1 logits files
// ---------------------------------------------------------------------------

class LogitsFormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class BadMagic : public LogitsFormatError {
 public:
  BadMagic() : LogitsFormatError("logits file does not start with magic \"LGT1\"") {}
};
class TruncatedFile : public LogitsFormatError {
 public:
  TruncatedFile(std::size_t expected, std::size_t found)
      : LogitsFormatError("logits file truncated: expected " + std::to_string(expected) + " bytes, found " +
                          std::to_string(found)) {}
};
class NonFiniteValue : public LogitsFormatError {
 public:
  explicit NonFiniteValue(std::size_t position)
      : LogitsFormatError("non-finite logit at flat index " + std::to_string(position)), position_(position) {}
  std::size_t position() const noexcept { return position_; }

 private:
  std::size_t position_;
};
class InvalidShape : public LogitsFormatError {
 public:
  using LogitsFormatError::LogitsFormatError;
};

/// Row-major T x V.
struct LogitsTensor {
  std::size_t positions = 0;
  std::size_t vocab = 0;
  std::vector<double> values;

  LogitsTensor() = default;
  LogitsTensor(std::size_t t, std::size_t v, std::vector<double> data)
      : positions(t), vocab(v), values(std::move(data)) {
    if (t < 1 || v < 2) throw InvalidShape("logits need T >= 1 and V >= 2");
    if (values.size() != t * v) throw InvalidShape("logits data size does not match T x V");
  }

  std::span<const double> row(std::size_t t) const { return {values.data() + t * vocab, vocab}; }
  double& at(std::size_t t, std::size_t v) { return values[t * vocab + v]; }
  double at(std::size_t t, std::size_t v) const { return values[t * vocab + v]; }
};

inline constexpr std::array<char, 4> kLogitsMagic = {'L', 'G', 'T', '1'};

inline LogitsTensor parse_logits(std::span<const unsigned char> bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kLogitsMagic.data(), 4) != 0) throw BadMagic();
  if (bytes.size() < 12) throw TruncatedFile(12, bytes.size());
  auto u32 = [&](std::size_t off) {
    return static_cast<std::uint32_t>(bytes[off]) | static_cast<std::uint32_t>(bytes[off + 1]) << 8 |
           static_cast<std::uint32_t>(bytes[off + 2]) << 16 | static_cast<std::uint32_t>(bytes[off + 3]) << 24;
  };
  const std::size_t t = u32(4);
  const std::size_t v = u32(8);
  const std::size_t expected = 12 + 4 * t * v;
  if (bytes.size() < expected) throw TruncatedFile(expected, bytes.size());
  std::vector<double> values(t * v);
  for (std::size_t i = 0; i < values.size(); ++i) {
    const float f = std::bit_cast<float>(u32(12 + 4 * i));
    if (!std::isfinite(f)) throw NonFiniteValue(i);
    values[i] = static_cast<double>(f);
  }
  return LogitsTensor(t, v, std::move(values));
}

inline LogitsTensor read_logits_file(const std::filesystem::path& path) {
  const std::string raw = read_text_file(path);
  return parse_logits({reinterpret_cast<const unsigned char*>(raw.data()), raw.size()});
}

/// Values are narrowed to f32 on write.
inline std::string encode_logits(const LogitsTensor& logits) {
  std::string out(kLogitsMagic.data(), 4);
  auto put = [&out](std::uint32_t w) {
    for (int k = 0; k < 4; ++k) out.push_back(static_cast<char>((w >> (8 * k)) & 0xffu));
  };
  put(static_cast<std::uint32_t>(logits.positions));
  put(static_cast<std::uint32_t>(logits.vocab));
  for (double d : logits.values) put(std::bit_cast<std::uint32_t>(static_cast<float>(d)));
  return out;
}

inline void write_logits_file(const std::filesystem::path& path, const LogitsTensor& logits) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  const std::string bytes = encode_logits(logits);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

// ---------------------------------------------------------------------------
// Token alignment and the location mask
// ---------------------------------------------------------------------------

class InvalidAlignment : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};
class SpanOutOfRange : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Offsets are byte ranges into label_text.
struct TokenAlignment {
  std::vector<std::int64_t> token_ids;
  std::vector<Span> char_offsets;
  std::string label_text;

  void validate() const {
    if (token_ids.size() != char_offsets.size()) {
      throw InvalidAlignment("token_ids and char_offsets differ in length");
    }
    std::size_t last_end = 0;
    for (std::size_t i = 0; i < char_offsets.size(); ++i) {
      const Span& s = char_offsets[i];
      if (s.begin > s.end || s.end > label_text.size()) {
        throw InvalidAlignment("token " + std::to_string(i) + " offset outside label text");
      }
      if (s.begin < last_end) throw InvalidAlignment("token " + std::to_string(i) + " overlaps its predecessor");
      last_end = s.end;
    }
  }
};

struct LocationMask {
  std::vector<bool> selected;

  static LocationMask all(std::size_t positions) { return {std::vector<bool>(positions, true)}; }
  static LocationMask none(std::size_t positions) { return {std::vector<bool>(positions, false)}; }

  std::size_t size() const noexcept { return selected.size(); }
  std::size_t count() const noexcept {
    return static_cast<std::size_t>(std::count(selected.begin(), selected.end(), true));
  }
  std::vector<std::size_t> indices() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < selected.size(); ++i) {
      if (selected[i]) out.push_back(i);
    }
    return out;
  }
};

/// A token is masked when its offset range overlaps any numeric span.
inline LocationMask build_location_mask(const TokenAlignment& align, std::span<const Span> numeric_spans) {
  for (const Span& s : numeric_spans) {
    if (s.begin > s.end || s.end > align.label_text.size()) {
      throw SpanOutOfRange("numeric span [" + std::to_string(s.begin) + ", " + std::to_string(s.end) +
                           ") outside label text of length " + std::to_string(align.label_text.size()));
    }
  }
  LocationMask mask = LocationMask::none(align.char_offsets.size());
  for (std::size_t i = 0; i < align.char_offsets.size(); ++i) {
    const Span& tok = align.char_offsets[i];
    mask.selected[i] = std::any_of(numeric_spans.begin(), numeric_spans.end(),
                                   [&](const Span& s) { return tok.overlaps(s); });
  }
  return mask;
}

/// {label_text, token_ids: [...], char_offsets: [[s, e], ...], numeric_spans: [[s, e], ...]}.
struct AlignmentFile {
  TokenAlignment alignment;
  std::vector<Span> numeric_spans;
};

inline AlignmentFile alignment_from_json(const json& j, const std::string& where = "alignment") {
  auto spans = [&](const char* key) {
    const json& arr = require(j, key, where);
    if (!arr.is_array()) throw SchemaError(where + "/" + key, "array of [s, e]", describe_json(arr));
    std::vector<Span> out;
    for (const auto& s : arr) {
      if (!s.is_array() || s.size() != 2 || !s[0].is_number_unsigned() || !s[1].is_number_unsigned()) {
        throw SchemaError(where + "/" + key, "[s, e] with non-negative integers", describe_json(s));
      }
      out.push_back({s[0].get<std::size_t>(), s[1].get<std::size_t>()});
    }
    return out;
  };
  AlignmentFile f;
  f.alignment.label_text = require_string(j, "label_text", where);
  const json& ids = require(j, "token_ids", where);
  if (!ids.is_array()) throw SchemaError(where + "/token_ids", "array of integers", describe_json(ids));
  for (const auto& id : ids) {
    if (!id.is_number_integer()) throw SchemaError(where + "/token_ids", "integers", describe_json(id));
    f.alignment.token_ids.push_back(id.get<std::int64_t>());
  }
  f.alignment.char_offsets = spans("char_offsets");
  f.numeric_spans = spans("numeric_spans");
  f.alignment.validate();
  return f;
}

inline json alignment_to_json(const AlignmentFile& f) {
  auto spans = [](const std::vector<Span>& v) {
    json arr = json::array();
    for (const auto& s : v) arr.push_back(json::array({s.begin, s.end}));
    return arr;
  };
  return json{{"label_text", f.alignment.label_text},
              {"token_ids", f.alignment.token_ids},
              {"char_offsets", spans(f.alignment.char_offsets)},
              {"numeric_spans", spans(f.numeric_spans)}};
}

// ---------------------------------------------------------------------------
// Cross-entropy
// ---------------------------------------------------------------------------

class LabelOutOfVocab : public std::out_of_range {
 public:
  LabelOutOfVocab(std::size_t position, std::int64_t label)
      : std::out_of_range("label " + std::to_string(label) + " at position " + std::to_string(position) +
                          " is outside the vocabulary") {}
};
class ShapeMismatch : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class Reduction : std::uint8_t { Mean, Sum };

struct CrossEntropyResult {
  double loss = 0.0;
  std::vector<double> grad;  // T x V
  std::size_t selected = 0;
  std::optional<std::string> warning;
};

namespace detail {

inline void check_inputs(const LogitsTensor& logits, std::span<const std::int64_t> labels, const LocationMask& mask) {
  if (labels.size() != logits.positions) {
    throw ShapeMismatch("expected " + std::to_string(logits.positions) + " labels, got " +
                        std::to_string(labels.size()));
  }
  if (mask.size() != logits.positions) {
    throw ShapeMismatch("mask length " + std::to_string(mask.size()) + " does not match T=" +
                        std::to_string(logits.positions));
  }
  for (std::size_t t = 0; t < labels.size(); ++t) {
    if (labels[t] < 0 || static_cast<std::size_t>(labels[t]) >= logits.vocab) throw LabelOutOfVocab(t, labels[t]);
  }
}

inline double log_sum_exp(std::span<const double> row) {
  const double m = *std::max_element(row.begin(), row.end());
  double s = 0.0;
  for (double x : row) s += std::exp(x - m);
  return m + std::log(s);
}

// Loss only; used by the finite-difference checker.
inline double cross_entropy_value(const LogitsTensor& logits, std::span<const std::int64_t> labels,
                                  const LocationMask& mask, Reduction reduction) {
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t t = 0; t < logits.positions; ++t) {
    if (!mask.selected[t]) continue;
    const auto row = logits.row(t);
    sum += log_sum_exp(row) - row[static_cast<std::size_t>(labels[t])];
    ++n;
  }
  if (n == 0) return 0.0;
  return reduction == Reduction::Mean ? sum / static_cast<double>(n) : sum;
}

}  // namespace detail

/// −log softmax(logits_t)[label_t] reduced over the selected positions, with
/// gradient (softmax − onehot) / count at selected rows and zero elsewhere.
/// An empty selection gives loss 0, a zero gradient and a warning.
inline CrossEntropyResult masked_cross_entropy(const LogitsTensor& logits, std::span<const std::int64_t> labels,
                                               const LocationMask& mask, Reduction reduction = Reduction::Mean) {
  detail::check_inputs(logits, labels, mask);
  CrossEntropyResult r;
  r.grad.assign(logits.values.size(), 0.0);
  r.selected = mask.count();
  if (r.selected == 0) {
    r.warning = "empty selection: loss is 0";
    return r;
  }
  const double scale = reduction == Reduction::Mean ? 1.0 / static_cast<double>(r.selected) : 1.0;
  double sum = 0.0;
  for (std::size_t t = 0; t < logits.positions; ++t) {
    if (!mask.selected[t]) continue;
    const auto row = logits.row(t);
    const double lse = detail::log_sum_exp(row);
    const auto label = static_cast<std::size_t>(labels[t]);
    sum += lse - row[label];
    double* g = r.grad.data() + t * logits.vocab;
    for (std::size_t v = 0; v < logits.vocab; ++v) g[v] = std::exp(row[v] - lse) * scale;
    g[label] -= scale;
  }
  r.loss = reduction == Reduction::Mean ? sum / static_cast<double>(r.selected) : sum;
  return r;
}

struct LossBreakdown {
  double loss_text = 0.0;
  double loss_location = 0.0;
  double lambda1 = 1.0;
  double lambda2 = 1.0;
  double total = 0.0;
  std::vector<double> grad;  // ∂total/∂logits, T x V
  std::size_t text_positions = 0;
  std::size_t location_positions = 0;
  std::vector<std::string> warnings;
};

inline void check_lambdas(double lambda1, double lambda2) {
  if (!(lambda1 >= 0.0) || !(lambda2 >= 0.0)) throw std::invalid_argument("lambda weights must be non-negative");
}

/// The text term covers every position, the location term only the masked
/// ones, so coordinate tokens contribute to both.
inline LossBreakdown total_loss(const LogitsTensor& logits, std::span<const std::int64_t> labels,
                                const LocationMask& mask, double lambda1, double lambda2,
                                Reduction reduction = Reduction::Mean) {
  check_lambdas(lambda1, lambda2);
  const auto text = masked_cross_entropy(logits, labels, LocationMask::all(logits.positions), reduction);
  const auto loc = masked_cross_entropy(logits, labels, mask, reduction);
  LossBreakdown b;
  b.loss_text = text.loss;
  b.loss_location = loc.loss;
  b.lambda1 = lambda1;
  b.lambda2 = lambda2;
  b.total = lambda1 * text.loss + lambda2 * loc.loss;
  b.grad.resize(text.grad.size());
  for (std::size_t i = 0; i < b.grad.size(); ++i) b.grad[i] = lambda1 * text.grad[i] + lambda2 * loc.grad[i];
  b.text_positions = text.selected;
  b.location_positions = loc.selected;
  if (loc.warning) b.warnings.push_back("location loss: " + *loc.warning);
  return b;
}

struct GradCheckOptions {
  double epsilon = 1e-5;
  std::size_t sample_count = 64;
  std::uint64_t seed = 0;
  Reduction reduction = Reduction::Mean;
};

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t samples = 0;
  std::size_t worst_index = 0;
};

/// Central differences at `sample_count` entries drawn without replacement by
/// the seed (all entries when the tensor is smaller). Relative error uses
/// max(|analytic|, 1e-12) as denominator.
inline GradCheckResult finite_difference_check(const LogitsTensor& logits, std::span<const std::int64_t> labels,
                                               const LocationMask& mask, double lambda1, double lambda2,
                                               const GradCheckOptions& opts = {}) {
  if (!(opts.epsilon > 0.0)) throw std::invalid_argument("epsilon must be positive");
  const LossBreakdown base = total_loss(logits, labels, mask, lambda1, lambda2, opts.reduction);
  const std::size_t n = logits.values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t k = std::min(opts.sample_count, n);
  std::mt19937_64 rng(opts.seed);
  for (std::size_t i = 0; i < k; ++i) std::swap(order[i], order[i + rng() % (n - i)]);

  const LocationMask all = LocationMask::all(logits.positions);
  auto objective = [&](const LogitsTensor& x) {
    return lambda1 * detail::cross_entropy_value(x, labels, all, opts.reduction) +
           lambda2 * detail::cross_entropy_value(x, labels, mask, opts.reduction);
  };

  GradCheckResult result;
  result.samples = k;
  LogitsTensor probe = logits;
  for (std::size_t s = 0; s < k; ++s) {
    const std::size_t idx = order[s];
    const double orig = probe.values[idx];
    probe.values[idx] = orig + opts.epsilon;
    const double up = objective(probe);
    probe.values[idx] = orig - opts.epsilon;
    const double down = objective(probe);
    probe.values[idx] = orig;
    const double numeric = (up - down) / (2.0 * opts.epsilon);
    const double analytic = base.grad[idx];
    const double rel = std::abs(numeric - analytic) / std::max(std::abs(analytic), 1e-12);
    if (rel > result.max_relative_error || s == 0) {
      result.max_relative_error = std::max(result.max_relative_error, rel);
      result.worst_index = idx;
    }
  }
  return result;
}

inline json breakdown_to_json(const LossBreakdown& b, bool include_grad = false) {
  json j{{"loss_text", b.loss_text},
         {"loss_location", b.loss_location},
         {"lambda1", b.lambda1},
         {"lambda2", b.lambda2},
         {"total", b.total},
         {"text_positions", b.text_positions},
         {"location_positions", b.location_positions},
         {"warnings", b.warnings}};
  if (include_grad) j["grad"] = b.grad;
  return j;
}

}  // namespace drivevqa
