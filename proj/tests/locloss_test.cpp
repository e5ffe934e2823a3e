#include <cmath>
#include <limits>
#include <random>
#include <string>

#include <gtest/gtest.h>

#include "drivevqa/ingest.hpp"
#include "drivevqa/locloss.hpp"

namespace drivevqa {
namespace {

std::vector<unsigned char> bytes_of(const std::string& s) { return {s.begin(), s.end()}; }

struct Fixture {
  LogitsTensor logits;
  std::vector<std::int64_t> labels;
  LocationMask mask;
};

Fixture random_fixture(std::mt19937_64& rng, std::size_t max_t = 8, std::size_t max_v = 32) {
  std::uniform_int_distribution<std::size_t> tdist(1, max_t), vdist(2, max_v);
  std::normal_distribution<double> logit(0.0, 1.0);
  std::bernoulli_distribution coin(0.4);
  const std::size_t t = tdist(rng), v = vdist(rng);
  std::vector<double> data(t * v);
  for (auto& x : data) x = logit(rng);
  Fixture f{LogitsTensor(t, v, std::move(data)), {}, LocationMask::none(t)};
  std::uniform_int_distribution<std::int64_t> label(0, static_cast<std::int64_t>(v) - 1);
  for (std::size_t i = 0; i < t; ++i) {
    f.labels.push_back(label(rng));
    f.mask.selected[i] = coin(rng);
  }
  return f;
}

TEST(LogitsFileTest, ParseHeaderAndValues) {
  const LogitsTensor t(2, 3, {1, 2, 3, 4, 5, 6.5});
  const auto back = parse_logits(bytes_of(encode_logits(t)));
  EXPECT_EQ(back.positions, 2u);
  EXPECT_EQ(back.vocab, 3u);
  EXPECT_EQ(back.values, t.values);
  EXPECT_EQ(back.at(1, 2), 6.5);
}

TEST(LogitsFileTest, LittleEndianLayout) {
  const std::string raw = encode_logits(LogitsTensor(1, 2, {1.0, -2.0}));
  ASSERT_EQ(raw.size(), 20u);
  EXPECT_EQ(raw.substr(0, 4), "LGT1");
  EXPECT_EQ(static_cast<unsigned char>(raw[4]), 1);
  EXPECT_EQ(static_cast<unsigned char>(raw[8]), 2);
  // 1.0f = 0x3f800000
  EXPECT_EQ(static_cast<unsigned char>(raw[15]), 0x3f);
  EXPECT_EQ(static_cast<unsigned char>(raw[14]), 0x80);
}

TEST(LogitsFileTest, Errors) {
  std::string raw = encode_logits(LogitsTensor(2, 3, {1, 2, 3, 4, 5, 6}));
  std::string bad = raw;
  bad[0] = 'X';
  EXPECT_THROW(parse_logits(bytes_of(bad)), BadMagic);
  EXPECT_THROW(parse_logits(bytes_of(raw.substr(0, raw.size() - 4))), TruncatedFile);
  EXPECT_THROW(parse_logits(bytes_of(raw.substr(0, 8))), TruncatedFile);
  EXPECT_THROW(parse_logits(bytes_of("LG")), BadMagic);

  LogitsTensor with_nan(2, 3, {1, 2, 3, 4, 5, 6});
  with_nan.values[4] = std::numeric_limits<double>::quiet_NaN();
  try {
    parse_logits(bytes_of(encode_logits(with_nan)));
    FAIL() << "expected NonFiniteValue";
  } catch (const NonFiniteValue& e) {
    EXPECT_EQ(e.position(), 4u);
  }
  EXPECT_THROW(parse_logits(bytes_of(encode_logits(LogitsTensor(1, 2, {1, 2})).replace(4, 4, std::string("\0\0\0\0", 4)))),
               InvalidShape);
}

TEST(LogitsFileTest, FileRoundTrip) {
  const auto path = std::filesystem::temp_directory_path() / "drivevqa_logits_test.lgt";
  const LogitsTensor t(3, 2, {0.5, -0.25, 8, 9, 10, 11});
  write_logits_file(path, t);
  EXPECT_EQ(read_logits_file(path).values, t.values);
  std::filesystem::remove(path);
  EXPECT_THROW(read_logits_file(path), IoError);
}

TEST(LocationMaskTest, Examples) {
  TokenAlignment a;
  a.label_text = "<c1,1043.2,";
  a.token_ids = {1, 2, 3};
  a.char_offsets = {{0, 4}, {4, 10}, {10, 11}};
  const std::vector<Span> spans = {{4, 10}};
  EXPECT_EQ(build_location_mask(a, spans).indices(), (std::vector<std::size_t>{1}));
  EXPECT_EQ(build_location_mask(a, {}).count(), 0u);

  TokenAlignment straddle;
  straddle.label_text = std::string(20, 'x');
  straddle.token_ids = {1, 2};
  straddle.char_offsets = {{0, 8}, {8, 12}};
  const std::vector<Span> s2 = {{10, 14}};
  EXPECT_EQ(build_location_mask(straddle, s2).indices(), (std::vector<std::size_t>{1}));

  const std::vector<Span> outside = {{5, 30}};
  EXPECT_THROW(build_location_mask(straddle, outside), SpanOutOfRange);
}

TEST(LocationMaskTest, IngestSpansSelectDigits) {
  QARecord r;
  r.turns = {{"Where?", "car <c1,CAM_FRONT,1043.2,82.4>."}};
  const auto sample = build_training_sample(r, CoordinatePolicy::KeepOriginal);
  const std::string& text = sample.conversation[0].answer;
  // One token per character.
  TokenAlignment a;
  a.label_text = text;
  for (std::size_t i = 0; i < text.size(); ++i) {
    a.token_ids.push_back(static_cast<unsigned char>(text[i]));
    a.char_offsets.push_back({i, i + 1});
  }
  std::vector<Span> spans;
  for (const auto& n : sample.numeric_spans) spans.push_back(n.span);
  const auto mask = build_location_mask(a, spans);
  std::string picked;
  for (auto i : mask.indices()) picked.push_back(text[i]);
  EXPECT_EQ(picked, "1043.282.4");
}

TEST(AlignmentJsonTest, RoundTripAndValidation) {
  const json j = json::parse(R"({"label_text":"ab12","token_ids":[5,6],"char_offsets":[[0,2],[2,4]],"numeric_spans":[[2,4]]})");
  const auto f = alignment_from_json(j);
  EXPECT_EQ(alignment_to_json(f).dump(), j.dump());
  EXPECT_THROW(alignment_from_json(json::parse(R"({"label_text":"ab","token_ids":[5],"char_offsets":[[0,3]],"numeric_spans":[]})")),
               InvalidAlignment);
  EXPECT_THROW(alignment_from_json(json::parse(R"({"label_text":"ab","token_ids":[5],"char_offsets":[[0,1],[1,2]],"numeric_spans":[]})")),
               InvalidAlignment);
  EXPECT_THROW(alignment_from_json(json::parse(R"({"label_text":"ab","token_ids":[5]})")), SchemaError);
}

TEST(CrossEntropyTest, Examples) {
  const std::vector<std::int64_t> label0 = {0};
  const LogitsTensor uniform(1, 4, {0, 0, 0, 0});
  for (std::int64_t l = 0; l < 4; ++l) {
    const std::vector<std::int64_t> lab = {l};
    EXPECT_NEAR(masked_cross_entropy(uniform, lab, LocationMask::all(1)).loss, std::log(4.0), 1e-15);
  }
  EXPECT_NEAR(masked_cross_entropy(uniform, label0, LocationMask::all(1)).loss, 1.386294, 5e-7);

  const LogitsTensor peaked(1, 4, {2, 0, 0, 0});
  const auto r = masked_cross_entropy(peaked, label0, LocationMask::all(1));
  EXPECT_NEAR(r.loss, std::log(std::exp(2.0) + 3.0) - 2.0, 1e-15);
  EXPECT_NEAR(r.loss, 0.340753, 5e-7);
  double gsum = 0;
  for (double g : r.grad) gsum += g;
  EXPECT_NEAR(gsum, 0.0, 1e-15);

  const auto empty = masked_cross_entropy(peaked, label0, LocationMask::none(1));
  EXPECT_EQ(empty.loss, 0.0);
  EXPECT_TRUE(empty.warning);
  for (double g : empty.grad) EXPECT_EQ(g, 0.0);
}

TEST(CrossEntropyTest, Errors) {
  const LogitsTensor t(2, 3, {0, 0, 0, 0, 0, 0});
  const std::vector<std::int64_t> bad = {0, 3};
  const std::vector<std::int64_t> neg = {0, -1};
  const std::vector<std::int64_t> short_labels = {0};
  EXPECT_THROW(masked_cross_entropy(t, bad, LocationMask::all(2)), LabelOutOfVocab);
  EXPECT_THROW(masked_cross_entropy(t, neg, LocationMask::all(2)), LabelOutOfVocab);
  EXPECT_THROW(masked_cross_entropy(t, short_labels, LocationMask::all(2)), ShapeMismatch);
  const std::vector<std::int64_t> ok = {0, 1};
  EXPECT_THROW(masked_cross_entropy(t, ok, LocationMask::all(3)), ShapeMismatch);
  EXPECT_THROW(LogitsTensor(1, 1, {0}), InvalidShape);
  EXPECT_THROW(total_loss(t, ok, LocationMask::all(2), -1, 1), std::invalid_argument);
}

TEST(CrossEntropyTest, StableForLargeLogits) {
  const LogitsTensor big(1, 3, {1000, 0, -1000});
  const std::vector<std::int64_t> lab = {1};
  const auto r = masked_cross_entropy(big, lab, LocationMask::all(1));
  EXPECT_NEAR(r.loss, 1000.0, 1e-9);
  EXPECT_TRUE(std::isfinite(r.grad[0]));
}

TEST(TotalLossTest, Examples) {
  std::mt19937_64 rng(1);
  const auto f = random_fixture(rng);
  const auto text_only = total_loss(f.logits, f.labels, f.mask, 1, 0);
  const auto text = masked_cross_entropy(f.logits, f.labels, LocationMask::all(f.logits.positions));
  EXPECT_EQ(text_only.total, text.loss);
  EXPECT_EQ(text_only.grad, text.grad);

  // Two positions, V = 2: per-position losses 0.25 and 1.75, location mask on the first.
  const double a = -std::log(std::exp(0.25) - 1.0);
  const double c = -std::log(std::exp(1.75) - 1.0);
  const LogitsTensor two(2, 2, {a, 0, c, 0});
  const std::vector<std::int64_t> labels = {0, 0};
  LocationMask first = LocationMask::none(2);
  first.selected[0] = true;
  const auto b = total_loss(two, labels, first, 0.5, 2.0);
  EXPECT_NEAR(b.loss_text, 1.0, 1e-12);
  EXPECT_NEAR(b.loss_location, 0.25, 1e-12);
  EXPECT_NEAR(b.total, 1.0, 1e-12);
  EXPECT_EQ(b.total, 0.5 * b.loss_text + 2.0 * b.loss_location);
}

// Property: total(l1, l2) = l1 * total(1, 0) + l2 * total(0, 1).
TEST(TotalLossProperties, Linearity) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> lam(0.0, 3.0);
  for (int i = 0; i < 100; ++i) {
    const auto f = random_fixture(rng);
    const double l1 = lam(rng), l2 = lam(rng);
    const double both = total_loss(f.logits, f.labels, f.mask, l1, l2).total;
    const double t = total_loss(f.logits, f.labels, f.mask, 1, 0).total;
    const double l = total_loss(f.logits, f.labels, f.mask, 0, 1).total;
    EXPECT_NEAR(both, l1 * t + l2 * l, 1e-12 * std::max(1.0, std::abs(both)));
  }
}

TEST(TotalLossProperties, DoublingLambdasDoubles) {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 50; ++i) {
    const auto f = random_fixture(rng);
    const auto a = total_loss(f.logits, f.labels, f.mask, 0.75, 1.25);
    const auto b = total_loss(f.logits, f.labels, f.mask, 1.5, 2.5);
    EXPECT_EQ(b.total, 2 * a.total);
    for (std::size_t k = 0; k < a.grad.size(); ++k) EXPECT_EQ(b.grad[k], 2 * a.grad[k]);
  }
}

TEST(TotalLossProperties, AllMaskedLocationEqualsText) {
  std::mt19937_64 rng(4);
  for (int i = 0; i < 50; ++i) {
    const auto f = random_fixture(rng);
    const auto b = total_loss(f.logits, f.labels, LocationMask::all(f.logits.positions), 1, 1);
    EXPECT_EQ(b.loss_location, b.loss_text);
  }
}

TEST(TotalLossProperties, ShiftInvariance) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> shift(-50, 50);
  for (int i = 0; i < 50; ++i) {
    auto f = random_fixture(rng);
    const auto a = total_loss(f.logits, f.labels, f.mask, 1, 1);
    for (std::size_t t = 0; t < f.logits.positions; ++t) {
      const double c = shift(rng);
      for (std::size_t v = 0; v < f.logits.vocab; ++v) f.logits.at(t, v) += c;
    }
    const auto b = total_loss(f.logits, f.labels, f.mask, 1, 1);
    EXPECT_NEAR(a.total, b.total, 1e-10);
  }
}

TEST(TotalLossProperties, UniformLogitsGiveLnV) {
  for (std::size_t v : {2u, 3u, 17u, 32000u}) {
    const LogitsTensor t(3, v, std::vector<double>(3 * v, 0.25));
    const std::vector<std::int64_t> labels = {0, 1, static_cast<std::int64_t>(v - 1)};
    LocationMask mask = LocationMask::none(3);
    mask.selected[1] = true;
    const auto b = total_loss(t, labels, mask, 1, 0);
    EXPECT_NEAR(b.total, std::log(static_cast<double>(v)), 1e-12);
    EXPECT_NEAR(b.loss_location, std::log(static_cast<double>(v)), 1e-12);
  }
}

TEST(TotalLossProperties, SumReductionScalesByCount) {
  std::mt19937_64 rng(6);
  for (int i = 0; i < 20; ++i) {
    const auto f = random_fixture(rng);
    const auto mean = total_loss(f.logits, f.labels, f.mask, 1, 0, Reduction::Mean);
    const auto sum = total_loss(f.logits, f.labels, f.mask, 1, 0, Reduction::Sum);
    EXPECT_NEAR(sum.total, mean.total * static_cast<double>(f.logits.positions), 1e-12 * sum.total + 1e-15);
  }
}

TEST(GradCheckTest, RandomTensorsWithinTolerance) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> lam(0.0, 2.0);
  for (int i = 0; i < 100; ++i) {
    const auto f = random_fixture(rng);
    GradCheckOptions opts;
    opts.seed = static_cast<std::uint64_t>(i);
    for (Reduction red : {Reduction::Mean, Reduction::Sum}) {
      opts.reduction = red;
      const auto r = finite_difference_check(f.logits, f.labels, f.mask, lam(rng), lam(rng), opts);
      EXPECT_LE(r.max_relative_error, 1e-4) << "tensor " << i;
      EXPECT_EQ(r.samples, std::min<std::size_t>(64, f.logits.values.size()));
    }
  }
}

TEST(GradCheckTest, DetectsWrongGradientAndEdgeCases) {
  std::mt19937_64 rng(8);
  const auto f = random_fixture(rng);
  GradCheckOptions opts;
  opts.sample_count = 0;
  const auto none = finite_difference_check(f.logits, f.labels, f.mask, 1, 1, opts);
  EXPECT_EQ(none.samples, 0u);
  EXPECT_EQ(none.max_relative_error, 0.0);

  opts.sample_count = 1000;
  const auto zero = finite_difference_check(f.logits, f.labels, f.mask, 0, 0, opts);
  EXPECT_EQ(zero.max_relative_error, 0.0);
  EXPECT_EQ(zero.samples, f.logits.values.size());

  opts.epsilon = 0.0;
  EXPECT_THROW(finite_difference_check(f.logits, f.labels, f.mask, 1, 1, opts), std::invalid_argument);
}

TEST(GradCheckTest, SeededSamplingIsDeterministic) {
  std::mt19937_64 rng(9);
  const auto f = random_fixture(rng, 8, 32);
  GradCheckOptions opts;
  opts.sample_count = 5;
  opts.seed = 11;
  const auto a = finite_difference_check(f.logits, f.labels, f.mask, 1, 1, opts);
  const auto b = finite_difference_check(f.logits, f.labels, f.mask, 1, 1, opts);
  EXPECT_EQ(a.max_relative_error, b.max_relative_error);
  EXPECT_EQ(a.worst_index, b.worst_index);
}

}  // namespace
}  // namespace drivevqa
