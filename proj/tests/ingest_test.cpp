#include <map>
#include <random>
#include <set>
#include <string>

#include <gtest/gtest.h>

#include "drivevqa/ingest.hpp"

namespace drivevqa {
namespace {

const std::filesystem::path kData = DRIVEVQA_TEST_DATA;

std::vector<QARecord> load(std::string_view adapter, const std::string& file, const AdapterOptions& opts = {}) {
  std::vector<QARecord> out;
  run_adapter(adapter, kData / file, [&](QARecord r) { out.push_back(std::move(r)); }, opts);
  return out;
}

QARecord qa(std::string scene, std::string frame, std::string q, std::string a,
            TaskCategory cat = TaskCategory::Perception, std::string source = "drivelm") {
  QARecord r;
  r.scene_id = std::move(scene);
  r.frame_id = std::move(frame);
  r.category = cat;
  r.turns = {{std::move(q), std::move(a)}};
  r.tags = derive_tags(r.turns);
  r.source = std::move(source);
  return r;
}

TEST(DriveLMAdapterTest, MiniFixture) {
  const auto records = load("drivelm", "drivelm_mini.json");
  ASSERT_EQ(records.size(), 6u);
  std::set<std::string> frames;
  for (const auto& r : records) {
    EXPECT_EQ(r.turns.size(), 1u);
    EXPECT_EQ(r.source, "drivelm");
    frames.insert(r.frame_id);
  }
  EXPECT_EQ(frames.size(), 3u);

  const auto tagged = std::find_if(records.begin(), records.end(), [](const QARecord& r) {
    return !r.tags.empty() && r.tags[0].id == "c1";
  });
  ASSERT_NE(tagged, records.end());
  EXPECT_EQ(tagged->scene_id, "scene-0001");
  EXPECT_EQ(tagged->frame_id, "frame-a");
  EXPECT_EQ(tagged->tags[0].camera, CameraView::Front);
  EXPECT_DOUBLE_EQ(tagged->tags[0].x, 1043.2);

  const auto summary = summarize_dataset(records);
  EXPECT_EQ(summary.records, 6u);
  EXPECT_EQ(summary.pairs, 6u);
  EXPECT_EQ(summary.frames, 3u);
  EXPECT_EQ(summary.by_category.at("perception"), 3u);
  EXPECT_EQ(summary.by_category.at("prediction"), 1u);
  EXPECT_EQ(summary.by_category.at("planning"), 1u);
  EXPECT_EQ(summary.by_category.at("behavior"), 1u);
  EXPECT_EQ(summary.by_category.at("grounding"), 0u);
}

TEST(DriveLMAdapterTest, MalformedQAStopsAfterValidRecords) {
  std::vector<QARecord> seen;
  try {
    load_drivelm_records(kData / "drivelm_malformed.json", [&](QARecord r) { seen.push_back(std::move(r)); });
    FAIL() << "expected SchemaError";
  } catch (const SchemaError& e) {
    EXPECT_NE(e.location().find("frame-b"), std::string::npos) << e.location();
    EXPECT_NE(e.location().find("/A"), std::string::npos) << e.location();
  }
  EXPECT_EQ(seen.size(), 2u);
}

TEST(DriveLMAdapterTest, MissingFileIsIoError) {
  EXPECT_THROW(load("drivelm", "does_not_exist.json"), IoError);
}

TEST(OtherAdaptersTest, NuscenesQA) {
  const auto records = load("nuscenes-qa", "nuscenes_qa_mini.json");
  ASSERT_EQ(records.size(), 3u);
  EXPECT_EQ(records[0].turns[0].answer, "3");
  EXPECT_EQ(records[0].frame_id, "s1");
  EXPECT_EQ(records[0].scene_id, "sc1");
  EXPECT_EQ(records[1].turns[0].answer, "yes");
  EXPECT_EQ(records[2].source, "nuscenes-qa");
}

TEST(OtherAdaptersTest, NuscenesMQAAndAlias) {
  const auto records = load("nuscenes-mqa", "nuscenes_mqa_mini.json");
  ASSERT_EQ(records.size(), 2u);
  EXPECT_EQ(records[0].turns[0].answer, "There are <target>2</target> cars.");
  EXPECT_TRUE(records[0].tags.empty());
  EXPECT_EQ(load("nuscenes-mq", "nuscenes_mqa_mini.json"), records);
}

TEST(OtherAdaptersTest, OmniDrive) {
  const auto records = load("omnidrive", "omnidrive_mini.json");
  ASSERT_EQ(records.size(), 2u);
  EXPECT_EQ(records[0].category, TaskCategory::Planning);
  ASSERT_EQ(records[0].tags.size(), 1u);
  EXPECT_EQ(records[0].tags[0].camera, CameraView::FrontLeft);
  EXPECT_EQ(records[1].turns[0].question, "Why?");
}

TEST(OtherAdaptersTest, UnknownAdapter) {
  EXPECT_FALSE(is_known_adapter("coco"));
  EXPECT_THROW(load("coco", "drivelm_mini.json"), std::invalid_argument);
}

TEST(RecordJsonTest, RoundTrip) {
  for (const auto& r : load("drivelm", "drivelm_mini.json")) {
    EXPECT_EQ(record_from_json(record_to_json(r), "test"), r);
  }
  QARecord g = qa("s", "f", "q", "<c1,CAM_FRONT,448.0,224.0>");
  g.tags[0].space = CoordSpace::per_view();
  EXPECT_EQ(record_from_json(record_to_json(g), "test"), g);
}

TEST(GroundingTest, CenterAndBoxAnswers) {
  const auto records = load("grounding", "grounding_mini.json");
  ASSERT_EQ(records.size(), 4u);
  EXPECT_EQ(records[0].category, TaskCategory::Grounding);
  EXPECT_EQ(records[0].turns[0].question, "Where is the center of the car car1 in CAM_FRONT?");
  EXPECT_EQ(records[0].turns[0].answer, "<car1,CAM_FRONT,200.0,300.0>");
  EXPECT_EQ(records[1].turns[0].answer, "(100.0,200.0,300.0,400.0)");
  EXPECT_EQ(records[2].turns[0].answer, "<ped2,CAM_BACK,800.0,450.0>");
  ASSERT_EQ(records[2].tags.size(), 1u);
  EXPECT_EQ(records[2].tags[0].x, 800.0);
  EXPECT_EQ(records[2].tags[0].y, 450.0);
  EXPECT_EQ(records[3].source, "nuscenes");
}

TEST(GroundingTest, CustomTemplates) {
  AdapterOptions opts;
  opts.templates = GroundingTemplates::from_json(read_json_file(kData / "grounding_templates.json"));
  const auto records = load("grounding", "grounding_mini.json", opts);
  EXPECT_EQ(records[0].turns[0].question, "Locate the car car1 seen by CAM_FRONT.");
  EXPECT_EQ(records[3].turns[0].question, "Box the pedestrian ped2 seen by CAM_BACK.");
}

TEST(GroundingTest, RecordCountIsTwicePerAnnotation) {
  std::vector<GroundingAnnotation> anns;
  for (int i = 0; i < 5; ++i) {
    GroundingAnnotation a;
    a.frame_id = "f";
    a.object_id = "o" + std::to_string(i);
    a.camera = kAllCameras[static_cast<std::size_t>(i)];
    a.x1 = 10.0 * i;
    a.y1 = 5;
    a.x2 = 10.0 * i + 20;
    a.y2 = 25;
    a.category = "car";
    anns.push_back(a);
  }
  const auto records = extract_grounding_qas(anns);
  ASSERT_EQ(records.size(), 10u);
  for (std::size_t i = 0; i < 5; ++i) {
    ASSERT_EQ(records[2 * i].tags.size(), 1u);
    EXPECT_EQ(records[2 * i].tags[0].x, 10.0 * static_cast<double>(i) + 10);
    EXPECT_EQ(records[2 * i].tags[0].y, 15.0);
  }
}

TEST(GroundingTest, InvalidBoxes) {
  GroundingAnnotation a;
  a.frame_id = "f";
  a.object_id = "o1";
  a.x1 = 10;
  a.y1 = 10;
  a.x2 = 5;
  a.y2 = 20;
  EXPECT_THROW(extract_grounding_qas({a}), InvalidBBox);
  a.x2 = 1700;
  EXPECT_THROW(extract_grounding_qas({a}), InvalidBBox);
  StitchLayout wide;
  wide.set_all_native_dims({1920, 1080});
  EXPECT_NO_THROW(extract_grounding_qas({a}, {}, wide));
}

TEST(CompressTest, MergesFramesInOrder) {
  std::vector<QARecord> in = {qa("s", "f1", "q1", "a1"), qa("s", "f2", "q2", "a2"),
                              qa("s", "f1", "q3", "a3 <c1,CAM_FRONT,1,2>", TaskCategory::Planning)};
  const auto out = compress_frame_qas(in);
  ASSERT_EQ(out.size(), 2u);
  EXPECT_EQ(out[0].frame_id, "f1");
  ASSERT_EQ(out[0].turns.size(), 2u);
  EXPECT_EQ(out[0].turns[0].question, "q1");
  EXPECT_EQ(out[0].turns[1].question, "q3");
  EXPECT_EQ(out[0].category, TaskCategory::Perception);
  ASSERT_EQ(out[0].tags.size(), 1u);
  const std::string text = record_text(out[0]);
  EXPECT_EQ(text.substr(out[0].tags[0].src_span->begin, out[0].tags[0].src_span->size()), "<c1,CAM_FRONT,1,2>");
  EXPECT_EQ(out[1].turns.size(), 1u);
}

TEST(CompressTest, SameFrameIdDifferentScenes) {
  const auto out = compress_frame_qas({qa("s1", "f", "q", "a"), qa("s2", "f", "q", "a")});
  EXPECT_EQ(out.size(), 2u);
}

TEST(CompressTest, Idempotent) {
  const auto in = load("drivelm", "drivelm_mini.json");
  const auto once = compress_frame_qas(in);
  EXPECT_EQ(compress_frame_qas(once), once);
}

// Property: compression conserves pairs and frames, and each frame's turns
// are the input turns for that frame in input order.
TEST(CompressProperties, Conservation) {
  std::mt19937_64 rng(21);
  for (int round = 0; round < 5; ++round) {
    std::uniform_int_distribution<int> count(0, 10000), frame_count(1, 500), turns(1, 3);
    const int n = round == 0 ? 0 : count(rng);
    const int frames = frame_count(rng);
    std::uniform_int_distribution<int> pick(0, frames - 1);
    std::vector<QARecord> in;
    std::map<std::string, std::vector<QATurn>> expected;
    std::size_t pairs = 0;
    for (int i = 0; i < n; ++i) {
      const std::string fid = "f" + std::to_string(pick(rng));
      QARecord r = qa("scene", fid, "q" + std::to_string(i), "a" + std::to_string(i));
      const int extra = turns(rng) - 1;
      for (int k = 0; k < extra; ++k) r.turns.push_back({"q" + std::to_string(i) + "_" + std::to_string(k), "x"});
      pairs += r.turns.size();
      auto& e = expected[fid];
      e.insert(e.end(), r.turns.begin(), r.turns.end());
      in.push_back(std::move(r));
    }
    const auto out = compress_frame_qas(in);
    const auto before = summarize_dataset(in);
    const auto after = summarize_dataset(out);
    EXPECT_EQ(after.pairs, pairs);
    EXPECT_EQ(after.pairs, before.pairs);
    EXPECT_EQ(after.frames, before.frames);
    EXPECT_EQ(out.size(), expected.size());
    for (const auto& r : out) EXPECT_EQ(r.turns, expected[r.frame_id]);
  }
}

TEST(PolicyTest, PerViewRewritesRecord) {
  const StitchLayout layout;
  const QARecord r = qa("s", "f", "Where is it?", "At <c1,CAM_FRONT,800.0,450.0>.");
  const QARecord out = apply_policy(r, CoordinatePolicy::PerViewResize, layout);
  EXPECT_EQ(out.turns[0].answer, "At <c1,CAM_FRONT,448.0,224.0>.");
  ASSERT_EQ(out.tags.size(), 1u);
  EXPECT_EQ(out.tags[0].space, CoordSpace::per_view());
  EXPECT_EQ(apply_policy(r, CoordinatePolicy::KeepOriginal, layout), r);
}

TEST(TrainingSampleTest, SpansAndPrompt) {
  const QARecord r = qa("s", "frame-a", "What is important?", "There is a moving car <c1,CAM_FRONT,1043.2,82.4>.");
  const auto sample = build_training_sample(r, CoordinatePolicy::KeepOriginal);
  EXPECT_EQ(sample.system_prompt, kSystemPrompt);
  EXPECT_EQ(sample.image_ref, "frame-a");
  ASSERT_EQ(sample.numeric_spans.size(), 2u);
  const std::string& ans = sample.conversation[0].answer;
  EXPECT_EQ(ans.substr(sample.numeric_spans[0].span.begin, sample.numeric_spans[0].span.size()), "1043.2");
  EXPECT_EQ(ans.substr(sample.numeric_spans[1].span.begin, sample.numeric_spans[1].span.size()), "82.4");
  EXPECT_EQ(sample.numeric_spans[0].axis, Axis::X);
  EXPECT_EQ(sample.numeric_spans[1].tag_id, "c1");

  const json j = sample_to_json(sample);
  EXPECT_EQ(j["system_prompt"].get<std::string>(), kSystemPrompt);
  EXPECT_EQ(j["numeric_spans"][0]["span"][0].get<std::size_t>(), sample.numeric_spans[0].span.begin);
}

TEST(TrainingSampleTest, SpansFollowPolicy) {
  const QARecord r = qa("s", "f", "q", "<c1,CAM_FRONT,800.0,450.0>");
  const auto sample = build_training_sample(r, CoordinatePolicy::ConcatenatedResize);
  const std::string& ans = sample.conversation[0].answer;
  EXPECT_EQ(ans, "<c1,CAM_FRONT,1344.0,224.0>");
  EXPECT_EQ(ans.substr(sample.numeric_spans[0].span.begin, sample.numeric_spans[0].span.size()), "1344.0");
}

TEST(SystemPromptTest, Verbatim) {
  EXPECT_EQ(std::string(kSystemPrompt),
            "You are an Autonomous Driving AI assistant. You receive an image that consists of six surrounding "
            "camera views. The layout is as follows: The first row contains three images: FRONT LEFT, FRONT, "
            "FRONT RIGHT. The second row contains three images: BACK LEFT, BACK, BACK RIGHT. Your task is to "
            "analyze these images and provide insights or actions based on the visual data.");
}

TEST(SamplingTest, RatesAndDeterminism) {
  std::vector<QARecord> in;
  for (int i = 0; i < 2000; ++i) in.push_back(qa("s", "f" + std::to_string(i), "q", "a"));
  SamplingConfig all;
  SamplingConfig none;
  none.rates[TaskCategory::Perception] = 0.0;
  SamplingConfig half;
  half.rates[TaskCategory::Perception] = 0.5;
  half.seed = 42;
  std::size_t kept = 0;
  for (const auto& r : in) {
    EXPECT_TRUE(all.keep(r));
    EXPECT_FALSE(none.keep(r));
    EXPECT_EQ(half.keep(r), half.keep(r));
    kept += half.keep(r) ? 1 : 0;
  }
  EXPECT_GT(kept, 850u);
  EXPECT_LT(kept, 1150u);
  // Other categories are untouched.
  EXPECT_TRUE(none.keep(qa("s", "f", "q", "a", TaskCategory::Planning)));
}

TEST(SummaryTest, JsonShape) {
  const auto j = summary_to_json(summarize_dataset(load("omnidrive", "omnidrive_mini.json")));
  EXPECT_EQ(j["records"], 2);
  EXPECT_EQ(j["pairs"], 2);
  EXPECT_EQ(j["frames"], 1);
  EXPECT_EQ(j["by_source"]["omnidrive"], 2);
  EXPECT_EQ(j["by_category"]["planning"], 2);
}

}  // namespace
}  // namespace drivevqa
