#pragma once

// Dataset normalization into QARecord streams, per-frame QA compression,
// grounding QA synthesis and training-sample assembly.
//
// Every adapter streams records into a sink in document order. When a node
// does not match the adapter's schema a SchemaError is thrown; records already
// handed to the sink stay valid.

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "drivevqa/core.hpp"
#include "drivevqa/jsonl.hpp"
#include "drivevqa/stitcher.hpp"

namespace drivevqa {

inline constexpr int kRecordSchemaVersion = 1;

inline constexpr std::string_view kSystemPrompt =
    "You are an Autonomous Driving AI assistant. You receive an image that consists of six "
    "surrounding camera views. The layout is as follows: The first row contains three images: "
    "FRONT LEFT, FRONT, FRONT RIGHT. The second row contains three images: BACK LEFT, BACK, "
    "BACK RIGHT. Your task is to analyze these images and provide insights or actions based on "
    "the visual data.";

using RecordSink = std::function<void(QARecord)>;

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

inline json space_to_json(const CoordSpace& s) {
  return json{{"kind", to_string(s.kind)}, {"width", s.width}, {"height", s.height}};
}

inline CoordSpace space_from_json(const json& j, const std::string& where) {
  const std::string kind = require_string(j, "kind", where);
  if (kind == "per-view") return CoordSpace::per_view();
  if (kind == "concatenated") return CoordSpace::concatenated();
  if (kind == "original") {
    const json& w = require(j, "width", where);
    const json& h = require(j, "height", where);
    if (!w.is_number() || !h.is_number()) throw SchemaError(where, "numeric width/height", describe_json(j));
    return CoordSpace::original(w.get<double>(), h.get<double>());
  }
  throw SchemaError(where + "/kind", "original|per-view|concatenated", kind);
}

inline json tag_to_json(const KeyObjectTag& t) {
  json j{{"id", t.id},
         {"camera", camera_token(t.camera)},
         {"x", t.x},
         {"y", t.y},
         {"space", space_to_json(t.space)}};
  if (t.src_span) j["src_span"] = json::array({t.src_span->begin, t.src_span->end});
  return j;
}

inline json record_to_json(const QARecord& r) {
  json turns = json::array();
  for (const auto& t : r.turns) turns.push_back({{"question", t.question}, {"answer", t.answer}});
  json tags = json::array();
  for (const auto& t : r.tags) tags.push_back(tag_to_json(t));
  return json{{"schema_version", kRecordSchemaVersion},
              {"scene_id", r.scene_id},
              {"frame_id", r.frame_id},
              {"category", to_string(r.category)},
              {"source", r.source},
              {"turns", std::move(turns)},
              {"tags", std::move(tags)}};
}

inline QARecord record_from_json(const json& j, const std::string& where) {
  QARecord r;
  const json& version = require(j, "schema_version", where);
  if (version != kRecordSchemaVersion) {
    throw SchemaError(where + "/schema_version", std::to_string(kRecordSchemaVersion), describe_json(version));
  }
  r.scene_id = require_string(j, "scene_id", where);
  r.frame_id = require_string(j, "frame_id", where);
  r.source = require_string(j, "source", where);
  const std::string cat = require_string(j, "category", where);
  const auto parsed = parse_category(cat);
  if (!parsed) throw SchemaError(where + "/category", "a task category", cat);
  r.category = *parsed;
  const json& turns = require(j, "turns", where);
  if (!turns.is_array() || turns.empty()) throw SchemaError(where + "/turns", "non-empty array", describe_json(turns));
  for (std::size_t i = 0; i < turns.size(); ++i) {
    const std::string at = where + "/turns/" + std::to_string(i);
    r.turns.push_back({require_string(turns[i], "question", at), require_string(turns[i], "answer", at)});
  }
  const json& tags = require(j, "tags", where);
  if (!tags.is_array()) throw SchemaError(where + "/tags", "array", describe_json(tags));
  for (std::size_t i = 0; i < tags.size(); ++i) {
    const std::string at = where + "/tags/" + std::to_string(i);
    const json& tj = tags[i];
    KeyObjectTag t;
    t.id = require_string(tj, "id", at);
    t.camera = normalize_camera_name(require_string(tj, "camera", at));
    const json& x = require(tj, "x", at);
    const json& y = require(tj, "y", at);
    if (!x.is_number() || !y.is_number()) throw SchemaError(at, "numeric x/y", describe_json(tj));
    t.x = x.get<double>();
    t.y = y.get<double>();
    t.space = space_from_json(require(tj, "space", at), at + "/space");
    if (const auto it = tj.find("src_span"); it != tj.end()) {
      if (!it->is_array() || it->size() != 2) throw SchemaError(at + "/src_span", "[begin, end]", describe_json(*it));
      t.src_span = Span{(*it)[0].get<std::size_t>(), (*it)[1].get<std::size_t>()};
    }
    r.tags.push_back(std::move(t));
  }
  return r;
}

inline std::vector<QARecord> read_records_jsonl(const std::filesystem::path& path) {
  std::vector<QARecord> out;
  for_each_jsonl(path, [&](const json& doc, std::size_t line) {
    out.push_back(record_from_json(doc, location(path, line)));
  });
  return out;
}

// ---------------------------------------------------------------------------
// Adapters
// ---------------------------------------------------------------------------

namespace detail {

inline QARecord make_record(std::string scene, std::string frame, TaskCategory cat,
                            std::string question, std::string answer, std::string source) {
  QARecord r;
  r.scene_id = std::move(scene);
  r.frame_id = std::move(frame);
  r.category = cat;
  r.turns.push_back({std::move(question), std::move(answer)});
  r.tags = derive_tags(r.turns);
  r.source = std::move(source);
  return r;
}

inline const json& require_array_or_wrapped(const json& doc, const char* wrapper,
                                            const std::string& where) {
  if (doc.is_array()) return doc;
  if (doc.is_object()) {
    const auto it = doc.find(wrapper);
    if (it != doc.end() && it->is_array()) return *it;
  }
  throw SchemaError(where, std::string("array or {\"") + wrapper + "\": [...]}", describe_json(doc));
}

inline std::string optional_string(const json& obj, const char* key, std::string fallback = {}) {
  const auto it = obj.find(key);
  return it != obj.end() && it->is_string() ? it->get<std::string>() : fallback;
}

}  // namespace detail

/// DriveLM: {scene_token: {"key_frames": {frame_token: {"QA": {"perception": [{"Q", "A"}],
/// "prediction": [...], "planning": [...], "behavior": [...]}}}}}. Extra keys are ignored.
inline void load_drivelm_records(const std::filesystem::path& path, const RecordSink& sink) {
  const json doc = read_json_file(path);
  const std::string root = path.filename().string();
  if (!doc.is_object()) throw SchemaError(root, "object of scenes", describe_json(doc));
  for (const auto& [scene_id, scene] : doc.items()) {
    const std::string scene_at = root + "/" + scene_id;
    const json& frames = require(scene, "key_frames", scene_at);
    if (!frames.is_object()) throw SchemaError(scene_at + "/key_frames", "object", describe_json(frames));
    for (const auto& [frame_id, frame] : frames.items()) {
      const std::string frame_at = scene_at + "/key_frames/" + frame_id;
      const json& qa = require(frame, "QA", frame_at);
      if (!qa.is_object()) throw SchemaError(frame_at + "/QA", "object", describe_json(qa));
      for (const auto& [section, items] : qa.items()) {
        const std::string section_at = frame_at + "/QA/" + section;
        const auto cat = parse_category(section);
        if (!cat || *cat == TaskCategory::Grounding) {
          throw SchemaError(section_at, "perception|prediction|planning|behavior", section);
        }
        if (!items.is_array()) throw SchemaError(section_at, "array", describe_json(items));
        for (std::size_t i = 0; i < items.size(); ++i) {
          const std::string at = section_at + "/" + std::to_string(i);
          sink(detail::make_record(scene_id, frame_id, *cat, require_string(items[i], "Q", at),
                                   require_string(items[i], "A", at), "drivelm"));
        }
      }
    }
  }
}

/// Nuscenes-QA: {"questions": [{"sample_token", "scene_token"?, "question", "answer"}]}.
inline void load_nuscenes_qa_records(const std::filesystem::path& path, const RecordSink& sink) {
  const json doc = read_json_file(path);
  const std::string root = path.filename().string();
  const json& items = detail::require_array_or_wrapped(doc, "questions", root);
  for (std::size_t i = 0; i < items.size(); ++i) {
    const std::string at = root + "/questions/" + std::to_string(i);
    const json& it = items[i];
    if (!it.is_object()) throw SchemaError(at, "object", describe_json(it));
    const json& answer = require(it, "answer", at);
    // Counting questions carry integer answers.
    std::string ans = answer.is_string() ? answer.get<std::string>()
                      : answer.is_number() ? answer.dump()
                      : answer.is_boolean() ? std::string(answer.get<bool>() ? "yes" : "no")
                      : throw SchemaError(at + "/answer", "string or number", describe_json(answer));
    sink(detail::make_record(detail::optional_string(it, "scene_token"),
                             require_string(it, "sample_token", at), TaskCategory::Perception,
                             require_string(it, "question", at), std::move(ans), "nuscenes-qa"));
  }
}

/// Nuscenes-MQA (assumed flattened export): [{"sample_token", "scene_token"?, "question",
/// "answer"}] or {"data": [...]}.
inline void load_nuscenes_mqa_records(const std::filesystem::path& path, const RecordSink& sink) {
  const json doc = read_json_file(path);
  const std::string root = path.filename().string();
  const json& items = detail::require_array_or_wrapped(doc, "data", root);
  for (std::size_t i = 0; i < items.size(); ++i) {
    const std::string at = root + "/" + std::to_string(i);
    const json& it = items[i];
    if (!it.is_object()) throw SchemaError(at, "object", describe_json(it));
    sink(detail::make_record(detail::optional_string(it, "scene_token"),
                             require_string(it, "sample_token", at), TaskCategory::Perception,
                             require_string(it, "question", at), require_string(it, "answer", at),
                             "nuscenes-mqa"));
  }
}

/// OmniDrive (conversation export): [{"scene_token"?, "sample_token", "category"?,
/// "conversations": [{"from": "human", "value"}, {"from": "gpt", "value"}, ...]}].
/// Every human/gpt pair becomes one record.
inline void load_omnidrive_records(const std::filesystem::path& path, const RecordSink& sink) {
  const json doc = read_json_file(path);
  const std::string root = path.filename().string();
  const json& items = detail::require_array_or_wrapped(doc, "data", root);
  for (std::size_t i = 0; i < items.size(); ++i) {
    const std::string at = root + "/" + std::to_string(i);
    const json& it = items[i];
    if (!it.is_object()) throw SchemaError(at, "object", describe_json(it));
    const std::string frame = require_string(it, "sample_token", at);
    const std::string scene = detail::optional_string(it, "scene_token");
    TaskCategory cat = TaskCategory::Perception;
    if (const auto c = it.find("category"); c != it.end()) {
      const auto parsed = c->is_string() ? parse_category(c->get<std::string>()) : std::nullopt;
      if (!parsed) throw SchemaError(at + "/category", "a task category", describe_json(*c));
      cat = *parsed;
    }
    const json& conv = require(it, "conversations", at);
    if (!conv.is_array() || conv.size() % 2 != 0) {
      throw SchemaError(at + "/conversations", "array of human/gpt pairs", describe_json(conv));
    }
    for (std::size_t k = 0; k < conv.size(); k += 2) {
      const std::string qa_at = at + "/conversations/" + std::to_string(k);
      if (require_string(conv[k], "from", qa_at) != "human" ||
          require_string(conv[k + 1], "from", qa_at) != "gpt") {
        throw SchemaError(qa_at, "human turn followed by gpt turn", describe_json(conv[k]));
      }
      sink(detail::make_record(scene, frame, cat, require_string(conv[k], "value", qa_at),
                               require_string(conv[k + 1], "value", qa_at), "omnidrive"));
    }
  }
}

// ---------------------------------------------------------------------------
// Grounding
// ---------------------------------------------------------------------------

struct GroundingAnnotation {
  std::string frame_id;
  CameraView camera = CameraView::Front;
  std::string object_id;
  double x1 = 0, y1 = 0, x2 = 0, y2 = 0;  // Original space pixels
  std::string category;
  std::string scene_id;
};

class InvalidBBox : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Question templates keyed by kind ("center", "bbox"); placeholders
/// {id}, {camera} and {category} are substituted.
struct GroundingTemplates {
  std::string center = "Where is the center of the {category} {id} in {camera}?";
  std::string bbox = "What is the 2D bounding box of the {category} {id} in {camera}?";

  static GroundingTemplates from_json(const json& j) {
    GroundingTemplates t;
    if (!j.is_object()) throw SchemaError("templates", "object", describe_json(j));
    for (const auto& [key, value] : j.items()) {
      if (!value.is_string()) throw SchemaError("templates/" + key, "string", describe_json(value));
      if (key == "center") t.center = value.get<std::string>();
      else if (key == "bbox") t.bbox = value.get<std::string>();
      else throw SchemaError("templates/" + key, "center|bbox", key);
    }
    return t;
  }
};

inline std::string fill_template(std::string_view tmpl, const GroundingAnnotation& a) {
  const std::pair<std::string_view, std::string> subs[] = {
      {"{id}", a.object_id}, {"{camera}", std::string(camera_token(a.camera))}, {"{category}", a.category}};
  std::string out;
  std::size_t i = 0;
  while (i < tmpl.size()) {
    bool replaced = false;
    for (const auto& [key, value] : subs) {
      if (tmpl.substr(i, key.size()) == key) {
        out += value;
        i += key.size();
        replaced = true;
        break;
      }
    }
    if (!replaced) out += tmpl[i++];
  }
  return out;
}

/// Grounding annotation file: [{"frame_id", "scene_id"?, "camera", "object_id",
/// "bbox": [x1, y1, x2, y2], "category"}] or {"annotations": [...]}.
inline std::vector<GroundingAnnotation> load_grounding_annotations(const std::filesystem::path& path) {
  const json doc = read_json_file(path);
  const std::string root = path.filename().string();
  const json& items = detail::require_array_or_wrapped(doc, "annotations", root);
  std::vector<GroundingAnnotation> out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    const std::string at = root + "/" + std::to_string(i);
    const json& it = items[i];
    if (!it.is_object()) throw SchemaError(at, "object", describe_json(it));
    GroundingAnnotation a;
    a.frame_id = require_string(it, "frame_id", at);
    a.scene_id = detail::optional_string(it, "scene_id");
    const std::string cam = require_string(it, "camera", at);
    const auto view = try_normalize_camera_name(cam);
    if (!view) throw SchemaError(at + "/camera", "a camera name", cam);
    a.camera = *view;
    a.object_id = require_string(it, "object_id", at);
    a.category = require_string(it, "category", at);
    const json& box = require(it, "bbox", at);
    if (!box.is_array() || box.size() != 4 ||
        !std::all_of(box.begin(), box.end(), [](const json& v) { return v.is_number(); })) {
      throw SchemaError(at + "/bbox", "[x1, y1, x2, y2]", describe_json(box));
    }
    a.x1 = box[0].get<double>();
    a.y1 = box[1].get<double>();
    a.x2 = box[2].get<double>();
    a.y2 = box[3].get<double>();
    out.push_back(std::move(a));
  }
  return out;
}

inline void validate_annotation(const GroundingAnnotation& a, const StitchLayout& layout) {
  const auto& dims = layout.native_dims(a.camera);
  if (!(a.x1 < a.x2) || !(a.y1 < a.y2)) {
    throw InvalidBBox("bbox of " + a.object_id + " in frame " + a.frame_id + " is empty or inverted");
  }
  if (a.x1 < 0 || a.y1 < 0 || a.x2 > dims.width || a.y2 > dims.height) {
    throw InvalidBBox("bbox of " + a.object_id + " in frame " + a.frame_id + " exceeds native dims");
  }
  if (!detail::is_alnum_id(a.object_id)) {
    throw InvalidBBox("object id '" + a.object_id + "' is not alphanumeric");
  }
}

/// Two grounding records per annotation: center (as a key-object tag) then bbox.
inline std::vector<QARecord> extract_grounding_qas(const std::vector<GroundingAnnotation>& annotations,
                                                   const GroundingTemplates& templates = {},
                                                   const StitchLayout& layout = {},
                                                   std::string_view source = "nuscenes") {
  std::vector<QARecord> out;
  out.reserve(2 * annotations.size());
  for (const auto& a : annotations) {
    validate_annotation(a, layout);
    KeyObjectTag center{a.object_id, a.camera, (a.x1 + a.x2) / 2.0, (a.y1 + a.y2) / 2.0,
                        layout.original_space(a.camera), std::nullopt};
    std::string box = "(" + format_coordinate(a.x1) + "," + format_coordinate(a.y1) + "," +
                      format_coordinate(a.x2) + "," + format_coordinate(a.y2) + ")";
    for (auto [question, answer] : {std::pair{fill_template(templates.center, a), render_key_object_tag(center)},
                                    std::pair{fill_template(templates.bbox, a), std::move(box)}}) {
      QARecord r = detail::make_record(a.scene_id, a.frame_id, TaskCategory::Grounding,
                                       std::move(question), std::move(answer), std::string(source));
      for (auto& t : r.tags) t.space = layout.original_space(t.camera);
      out.push_back(std::move(r));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Adapter registry
// ---------------------------------------------------------------------------

struct AdapterOptions {
  GroundingTemplates templates;
  StitchLayout layout;
  std::string grounding_source = "nuscenes";
};

inline const std::vector<std::string>& adapter_names() {
  static const std::vector<std::string> names = {"drivelm", "nuscenes-qa", "nuscenes-mqa", "omnidrive",
                                                 "grounding"};
  return names;
}

inline bool is_known_adapter(std::string_view name) {
  const auto& n = adapter_names();
  return name == "nuscenes-mq" || std::find(n.begin(), n.end(), name) != n.end();
}

inline void run_adapter(std::string_view name, const std::filesystem::path& path, const RecordSink& sink,
                        const AdapterOptions& opts = {}) {
  if (name == "drivelm") return load_drivelm_records(path, sink);
  if (name == "nuscenes-qa") return load_nuscenes_qa_records(path, sink);
  if (name == "nuscenes-mqa" || name == "nuscenes-mq") return load_nuscenes_mqa_records(path, sink);
  if (name == "omnidrive") return load_omnidrive_records(path, sink);
  if (name == "grounding") {
    for (auto& r : extract_grounding_qas(load_grounding_annotations(path), opts.templates, opts.layout,
                                         opts.grounding_source)) {
      sink(std::move(r));
    }
    return;
  }
  throw std::invalid_argument("unknown adapter '" + std::string(name) + "'");
}

// ---------------------------------------------------------------------------
// Sampling
// ---------------------------------------------------------------------------

namespace detail {

inline std::uint64_t fnv1a(std::string_view s, std::uint64_t h = 1469598103934665603ULL) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

inline std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace detail

/// Per-category keep rate (default 1.0). The keep decision hashes the record
/// content with the seed, so it does not depend on stream order.
struct SamplingConfig {
  std::map<TaskCategory, double> rates;
  std::uint64_t seed = 0;

  double rate(TaskCategory c) const {
    const auto it = rates.find(c);
    return it == rates.end() ? 1.0 : it->second;
  }

  bool keep(const QARecord& r) const {
    const double p = rate(r.category);
    if (p >= 1.0) return true;
    if (p <= 0.0) return false;
    std::uint64_t h = detail::fnv1a(r.scene_id);
    h = detail::fnv1a("\x1f" + r.frame_id, h);
    for (const auto& t : r.turns) h = detail::fnv1a("\x1f" + t.question + "\x1e" + t.answer, h);
    const std::uint64_t u = detail::mix64(h ^ detail::mix64(seed));
    return static_cast<double>(u >> 11) * 0x1.0p-53 < p;
  }
};

// ---------------------------------------------------------------------------
// Compression
// ---------------------------------------------------------------------------

/// Merges all records of a (scene_id, frame_id) into one multi-turn record,
/// frames in first-appearance order, turns in input order. The merged record
/// keeps the category and source of the frame's first record.
inline std::vector<QARecord> compress_frame_qas(const std::vector<QARecord>& records) {
  std::vector<QARecord> out;
  std::map<std::pair<std::string, std::string>, std::size_t> index;
  std::vector<std::vector<CoordSpace>> spaces;
  for (const auto& r : records) {
    auto [it, inserted] = index.try_emplace({r.scene_id, r.frame_id}, out.size());
    if (inserted) {
      QARecord merged = r;
      merged.turns.clear();
      merged.tags.clear();
      out.push_back(std::move(merged));
      spaces.emplace_back();
    }
    auto& dst = out[it->second];
    dst.turns.insert(dst.turns.end(), r.turns.begin(), r.turns.end());
    auto& sp = spaces[it->second];
    for (const auto& t : r.tags) sp.push_back(t.space);
  }
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i].tags = derive_tags(out[i].turns);
    if (spaces[i].size() == out[i].tags.size()) {
      for (std::size_t k = 0; k < spaces[i].size(); ++k) out[i].tags[k].space = spaces[i][k];
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Coordinate policy on records
// ---------------------------------------------------------------------------

/// The space a record's tags are expressed in (Original when it has none).
inline SpaceKind record_space(const QARecord& r) {
  return r.tags.empty() ? SpaceKind::Original : r.tags.front().space.kind;
}

inline QARecord apply_policy(const QARecord& r, CoordinatePolicy policy, const StitchLayout& layout,
                             std::vector<TagDiagnostic>* diagnostics = nullptr) {
  if (policy == CoordinatePolicy::KeepOriginal) return r;
  const SpaceKind from = record_space(r);
  QARecord out = r;
  for (auto& t : out.turns) {
    t.question = transform_tags_in_text(t.question, policy, layout, from, diagnostics);
    t.answer = transform_tags_in_text(t.answer, policy, layout, from, diagnostics);
  }
  out.tags = derive_tags(out.turns);
  for (auto& t : out.tags) t.space = layout.space_for(t.camera, target_space(policy));
  return out;
}

// ---------------------------------------------------------------------------
// Training samples
// ---------------------------------------------------------------------------

enum class Axis : std::uint8_t { X, Y };

/// Character range of one numeric coordinate field inside an answer.
struct NumericSpan {
  std::size_t turn = 0;
  Axis axis = Axis::X;
  Span span;
  std::string tag_id;
  friend bool operator==(const NumericSpan&, const NumericSpan&) = default;
};

struct TrainingSample {
  std::string system_prompt;
  std::string image_ref;
  std::vector<QATurn> conversation;
  std::vector<NumericSpan> numeric_spans;
};

inline std::vector<NumericSpan> numeric_spans_of(const std::vector<QATurn>& turns) {
  std::vector<NumericSpan> spans;
  for (std::size_t i = 0; i < turns.size(); ++i) {
    for (const auto& occ : scan_key_object_tags(turns[i].answer).tags) {
      spans.push_back({i, Axis::X, occ.x_span, occ.tag.id});
      spans.push_back({i, Axis::Y, occ.y_span, occ.tag.id});
    }
  }
  return spans;
}

inline TrainingSample build_training_sample(const QARecord& record, CoordinatePolicy policy,
                                            const StitchLayout& layout = {},
                                            std::vector<TagDiagnostic>* diagnostics = nullptr) {
  if (record.turns.empty()) throw std::invalid_argument("record has no turns");
  const QARecord transformed = apply_policy(record, policy, layout, diagnostics);
  TrainingSample s;
  s.system_prompt = std::string(kSystemPrompt);
  s.image_ref = record.frame_id;
  s.conversation = transformed.turns;
  s.numeric_spans = numeric_spans_of(s.conversation);
  return s;
}

inline json sample_to_json(const TrainingSample& s) {
  json conv = json::array();
  for (const auto& t : s.conversation) conv.push_back({{"question", t.question}, {"answer", t.answer}});
  json spans = json::array();
  for (const auto& n : s.numeric_spans) {
    spans.push_back({{"turn", n.turn},
                     {"axis", n.axis == Axis::X ? "x" : "y"},
                     {"tag_id", n.tag_id},
                     {"span", json::array({n.span.begin, n.span.end})}});
  }
  return json{{"schema_version", kRecordSchemaVersion},
              {"system_prompt", s.system_prompt},
              {"image_ref", s.image_ref},
              {"conversation", std::move(conv)},
              {"numeric_spans", std::move(spans)}};
}

// ---------------------------------------------------------------------------
// Summary
// ---------------------------------------------------------------------------

/// Pair counts are QA turns, matching how dataset sizes are usually quoted.
struct DatasetSummary {
  std::size_t records = 0;
  std::size_t pairs = 0;
  std::size_t frames = 0;
  std::map<std::string, std::size_t> by_source;
  std::map<std::string, std::size_t> by_category;
};

inline DatasetSummary summarize_dataset(const std::vector<QARecord>& records) {
  DatasetSummary s;
  for (TaskCategory c : kAllCategories) s.by_category[std::string(to_string(c))] = 0;
  std::map<std::pair<std::string, std::string>, bool> frames;
  for (const auto& r : records) {
    ++s.records;
    s.pairs += r.turns.size();
    s.by_source[r.source] += r.turns.size();
    s.by_category[std::string(to_string(r.category))] += r.turns.size();
    frames[{r.scene_id, r.frame_id}] = true;
  }
  s.frames = frames.size();
  return s;
}

inline json summary_to_json(const DatasetSummary& s) {
  json by_source = json::object();
  for (const auto& [k, v] : s.by_source) by_source[k] = v;
  json by_category = json::object();
  for (const auto& [k, v] : s.by_category) by_category[k] = v;
  return json{{"records", s.records},
              {"pairs", s.pairs},
              {"frames", s.frames},
              {"by_source", std::move(by_source)},
              {"by_category", std::move(by_category)}};
}

}  // namespace drivevqa
