#pragma once

// Shared domain types and the key-object tag grammar `<id, camera, x, y>`.

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

namespace drivevqa {

// ---------------------------------------------------------------------------
// Cameras and the 3x2 grid
// ---------------------------------------------------------------------------

enum class CameraView : std::uint8_t {
  FrontLeft,
  Front,
  FrontRight,
  BackLeft,
  Back,
  BackRight,
};

inline constexpr std::array<CameraView, 6> kAllCameras = {
    CameraView::FrontLeft, CameraView::Front, CameraView::FrontRight,
    CameraView::BackLeft,  CameraView::Back,  CameraView::BackRight,
};

struct GridSlot {
  int row = 0;
  int col = 0;
  friend constexpr bool operator==(GridSlot, GridSlot) = default;
};

// Row 0 is the front triple, row 1 the back triple, left to right.
constexpr GridSlot grid_slot(CameraView cam) noexcept {
  const auto idx = static_cast<int>(cam);
  return {idx / 3, idx % 3};
}

constexpr std::string_view camera_token(CameraView cam) noexcept {
  switch (cam) {
    case CameraView::FrontLeft: return "CAM_FRONT_LEFT";
    case CameraView::Front: return "CAM_FRONT";
    case CameraView::FrontRight: return "CAM_FRONT_RIGHT";
    case CameraView::BackLeft: return "CAM_BACK_LEFT";
    case CameraView::Back: return "CAM_BACK";
    case CameraView::BackRight: return "CAM_BACK_RIGHT";
  }
  return "CAM_FRONT";
}

class UnknownCamera : public std::invalid_argument {
 public:
  explicit UnknownCamera(std::string raw)
      : std::invalid_argument("unknown camera name: '" + raw + "'"),
        raw_(std::move(raw)) {}
  const std::string& raw() const noexcept { return raw_; }

 private:
  std::string raw_;
};

/// Accepts "CAM FRONT", "cam_front", "CAM-FRONT", "front", ... in any case.
inline std::optional<CameraView> try_normalize_camera_name(std::string_view raw) {
  std::string key;
  key.reserve(raw.size());
  bool pending_sep = false;
  for (char ch : raw) {
    const auto c = static_cast<unsigned char>(ch);
    if (c == ' ' || c == '_' || c == '-' || c == '\t') {
      pending_sep = !key.empty();
      continue;
    }
    if (!std::isalpha(c)) return std::nullopt;
    if (pending_sep) key.push_back('_');
    pending_sep = false;
    key.push_back(static_cast<char>(std::toupper(c)));
  }
  std::string_view body = key;
  if (body.starts_with("CAM_")) body.remove_prefix(4);
  for (CameraView cam : kAllCameras) {
    if (camera_token(cam).substr(4) == body) return cam;
  }
  return std::nullopt;
}

inline CameraView normalize_camera_name(std::string_view raw) {
  if (auto cam = try_normalize_camera_name(raw)) return *cam;
  throw UnknownCamera(std::string(raw));
}

// ---------------------------------------------------------------------------
// Coordinate spaces
// ---------------------------------------------------------------------------

inline constexpr double kCellWidth = 896.0;
inline constexpr double kCellHeight = 448.0;
inline constexpr double kCompositeWidth = 3 * kCellWidth;   // 2688
inline constexpr double kCompositeHeight = 2 * kCellHeight;  // 896
inline constexpr double kDefaultNativeWidth = 1600.0;
inline constexpr double kDefaultNativeHeight = 900.0;

enum class SpaceKind : std::uint8_t { Original, PerView, Concatenated };

constexpr std::string_view to_string(SpaceKind kind) noexcept {
  switch (kind) {
    case SpaceKind::Original: return "original";
    case SpaceKind::PerView: return "per-view";
    case SpaceKind::Concatenated: return "concatenated";
  }
  return "original";
}

/// PerView and Concatenated have fixed extents; Original carries the native
/// camera resolution.
struct CoordSpace {
  SpaceKind kind = SpaceKind::Original;
  double width = kDefaultNativeWidth;
  double height = kDefaultNativeHeight;

  static CoordSpace original(double native_w = kDefaultNativeWidth,
                             double native_h = kDefaultNativeHeight) {
    if (!(native_w > 0.0) || !(native_h > 0.0)) {
      throw std::invalid_argument("native dimensions must be positive");
    }
    return {SpaceKind::Original, native_w, native_h};
  }
  static constexpr CoordSpace per_view() noexcept {
    return {SpaceKind::PerView, kCellWidth, kCellHeight};
  }
  static constexpr CoordSpace concatenated() noexcept {
    return {SpaceKind::Concatenated, kCompositeWidth, kCompositeHeight};
  }

  friend constexpr bool operator==(const CoordSpace&, const CoordSpace&) = default;
};

/// Half-open character range [begin, end).
struct Span {
  std::size_t begin = 0;
  std::size_t end = 0;

  constexpr std::size_t size() const noexcept { return end - begin; }
  constexpr bool overlaps(const Span& o) const noexcept {
    return begin < o.end && o.begin < end;
  }
  friend constexpr bool operator==(const Span&, const Span&) = default;
};

// ---------------------------------------------------------------------------
// Key-object tags
// ---------------------------------------------------------------------------

struct KeyObjectTag {
  std::string id;
  CameraView camera = CameraView::Front;
  double x = 0.0;
  double y = 0.0;
  CoordSpace space = CoordSpace::original();
  std::optional<Span> src_span;

  friend bool operator==(const KeyObjectTag&, const KeyObjectTag&) = default;
};

/// A parsed tag plus where its numeric fields sit in the source text.
struct TagOccurrence {
  KeyObjectTag tag;
  Span x_span;
  Span y_span;
};

struct TagDiagnostic {
  Span span;
  std::string message;
};

struct TagScan {
  std::vector<TagOccurrence> tags;
  std::vector<TagDiagnostic> warnings;
};

namespace detail {

inline bool is_alnum_id(std::string_view s) noexcept {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) {
           return std::isalnum(static_cast<unsigned char>(c)) != 0;
         });
}

// -?[0-9]+(\.[0-9]+)?
inline bool is_decimal(std::string_view s) noexcept {
  std::size_t i = 0;
  if (i < s.size() && s[i] == '-') ++i;
  const std::size_t int_start = i;
  while (i < s.size() && std::isdigit(static_cast<unsigned char>(s[i]))) ++i;
  if (i == int_start) return false;
  if (i == s.size()) return true;
  if (s[i] != '.') return false;
  const std::size_t frac_start = ++i;
  while (i < s.size() && std::isdigit(static_cast<unsigned char>(s[i]))) ++i;
  return i == s.size() && i > frac_start;
}

inline double to_double(std::string_view s) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) {
    throw std::invalid_argument("not a number: " + std::string(s));
  }
  return v;
}

// Tries to read one tag from `inner` (the text strictly between '<' and '>'),
// whose first character sits at absolute offset `base`.
inline std::optional<TagOccurrence> parse_tag_body(std::string_view inner,
                                                   std::size_t base,
                                                   const CoordSpace& space,
                                                   std::string& why) {
  std::array<Span, 4> fields{};
  std::size_t count = 0;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= inner.size(); ++i) {
    if (i == inner.size() || inner[i] == ',') {
      if (count == 4) {
        why = "too many fields";
        return std::nullopt;
      }
      std::size_t b = start;
      if (count > 0) {
        while (b < i && inner[b] == ' ') ++b;
      }
      fields[count++] = {b, i};
      start = i + 1;
    }
  }
  if (count != 4) {
    why = "expected 4 fields, found " + std::to_string(count);
    return std::nullopt;
  }
  auto field = [&](int k) {
    return inner.substr(fields[k].begin, fields[k].size());
  };
  if (!is_alnum_id(field(0))) {
    why = "id must be non-empty alphanumeric";
    return std::nullopt;
  }
  auto cam = try_normalize_camera_name(field(1));
  if (!cam) {
    why = "unknown camera '" + std::string(field(1)) + "'";
    return std::nullopt;
  }
  if (!is_decimal(field(2)) || !is_decimal(field(3))) {
    why = "coordinates must be decimal numbers";
    return std::nullopt;
  }
  TagOccurrence occ;
  occ.tag.id = std::string(field(0));
  occ.tag.camera = *cam;
  occ.tag.x = to_double(field(2));
  occ.tag.y = to_double(field(3));
  occ.tag.space = space;
  occ.tag.src_span = Span{base - 1, base + inner.size() + 1};
  occ.x_span = {base + fields[2].begin, base + fields[2].end};
  occ.y_span = {base + fields[3].begin, base + fields[3].end};
  return occ;
}

}  // namespace detail

/// Finds every well-formed tag in document order. A `<...>` candidate that
/// contains a comma but does not satisfy the grammar is reported as a warning.
inline TagScan scan_key_object_tags(std::string_view text,
                                    const CoordSpace& space = CoordSpace::original()) {
  TagScan scan;
  std::size_t pos = 0;
  while (true) {
    const std::size_t open = text.find('<', pos);
    if (open == std::string_view::npos) break;
    const std::size_t close = text.find_first_of("<>", open + 1);
    if (close == std::string_view::npos) break;
    if (text[close] == '<') {
      pos = close;
      continue;
    }
    const std::string_view inner = text.substr(open + 1, close - open - 1);
    std::string why;
    if (auto occ = detail::parse_tag_body(inner, open + 1, space, why)) {
      scan.tags.push_back(std::move(*occ));
    } else if (inner.find(',') != std::string_view::npos) {
      scan.warnings.push_back({Span{open, close + 1}, "skipped malformed tag: " + why});
    }
    pos = close + 1;
  }
  return scan;
}

inline std::vector<KeyObjectTag> parse_key_object_tags(
    std::string_view text, const CoordSpace& space = CoordSpace::original(),
    std::vector<TagDiagnostic>* warnings = nullptr) {
  TagScan scan = scan_key_object_tags(text, space);
  if (warnings != nullptr) {
    warnings->insert(warnings->end(), scan.warnings.begin(), scan.warnings.end());
  }
  std::vector<KeyObjectTag> tags;
  tags.reserve(scan.tags.size());
  for (auto& occ : scan.tags) tags.push_back(std::move(occ.tag));
  return tags;
}

/// Fixed-point decimal rendering. Exact binary ties round half to even;
/// negative zero renders as zero.
inline std::string format_coordinate(double value, int precision = 1) {
  if (precision < 0) throw std::invalid_argument("precision must be >= 0");
  std::array<char, 64> buf{};
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), value,
                                 std::chars_format::fixed, precision);
  if (ec != std::errc{}) throw std::invalid_argument("coordinate out of printable range");
  std::string out(buf.data(), ptr);
  if (out.front() == '-' &&
      out.find_first_not_of("0.", 1) == std::string::npos) {
    out.erase(0, 1);
  }
  return out;
}

inline std::string render_key_object_tag(const KeyObjectTag& tag, int precision = 1) {
  std::string out = "<";
  out += tag.id;
  out += ',';
  out += camera_token(tag.camera);
  out += ',';
  out += format_coordinate(tag.x, precision);
  out += ',';
  out += format_coordinate(tag.y, precision);
  out += '>';
  return out;
}

/// Returns a diagnostic when the tag violates its space bounds or id rule.
/// Out-of-range values are reported, never clamped.
inline std::optional<std::string> validate_tag(const KeyObjectTag& tag) {
  if (!detail::is_alnum_id(tag.id)) return "tag id '" + tag.id + "' is not alphanumeric";
  if (tag.x < 0.0 || tag.x > tag.space.width || tag.y < 0.0 || tag.y > tag.space.height) {
    return "tag " + render_key_object_tag(tag) + " lies outside " +
           std::string(to_string(tag.space.kind)) + " bounds";
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// QA records
// ---------------------------------------------------------------------------

enum class TaskCategory : std::uint8_t { Perception, Prediction, Planning, Behavior, Grounding };

inline constexpr std::array<TaskCategory, 5> kAllCategories = {
    TaskCategory::Perception, TaskCategory::Prediction, TaskCategory::Planning,
    TaskCategory::Behavior, TaskCategory::Grounding};

constexpr std::string_view to_string(TaskCategory c) noexcept {
  switch (c) {
    case TaskCategory::Perception: return "perception";
    case TaskCategory::Prediction: return "prediction";
    case TaskCategory::Planning: return "planning";
    case TaskCategory::Behavior: return "behavior";
    case TaskCategory::Grounding: return "grounding";
  }
  return "perception";
}

inline std::optional<TaskCategory> parse_category(std::string_view s) {
  std::string lower(s);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (lower == "behaviour") lower = "behavior";
  for (TaskCategory c : kAllCategories) {
    if (to_string(c) == lower) return c;
  }
  return std::nullopt;
}

struct QATurn {
  std::string question;
  std::string answer;
  friend bool operator==(const QATurn&, const QATurn&) = default;
};

/// Tag spans index into record_text(): every turn's question then answer,
/// concatenated without separators.
struct QARecord {
  std::string scene_id;
  std::string frame_id;
  TaskCategory category = TaskCategory::Perception;
  std::vector<QATurn> turns;
  std::vector<KeyObjectTag> tags;
  std::string source;

  friend bool operator==(const QARecord&, const QARecord&) = default;
};

inline std::string record_text(const QARecord& rec) {
  std::string out;
  for (const auto& t : rec.turns) {
    out += t.question;
    out += t.answer;
  }
  return out;
}

inline std::vector<KeyObjectTag> derive_tags(const std::vector<QATurn>& turns,
                                             const CoordSpace& space = CoordSpace::original()) {
  std::vector<KeyObjectTag> tags;
  std::size_t offset = 0;
  auto collect = [&](const std::string& piece) {
    for (auto& tag : parse_key_object_tags(piece, space)) {
      tag.src_span = Span{tag.src_span->begin + offset, tag.src_span->end + offset};
      tags.push_back(std::move(tag));
    }
    offset += piece.size();
  };
  for (const auto& t : turns) {
    collect(t.question);
    collect(t.answer);
  }
  return tags;
}

}  // namespace drivevqa
