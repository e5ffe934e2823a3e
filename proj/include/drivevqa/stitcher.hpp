#pragma once

// Stitch layout and coordinate policies: moving points and tags between
// native camera pixels, the 896x448 per-view cell and the 2688x896 composite.
// Image composition itself lives in compose.hpp.

#include <array>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "drivevqa/core.hpp"

namespace drivevqa {

struct NativeDims {
  double width = kDefaultNativeWidth;
  double height = kDefaultNativeHeight;
  friend constexpr bool operator==(const NativeDims&, const NativeDims&) = default;
};

struct StitchLayout {
  static constexpr int kCols = 3;
  static constexpr int kRows = 2;
  static constexpr double kCellW = kCellWidth;
  static constexpr double kCellH = kCellHeight;

  std::array<NativeDims, 6> native{};

  static constexpr double output_width() noexcept { return kCols * kCellW; }
  static constexpr double output_height() noexcept { return kRows * kCellH; }
  static constexpr GridSlot slot(CameraView cam) noexcept { return grid_slot(cam); }

  const NativeDims& native_dims(CameraView cam) const noexcept {
    return native[static_cast<std::size_t>(cam)];
  }
  void set_native_dims(CameraView cam, NativeDims dims) {
    if (!(dims.width > 0.0) || !(dims.height > 0.0)) {
      throw std::invalid_argument("native dimensions must be positive");
    }
    native[static_cast<std::size_t>(cam)] = dims;
  }
  void set_all_native_dims(NativeDims dims) {
    for (CameraView cam : kAllCameras) set_native_dims(cam, dims);
  }
  CoordSpace original_space(CameraView cam) const {
    const auto& d = native_dims(cam);
    return CoordSpace::original(d.width, d.height);
  }
  /// The concrete space of `kind` for a given camera.
  CoordSpace space_for(CameraView cam, SpaceKind kind) const {
    switch (kind) {
      case SpaceKind::Original: return original_space(cam);
      case SpaceKind::PerView: return CoordSpace::per_view();
      case SpaceKind::Concatenated: return CoordSpace::concatenated();
    }
    return original_space(cam);
  }
};

/// Parses "WxH" (e.g. "1600x900").
inline NativeDims parse_native_dims(std::string_view text) {
  const auto sep = text.find_first_of("xX");
  if (sep == std::string_view::npos) {
    throw std::invalid_argument("expected WxH, got '" + std::string(text) + "'");
  }
  NativeDims dims{detail::to_double(text.substr(0, sep)),
                  detail::to_double(text.substr(sep + 1))};
  if (!(dims.width > 0.0) || !(dims.height > 0.0)) {
    throw std::invalid_argument("native dimensions must be positive");
  }
  return dims;
}

enum class CoordinatePolicy : std::uint8_t { KeepOriginal, PerViewResize, ConcatenatedResize };

constexpr std::string_view to_string(CoordinatePolicy p) noexcept {
  switch (p) {
    case CoordinatePolicy::KeepOriginal: return "original";
    case CoordinatePolicy::PerViewResize: return "per-view";
    case CoordinatePolicy::ConcatenatedResize: return "concatenated";
  }
  return "original";
}

inline CoordinatePolicy parse_policy(std::string_view s) {
  if (s == "original") return CoordinatePolicy::KeepOriginal;
  if (s == "per-view") return CoordinatePolicy::PerViewResize;
  if (s == "concatenated") return CoordinatePolicy::ConcatenatedResize;
  throw std::invalid_argument("unknown coordinate policy '" + std::string(s) + "'");
}

constexpr SpaceKind target_space(CoordinatePolicy p) noexcept {
  switch (p) {
    case CoordinatePolicy::KeepOriginal: return SpaceKind::Original;
    case CoordinatePolicy::PerViewResize: return SpaceKind::PerView;
    case CoordinatePolicy::ConcatenatedResize: return SpaceKind::Concatenated;
  }
  return SpaceKind::Original;
}

struct Point {
  double x = 0.0;
  double y = 0.0;
  friend constexpr bool operator==(const Point&, const Point&) = default;
};

class TransformError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A composite-space point outside the cell owned by the stated camera.
class OutOfCell : public TransformError {
 public:
  using TransformError::TransformError;
};

/// A point outside its source space.
class OutOfBounds : public TransformError {
 public:
  using TransformError::TransformError;
};

/// Model-emitted coordinates may overshoot a bound by this much.
inline constexpr double kCoordinateSlack = 1.0;

namespace detail {

inline std::string describe(Point p) {
  return "(" + format_coordinate(p.x, 3) + ", " + format_coordinate(p.y, 3) + ")";
}

inline bool within(double v, double lo, double hi) noexcept {
  return v >= lo - kCoordinateSlack && v <= hi + kCoordinateSlack;
}

inline Point to_per_view(Point p, CameraView cam, const CoordSpace& from) {
  switch (from.kind) {
    case SpaceKind::PerView:
      if (!within(p.x, 0, kCellWidth) || !within(p.y, 0, kCellHeight)) {
        throw OutOfBounds("point " + describe(p) + " outside per-view bounds");
      }
      return p;
    case SpaceKind::Original:
      if (!within(p.x, 0, from.width) || !within(p.y, 0, from.height)) {
        throw OutOfBounds("point " + describe(p) + " outside original bounds");
      }
      return {p.x * kCellWidth / from.width, p.y * kCellHeight / from.height};
    case SpaceKind::Concatenated: {
      const GridSlot s = grid_slot(cam);
      const double ox = s.col * kCellWidth;
      const double oy = s.row * kCellHeight;
      if (!within(p.x, ox, ox + kCellWidth) || !within(p.y, oy, oy + kCellHeight)) {
        throw OutOfCell("point " + describe(p) + " is outside the " +
                        std::string(camera_token(cam)) + " cell");
      }
      return {p.x - ox, p.y - oy};
    }
  }
  return p;
}

inline Point from_per_view(Point p, CameraView cam, const CoordSpace& to) {
  switch (to.kind) {
    case SpaceKind::PerView: return p;
    case SpaceKind::Original: return {p.x * to.width / kCellWidth, p.y * to.height / kCellHeight};
    case SpaceKind::Concatenated: {
      const GridSlot s = grid_slot(cam);
      return {p.x + s.col * kCellWidth, p.y + s.row * kCellHeight};
    }
  }
  return p;
}

}  // namespace detail

/// Moves `p` between spaces through the per-view cell: Original scales per
/// axis, Concatenated offsets by the camera's slot. Throws OutOfBounds or
/// OutOfCell when `p` is outside `from` by more than kCoordinateSlack.
inline Point transform_point(Point p, CameraView cam, const CoordSpace& from,
                             const CoordSpace& to) {
  const Point cell = detail::to_per_view(p, cam, from);
  if (from == to) return p;
  return detail::from_per_view(cell, cam, to);
}

inline KeyObjectTag transform_tag(const KeyObjectTag& tag, SpaceKind to,
                                  const StitchLayout& layout) {
  const CoordSpace target = layout.space_for(tag.camera, to);
  const Point q = transform_point({tag.x, tag.y}, tag.camera, tag.space, target);
  KeyObjectTag out = tag;
  out.x = q.x;
  out.y = q.y;
  out.space = target;
  return out;
}

/// Rewrites the numeric fields of every well-formed tag in `text`, which is
/// assumed to be in `assumed` space (an Original space resolves per camera
/// through `layout`). Bytes outside the numeric fields are left as they are;
/// KeepOriginal returns the input verbatim. Tags that fail to transform stay
/// unmodified and are reported in `diagnostics`.
inline std::string transform_tags_in_text(std::string_view text, CoordinatePolicy policy,
                                          const StitchLayout& layout, SpaceKind assumed,
                                          std::vector<TagDiagnostic>* diagnostics = nullptr,
                                          int precision = 1) {
  if (policy == CoordinatePolicy::KeepOriginal) return std::string(text);
  const SpaceKind to = target_space(policy);

  const TagScan scan = scan_key_object_tags(text);
  std::string out;
  out.reserve(text.size() + 8 * scan.tags.size());
  std::size_t cursor = 0;
  for (const auto& occ : scan.tags) {
    KeyObjectTag src = occ.tag;
    src.space = layout.space_for(src.camera, assumed);
    Point q{};
    try {
      q = transform_point({src.x, src.y}, src.camera, src.space,
                          layout.space_for(src.camera, to));
    } catch (const TransformError& e) {
      if (diagnostics != nullptr) diagnostics->push_back({*src.src_span, e.what()});
      continue;
    }
    out.append(text.substr(cursor, occ.x_span.begin - cursor));
    out += format_coordinate(q.x, precision);
    out.append(text.substr(occ.x_span.end, occ.y_span.begin - occ.x_span.end));
    out += format_coordinate(q.y, precision);
    cursor = occ.y_span.end;
  }
  out.append(text.substr(cursor));
  return out;
}

}  // namespace drivevqa
