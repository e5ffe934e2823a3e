#pragma once

// Six-camera composition into the 2688x896 stitched input.

#include <filesystem>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "drivevqa/jsonl.hpp"
#include "drivevqa/stitcher.hpp"

namespace drivevqa {

using CameraImages = std::map<CameraView, cv::Mat>;

class MissingCamera : public std::runtime_error {
 public:
  explicit MissingCamera(CameraView view)
      : std::runtime_error("missing camera " + std::string(camera_token(view))), view_(view) {}
  CameraView view() const noexcept { return view_; }

 private:
  CameraView view_;
};

class DecodeError : public std::runtime_error {
 public:
  explicit DecodeError(const std::filesystem::path& path)
      : std::runtime_error("cannot decode image '" + path.string() + "'"), path_(path) {}
  const std::filesystem::path& path() const noexcept { return path_; }

 private:
  std::filesystem::path path_;
};

/// 8-bit, 3-channel BGR; alpha dropped, grayscale expanded.
inline cv::Mat to_bgr8(const cv::Mat& img) {
  cv::Mat src = img;
  if (src.depth() != CV_8U) {
    const double scale = src.depth() == CV_16U ? 1.0 / 257.0 : 1.0;
    src.convertTo(src, CV_8U, scale);
  }
  cv::Mat out;
  switch (src.channels()) {
    case 1: cv::cvtColor(src, out, cv::COLOR_GRAY2BGR); break;
    case 3: out = src; break;
    case 4: cv::cvtColor(src, out, cv::COLOR_BGRA2BGR); break;
    default: throw std::invalid_argument("unsupported channel count " + std::to_string(src.channels()));
  }
  return out;
}

inline cv::Mat load_image(const std::filesystem::path& path) {
  cv::Mat img = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (img.empty()) throw DecodeError(path);
  return img;
}

/// Each view is resized (bilinear) to 896x448 and blitted into its grid slot.
inline cv::Mat compose_views(const CameraImages& images, [[maybe_unused]] const StitchLayout& layout = {}) {
  const int cw = static_cast<int>(StitchLayout::kCellW);
  const int ch = static_cast<int>(StitchLayout::kCellH);
  cv::Mat canvas(static_cast<int>(StitchLayout::output_height()),
                 static_cast<int>(StitchLayout::output_width()), CV_8UC3, cv::Scalar::all(0));
  for (CameraView cam : kAllCameras) {
    const auto it = images.find(cam);
    if (it == images.end()) throw MissingCamera(cam);
    if (it->second.empty()) {
      throw std::invalid_argument("empty image for " + std::string(camera_token(cam)));
    }
    const GridSlot s = StitchLayout::slot(cam);
    cv::Mat cell = canvas(cv::Rect(s.col * cw, s.row * ch, cw, ch));
    cv::resize(to_bgr8(it->second), cell, cell.size(), 0, 0, cv::INTER_LINEAR);
  }
  return canvas;
}

struct FrameManifestEntry {
  std::string frame_id;
  std::map<CameraView, std::filesystem::path> images;
};

/// JSON-lines: {"frame_id": ..., "images": {"CAM_FRONT": path, ...}}.
/// Relative image paths resolve against the manifest's directory.
inline std::vector<FrameManifestEntry> read_frame_manifest(const std::filesystem::path& path) {
  std::vector<FrameManifestEntry> entries;
  const auto base = path.parent_path();
  for_each_jsonl(path, [&](const json& doc, std::size_t line) {
    FrameManifestEntry entry;
    entry.frame_id = require_string(doc, "frame_id", path, line);
    const auto it = doc.find("images");
    if (it == doc.end() || !it->is_object()) {
      throw SchemaError(location(path, line) + "/images", "object", describe_json(doc));
    }
    for (const auto& [name, value] : it->items()) {
      if (!value.is_string()) {
        throw SchemaError(location(path, line) + "/images/" + name, "string", describe_json(value));
      }
      std::filesystem::path img = value.get<std::string>();
      if (img.is_relative()) img = base / img;
      entry.images[normalize_camera_name(name)] = img;
    }
    entries.push_back(std::move(entry));
  });
  return entries;
}

inline cv::Mat compose_frame(const FrameManifestEntry& entry, const StitchLayout& layout = {}) {
  CameraImages images;
  for (CameraView cam : kAllCameras) {
    const auto it = entry.images.find(cam);
    if (it == entry.images.end()) throw MissingCamera(cam);
    images[cam] = load_image(it->second);
  }
  return compose_views(images, layout);
}

inline void write_png(const std::filesystem::path& path, const cv::Mat& img) {
  if (!cv::imwrite(path.string(), img)) {
    throw std::runtime_error("cannot write PNG '" + path.string() + "'");
  }
}

}  // namespace drivevqa
