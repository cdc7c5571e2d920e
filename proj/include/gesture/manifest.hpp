#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "gesture/video_io.hpp"

namespace gesture {

// One annotated gesture inside a video. `boxes` holds one person box per
// video frame (at least covering the segment), so windows that jitter past
// the segment still have boxes.
struct ClipAnnotation {
  std::string source;  // video path, relative to the manifest directory
  int label = 0;
  std::string label_name;
  int start = 0;  // segment [start, end) in frames
  int end = 1;
  double fps = 15.0;
  std::vector<Box> boxes;

  int num_frames() const { return static_cast<int>(boxes.size()); }
  int length() const { return end - start; }
  // Throws DataError when the segment or boxes are inconsistent; frame size
  // bounds are checked when width/height are positive.
  void validate(int frame_width = 0, int frame_height = 0) const;
};

struct Manifest {
  std::vector<std::string> class_names;
  std::vector<ClipAnnotation> records;
  std::string root;  // directory the relative sources resolve against

  int num_classes() const { return static_cast<int>(class_names.size()); }
  std::string resolve(const ClipAnnotation& ann) const;
};

nlohmann::json to_json(const Manifest& manifest);
Manifest manifest_from_json(const nlohmann::json& doc, const std::string& root);

Manifest load_manifest(const std::string& path);

// Manifest plus every referenced video decoded in memory.
struct Dataset {
  Manifest manifest;
  std::vector<Video> videos;  // parallel to manifest.records

  std::size_t size() const { return videos.size(); }
};

// Loads the manifest and all of its videos; checks every annotation against
// its video's frame count and size.
Dataset load_dataset(const std::string& manifest_path);
void save_manifest(const Manifest& manifest, const std::string& path);

}  // namespace gesture
