#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "gesture/manifest.hpp"
#include "gesture/video_io.hpp"

namespace gesture {

// Desk-scale stand-in for a sign-language corpus. Class k moves a blob on a
// torus inside the person box along direction 2*pi*k/K; start position,
// colors, background and speed are random per clip, so a single frame carries
// no class information.
struct SyntheticDatasetSpec {
  int num_classes = 10;
  int clips_per_class = 20;
  int frame_size = 80;
  int box_min = 56;
  int box_max = 72;
  int segment_min = 10;
  int segment_max = 16;
  int pad_max = 4;  // static frames before and after the gesture, each side
  double speed_min = 2.5;
  double speed_max = 3.5;
  double fps = 15.0;
  uint64_t seed = 0;

  void validate() const;
};

// Class motion pattern: unit direction and the per-class label name.
struct MotionPattern {
  double angle = 0;
  std::string name;
};

std::vector<MotionPattern> motion_patterns(int num_classes);

using SyntheticDataset = Dataset;

SyntheticDataset generate_synthetic_dataset(const SyntheticDatasetSpec& spec);

// Writes clips/<index>.clip (or numbered PNG directories when frame_dirs) and
// manifest.json under out_dir. Returns the manifest path.
std::string write_dataset(const SyntheticDataset& dataset, const std::string& out_dir,
                          bool frame_dirs = false);

nlohmann::json to_json(const SyntheticDatasetSpec& spec);
SyntheticDatasetSpec synthetic_spec_from_json(const nlohmann::json& doc);

}  // namespace gesture
