#pragma once

#include <filesystem>
#include <string>

#include "gesture/layer_spec.hpp"
#include "gesture/synthetic.hpp"
#include "gesture/trainer.hpp"

namespace fixture {

// Desk topology at 4x48x48 so a forward pass takes milliseconds.
inline gesture::BackboneConfig tiny_backbone() {
  auto c = gesture::desk_backbone_config();
  c.input_spatial = 48;
  c.input_temporal = 4;
  return c;
}

inline gesture::Dataset toy_dataset(int classes = 2, int per_class = 4, uint64_t seed = 0) {
  gesture::SyntheticDatasetSpec spec;
  spec.num_classes = classes;
  spec.clips_per_class = per_class;
  spec.frame_size = 48;
  spec.box_min = 32;
  spec.box_max = 40;
  spec.seed = seed;
  return gesture::generate_synthetic_dataset(spec);
}

inline gesture::TrainConfig short_schedule(int epochs = 2) {
  gesture::TrainConfig c;
  c.warmup_epochs = 0;
  c.drop_epoch = epochs - 1;
  c.max_epochs = epochs;
  c.batch_clips = 4;
  c.embedding_dim = 16;
  c.patience = 0;
  return c;
}

inline std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("gesture_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace fixture
