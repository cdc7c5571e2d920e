#include "gesture/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numbers>
#include <random>

#include <ATen/CPUGeneratorImpl.h>

#include "gesture/error.hpp"

namespace fs = std::filesystem;

namespace gesture {
namespace {

using Rng = std::mt19937_64;

double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

int uniform_int(Rng& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

torch::Tensor random_color(Rng& rng) {
  return torch::tensor({uniform(rng, 0, 1), uniform(rng, 0, 1), uniform(rng, 0, 1)}, torch::kFloat);
}

struct ClipRecipe {
  int label = 0;
  int num_frames = 0;
  int start = 0;
  int end = 0;
  int box_x = 0, box_y = 0, box_side = 0;
  double px = 0, py = 0;  // blob start, box-local
  double vx = 0, vy = 0;
  double radius = 6;
  torch::Tensor blob_color, bg0, bg1;
  double bg_angle = 0;
  int clutter_x = 0, clutter_y = 0, clutter_w = 0, clutter_h = 0;
  torch::Tensor clutter_color;
  uint64_t noise_seed = 0;
  std::vector<Box> boxes;
};

Video render(const ClipRecipe& r, int size) {
  auto ys = torch::arange(size, torch::kFloat).view({size, 1});
  auto xs = torch::arange(size, torch::kFloat).view({1, size});
  auto ramp = ((xs * std::cos(r.bg_angle) + ys * std::sin(r.bg_angle)) / size + 1.5) / 3.0;
  auto bg = r.bg0.view({1, 1, 3}) + (r.bg1 - r.bg0).view({1, 1, 3}) * ramp.unsqueeze(-1);
  using torch::indexing::Slice;
  bg.index_put_({Slice(r.clutter_y, r.clutter_y + r.clutter_h), Slice(r.clutter_x, r.clutter_x + r.clutter_w)},
                r.clutter_color.view({1, 1, 3}));

  // Box-local coordinates of every pixel for torus distances.
  const double side = r.box_side;
  auto lx = xs - r.box_x;
  auto ly = ys - r.box_y;
  auto inside = (lx >= 0) & (lx < side) & (ly >= 0) & (ly < side);

  auto gen = at::make_generator<at::CPUGeneratorImpl>(r.noise_seed);
  auto video = torch::empty({r.num_frames, size, size, 3}, torch::kFloat);
  for (int t = 0; t < r.num_frames; ++t) {
    const double steps = std::clamp(t, r.start, r.end - 1) - r.start;
    const double cx = std::fmod(r.px + r.vx * steps + 1000 * side, side);
    const double cy = std::fmod(r.py + r.vy * steps + 1000 * side, side);
    auto dx = (lx - cx).abs();
    dx = torch::minimum(dx, side - dx);
    auto dy = (ly - cy).abs();
    dy = torch::minimum(dy, side - dy);
    auto dist = torch::sqrt(dx * dx + dy * dy);
    // one-pixel soft edge
    auto alpha = (r.radius + 0.5 - dist).clamp(0.0, 1.0) * inside.to(torch::kFloat);
    auto frame = bg * (1 - alpha.unsqueeze(-1)) + r.blob_color.view({1, 1, 3}) * alpha.unsqueeze(-1);
    frame = frame + 0.02 * torch::randn({size, size, 3}, gen);
    video[t] = frame.clamp(0.0, 1.0);
  }
  // Quantize now so in-memory and on-disk copies agree bit for bit.
  return from_uint8(to_uint8(video));
}

}  // namespace

void SyntheticDatasetSpec::validate() const {
  if (num_classes < 2) throw ConfigError("synthetic spec: num_classes must be >= 2");
  if (clips_per_class < 1) throw ConfigError("synthetic spec: clips_per_class must be >= 1");
  if (box_min < 8 || box_max < box_min || box_max > frame_size) {
    throw ConfigError("synthetic spec: need 8 <= box_min <= box_max <= frame_size");
  }
  if (segment_min < 1 || segment_max < segment_min) throw ConfigError("synthetic spec: bad segment range");
  if (pad_max < 0) throw ConfigError("synthetic spec: pad_max must be >= 0");
  if (!(speed_min > 0) || speed_max < speed_min) throw ConfigError("synthetic spec: bad speed range");
}

std::vector<MotionPattern> motion_patterns(int num_classes) {
  std::vector<MotionPattern> out;
  for (int k = 0; k < num_classes; ++k) {
    const double angle = 2.0 * std::numbers::pi * k / num_classes;
    out.push_back({angle, "move_" + std::to_string(static_cast<int>(std::lround(angle * 180.0 / std::numbers::pi))) + "deg"});
  }
  return out;
}

SyntheticDataset generate_synthetic_dataset(const SyntheticDatasetSpec& spec) {
  spec.validate();
  const auto patterns = motion_patterns(spec.num_classes);
  SyntheticDataset ds;
  for (const auto& p : patterns) ds.manifest.class_names.push_back(p.name);

  Rng rng(spec.seed);
  int index = 0;
  for (int c = 0; c < spec.clips_per_class; ++c) {
    for (int label = 0; label < spec.num_classes; ++label, ++index) {
      ClipRecipe r;
      r.label = label;
      const int seg = uniform_int(rng, spec.segment_min, spec.segment_max);
      const int pre = uniform_int(rng, 0, spec.pad_max);
      const int post = uniform_int(rng, 0, spec.pad_max);
      r.start = pre;
      r.end = pre + seg;
      r.num_frames = pre + seg + post;
      r.box_side = uniform_int(rng, spec.box_min, spec.box_max);
      r.box_x = uniform_int(rng, 0, spec.frame_size - r.box_side);
      r.box_y = uniform_int(rng, 0, spec.frame_size - r.box_side);
      r.px = uniform(rng, 0, r.box_side);
      r.py = uniform(rng, 0, r.box_side);
      const double speed = uniform(rng, spec.speed_min, spec.speed_max);
      r.vx = speed * std::cos(patterns[label].angle);
      r.vy = speed * std::sin(patterns[label].angle);
      r.radius = uniform(rng, 5.0, 7.5);
      r.bg0 = random_color(rng) * 0.6f;
      r.bg1 = random_color(rng) * 0.6f;
      r.bg_angle = uniform(rng, 0, 2 * std::numbers::pi);
      // Blob brighter than the background so it stays visible.
      r.blob_color = 0.65f + 0.35f * random_color(rng);
      r.clutter_w = uniform_int(rng, 6, 16);
      r.clutter_h = uniform_int(rng, 6, 16);
      r.clutter_x = uniform_int(rng, 0, spec.frame_size - r.clutter_w);
      r.clutter_y = uniform_int(rng, 0, spec.frame_size - r.clutter_h);
      r.clutter_color = random_color(rng);
      r.noise_seed = rng();
      for (int t = 0; t < r.num_frames; ++t) {
        const double jx = uniform_int(rng, -1, 1), jy = uniform_int(rng, -1, 1);
        Box b{std::clamp(r.box_x + jx, 0.0, static_cast<double>(spec.frame_size - 1)),
              std::clamp(r.box_y + jy, 0.0, static_cast<double>(spec.frame_size - 1)),
              std::clamp(r.box_x + r.box_side + jx, 1.0, static_cast<double>(spec.frame_size)),
              std::clamp(r.box_y + r.box_side + jy, 1.0, static_cast<double>(spec.frame_size))};
        r.boxes.push_back(b);
      }

      ClipAnnotation ann;
      char name[32];
      std::snprintf(name, sizeof name, "clips/%05d.clip", index);
      ann.source = name;
      ann.label = label;
      ann.label_name = patterns[label].name;
      ann.start = r.start;
      ann.end = r.end;
      ann.fps = spec.fps;
      ann.boxes = r.boxes;
      ann.validate(spec.frame_size, spec.frame_size);
      ds.videos.push_back(render(r, spec.frame_size));
      ds.manifest.records.push_back(std::move(ann));
    }
  }
  return ds;
}

std::string write_dataset(const SyntheticDataset& dataset, const std::string& out_dir, bool frame_dirs) {
  fs::create_directories(fs::path(out_dir) / "clips");
  Manifest m = dataset.manifest;
  m.root = out_dir;
  for (std::size_t i = 0; i < m.records.size(); ++i) {
    auto& rec = m.records[i];
    if (frame_dirs) {
      rec.source = fs::path(rec.source).replace_extension("").string();
      save_frame_dir((fs::path(out_dir) / rec.source).string(), dataset.videos[i]);
    } else {
      save_raw_clip((fs::path(out_dir) / rec.source).string(), dataset.videos[i]);
    }
  }
  const auto path = (fs::path(out_dir) / "manifest.json").string();
  save_manifest(m, path);
  return path;
}

nlohmann::json to_json(const SyntheticDatasetSpec& s) {
  return {{"num_classes", s.num_classes}, {"clips_per_class", s.clips_per_class},
          {"frame_size", s.frame_size},   {"box_min", s.box_min},
          {"box_max", s.box_max},         {"segment_min", s.segment_min},
          {"segment_max", s.segment_max}, {"pad_max", s.pad_max},
          {"speed_min", s.speed_min},     {"speed_max", s.speed_max},
          {"fps", s.fps},                 {"seed", s.seed}};
}

SyntheticDatasetSpec synthetic_spec_from_json(const nlohmann::json& doc) {
  SyntheticDatasetSpec s;
  const auto defaults = to_json(s);
  for (const auto& [key, value] : doc.items()) {
    if (!defaults.contains(key)) throw ConfigError("synthetic spec: unknown key '" + key + "'");
    if (value.is_number() != defaults.at(key).is_number()) {
      throw ConfigError("synthetic spec: type mismatch for key '" + key + "'");
    }
  }
  auto merged = defaults;
  merged.update(doc);
  try {
    s.num_classes = merged.at("num_classes").get<int>();
    s.clips_per_class = merged.at("clips_per_class").get<int>();
    s.frame_size = merged.at("frame_size").get<int>();
    s.box_min = merged.at("box_min").get<int>();
    s.box_max = merged.at("box_max").get<int>();
    s.segment_min = merged.at("segment_min").get<int>();
    s.segment_max = merged.at("segment_max").get<int>();
    s.pad_max = merged.at("pad_max").get<int>();
    s.speed_min = merged.at("speed_min").get<double>();
    s.speed_max = merged.at("speed_max").get<double>();
    s.fps = merged.at("fps").get<double>();
    s.seed = merged.at("seed").get<uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("synthetic spec: ") + e.what());
  }
  s.validate();
  return s;
}

}  // namespace gesture
