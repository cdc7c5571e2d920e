#pragma once

#include <string>
#include <vector>

#include <torch/torch.h>

namespace gesture {

// Pixel box (x0,y0) inclusive, (x1,y1) exclusive.
struct Box {
  double x0 = 0, y0 = 0, x1 = 0, y1 = 0;

  double width() const { return x1 - x0; }
  double height() const { return y1 - y0; }
  double area() const { return width() * height(); }
  bool operator==(const Box&) const = default;
};

// Videos live in memory as (T,H,W,3) float tensors with values in [0,1].
using Video = torch::Tensor;

// Raw clip file: magic "GCLP", four little-endian int32 (T,H,W,C), then
// T*H*W*C uint8 samples.
void save_raw_clip(const std::string& path, const Video& video);
Video load_raw_clip(const std::string& path);

// Directory of numbered image files (any format OpenCV reads), sorted by the
// numeric part of the filename.
void save_frame_dir(const std::string& dir, const Video& video);
Video load_frame_dir(const std::string& dir);

// Dispatches on whether `path` is a directory.
Video load_video(const std::string& path);

// One box per line: "x0 y0 x1 y1" (commas also accepted).
std::vector<Box> load_boxes(const std::string& path);

// uint8 <-> [0,1] float conversion with rounding.
torch::Tensor to_uint8(const Video& video);
Video from_uint8(const torch::Tensor& bytes);

}  // namespace gesture
