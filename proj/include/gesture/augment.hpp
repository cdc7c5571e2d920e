#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include <torch/torch.h>

#include "gesture/manifest.hpp"
#include "gesture/video_io.hpp"

namespace gesture {

using Rng = std::mt19937_64;

// Temporal window [start, start + length). start may be negative when the
// video is shorter than the window; such indices repeat the first frame.
struct Window {
  int start = 0;
  int length = 16;
  int end() const { return start + length; }
};

// overlap(gt, window) / min(|gt|, T)
double window_overlap_ratio(const ClipAnnotation& ann, int start, int window_length);

// Every start inside the video bounds whose ratio reaches min_intersection.
std::vector<int> legal_window_starts(const ClipAnnotation& ann, int window_length,
                                     double min_intersection);

// Uniform draw among legal_window_starts.
Window sample_training_window(const ClipAnnotation& ann, int window_length, double min_intersection,
                              Rng& rng);

// Frame indices of a window, clamped to [0, num_frames) so out-of-range
// positions duplicate the first (or last) frame.
std::vector<int> window_frame_indices(const Window& window, int num_frames);

Video gather_frames(const Video& video, std::span<const int> indices);
std::vector<Box> gather_boxes(std::span<const Box> boxes, std::span<const int> indices);

enum class BoxMode { kMax, kMean };

// Coordinate-wise union (kMax) or arithmetic mean (kMean) of the boxes.
Box aggregate_box(std::span<const Box> boxes, BoxMode mode);

// Crops every frame with the one aggregated box, grown to a square around its
// center, and bilinearly resizes to out_size x out_size. Area outside the
// frame is zero.
Video crop_and_resize(const Video& frames, std::span<const Box> boxes, BoxMode mode, int out_size);

struct PhotometricParams {
  double brightness = 0;  // additive
  double contrast = 0;    // gain (1 + c) around mid-gray 0.5
  double saturation = 0;  // gain (1 + s) around per-pixel luma
  double hue = 0;         // rotation by hue * 2pi in the YIQ chroma plane
};

struct EraseParams {
  bool enabled = false;
  int x0 = 0, y0 = 0, width = 0, height = 0;
  uint64_t noise_seed = 0;
};

struct AugmentParams {
  PhotometricParams photometric;
  EraseParams erase;
  double mixup_weight = 0;
  torch::Tensor distractor;  // (H,W,3) in [0,1]; undefined disables mixup
};

struct AugmentConfig {
  double brightness = 0.25;
  double contrast = 0.25;
  double saturation = 0.25;
  double hue = 0.05;
  double erase_prob = 0.5;
  double erase_area_min = 0.02;
  double erase_area_max = 0.2;
  double erase_aspect_min = 0.3;
  double erase_aspect_max = 3.3;
  double mixup_max = 0.4;
  double min_intersection = 0.6;
};

PhotometricParams sample_photometric_params(const AugmentConfig& cfg, Rng& rng);
EraseParams sample_erase_params(const AugmentConfig& cfg, int height, int width, Rng& rng);
// Draws every augmentation once for a clip of the given frame size.
AugmentParams sample_augment_params(const AugmentConfig& cfg, int height, int width, Rng& rng);

// Same pixel mapping on every frame; output clamped to [0,1].
Video photometric_augment(const Video& clip, const PhotometricParams& params);
// Fills the rectangle with uniform noise drawn from params.noise_seed; the
// noise patch is shared by all frames.
Video random_erase(const Video& clip, const EraseParams& params);
// Samples the rectangle from rng, then erases.
Video random_erase(const Video& clip, const AugmentConfig& cfg, Rng& rng);
// (1 - u) * frame + u * image for every frame; image is resized to the frame.
Video mixup_distractor(const Video& clip, const torch::Tensor& image, double u);

// photometric -> erase -> mixup
Video augment_clip(const Video& clip, const AugmentParams& params);

// Static clutter image standing in for a natural photo: smooth gradient with
// random rectangles and ellipses.
torch::Tensor make_distractor_image(uint64_t seed, int height, int width);

}  // namespace gesture
