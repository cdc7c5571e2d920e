#include "gesture/augment.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "gesture/error.hpp"
#include "gesture/ops.hpp"

namespace gesture {
namespace {

namespace F = torch::nn::functional;

double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

torch::Tensor resize_hwc(const torch::Tensor& img, int64_t h, int64_t w) {
  if (img.size(-3) == h && img.size(-2) == w) return img;
  const bool single = img.dim() == 3;
  auto nchw = (single ? img.unsqueeze(0) : img).permute({0, 3, 1, 2});
  auto out = F::interpolate(nchw, F::InterpolateFuncOptions()
                                      .size(std::vector<int64_t>{h, w})
                                      .mode(torch::kBilinear)
                                      .align_corners(false));
  out = out.permute({0, 2, 3, 1}).contiguous();
  return single ? out.squeeze(0) : out;
}

}  // namespace

double window_overlap_ratio(const ClipAnnotation& ann, int start, int window_length) {
  const int overlap = std::max(0, std::min(ann.end, start + window_length) - std::max(ann.start, start));
  return static_cast<double>(overlap) / std::min(ann.length(), window_length);
}

std::vector<int> legal_window_starts(const ClipAnnotation& ann, int window_length,
                                     double min_intersection) {
  const int n = ann.num_frames();
  const int lo = std::min(0, n - window_length);
  const int hi = std::max(0, n - window_length);
  std::vector<int> starts;
  for (int s = lo; s <= hi; ++s) {
    if (window_overlap_ratio(ann, s, window_length) >= min_intersection) starts.push_back(s);
  }
  return starts;
}

Window sample_training_window(const ClipAnnotation& ann, int window_length, double min_intersection,
                              Rng& rng) {
  const auto starts = legal_window_starts(ann, window_length, min_intersection);
  if (starts.empty()) {
    throw DataError("no legal training window for '" + ann.source + "'");
  }
  std::uniform_int_distribution<std::size_t> pick(0, starts.size() - 1);
  return {starts[pick(rng)], window_length};
}

std::vector<int> window_frame_indices(const Window& window, int num_frames) {
  std::vector<int> idx(static_cast<std::size_t>(window.length));
  for (int i = 0; i < window.length; ++i) idx[i] = std::clamp(window.start + i, 0, num_frames - 1);
  return idx;
}

Video gather_frames(const Video& video, std::span<const int> indices) {
  std::vector<int64_t> idx(indices.begin(), indices.end());
  for (auto i : idx) {
    if (i < 0 || i >= video.size(0)) {
      throw DataError("frame " + std::to_string(i) + " missing (video has " +
                      std::to_string(video.size(0)) + " frames)");
    }
  }
  return video.index_select(0, torch::tensor(idx, torch::kLong));
}

std::vector<Box> gather_boxes(std::span<const Box> boxes, std::span<const int> indices) {
  std::vector<Box> out;
  out.reserve(indices.size());
  for (int i : indices) {
    if (i < 0 || i >= static_cast<int>(boxes.size())) throw DataError("box missing for frame " + std::to_string(i));
    out.push_back(boxes[i]);
  }
  return out;
}

Box aggregate_box(std::span<const Box> boxes, BoxMode mode) {
  if (boxes.empty()) throw DataError("no boxes to aggregate");
  Box r = boxes.front();
  if (mode == BoxMode::kMax) {
    for (const auto& b : boxes) {
      r.x0 = std::min(r.x0, b.x0);
      r.y0 = std::min(r.y0, b.y0);
      r.x1 = std::max(r.x1, b.x1);
      r.y1 = std::max(r.y1, b.y1);
    }
  } else {
    r = {};
    for (const auto& b : boxes) {
      r.x0 += b.x0;
      r.y0 += b.y0;
      r.x1 += b.x1;
      r.y1 += b.y1;
    }
    const double n = static_cast<double>(boxes.size());
    r = {r.x0 / n, r.y0 / n, r.x1 / n, r.y1 / n};
  }
  return r;
}

Video crop_and_resize(const Video& frames, std::span<const Box> boxes, BoxMode mode, int out_size) {
  if (frames.dim() != 4 || frames.size(3) != 3) throw ShapeError("crop expects (T,H,W,3) frames");
  if (static_cast<int64_t>(boxes.size()) != frames.size(0)) {
    throw DataError("crop needs one box per frame (" + std::to_string(boxes.size()) + " boxes, " +
                    std::to_string(frames.size(0)) + " frames)");
  }
  const Box box = aggregate_box(boxes, mode);
  if (!(box.width() > 0 && box.height() > 0)) throw DataError("degenerate crop box (zero area)");

  const int64_t H = frames.size(1), W = frames.size(2);
  int64_t x0 = static_cast<int64_t>(std::floor(box.x0));
  int64_t y0 = static_cast<int64_t>(std::floor(box.y0));
  int64_t x1 = static_cast<int64_t>(std::ceil(box.x1));
  int64_t y1 = static_cast<int64_t>(std::ceil(box.y1));
  // Grow the shorter side around the center; shift back inside the frame
  // when the square fits.
  const int64_t side = std::max(x1 - x0, y1 - y0);
  auto square = [side](int64_t lo, int64_t hi, int64_t limit) {
    int64_t s = lo - (side - (hi - lo)) / 2;
    if (side <= limit) s = std::clamp<int64_t>(s, 0, limit - side);
    return s;
  };
  x0 = square(x0, x1, W);
  y0 = square(y0, y1, H);

  auto crop = torch::zeros({frames.size(0), side, side, 3}, frames.options());
  const int64_t sx0 = std::max<int64_t>(x0, 0), sy0 = std::max<int64_t>(y0, 0);
  const int64_t sx1 = std::min(x0 + side, W), sy1 = std::min(y0 + side, H);
  if (sx1 > sx0 && sy1 > sy0) {
    using torch::indexing::Slice;
    crop.index_put_({Slice(), Slice(sy0 - y0, sy1 - y0), Slice(sx0 - x0, sx1 - x0)},
                    frames.index({Slice(), Slice(sy0, sy1), Slice(sx0, sx1)}));
  }
  return resize_hwc(crop, out_size, out_size);
}

PhotometricParams sample_photometric_params(const AugmentConfig& cfg, Rng& rng) {
  PhotometricParams p;
  p.brightness = uniform(rng, -cfg.brightness, cfg.brightness);
  p.contrast = uniform(rng, -cfg.contrast, cfg.contrast);
  p.saturation = uniform(rng, -cfg.saturation, cfg.saturation);
  p.hue = uniform(rng, -cfg.hue, cfg.hue);
  return p;
}

EraseParams sample_erase_params(const AugmentConfig& cfg, int height, int width, Rng& rng) {
  EraseParams e;
  e.noise_seed = rng();
  if (uniform(rng, 0.0, 1.0) >= cfg.erase_prob) return e;
  const double area = uniform(rng, cfg.erase_area_min, cfg.erase_area_max) * height * width;
  const double log_aspect = uniform(rng, std::log(cfg.erase_aspect_min), std::log(cfg.erase_aspect_max));
  const double aspect = std::exp(log_aspect);
  e.width = std::clamp(static_cast<int>(std::lround(std::sqrt(area * aspect))), 1, width);
  e.height = std::clamp(static_cast<int>(std::lround(std::sqrt(area / aspect))), 1, height);
  e.x0 = std::uniform_int_distribution<int>(0, width - e.width)(rng);
  e.y0 = std::uniform_int_distribution<int>(0, height - e.height)(rng);
  e.enabled = true;
  return e;
}

AugmentParams sample_augment_params(const AugmentConfig& cfg, int height, int width, Rng& rng) {
  AugmentParams p;
  p.photometric = sample_photometric_params(cfg, rng);
  p.erase = sample_erase_params(cfg, height, width, rng);
  p.mixup_weight = uniform(rng, 0.0, cfg.mixup_max);
  p.distractor = make_distractor_image(rng(), height, width);
  return p;
}

Video photometric_augment(const Video& clip, const PhotometricParams& p) {
  if (p.brightness == 0 && p.contrast == 0 && p.saturation == 0 && p.hue == 0) return clip;
  auto x = clip;
  if (p.brightness != 0) x = x + p.brightness;
  if (p.contrast != 0) x = (x - 0.5) * (1.0 + p.contrast) + 0.5;
  if (p.saturation != 0) {
    auto luma = (x * torch::tensor({0.299, 0.587, 0.114}, x.options())).sum(-1, true);
    x = luma + (x - luma) * (1.0 + p.saturation);
  }
  if (p.hue != 0) {
    const double th = p.hue * 2.0 * std::numbers::pi;
    const double c = std::cos(th), s = std::sin(th);
    // RGB -> YIQ, rotate IQ, YIQ -> RGB, folded into one 3x3 matrix.
    auto to_yiq = torch::tensor({{0.299, 0.587, 0.114}, {0.596, -0.274, -0.322}, {0.211, -0.523, 0.312}},
                                torch::kDouble);
    auto rot = torch::tensor({{1.0, 0.0, 0.0}, {0.0, c, -s}, {0.0, s, c}}, torch::kDouble);
    auto m = torch::matmul(torch::linalg_inv(to_yiq), torch::matmul(rot, to_yiq)).to(x.scalar_type());
    x = torch::matmul(x, m.t());
  }
  return x.clamp(0.0, 1.0);
}

Video random_erase(const Video& clip, const EraseParams& params) {
  if (!params.enabled) return clip;
  const int64_t H = clip.size(1), W = clip.size(2);
  if (params.x0 < 0 || params.y0 < 0 || params.x0 + params.width > W || params.y0 + params.height > H ||
      params.width < 1 || params.height < 1) {
    throw DataError("erase rectangle outside the frame");
  }
  auto gen = make_generator(params.noise_seed);
  auto noise = torch::rand({params.height, params.width, 3}, gen, clip.options());
  auto out = clip.clone();
  using torch::indexing::Slice;
  out.index_put_({Slice(), Slice(params.y0, params.y0 + params.height),
                  Slice(params.x0, params.x0 + params.width)},
                 noise.unsqueeze(0).expand({clip.size(0), params.height, params.width, 3}));
  return out;
}

Video random_erase(const Video& clip, const AugmentConfig& cfg, Rng& rng) {
  return random_erase(clip, sample_erase_params(cfg, static_cast<int>(clip.size(1)),
                                                static_cast<int>(clip.size(2)), rng));
}

Video mixup_distractor(const Video& clip, const torch::Tensor& image, double u) {
  if (u < 0 || u > 1) throw DataError("mixup weight must be in [0,1]");
  if (u == 0 || !image.defined()) return clip;
  auto img = resize_hwc(image.to(clip.scalar_type()), clip.size(1), clip.size(2));
  return clip * (1.0 - u) + img.unsqueeze(0) * u;
}

Video augment_clip(const Video& clip, const AugmentParams& params) {
  auto x = photometric_augment(clip, params.photometric);
  x = random_erase(x, params.erase);
  return mixup_distractor(x, params.distractor, params.mixup_weight);
}

torch::Tensor make_distractor_image(uint64_t seed, int height, int width) {
  Rng rng(seed);
  auto ys = torch::linspace(0.0, 1.0, height).view({height, 1, 1});
  auto xs = torch::linspace(0.0, 1.0, width).view({1, width, 1});
  auto c0 = torch::tensor({uniform(rng, 0, 1), uniform(rng, 0, 1), uniform(rng, 0, 1)}).view({1, 1, 3});
  auto c1 = torch::tensor({uniform(rng, 0, 1), uniform(rng, 0, 1), uniform(rng, 0, 1)}).view({1, 1, 3});
  const double a = uniform(rng, 0, 2 * std::numbers::pi);
  auto ramp = (xs * std::cos(a) + ys * std::sin(a) + 1.5) / 3.0;
  auto img = c0 + (c1 - c0) * ramp;
  const int shapes = std::uniform_int_distribution<int>(3, 8)(rng);
  for (int k = 0; k < shapes; ++k) {
    auto color = torch::tensor({uniform(rng, 0, 1), uniform(rng, 0, 1), uniform(rng, 0, 1)}).view({1, 1, 3});
    const double cx = uniform(rng, 0, 1), cy = uniform(rng, 0, 1);
    const double rx = uniform(rng, 0.05, 0.3), ry = uniform(rng, 0.05, 0.3);
    torch::Tensor inside;
    if (k % 2 == 0) {
      inside = ((xs - cx) / rx).square() + ((ys - cy) / ry).square() <= 1.0;
    } else {
      inside = ((xs - cx).abs() <= rx) & ((ys - cy).abs() <= ry);
    }
    img = torch::where(inside, color, img);
  }
  return img.clamp(0.0, 1.0).contiguous();
}

}  // namespace gesture
