#pragma once

#include <optional>

#include <torch/torch.h>

namespace gesture {

// Activations are (N,C,T,H,W) unless noted; the unbatched (C,T,H,W) form is
// accepted by the free functions below and returned unbatched.
using FeatureMap = torch::Tensor;

// Explicit run mode passed through every forward. The generator is only
// consulted in training mode (dropout noise, mask sampling).
struct RunMode {
  bool training = false;
  std::optional<at::Generator> rng;

  static RunMode inference() { return {}; }
  static RunMode train(at::Generator gen) { return {true, std::move(gen)}; }
};

at::Generator make_generator(uint64_t seed);

// x * ReLU6(x + 3) / 6
torch::Tensor hswish(const torch::Tensor& x);
// ReLU6(x + 3) / 6
torch::Tensor hsigmoid(const torch::Tensor& x);

// Mean over temporal windows of `kernel` frames taken every `stride` frames.
FeatureMap temporal_avg_pool(const FeatureMap& x, int kernel, int stride);

// Per-frame squeeze: mean over H and W, shape (N,C,T,1,1).
FeatureMap spatial_squeeze(const FeatureMap& x);

struct DropoutSpec {
  double p = 0.1;
  bool enabled_in_training_only = true;
};

// Multiplicative Gaussian noise with mean 1 and variance p/(1-p).
torch::Tensor continuous_dropout(const torch::Tensor& x, const DropoutSpec& spec,
                                 const RunMode& mode);

}  // namespace gesture
