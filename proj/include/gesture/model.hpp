#pragma once

#include <array>
#include <vector>

#include <torch/torch.h>

#include "gesture/backbone.hpp"
#include "gesture/metric_losses.hpp"

namespace gesture {

// Per-channel standardization applied after scaling pixels to [0,1]. Stored
// in checkpoints alongside the weights.
struct InputNorm {
  std::array<double, 3> mean{0.485, 0.456, 0.406};
  std::array<double, 3> std{0.229, 0.224, 0.225};
};

// (T,H,W,3) float clip in [0,1] -> normalized (3,T,H,W).
torch::Tensor preprocess_clip(const torch::Tensor& clip_thwc, const InputNorm& norm);

struct ModelOutput {
  torch::Tensor embedding;  // (B,256) or (256), unit norm
  FeatureMap features;
  std::vector<AttentionScores> attention;
};

// Backbone followed by the embedding head.
class GestureNetImpl : public torch::nn::Module {
 public:
  explicit GestureNetImpl(const BackboneConfig& config, int64_t embedding_dim = 256);

  ModelOutput forward(const torch::Tensor& clip, const RunMode& mode);

  Backbone& backbone() { return backbone_; }
  EmbeddingHead& head() { return head_; }
  const BackboneConfig& config() const { return backbone_->config(); }

 private:
  Backbone backbone_{nullptr};
  EmbeddingHead head_{nullptr};
};
TORCH_MODULE(GestureNet);

// Whole network: model_stats of the backbone plus the embedding projection
// (class centers excluded).
ModelStats network_stats(GestureNetImpl& model);

// Named parameters and buffers in a stable order, used by checkpoints.
std::vector<std::pair<std::string, torch::Tensor>> named_state(torch::nn::Module& module);

}  // namespace gesture
