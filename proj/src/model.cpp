#include "gesture/model.hpp"

#include "gesture/error.hpp"

namespace gesture {

torch::Tensor preprocess_clip(const torch::Tensor& clip_thwc, const InputNorm& norm) {
  if (clip_thwc.dim() != 4 || clip_thwc.size(3) != 3) {
    throw ShapeError("preprocess expects a (T,H,W,3) clip, got " + std::string(c10::str(clip_thwc.sizes())));
  }
  auto x = clip_thwc.to(torch::kFloat).permute({3, 0, 1, 2});
  auto mean = torch::tensor({norm.mean[0], norm.mean[1], norm.mean[2]}, torch::kFloat).view({3, 1, 1, 1});
  auto std = torch::tensor({norm.std[0], norm.std[1], norm.std[2]}, torch::kFloat).view({3, 1, 1, 1});
  return ((x - mean) / std).contiguous();
}

GestureNetImpl::GestureNetImpl(const BackboneConfig& config, int64_t embedding_dim) {
  backbone_ = register_module("backbone", build_backbone(config));
  head_ = register_module("head", EmbeddingHead(backbone_->output_shape().c, embedding_dim));
}

ModelOutput GestureNetImpl::forward(const torch::Tensor& clip, const RunMode& mode) {
  auto b = backbone_->forward(clip, mode);
  ModelOutput out;
  out.embedding = head_->forward(b.features, mode.training);
  out.features = std::move(b.features);
  out.attention = std::move(b.attention);
  return out;
}

ModelStats network_stats(GestureNetImpl& model) {
  ModelStats stats;
  for (const auto& p : model.parameters()) {
    if (p.requires_grad()) stats.params += p.numel();
  }
  Cost cost = model.backbone()->cost();
  model.head()->trace(model.backbone()->output_shape(), cost);
  stats.flops = 2 * cost.macs;
  return stats;
}

std::vector<std::pair<std::string, torch::Tensor>> named_state(torch::nn::Module& module) {
  std::vector<std::pair<std::string, torch::Tensor>> out;
  for (const auto& p : module.named_parameters()) out.emplace_back(p.key(), p.value());
  for (const auto& b : module.named_buffers()) out.emplace_back(b.key(), b.value());
  return out;
}

}  // namespace gesture
