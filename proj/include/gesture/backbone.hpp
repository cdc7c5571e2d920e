#pragma once

#include <memory>
#include <vector>

#include <torch/torch.h>

#include "gesture/attention.hpp"
#include "gesture/layer_spec.hpp"
#include "gesture/layers.hpp"
#include "gesture/ops.hpp"

namespace gesture {

// Per-frame squeeze-excite: spatial-only pooling gives a (C,T,1,1) gate so
// every temporal position is gated independently.
class SqueezeExciteImpl : public torch::nn::Module {
 public:
  explicit SqueezeExciteImpl(int64_t channels, int64_t reduction = 4);

  FeatureMap forward(const FeatureMap& x);
  // Gate (B,C,T,1,1) for the given squeeze vector (B,C,T,1,1).
  torch::Tensor gate(const torch::Tensor& squeezed);
  Shape trace(const Shape& in, Cost& cost) const;

  Conv3dUnit& fc2() { return fc2_; }

 private:
  Conv3dUnit fc1_{nullptr};
  Conv3dUnit fc2_{nullptr};
};
TORCH_MODULE(SqueezeExcite);

// conv -> BN -> activation, used for the stem and head rows.
class ConvBnActImpl : public torch::nn::Module {
 public:
  ConvBnActImpl(const ConvGeometry& g, Nonlinearity nl);
  FeatureMap forward(const FeatureMap& x, bool training);
  Shape trace(const Shape& in, Cost& cost) const;

 private:
  Nonlinearity nl_;
  Conv3dUnit conv_{nullptr};
  torch::nn::BatchNorm3d bn_{nullptr};
};
TORCH_MODULE(ConvBnAct);

// Separable 3D inverted residual: 1x1x1 expand, depth-wise 1xkxk, optional
// SE, tx1x1 project, continuous dropout, then temporal average pooling when
// the row asks for temporal stride 2.
class BottleneckImpl : public torch::nn::Module {
 public:
  BottleneckImpl(int64_t in_channels, const LayerSpec& spec, double width_multiplier,
                 double dropout_p);

  FeatureMap forward(const FeatureMap& x, const RunMode& mode);
  Shape trace(const Shape& in, Cost& cost) const;

  bool has_residual() const { return residual_; }
  int64_t in_channels() const { return in_channels_; }
  torch::nn::BatchNorm3d& project_bn() { return project_bn_; }
  Conv3dUnit& project() { return project_; }

 private:
  int64_t in_channels_;
  int64_t out_channels_;
  Nonlinearity nl_;
  int temporal_stride_;
  bool residual_;
  DropoutSpec dropout_;
  bool use_dropout_;
  Conv3dUnit expand_{nullptr};
  torch::nn::BatchNorm3d expand_bn_{nullptr};
  Conv3dUnit depthwise_{nullptr};
  torch::nn::BatchNorm3d depthwise_bn_{nullptr};
  SqueezeExcite se_{nullptr};
  Conv3dUnit project_{nullptr};
  torch::nn::BatchNorm3d project_bn_{nullptr};
};
TORCH_MODULE(Bottleneck);

struct BackboneOutput {
  FeatureMap features;
  // One entry per attention block, in network order.
  std::vector<AttentionScores> attention;
};

class BackboneImpl : public torch::nn::Module {
 public:
  explicit BackboneImpl(BackboneConfig config);

  // Accepts (3,T,S,S) or (B,3,T,S,S) normalized clips.
  BackboneOutput forward(const torch::Tensor& clip, const RunMode& mode);

  // Output shape after every table row for one (3,T,S,S) input.
  std::vector<Shape> shape_trace() const;
  Cost cost() const;

  const BackboneConfig& config() const { return config_; }
  Shape input_shape() const;
  Shape output_shape() const;
  // Table row indices holding attention blocks.
  std::vector<std::size_t> attention_rows() const;
  // Zero-based index of the bneck right before each attention block.
  std::vector<int> attention_after_bneck() const;

  // Applies the sampling config to every attention block.
  void set_gumbel(const GumbelConfig& cfg);
  std::vector<AttentionBlock> attention_blocks();

  std::size_t size() const { return stages_.size(); }
  torch::nn::Module& stage(std::size_t i) { return *stages_.at(i); }

 private:
  Shape trace_into(std::vector<Shape>* shapes, Cost& cost) const;

  BackboneConfig config_;
  std::vector<std::shared_ptr<torch::nn::Module>> stages_;
};
TORCH_MODULE(Backbone);

// Builds and initializes a backbone; attention rows get AttentionBlocks.
Backbone build_backbone(const BackboneConfig& config);

struct ModelStats {
  int64_t params = 0;
  int64_t flops = 0;
};

// Backbone rows (stem, bnecks, attention blocks, head conv): trainable scalar
// count and 2 * conv MACs for one clip at the configured input size.
ModelStats model_stats(BackboneImpl& backbone);

}  // namespace gesture
