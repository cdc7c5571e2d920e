#include "gesture/backbone.hpp"

#include <sstream>

#include "gesture/error.hpp"

namespace gesture {
namespace {

torch::Tensor activate(const torch::Tensor& x, Nonlinearity nl) {
  switch (nl) {
    case Nonlinearity::kReLU: return torch::relu(x);
    case Nonlinearity::kHSwish: return hswish(x);
    case Nonlinearity::kNone: return x;
  }
  return x;
}

// MobileNet-V3 divisor rounding for SE widths.
int64_t make_divisible(double v, int64_t divisor = 8) {
  int64_t r = std::max<int64_t>(divisor, static_cast<int64_t>(v + divisor / 2.0) / divisor * divisor);
  if (r < 0.9 * v) r += divisor;
  return r;
}

ConvGeometry pointwise(int64_t in, int64_t out, int64_t kt = 1, bool bias = false) {
  ConvGeometry g;
  g.in_channels = in;
  g.out_channels = out;
  g.kt = kt;
  g.bias = bias;
  return g;
}

}  // namespace

SqueezeExciteImpl::SqueezeExciteImpl(int64_t channels, int64_t reduction) {
  const int64_t squeezed = make_divisible(static_cast<double>(channels) / reduction);
  fc1_ = register_module("fc1", Conv3dUnit(pointwise(channels, squeezed, 1, true)));
  fc2_ = register_module("fc2", Conv3dUnit(pointwise(squeezed, channels, 1, true)));
}

torch::Tensor SqueezeExciteImpl::gate(const torch::Tensor& squeezed) {
  return hsigmoid(fc2_->forward(torch::relu(fc1_->forward(squeezed))));
}

FeatureMap SqueezeExciteImpl::forward(const FeatureMap& x) {
  return x * gate(spatial_squeeze(x));
}

Shape SqueezeExciteImpl::trace(const Shape& in, Cost& cost) const {
  fc2_->trace(fc1_->trace({in.c, in.t, 1, 1}, cost), cost);
  return in;
}

ConvBnActImpl::ConvBnActImpl(const ConvGeometry& g, Nonlinearity nl) : nl_(nl) {
  conv_ = register_module("conv", Conv3dUnit(g));
  bn_ = register_module("bn", make_bn(g.out_channels));
}

FeatureMap ConvBnActImpl::forward(const FeatureMap& x, bool training) {
  return activate(batch_norm(bn_, conv_->forward(x), training), nl_);
}

Shape ConvBnActImpl::trace(const Shape& in, Cost& cost) const {
  return conv_->trace(in, cost);
}

BottleneckImpl::BottleneckImpl(int64_t in_channels, const LayerSpec& spec, double width_multiplier,
                               double dropout_p)
    : in_channels_(in_channels),
      out_channels_(scale_channels(spec.out_channels, width_multiplier)),
      nl_(spec.nonlinearity),
      temporal_stride_(spec.temporal_stride),
      residual_(false),
      use_dropout_(spec.use_dropout) {
  if (spec.op_kind != OpKind::kBneck || !spec.expand_size) {
    throw ConfigError("bottleneck built from a non-bneck row");
  }
  dropout_.p = dropout_p;
  const int64_t expanded = scale_channels(*spec.expand_size, width_multiplier);
  residual_ = in_channels_ == out_channels_ && spec.spatial_stride == 1 && spec.temporal_stride == 1;

  // MobileNet-V3 omits the expansion conv when it would be channel-preserving.
  if (expanded != in_channels_) {
    expand_ = register_module("expand", Conv3dUnit(pointwise(in_channels_, expanded)));
    expand_bn_ = register_module("expand_bn", make_bn(expanded));
  }
  ConvGeometry dw;
  dw.in_channels = dw.out_channels = dw.groups = expanded;
  dw.kh = dw.kw = spec.spatial_kernel;
  dw.sh = dw.sw = spec.spatial_stride;
  depthwise_ = register_module("depthwise", Conv3dUnit(dw));
  depthwise_bn_ = register_module("depthwise_bn", make_bn(expanded));
  if (spec.use_se) se_ = register_module("se", SqueezeExcite(expanded));
  project_ = register_module("project",
                             Conv3dUnit(pointwise(expanded, out_channels_, spec.temporal_kernel)));
  project_bn_ = register_module("project_bn", make_bn(out_channels_));
}

FeatureMap BottleneckImpl::forward(const FeatureMap& x, const RunMode& mode) {
  if (x.dim() != 5 || x.size(1) != in_channels_) {
    throw ShapeError("bottleneck expects " + std::to_string(in_channels_) + " input channels, got " +
                     (x.dim() == 5 ? std::to_string(x.size(1)) : "a " + std::to_string(x.dim()) + "-d tensor"));
  }
  auto y = x;
  if (expand_) y = activate(batch_norm(expand_bn_, expand_->forward(y), mode.training), nl_);
  y = activate(batch_norm(depthwise_bn_, depthwise_->forward(y), mode.training), nl_);
  if (se_) y = se_->forward(y);
  y = batch_norm(project_bn_, project_->forward(y), mode.training);
  if (use_dropout_) y = continuous_dropout(y, dropout_, mode);
  if (temporal_stride_ == 2) y = temporal_avg_pool(y, 2, 2);
  if (residual_) y = y + x;
  return y;
}

Shape BottleneckImpl::trace(const Shape& in, Cost& cost) const {
  Shape s = in;
  if (expand_) s = expand_->trace(s, cost);
  s = depthwise_->trace(s, cost);
  if (se_) se_->trace(s, cost);
  s = project_->trace(s, cost);
  if (temporal_stride_ == 2) s.t = (s.t - 2) / 2 + 1;
  return s;
}

BackboneImpl::BackboneImpl(BackboneConfig config) : config_(std::move(config)) {
  config_.validate();
  int64_t channels = 3;
  for (std::size_t i = 0; i < config_.layers.size(); ++i) {
    const auto& row = config_.layers[i];
    const std::string name = "layer" + std::to_string(i);
    switch (row.op_kind) {
      case OpKind::kConv3d: {
        ConvGeometry g;
        g.in_channels = channels;
        g.out_channels = scale_channels(row.out_channels, config_.width_multiplier);
        g.kt = row.temporal_kernel;
        g.kh = g.kw = row.spatial_kernel;
        g.sh = g.sw = row.spatial_stride;
        stages_.push_back(register_module(name, ConvBnAct(g, row.nonlinearity)));
        channels = g.out_channels;
        break;
      }
      case OpKind::kBneck: {
        auto block = Bottleneck(channels, row, config_.width_multiplier, config_.dropout_p);
        channels = scale_channels(row.out_channels, config_.width_multiplier);
        stages_.push_back(register_module(name, block));
        break;
      }
      case OpKind::kAttention: {
        stages_.push_back(
            register_module(name, AttentionBlock(channels, row.spatial_kernel, row.temporal_kernel)));
        break;
      }
    }
  }
}

Shape BackboneImpl::input_shape() const {
  return {3, config_.input_temporal, config_.input_spatial, config_.input_spatial};
}

Shape BackboneImpl::output_shape() const { return shape_trace().back(); }

BackboneOutput BackboneImpl::forward(const torch::Tensor& clip, const RunMode& mode) {
  const Shape expected = input_shape();
  const bool unbatched = clip.dim() == 4;
  auto x = unbatched ? clip.unsqueeze(0) : clip;
  if (x.dim() != 5 || x.size(1) != expected.c || x.size(2) != expected.t || x.size(3) != expected.h ||
      x.size(4) != expected.w) {
    std::ostringstream os;
    os << "backbone input mismatch: expected (3," << expected.t << ',' << expected.h << ','
       << expected.w << ") clips, got " << clip.sizes();
    throw ShapeError(os.str());
  }
  BackboneOutput out;
  for (std::size_t i = 0; i < stages_.size(); ++i) {
    switch (config_.layers[i].op_kind) {
      case OpKind::kConv3d:
        x = std::static_pointer_cast<ConvBnActImpl>(stages_[i])->forward(x, mode.training);
        break;
      case OpKind::kBneck:
        x = std::static_pointer_cast<BottleneckImpl>(stages_[i])->forward(x, mode);
        break;
      case OpKind::kAttention: {
        auto r = std::static_pointer_cast<AttentionBlockImpl>(stages_[i])->forward(x, mode);
        x = r.features;
        if (unbatched) {
          r.scores.scores = r.scores.scores.squeeze(0);
          r.scores.logits = r.scores.logits.squeeze(0);
        }
        out.attention.push_back(std::move(r.scores));
        break;
      }
    }
  }
  out.features = unbatched ? x.squeeze(0) : x;
  return out;
}

Shape BackboneImpl::trace_into(std::vector<Shape>* shapes, Cost& cost) const {
  Shape s = input_shape();
  for (std::size_t i = 0; i < stages_.size(); ++i) {
    switch (config_.layers[i].op_kind) {
      case OpKind::kConv3d:
        s = std::static_pointer_cast<ConvBnActImpl>(stages_[i])->trace(s, cost);
        break;
      case OpKind::kBneck:
        s = std::static_pointer_cast<BottleneckImpl>(stages_[i])->trace(s, cost);
        break;
      case OpKind::kAttention:
        s = std::static_pointer_cast<AttentionBlockImpl>(stages_[i])->trace(s, cost);
        break;
    }
    if (shapes) shapes->push_back(s);
  }
  return s;
}

std::vector<Shape> BackboneImpl::shape_trace() const {
  std::vector<Shape> shapes;
  Cost cost;
  trace_into(&shapes, cost);
  return shapes;
}

Cost BackboneImpl::cost() const {
  Cost cost;
  trace_into(nullptr, cost);
  return cost;
}

std::vector<std::size_t> BackboneImpl::attention_rows() const {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < config_.layers.size(); ++i) {
    if (config_.layers[i].op_kind == OpKind::kAttention) rows.push_back(i);
  }
  return rows;
}

std::vector<int> BackboneImpl::attention_after_bneck() const {
  std::vector<int> after;
  int bnecks = 0;
  for (const auto& l : config_.layers) {
    if (l.op_kind == OpKind::kBneck) ++bnecks;
    if (l.op_kind == OpKind::kAttention) after.push_back(bnecks - 1);
  }
  return after;
}

std::vector<AttentionBlock> BackboneImpl::attention_blocks() {
  std::vector<AttentionBlock> blocks;
  for (std::size_t i : attention_rows()) {
    blocks.emplace_back(std::static_pointer_cast<AttentionBlockImpl>(stages_[i]));
  }
  return blocks;
}

void BackboneImpl::set_gumbel(const GumbelConfig& cfg) {
  if (!(cfg.temperature > 0)) throw ConfigError("gumbel temperature must be > 0");
  for (auto& b : attention_blocks()) b->gumbel() = cfg;
}

Backbone build_backbone(const BackboneConfig& config) { return Backbone(config); }

ModelStats model_stats(BackboneImpl& backbone) {
  ModelStats stats;
  for (const auto& p : backbone.parameters()) {
    if (p.requires_grad()) stats.params += p.numel();
  }
  stats.flops = 2 * backbone.cost().macs;
  return stats;
}

}  // namespace gesture
