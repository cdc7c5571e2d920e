#pragma once

#include <array>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "gesture/layers.hpp"
#include "gesture/ops.hpp"

namespace gesture {

// Per-position confidences s_tij in [0,1] together with their logits.
struct AttentionScores {
  torch::Tensor scores;  // (T,M,N) or (B,T,M,N)
  torch::Tensor logits;
};

// Spatio-temporal neighbor offsets (dt, di, dj).
struct Neighborhood {
  std::vector<std::array<int, 3>> offsets;

  // Full 3x3x3 cube without its center (26-connected).
  static Neighborhood cube26();

  // Throws ConfigError unless the set is non-empty, excludes (0,0,0) and is
  // closed under negation.
  void validate() const;
};

struct GumbelConfig {
  enum class Mode { kSample, kExpected };
  double temperature = 1.0;
  Mode mode = Mode::kSample;
};

// Mask from logits. Sample mode in training: sigmoid((l + g1 - g2) / tau)
// with i.i.d. standard Gumbel g1, g2; otherwise sigmoid(l).
torch::Tensor gumbel_sigmoid(const torch::Tensor& logits, const GumbelConfig& cfg,
                             const RunMode& mode);

// y = x * (1 + mask), mask broadcast over channels. x is (C,T,M,N) with mask
// (T,M,N), or (B,C,T,M,N) with mask (B,T,M,N).
FeatureMap apply_residual_attention(const FeatureMap& x, const torch::Tensor& mask);

// Mean over positions of |s - I(mean of in-map neighbors > 0.5)|. The
// indicator target is detached. Accepts (T,M,N) or (B,T,M,N); the batched
// form averages over every position of every map.
torch::Tensor hard_tv_loss(const torch::Tensor& scores,
                           const Neighborhood& nbhd = Neighborhood::cube26());

// Two-stream residual attention block. Spatial stream: depth-wise 1xkxk, BN,
// H-Swish, 1x1x1 to one channel. Temporal stream: spatial pool, depth-wise
// tx1x1, BN, H-Swish, 1x1x1 to one channel, broadcast over M,N.
class AttentionBlockImpl : public torch::nn::Module {
 public:
  AttentionBlockImpl(int64_t channels, int spatial_kernel, int temporal_kernel);

  struct Output {
    FeatureMap features;
    AttentionScores scores;
  };

  // Logits of shape (B,T,M,N).
  torch::Tensor logits(const FeatureMap& x, bool training);
  Output forward(const FeatureMap& x, const RunMode& mode);

  Shape trace(const Shape& in, Cost& cost) const;

  GumbelConfig& gumbel() { return gumbel_; }

  // Final 1x1x1 convs of both streams, exposed for initialization and tests.
  Conv3dUnit& spatial_out() { return spatial_out_; }
  Conv3dUnit& temporal_out() { return temporal_out_; }

 private:
  GumbelConfig gumbel_;
  Conv3dUnit spatial_dw_{nullptr};
  torch::nn::BatchNorm3d spatial_bn_{nullptr};
  Conv3dUnit spatial_out_{nullptr};
  Conv3dUnit temporal_dw_{nullptr};
  torch::nn::BatchNorm3d temporal_bn_{nullptr};
  Conv3dUnit temporal_out_{nullptr};
};
TORCH_MODULE(AttentionBlock);

// Attention dump: three little-endian int32 (T,M,N) followed by T*M*N float32
// scores in row-major order.
void write_attention_dump(const std::string& path, const torch::Tensor& scores);
torch::Tensor read_attention_dump(const std::string& path);

}  // namespace gesture
