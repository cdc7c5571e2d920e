#pragma once

#include <string>
#include <vector>

#include <torch/torch.h>

#include "gesture/layers.hpp"
#include "gesture/ops.hpp"

namespace gesture {

// Global average pool -> 1x1x1 conv -> BN -> L2 normalization.
class EmbeddingHeadImpl : public torch::nn::Module {
 public:
  EmbeddingHeadImpl(int64_t in_channels, int64_t dim = 256);

  // (B,C,T,H,W) -> (B,dim) or (C,T,H,W) -> (dim). Throws NumericError when a
  // pre-normalization vector is zero.
  torch::Tensor forward(const FeatureMap& features, bool training);
  // Un-normalized BN output, (B,dim).
  torch::Tensor project(const FeatureMap& features, bool training);

  Shape trace(const Shape& in, Cost& cost) const;
  int64_t dim() const { return dim_; }
  torch::nn::BatchNorm3d& bn() { return bn_; }

 private:
  int64_t dim_;
  Conv3dUnit conv_{nullptr};
  torch::nn::BatchNorm3d bn_{nullptr};
};
TORCH_MODULE(EmbeddingHead);

// Cosine logits e . W^T whose forward equals the plain product and whose
// gradient through each entry is scaled by |sin theta| (the factor itself is
// detached). e is (D) or (B,D); W is (K,D) with unit rows.
torch::Tensor pr_product(const torch::Tensor& embeddings, const torch::Tensor& centers);

struct ScaleSchedule {
  double s_start = 30.0;
  double s_end = 5.0;
  double duration_epochs = 40.0;
};

// Linear descent from s_start to s_end over duration_epochs, clamped after.
double scale_at(const ScaleSchedule& schedule, double epoch);

struct AmSoftmaxParams {
  double margin = 0.35;
  double scale = 30.0;
  double entropy_weight = 0.2;
};

// Per-sample [CE(p) - alpha H(p)]_+ with p = softmax(s * (cos - m * onehot)).
// cosines (K) with a scalar label, or (B,K) with (B) labels; returns (B) or a
// scalar accordingly.
torch::Tensor am_softmax_entropy_loss(const torch::Tensor& cosines, const torch::Tensor& labels,
                                      const AmSoftmaxParams& params);

// Mean over cross-class pairs of [cos(e_i, e_j) - (1 - margin)]_+; zero when
// the batch has no cross-class pair.
torch::Tensor push_loss(const torch::Tensor& embeddings, const torch::Tensor& labels,
                        double margin = 0.3);

// Mean over unordered center pairs of [cos(w_a, w_b) - (1 - margin)]_+.
torch::Tensor center_push_loss(const torch::Tensor& centers, double margin = 0.3);

struct LossTerms {
  torch::Tensor am;     // mean over batch
  torch::Tensor push;
  torch::Tensor cpush;
  std::vector<torch::Tensor> tv;
};

// Sum of all terms with unit weights. Throws NumericError naming the first
// non-finite component.
torch::Tensor total_loss(const LossTerms& terms);

// Convenience wrapper: evaluates every term from embeddings, labels, centers
// and attention scores.
struct LossConfig {
  AmSoftmaxParams am;
  double push_margin = 0.3;
  double center_push_margin = 0.3;
  bool use_pr_product = true;
};

LossTerms compute_loss_terms(const torch::Tensor& embeddings, const torch::Tensor& labels,
                             const torch::Tensor& centers, const std::vector<torch::Tensor>& tv_scores,
                             const LossConfig& cfg);

}  // namespace gesture
