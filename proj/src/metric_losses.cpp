#include "gesture/metric_losses.hpp"

#include <algorithm>
#include <cmath>

#include "gesture/attention.hpp"
#include "gesture/error.hpp"

namespace gesture {
namespace {

torch::Tensor pairwise_cosine(const torch::Tensor& a) {
  auto n = a / a.norm(2, 1, true);
  return torch::matmul(n, n.t());
}

}  // namespace

EmbeddingHeadImpl::EmbeddingHeadImpl(int64_t in_channels, int64_t dim) : dim_(dim) {
  ConvGeometry g;
  g.in_channels = in_channels;
  g.out_channels = dim;
  conv_ = register_module("conv", Conv3dUnit(g));
  bn_ = register_module("bn", make_bn(dim));
}

torch::Tensor EmbeddingHeadImpl::project(const FeatureMap& features, bool training) {
  if (features.dim() != 5) throw ShapeError("embedding head expects (B,C,T,H,W) features");
  auto pooled = features.mean({2, 3, 4}, /*keepdim=*/true);
  return batch_norm(bn_, conv_->forward(pooled), training).flatten(1);
}

torch::Tensor EmbeddingHeadImpl::forward(const FeatureMap& features, bool training) {
  const bool unbatched = features.dim() == 4;
  auto v = project(unbatched ? features.unsqueeze(0) : features, training);
  auto norm = v.norm(2, 1, true);
  if ((norm == 0).any().item<bool>()) {
    throw NumericError("embedding head: zero vector before normalization");
  }
  auto e = v / norm;
  return unbatched ? e.squeeze(0) : e;
}

Shape EmbeddingHeadImpl::trace(const Shape& in, Cost& cost) const {
  return conv_->trace({in.c, 1, 1, 1}, cost);
}

torch::Tensor pr_product(const torch::Tensor& embeddings, const torch::Tensor& centers) {
  const bool unbatched = embeddings.dim() == 1;
  auto e = unbatched ? embeddings.unsqueeze(0) : embeddings;
  if (e.dim() != 2 || centers.dim() != 2 || e.size(1) != centers.size(1)) {
    throw ShapeError("pr_product expects (B,D) embeddings and (K,D) centers");
  }
  auto wx = torch::matmul(e, centers.t());
  auto sin = torch::sqrt(torch::clamp_min(1.0 - wx.detach().square(), 0.0));
  auto out = sin * wx + (1.0 - sin) * wx.detach();
  return unbatched ? out.squeeze(0) : out;
}

double scale_at(const ScaleSchedule& schedule, double epoch) {
  if (schedule.duration_epochs <= 0) return schedule.s_end;
  const double frac = std::clamp(epoch / schedule.duration_epochs, 0.0, 1.0);
  return schedule.s_start + (schedule.s_end - schedule.s_start) * frac;
}

torch::Tensor am_softmax_entropy_loss(const torch::Tensor& cosines, const torch::Tensor& labels,
                                      const AmSoftmaxParams& params) {
  if (!(params.scale > 0)) throw ConfigError("AM-Softmax scale must be > 0");
  if (!(params.margin >= 0 && params.margin < 1)) throw ConfigError("AM-Softmax margin must be in [0,1)");
  if (params.entropy_weight < 0) throw ConfigError("entropy weight must be >= 0");
  const bool unbatched = cosines.dim() == 1;
  auto cos = unbatched ? cosines.unsqueeze(0) : cosines;
  auto lab = labels.reshape({-1}).to(torch::kLong);
  if (cos.dim() != 2 || lab.size(0) != cos.size(0)) {
    throw ShapeError("am_softmax: cosines (B,K) and labels (B) disagree");
  }
  if (cos.size(1) < 2) throw ConfigError("am_softmax needs at least 2 classes");
  auto onehot = torch::one_hot(lab, cos.size(1)).to(cos.scalar_type());
  auto z = params.scale * (cos - params.margin * onehot);
  auto logp = torch::log_softmax(z, 1);
  auto cross = -(logp * onehot).sum(1);
  auto entropy = -(logp.exp() * logp).sum(1);
  auto loss = torch::clamp_min(cross - params.entropy_weight * entropy, 0.0);
  return unbatched ? loss.squeeze(0) : loss;
}

torch::Tensor push_loss(const torch::Tensor& embeddings, const torch::Tensor& labels, double margin) {
  if (embeddings.dim() != 2 || embeddings.size(0) < 2) {
    throw ShapeError("push_loss expects a (B,D) batch with B >= 2");
  }
  auto lab = labels.reshape({-1});
  auto cross = lab.unsqueeze(0) != lab.unsqueeze(1);
  cross = torch::triu(cross, 1);
  const auto pairs = cross.sum().item<int64_t>();
  if (pairs == 0) return torch::zeros({}, embeddings.options());
  auto hinge = torch::clamp_min(pairwise_cosine(embeddings) - (1.0 - margin), 0.0);
  return (hinge * cross.to(embeddings.scalar_type())).sum() / static_cast<double>(pairs);
}

torch::Tensor center_push_loss(const torch::Tensor& centers, double margin) {
  if (centers.dim() != 2 || centers.size(0) < 2) throw ShapeError("center_push_loss needs K >= 2");
  const int64_t k = centers.size(0);
  auto upper = torch::triu(torch::ones({k, k}, centers.options().requires_grad(false)), 1);
  auto hinge = torch::clamp_min(pairwise_cosine(centers) - (1.0 - margin), 0.0);
  return (hinge * upper).sum() / static_cast<double>(k * (k - 1) / 2);
}

torch::Tensor total_loss(const LossTerms& terms) {
  auto check = [](const torch::Tensor& t, const std::string& name) {
    if (!t.defined()) return;
    if (!torch::isfinite(t).all().item<bool>()) throw NumericError("non-finite loss component: " + name);
  };
  check(terms.am, "am_softmax");
  check(terms.push, "push");
  check(terms.cpush, "center_push");
  for (std::size_t i = 0; i < terms.tv.size(); ++i) check(terms.tv[i], "tv[" + std::to_string(i) + "]");

  torch::Tensor sum;
  auto add = [&sum](const torch::Tensor& t) {
    if (!t.defined()) return;
    sum = sum.defined() ? sum + t : t;
  };
  add(terms.am);
  add(terms.push);
  add(terms.cpush);
  for (const auto& t : terms.tv) add(t);
  return sum.defined() ? sum : torch::zeros({});
}

LossTerms compute_loss_terms(const torch::Tensor& embeddings, const torch::Tensor& labels,
                             const torch::Tensor& centers, const std::vector<torch::Tensor>& tv_scores,
                             const LossConfig& cfg) {
  LossTerms terms;
  auto cos = cfg.use_pr_product ? pr_product(embeddings, centers)
                                : torch::matmul(embeddings, centers.t());
  terms.am = am_softmax_entropy_loss(cos, labels, cfg.am).mean();
  terms.push = push_loss(embeddings, labels, cfg.push_margin);
  terms.cpush = center_push_loss(centers, cfg.center_push_margin);
  for (const auto& s : tv_scores) terms.tv.push_back(hard_tv_loss(s));
  return terms;
}

}  // namespace gesture
