#include "gesture/ops.hpp"

#include <cmath>

#include <ATen/CPUGeneratorImpl.h>

#include "gesture/error.hpp"

namespace gesture {
namespace {

torch::Tensor as_batched(const torch::Tensor& x, bool& unbatched) {
  unbatched = x.dim() == 4;
  if (x.dim() != 4 && x.dim() != 5) {
    throw ShapeError("expected a (C,T,H,W) or (N,C,T,H,W) tensor, got " +
                     std::to_string(x.dim()) + " dims");
  }
  return unbatched ? x.unsqueeze(0) : x;
}

}  // namespace

at::Generator make_generator(uint64_t seed) {
  return at::make_generator<at::CPUGeneratorImpl>(seed);
}

torch::Tensor hswish(const torch::Tensor& x) {
  return x * torch::relu6(x + 3.0) / 6.0;
}

torch::Tensor hsigmoid(const torch::Tensor& x) {
  return torch::relu6(x + 3.0) / 6.0;
}

FeatureMap temporal_avg_pool(const FeatureMap& x, int kernel, int stride) {
  if (kernel < 1 || stride < 1) throw ShapeError("temporal pool kernel and stride must be >= 1");
  bool unbatched = false;
  auto xb = as_batched(x, unbatched);
  const auto t = xb.size(2);
  if (t < kernel) {
    throw ShapeError("temporal pool: T=" + std::to_string(t) + " is smaller than kernel " +
                     std::to_string(kernel));
  }
  if (kernel == 1 && stride == 1) return x;
  auto y = torch::avg_pool3d(xb, {kernel, 1, 1}, {stride, 1, 1});
  return unbatched ? y.squeeze(0) : y;
}

FeatureMap spatial_squeeze(const FeatureMap& x) {
  bool unbatched = false;
  auto xb = as_batched(x, unbatched);
  auto y = xb.mean({3, 4}, /*keepdim=*/true);
  return unbatched ? y.squeeze(0) : y;
}

torch::Tensor continuous_dropout(const torch::Tensor& x, const DropoutSpec& spec,
                                 const RunMode& mode) {
  if (!(spec.p >= 0.0 && spec.p < 1.0)) throw ConfigError("dropout p must be in [0,1)");
  const bool active = mode.training || !spec.enabled_in_training_only;
  if (!active || spec.p == 0.0) return x;
  if (!mode.rng) throw ConfigError("continuous dropout in training mode needs a generator");
  const double sigma = std::sqrt(spec.p / (1.0 - spec.p));
  auto noise = torch::randn(x.sizes(), *mode.rng, x.options().requires_grad(false));
  return x * (noise.mul_(sigma).add_(1.0));
}

}  // namespace gesture
