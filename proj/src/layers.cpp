#include "gesture/layers.hpp"

#include <sstream>

namespace gesture {

std::string Shape::str() const {
  std::ostringstream os;
  os << '(' << c << ',' << t << ',' << h << ',' << w << ')';
  return os.str();
}

Conv3dUnitImpl::Conv3dUnitImpl(const ConvGeometry& g) : geom_(g) {
  auto opts = torch::nn::Conv3dOptions(g.in_channels, g.out_channels, {g.kt, g.kh, g.kw})
                  .stride({g.st, g.sh, g.sw})
                  .padding({g.kt / 2, g.kh / 2, g.kw / 2})
                  .groups(g.groups)
                  .bias(g.bias);
  conv_ = register_module("conv", torch::nn::Conv3d(opts));
  // normal fan-out init
  torch::NoGradGuard no_grad;
  const double fan_out = static_cast<double>(g.out_channels * g.kt * g.kh * g.kw) /
                         static_cast<double>(g.groups);
  conv_->weight.normal_(0.0, std::sqrt(2.0 / fan_out));
  if (g.bias) conv_->bias.zero_();
}

torch::Tensor Conv3dUnitImpl::forward(const torch::Tensor& x) {
  return conv_->forward(x);
}

Shape Conv3dUnitImpl::trace(const Shape& in, Cost& cost) const {
  const auto out_dim = [](int64_t n, int64_t k, int64_t s) { return (n + 2 * (k / 2) - k) / s + 1; };
  Shape out{geom_.out_channels, out_dim(in.t, geom_.kt, geom_.st), out_dim(in.h, geom_.kh, geom_.sh),
            out_dim(in.w, geom_.kw, geom_.sw)};
  cost.macs += out.numel() * (geom_.in_channels / geom_.groups) * geom_.kt * geom_.kh * geom_.kw;
  return out;
}

torch::Tensor batch_norm(const torch::nn::BatchNorm3d& bn, const torch::Tensor& x, bool training) {
  const auto& o = bn->options;
  return torch::batch_norm(x, bn->weight, bn->bias, bn->running_mean, bn->running_var, training,
                           o.momentum().value_or(0.1), o.eps(), /*cudnn_enabled=*/false);
}

torch::nn::BatchNorm3d make_bn(int64_t channels) {
  return torch::nn::BatchNorm3d(torch::nn::BatchNorm3dOptions(channels));
}

}  // namespace gesture
