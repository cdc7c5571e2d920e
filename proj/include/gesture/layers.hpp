#pragma once

#include <cstdint>
#include <ostream>
#include <string>

#include <torch/torch.h>

namespace gesture {

// Unbatched activation shape (C,T,H,W) used by static shape/cost traces.
struct Shape {
  int64_t c = 0;
  int64_t t = 0;
  int64_t h = 0;
  int64_t w = 0;

  int64_t numel() const { return c * t * h * w; }
  bool operator==(const Shape&) const = default;
  std::string str() const;
};

inline std::ostream& operator<<(std::ostream& os, const Shape& s) { return os << s.str(); }

// Multiply-accumulate tally for one forward pass.
struct Cost {
  int64_t macs = 0;
};

struct ConvGeometry {
  int64_t in_channels = 1;
  int64_t out_channels = 1;
  int64_t kt = 1, kh = 1, kw = 1;
  int64_t st = 1, sh = 1, sw = 1;
  int64_t groups = 1;
  bool bias = false;
};

// 3D convolution with "same" padding on odd kernels and static cost tracing.
class Conv3dUnitImpl : public torch::nn::Module {
 public:
  explicit Conv3dUnitImpl(const ConvGeometry& g);

  torch::Tensor forward(const torch::Tensor& x);
  Shape trace(const Shape& in, Cost& cost) const;

  const ConvGeometry& geometry() const { return geom_; }
  torch::nn::Conv3d& conv() { return conv_; }

 private:
  ConvGeometry geom_;
  torch::nn::Conv3d conv_{nullptr};
};
TORCH_MODULE(Conv3dUnit);

// Batch norm driven by an explicit training flag rather than module state, so
// inference never touches running statistics.
torch::Tensor batch_norm(const torch::nn::BatchNorm3d& bn, const torch::Tensor& x,
                         bool training);

torch::nn::BatchNorm3d make_bn(int64_t channels);

}  // namespace gesture
