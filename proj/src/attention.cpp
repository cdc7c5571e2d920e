#include "gesture/attention.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <set>

#include "gesture/error.hpp"

namespace gesture {

Neighborhood Neighborhood::cube26() {
  Neighborhood n;
  for (int dt = -1; dt <= 1; ++dt)
    for (int di = -1; di <= 1; ++di)
      for (int dj = -1; dj <= 1; ++dj)
        if (dt != 0 || di != 0 || dj != 0) n.offsets.push_back({dt, di, dj});
  return n;
}

void Neighborhood::validate() const {
  if (offsets.empty()) throw ConfigError("neighborhood is empty");
  std::set<std::array<int, 3>> set(offsets.begin(), offsets.end());
  if (set.size() != offsets.size()) throw ConfigError("neighborhood has duplicate offsets");
  for (const auto& o : offsets) {
    if (o == std::array<int, 3>{0, 0, 0}) throw ConfigError("neighborhood contains (0,0,0)");
    if (!set.contains({-o[0], -o[1], -o[2]})) throw ConfigError("neighborhood is not symmetric");
  }
}

torch::Tensor gumbel_sigmoid(const torch::Tensor& logits, const GumbelConfig& cfg,
                             const RunMode& mode) {
  if (!(cfg.temperature > 0)) throw ConfigError("gumbel temperature must be > 0");
  if (!mode.training || cfg.mode == GumbelConfig::Mode::kExpected) {
    return torch::sigmoid(logits);
  }
  if (!mode.rng) throw ConfigError("gumbel sampling in training mode needs a generator");
  const auto opts = logits.options().requires_grad(false);
  // Keep u away from {0,1} so -log(-log(u)) stays finite.
  const double eps = logits.scalar_type() == torch::kDouble ? 1e-12 : 1e-6;
  auto gumbel = [&] {
    auto u = torch::rand(logits.sizes(), *mode.rng, opts).clamp_(eps, 1.0 - eps);
    return -torch::log(-torch::log(u));
  };
  auto g1 = gumbel();
  auto g2 = gumbel();
  return torch::sigmoid((logits + (g1 - g2)) / cfg.temperature);
}

FeatureMap apply_residual_attention(const FeatureMap& x, const torch::Tensor& mask) {
  const bool batched = x.dim() == 5;
  if (!(x.dim() == 4 || batched) || mask.dim() != x.dim() - 1) {
    throw ShapeError("residual attention expects x (C,T,M,N) with mask (T,M,N), or batched forms");
  }
  const auto spatial = x.sizes().slice(batched ? 2 : 1);
  const auto mask_spatial = mask.sizes().slice(batched ? 1 : 0);
  if (spatial != mask_spatial || (batched && x.size(0) != mask.size(0))) {
    throw ShapeError("residual attention: mask shape " + std::string(c10::str(mask.sizes())) +
                     " does not match features " + std::string(c10::str(x.sizes())));
  }
  return x * (1.0 + mask.unsqueeze(batched ? 1 : 0));
}

torch::Tensor hard_tv_loss(const torch::Tensor& scores, const Neighborhood& nbhd) {
  if (scores.dim() != 3 && scores.dim() != 4) {
    throw ShapeError("hard TV loss expects (T,M,N) or (B,T,M,N) scores");
  }
  nbhd.validate();
  auto s = scores.dim() == 3 ? scores.unsqueeze(0) : scores;
  const int64_t T = s.size(1), M = s.size(2), N = s.size(3);

  int pt = 0, pm = 0, pn = 0;
  for (const auto& o : nbhd.offsets) {
    pt = std::max(pt, std::abs(o[0]));
    pm = std::max(pm, std::abs(o[1]));
    pn = std::max(pn, std::abs(o[2]));
  }
  // Zero padding drops out-of-map neighbors from the sum; the padded ones-map
  // counts the neighbors that remain.
  auto sd = s.detach();
  auto padded = torch::constant_pad_nd(sd, {pn, pn, pm, pm, pt, pt});
  auto valid = torch::constant_pad_nd(torch::ones_like(sd), {pn, pn, pm, pm, pt, pt});
  auto sum = torch::zeros_like(sd);
  auto count = torch::zeros_like(sd);
  using torch::indexing::Slice;
  for (const auto& o : nbhd.offsets) {
    const auto window = std::initializer_list<torch::indexing::TensorIndex>{
        Slice(), Slice(pt + o[0], pt + o[0] + T), Slice(pm + o[1], pm + o[1] + M),
        Slice(pn + o[2], pn + o[2] + N)};
    sum += padded.index(window);
    count += valid.index(window);
  }
  if ((count == 0).any().item<bool>()) {
    throw ShapeError("hard TV loss: degenerate map " + std::string(c10::str(scores.sizes())) +
                     " leaves a position without neighbors");
  }
  auto target = (sum / count > 0.5).to(s.scalar_type());
  auto loss = (s - target).abs().mean();
  return loss;
}

AttentionBlockImpl::AttentionBlockImpl(int64_t channels, int spatial_kernel, int temporal_kernel) {
  ConvGeometry sdw;
  sdw.in_channels = sdw.out_channels = sdw.groups = channels;
  sdw.kh = sdw.kw = spatial_kernel;
  spatial_dw_ = register_module("spatial_dw", Conv3dUnit(sdw));
  spatial_bn_ = register_module("spatial_bn", make_bn(channels));
  ConvGeometry head;
  head.in_channels = channels;
  head.out_channels = 1;
  head.bias = true;
  spatial_out_ = register_module("spatial_out", Conv3dUnit(head));

  ConvGeometry tdw;
  tdw.in_channels = tdw.out_channels = tdw.groups = channels;
  tdw.kt = temporal_kernel;
  temporal_dw_ = register_module("temporal_dw", Conv3dUnit(tdw));
  temporal_bn_ = register_module("temporal_bn", make_bn(channels));
  temporal_out_ = register_module("temporal_out", Conv3dUnit(head));
}

torch::Tensor AttentionBlockImpl::logits(const FeatureMap& x, bool training) {
  if (x.dim() != 5) throw ShapeError("attention block expects (B,C,T,M,N) input");
  auto spatial = spatial_out_->forward(hswish(batch_norm(spatial_bn_, spatial_dw_->forward(x), training)));
  auto pooled = spatial_squeeze(x);
  auto temporal =
      temporal_out_->forward(hswish(batch_norm(temporal_bn_, temporal_dw_->forward(pooled), training)));
  // (B,1,T,M,N) + (B,1,T,1,1) broadcasts the temporal stream over M,N.
  return (spatial + temporal).squeeze(1);
}

AttentionBlockImpl::Output AttentionBlockImpl::forward(const FeatureMap& x, const RunMode& mode) {
  auto l = logits(x, mode.training);
  auto mask = gumbel_sigmoid(l, gumbel_, mode);
  return {apply_residual_attention(x, mask), {mask, l}};
}

Shape AttentionBlockImpl::trace(const Shape& in, Cost& cost) const {
  spatial_out_->trace(spatial_dw_->trace(in, cost), cost);
  temporal_out_->trace(temporal_dw_->trace({in.c, in.t, 1, 1}, cost), cost);
  return in;
}

void write_attention_dump(const std::string& path, const torch::Tensor& scores) {
  if (scores.dim() != 3) throw ShapeError("attention dump expects a (T,M,N) map");
  auto data = scores.detach().to(torch::kFloat).contiguous();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write attention dump '" + path + "'");
  for (int d = 0; d < 3; ++d) {
    const auto v = static_cast<int32_t>(data.size(d));
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
  }
  out.write(reinterpret_cast<const char*>(data.data_ptr<float>()),
            static_cast<std::streamsize>(data.numel() * sizeof(float)));
}

torch::Tensor read_attention_dump(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read attention dump '" + path + "'");
  int32_t dims[3];
  in.read(reinterpret_cast<char*>(dims), sizeof dims);
  if (!in || dims[0] < 1 || dims[1] < 1 || dims[2] < 1) {
    throw DataError("attention dump '" + path + "' has a malformed header");
  }
  auto t = torch::empty({dims[0], dims[1], dims[2]}, torch::kFloat);
  in.read(reinterpret_cast<char*>(t.data_ptr<float>()),
          static_cast<std::streamsize>(t.numel() * sizeof(float)));
  if (!in) throw DataError("attention dump '" + path + "' is truncated");
  return t;
}

}  // namespace gesture
