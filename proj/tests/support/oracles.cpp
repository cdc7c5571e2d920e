#include "oracles.hpp"

#include <algorithm>
#include <numeric>

#include "gesture/augment.hpp"

namespace oracle {

double hard_tv(const torch::Tensor& scores, const gesture::Neighborhood& nbhd) {
  auto s = scores.to(torch::kDouble).contiguous();
  auto a = s.accessor<double, 3>();
  const int T = s.size(0), M = s.size(1), N = s.size(2);
  double total = 0;
  for (int t = 0; t < T; ++t) {
    for (int i = 0; i < M; ++i) {
      for (int j = 0; j < N; ++j) {
        double sum = 0;
        int count = 0;
        for (const auto& o : nbhd.offsets) {
          const int tt = t + o[0], ii = i + o[1], jj = j + o[2];
          if (tt < 0 || tt >= T || ii < 0 || ii >= M || jj < 0 || jj >= N) continue;
          sum += a[tt][ii][jj];
          ++count;
        }
        const double target = (sum / count > 0.5) ? 1.0 : 0.0;
        total += std::abs(a[t][i][j] - target);
      }
    }
  }
  return total / (T * M * N);
}

double average_precision(const std::vector<double>& scores, const std::vector<uint8_t>& positive) {
  std::vector<int> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return scores[a] > scores[b]; });
  const double total = std::count(positive.begin(), positive.end(), 1);
  std::vector<double> precision, recall;
  double hits = 0;
  for (std::size_t k = 0; k < order.size(); ++k) {
    hits += positive[order[k]];
    precision.push_back(hits / (k + 1));
    recall.push_back(hits / total);
  }
  double ap = 0, prev = 0;
  for (std::size_t k = 0; k < order.size(); ++k) {
    ap += (recall[k] - prev) * precision[k];
    prev = recall[k];
  }
  return ap;
}

torch::Tensor numeric_grad(const std::function<double(const torch::Tensor&)>& f, const torch::Tensor& x,
                           double step) {
  auto base = x.detach().clone().to(torch::kDouble);
  auto grad = torch::zeros_like(base);
  auto flat = base.view({-1});
  auto g = grad.view({-1});
  for (int64_t i = 0; i < flat.numel(); ++i) {
    const double v = flat[i].item<double>();
    flat[i] = v + step;
    const double up = f(base);
    flat[i] = v - step;
    const double down = f(base);
    flat[i] = v;
    g[i] = (up - down) / (2 * step);
  }
  return grad;
}

double max_rel_err(const torch::Tensor& a, const torch::Tensor& b, double floor) {
  auto denom = b.abs().clamp_min(floor);
  return ((a - b).abs() / denom).max().item<double>();
}

namespace {

torch::Tensor frame_features(const gesture::Video& video, const gesture::ClipAnnotation& ann, int t, int size) {
  std::vector<int> idx{t};
  auto frame = gesture::gather_frames(video, idx);
  auto boxes = gesture::gather_boxes(ann.boxes, idx);
  auto crop = gesture::crop_and_resize(frame, boxes, gesture::BoxMode::kMax, size);
  return crop.reshape({-1}).to(torch::kDouble);
}

}  // namespace

double single_frame_probe(const gesture::Dataset& train, const gesture::Dataset& test, int size, int iterations) {
  std::vector<torch::Tensor> xs;
  std::vector<int64_t> ys;
  for (std::size_t i = 0; i < train.size(); ++i) {
    const auto& ann = train.manifest.records[i];
    for (int t = ann.start; t < ann.end; ++t) {
      xs.push_back(frame_features(train.videos[i], ann, t, size));
      ys.push_back(ann.label);
    }
  }
  auto X = torch::stack(xs);
  auto mean = X.mean(0, true);
  auto std = X.std(0, true, true).clamp_min(1e-6);
  X = (X - mean) / std;
  auto Y = torch::tensor(ys);
  const int64_t K = train.manifest.num_classes();
  auto W = torch::zeros({X.size(1), K}, torch::kDouble).requires_grad_(true);
  auto b = torch::zeros({K}, torch::kDouble).requires_grad_(true);
  torch::optim::LBFGS opt({W, b}, torch::optim::LBFGSOptions(1.0).max_iter(iterations));
  auto closure = [&] {
    opt.zero_grad();
    auto loss = torch::cross_entropy_loss(torch::matmul(X, W) + b, Y) + 1e-3 * W.square().sum();
    loss.backward();
    return loss;
  };
  opt.step(closure);

  torch::NoGradGuard no_grad;
  int correct = 0;
  for (std::size_t i = 0; i < test.size(); ++i) {
    const auto& ann = test.manifest.records[i];
    std::vector<int64_t> votes(K, 0);
    for (int t = ann.start; t < ann.end; ++t) {
      auto x = (frame_features(test.videos[i], ann, t, size).unsqueeze(0) - mean) / std;
      ++votes[(torch::matmul(x, W) + b).argmax(1).item<int64_t>()];
    }
    const auto pred = std::max_element(votes.begin(), votes.end()) - votes.begin();
    correct += pred == ann.label;
  }
  return static_cast<double>(correct) / test.size();
}

}  // namespace oracle
