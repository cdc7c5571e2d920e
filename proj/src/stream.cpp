#include "gesture/stream.hpp"

#include "gesture/augment.hpp"
#include "gesture/error.hpp"

namespace gesture {

torch::Tensor predict_clip(GestureNetImpl& model, const torch::Tensor& centers, const torch::Tensor& clip) {
  torch::NoGradGuard no_grad;
  auto out = model.forward(clip, RunMode::inference());
  return torch::matmul(out.embedding, centers.t());
}

StreamRecognizer::StreamRecognizer(GestureNet model, torch::Tensor centers, InputNorm norm, StreamConfig config)
    : model_(std::move(model)),
      centers_(std::move(centers)),
      norm_(norm),
      config_(config),
      window_(model_->config().input_temporal),
      input_size_(model_->config().input_spatial) {
  if (config_.stride < 1) throw ConfigError("stream stride must be >= 1");
}

void StreamRecognizer::reset() {
  frames_.clear();
  boxes_.clear();
  pushes_since_full_ = 0;
}

StreamRecognizer::PushResult StreamRecognizer::push_frame(const torch::Tensor& frame, const Box& box) {
  if (frame.dim() != 3 || frame.size(2) != 3) throw ShapeError("stream frames must be (H,W,3)");
  const bool valid = box.x1 > box.x0 && box.y1 > box.y0 && box.x0 >= 0 && box.y0 >= 0 &&
                     box.x1 <= frame.size(1) && box.y1 <= frame.size(0);
  if (!valid) return {Status::kRejected, std::nullopt};

  frames_.push_back(frame);
  boxes_.push_back(box);
  if (static_cast<int>(frames_.size()) > window_) {
    frames_.pop_front();
    boxes_.pop_front();
  }
  if (static_cast<int>(frames_.size()) < window_) return {Status::kNotReady, std::nullopt};
  if (pushes_since_full_++ % config_.stride != 0) return {Status::kSkipped, std::nullopt};

  std::vector<torch::Tensor> frames(frames_.begin(), frames_.end());
  std::vector<Box> boxes(boxes_.begin(), boxes_.end());
  auto clip = crop_and_resize(torch::stack(frames), boxes, BoxMode::kMax, input_size_);
  auto scores = predict_clip(*model_, centers_, preprocess_clip(clip, norm_));

  Prediction p;
  const auto best = scores.argmax().item<int64_t>();
  p.confidence = scores[best].item<double>();
  if (p.confidence >= config_.threshold) p.class_id = static_cast<int>(best);
  p.scores = scores;
  return {Status::kPrediction, std::move(p)};
}

}  // namespace gesture
