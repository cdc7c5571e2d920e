#pragma once

#include <deque>
#include <optional>

#include <torch/torch.h>

#include "gesture/model.hpp"
#include "gesture/video_io.hpp"

namespace gesture {

// Cosine scores between the clip embedding and every center, inference mode,
// no test-time augmentation. clip is (3,T,S,S) -> (K) or (B,3,T,S,S) -> (B,K).
torch::Tensor predict_clip(GestureNetImpl& model, const torch::Tensor& centers, const torch::Tensor& clip);

struct Prediction {
  std::optional<int> class_id;  // empty iff confidence < threshold
  double confidence = 0;        // max cosine
  torch::Tensor scores;         // (K)
};

struct StreamConfig {
  double threshold = 0.5;
  int stride = 1;  // emit every `stride`-th push once the window is full
};

// Sliding-window recognizer over a live frame stream. Frames are (H,W,3) in
// [0,1], already resampled to the model's frame rate.
class StreamRecognizer {
 public:
  enum class Status { kNotReady, kRejected, kPrediction, kSkipped };
  struct PushResult {
    Status status = Status::kNotReady;
    std::optional<Prediction> prediction;
  };

  StreamRecognizer(GestureNet model, torch::Tensor centers, InputNorm norm, StreamConfig config = {});

  PushResult push_frame(const torch::Tensor& frame, const Box& box);

  int window() const { return window_; }
  std::size_t buffered() const { return frames_.size(); }
  void reset();

 private:
  GestureNet model_;
  torch::Tensor centers_;
  InputNorm norm_;
  StreamConfig config_;
  int window_;
  int input_size_;
  std::deque<torch::Tensor> frames_;
  std::deque<Box> boxes_;
  long long pushes_since_full_ = 0;
};

}  // namespace gesture
