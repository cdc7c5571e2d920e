#pragma once

#include <span>
#include <vector>

#include <json.hpp>
#include <torch/torch.h>

#include "gesture/manifest.hpp"
#include "gesture/model.hpp"

namespace gesture {

struct EvalSample {
  torch::Tensor clip;  // (3,T,S,S), normalized
  int label = 0;
  std::vector<int> frame_indices;
};

// Central T-frame window of the annotated segment: center floor((s+e)/2),
// window [center - T/2, center + T/2) clipped to the segment, then
// left-padded by repeating the segment's first frame.
std::vector<int> central_window_indices(const ClipAnnotation& ann, int window_length);

// Builds the protocol input: central window, mean-box crop, resize.
EvalSample build_eval_sample(const ClipAnnotation& ann, const Video& frames, int window_length,
                             int out_size, const InputNorm& norm);

// Class-balanced accuracy (mean of per-class recall over classes present in
// labels) or plain sample accuracy.
double top1(std::span<const int> predictions, std::span<const int> labels, bool class_balanced = true);

// Mean of precision at each positive hit when ranking by score descending;
// equal scores keep sample-index order.
double average_precision(std::span<const double> scores, std::span<const uint8_t> positive);

struct ApResult {
  double map = 0;
  std::vector<double> per_class;  // NaN for classes without positives
  std::vector<int> excluded;      // classes without positives
};

// scores is (N,K).
ApResult mean_ap(const torch::Tensor& scores, std::span<const int> labels);

struct MetricsReport {
  double top1 = 0;
  double map = 0;
  std::vector<double> per_class_ap;
  std::vector<int> excluded_classes;
  int samples = 0;
  bool class_balanced = true;
};

struct EvalOptions {
  bool class_balanced = true;
  int batch = 16;
};

// Runs the continuous-recognition protocol over every record of the dataset.
MetricsReport evaluate(GestureNetImpl& model, const torch::Tensor& centers, const Dataset& data,
                       const InputNorm& norm, const EvalOptions& options = {});

// Same aggregation from precomputed (N,K) scores.
MetricsReport report_from_scores(const torch::Tensor& scores, std::span<const int> labels,
                                 bool class_balanced = true);

nlohmann::json to_json(const MetricsReport& report);

}  // namespace gesture
