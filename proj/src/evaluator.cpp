#include "gesture/evaluator.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <map>
#include <numeric>

#include "gesture/augment.hpp"
#include "gesture/error.hpp"
#include "gesture/stream.hpp"

namespace gesture {

std::vector<int> central_window_indices(const ClipAnnotation& ann, int window_length) {
  if (ann.end <= ann.start) throw DataError("empty segment in '" + ann.source + "'");
  const int center = (ann.start + ann.end) / 2;
  const int lo = std::max(ann.start, center - window_length / 2);
  const int hi = std::min(ann.end, lo + window_length);
  std::vector<int> idx(static_cast<std::size_t>(window_length - (hi - lo)), lo);
  for (int i = lo; i < hi; ++i) idx.push_back(i);
  return idx;
}

EvalSample build_eval_sample(const ClipAnnotation& ann, const Video& frames, int window_length,
                             int out_size, const InputNorm& norm) {
  EvalSample s;
  s.label = ann.label;
  s.frame_indices = central_window_indices(ann, window_length);
  auto clip = gather_frames(frames, s.frame_indices);
  auto boxes = gather_boxes(ann.boxes, s.frame_indices);
  s.clip = preprocess_clip(crop_and_resize(clip, boxes, BoxMode::kMean, out_size), norm);
  return s;
}

double top1(std::span<const int> predictions, std::span<const int> labels, bool class_balanced) {
  if (predictions.empty() || predictions.size() != labels.size()) {
    throw DataError("top1 needs equal, non-empty prediction and label lists");
  }
  if (!class_balanced) {
    std::size_t hits = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) hits += predictions[i] == labels[i];
    return static_cast<double>(hits) / labels.size();
  }
  std::map<int, std::pair<int, int>> per_class;  // label -> (hits, total)
  for (std::size_t i = 0; i < labels.size(); ++i) {
    auto& [hits, total] = per_class[labels[i]];
    hits += predictions[i] == labels[i];
    ++total;
  }
  double sum = 0;
  for (const auto& [_, c] : per_class) sum += static_cast<double>(c.first) / c.second;
  return sum / per_class.size();
}

double average_precision(std::span<const double> scores, std::span<const uint8_t> positive) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  double sum = 0;
  int hits = 0;
  for (std::size_t rank = 0; rank < order.size(); ++rank) {
    if (positive[order[rank]]) {
      ++hits;
      sum += static_cast<double>(hits) / (rank + 1);
    }
  }
  return hits == 0 ? std::numeric_limits<double>::quiet_NaN() : sum / hits;
}

ApResult mean_ap(const torch::Tensor& scores, std::span<const int> labels) {
  if (scores.dim() != 2 || scores.size(0) < 1 || scores.size(0) != static_cast<int64_t>(labels.size())) {
    throw DataError("mean_ap needs (N,K) scores with N >= 1 matching the labels");
  }
  const auto n = scores.size(0);
  const auto k = scores.size(1);
  auto s = scores.to(torch::kDouble).contiguous();
  auto acc = s.accessor<double, 2>();
  ApResult r;
  r.per_class.assign(static_cast<std::size_t>(k), std::numeric_limits<double>::quiet_NaN());
  std::vector<double> col(static_cast<std::size_t>(n));
  std::vector<uint8_t> pos(static_cast<std::size_t>(n));
  double sum = 0;
  int used = 0;
  for (int64_t c = 0; c < k; ++c) {
    bool any = false;
    for (int64_t i = 0; i < n; ++i) {
      col[i] = acc[i][c];
      pos[i] = labels[i] == c;
      any = any || pos[i];
    }
    if (!any) {
      r.excluded.push_back(static_cast<int>(c));
      continue;
    }
    r.per_class[c] = average_precision(col, pos);
    sum += r.per_class[c];
    ++used;
  }
  if (!r.excluded.empty()) {
    std::clog << "{\"event\":\"warning\",\"message\":\"mAP excludes " << r.excluded.size()
              << " classes without positives\"}\n";
  }
  r.map = used ? sum / used : std::numeric_limits<double>::quiet_NaN();
  return r;
}

MetricsReport report_from_scores(const torch::Tensor& scores, std::span<const int> labels, bool class_balanced) {
  MetricsReport rep;
  rep.samples = static_cast<int>(labels.size());
  rep.class_balanced = class_balanced;
  auto argmax = scores.argmax(1).to(torch::kInt).contiguous();
  std::vector<int> pred(argmax.data_ptr<int>(), argmax.data_ptr<int>() + argmax.numel());
  rep.top1 = top1(pred, labels, class_balanced);
  auto ap = mean_ap(scores, labels);
  rep.map = ap.map;
  rep.per_class_ap = std::move(ap.per_class);
  rep.excluded_classes = std::move(ap.excluded);
  return rep;
}

MetricsReport evaluate(GestureNetImpl& model, const torch::Tensor& centers, const Dataset& data,
                       const InputNorm& norm, const EvalOptions& options) {
  const auto& cfg = model.config();
  std::vector<int> labels;
  std::vector<torch::Tensor> scores;
  std::vector<torch::Tensor> batch;
  auto flush = [&] {
    if (batch.empty()) return;
    scores.push_back(predict_clip(model, centers, torch::stack(batch)));
    batch.clear();
  };
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& rec = data.manifest.records[i];
    try {
      auto s = build_eval_sample(rec, data.videos[i], cfg.input_temporal, cfg.input_spatial, norm);
      labels.push_back(s.label);
      batch.push_back(s.clip);
    } catch (const std::exception& e) {
      throw DataError("sample '" + rec.source + "': " + e.what());
    }
    if (static_cast<int>(batch.size()) >= options.batch) flush();
  }
  flush();
  if (labels.empty()) throw DataError("evaluation set is empty");
  return report_from_scores(torch::cat(scores), labels, options.class_balanced);
}

nlohmann::json to_json(const MetricsReport& report) {
  nlohmann::json ap = nlohmann::json::array();
  for (double v : report.per_class_ap) ap.push_back(std::isnan(v) ? nlohmann::json(nullptr) : nlohmann::json(v));
  return {{"top1", report.top1},
          {"mAP", report.map},
          {"per_class_ap", ap},
          {"excluded_classes", report.excluded_classes},
          {"samples", report.samples},
          {"class_balanced_top1", report.class_balanced}};
}

}  // namespace gesture
