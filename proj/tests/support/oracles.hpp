#pragma once

#include <functional>
#include <vector>

#include <torch/torch.h>

#include "gesture/attention.hpp"
#include "gesture/manifest.hpp"

namespace oracle {

// Explicit loops over positions and neighbors; scores (T,M,N) float64.
double hard_tv(const torch::Tensor& scores, const gesture::Neighborhood& nbhd);

// Area under the stepwise precision/recall curve: sum over ranks of
// (recall_k - recall_{k-1}) * precision_k. Ties keep index order.
double average_precision(const std::vector<double>& scores, const std::vector<uint8_t>& positive);

// Central differences of a scalar function, one coordinate at a time.
torch::Tensor numeric_grad(const std::function<double(const torch::Tensor&)>& f, const torch::Tensor& x,
                           double step = 1e-5);

// max |a - b| / max(|b|, floor) over all entries.
double max_rel_err(const torch::Tensor& a, const torch::Tensor& b, double floor = 1e-6);

// Per-frame multinomial logistic regression on downsampled crops. Trained on
// every segment frame of `train`, evaluated on `test` by majority vote over
// each clip's segment frames. Returns clip accuracy on `test`.
double single_frame_probe(const gesture::Dataset& train, const gesture::Dataset& test, int size = 12,
                          int iterations = 300);

}  // namespace oracle
