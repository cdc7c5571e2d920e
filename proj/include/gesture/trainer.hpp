#pragma once

#include <functional>
#include <string>
#include <vector>

#include <json.hpp>
#include <torch/torch.h>

#include "gesture/augment.hpp"
#include "gesture/evaluator.hpp"
#include "gesture/manifest.hpp"
#include "gesture/metric_losses.hpp"
#include "gesture/model.hpp"

namespace gesture {

struct TrainConfig {
  double base_lr = 0.01;
  int warmup_epochs = 5;
  double warmup_start_lr = 1e-4;
  int drop_epoch = 25;
  double drop_factor = 0.1;
  double weight_decay = 1e-4;
  double momentum = 0.9;
  int batch_clips = 8;
  int max_epochs = 30;
  int patience = 5;  // epochs without validation top-1 gain; 0 disables
  uint64_t seed = 0;
  int embedding_dim = 256;
  LossConfig loss;
  ScaleSchedule scale;
  double tv_weight = 1.0;  // per attention block
  double gumbel_temperature = 1.0;
  bool augment = true;
  AugmentConfig augment_config;
  bool eval_train = false;  // protocol top-1 on the training set every epoch

  void validate() const;
};

// Linear warm-up from warmup_start_lr to base_lr over [0, warmup_epochs),
// base_lr up to and including drop_epoch, base_lr * drop_factor after.
double lr_at(const TrainConfig& config, double epoch);

// K rows from an isotropic Gaussian, each scaled to unit norm.
torch::Tensor init_class_centers(int num_classes, int dim, at::Generator& gen);

// Renormalizes every row to unit length in place.
void renormalize_centers(torch::Tensor& centers);

// Everything a run needs to resume or serve: model, centers, labels and the
// generator driving dropout and mask sampling.
struct TrainState {
  GestureNet model{nullptr};
  torch::Tensor centers;
  std::vector<std::string> class_names;
  InputNorm norm;
  TrainConfig config;
  int epoch = 0;
  at::Generator rng;
};

TrainState make_train_state(const BackboneConfig& backbone, const TrainConfig& config,
                            std::vector<std::string> class_names, InputNorm norm = {});

struct EpochRecord {
  int epoch = 0;
  double lr = 0;
  double scale = 0;
  double am = 0;
  double push = 0;
  double cpush = 0;
  double tv = 0;
  double total = 0;
  double train_top1 = -1;  // protocol top-1 on the training set, -1 if skipped
  double val_top1 = -1;
  double val_map = -1;
};

nlohmann::json to_json(const EpochRecord& r);

struct FitResult {
  std::vector<EpochRecord> history;
  bool stopped_early = false;
  bool aborted = false;  // non-finite loss; state holds the last good epoch
  std::string error;
  int best_epoch = -1;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

// Trains state.model and state.centers on `train`; when `val` is given,
// early-stops on validation top-1 and leaves the best epoch's weights in
// `state`.
FitResult fit(TrainState& state, const Dataset& train, const Dataset* val, const EpochCallback& on_epoch = {});

// One training-mode input: jittered window, max-box crop, augmentations,
// normalization. Returns (3,T,S,S).
torch::Tensor make_training_clip(const ClipAnnotation& ann, const Video& video, const BackboneConfig& backbone,
                                 const TrainConfig& config, const InputNorm& norm, Rng& rng);

// SGD with momentum; weight decay only on tensors with more than one dim
// (conv weights), never on norms, biases or centers.
std::unique_ptr<torch::optim::SGD> make_optimizer(GestureNetImpl& model, torch::Tensor& centers,
                                                  const TrainConfig& config);

// Single-file checkpoint: magic "GCKP", uint32 version, uint64 header size,
// JSON header (entry manifest + config echo), then the raw arrays.
struct Checkpoint {
  nlohmann::json config;
  int epoch = 0;
  std::vector<std::pair<std::string, torch::Tensor>> entries;

  const torch::Tensor* find(const std::string& name) const;
};

Checkpoint make_checkpoint(TrainState& state);
void save_checkpoint(const Checkpoint& checkpoint, const std::string& path);
void save_checkpoint(TrainState& state, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

// Copies every model entry into `model`; missing, unknown or mis-shaped
// entries raise CheckpointError before anything is written.
void load_model_weights(GestureNetImpl& model, const Checkpoint& checkpoint);

// Rebuilds the full state (model from the echoed backbone config, centers,
// class names, generator state).
TrainState state_from_checkpoint(const Checkpoint& checkpoint);

}  // namespace gesture
