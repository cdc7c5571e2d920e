#include "gesture/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>

#include "gesture/config_io.hpp"
#include "gesture/error.hpp"

namespace gesture {
namespace {

constexpr char kCkptMagic[4] = {'G', 'C', 'K', 'P'};
constexpr uint32_t kCkptVersion = 1;

std::string dtype_name(torch::ScalarType t) {
  switch (t) {
    case torch::kFloat: return "float32";
    case torch::kDouble: return "float64";
    case torch::kLong: return "int64";
    case torch::kUInt8: return "uint8";
    default: throw CheckpointError("unsupported tensor dtype in checkpoint");
  }
}

torch::ScalarType dtype_from_name(const std::string& s) {
  if (s == "float32") return torch::kFloat;
  if (s == "float64") return torch::kDouble;
  if (s == "int64") return torch::kLong;
  if (s == "uint8") return torch::kUInt8;
  throw CheckpointError("unknown dtype '" + s + "' in checkpoint");
}

// Copies of every tensor needed to roll training back to an epoch boundary.
struct Snapshot {
  std::vector<torch::Tensor> state;
  torch::Tensor centers;
  torch::Tensor rng_state;
  int epoch = 0;
};

Snapshot take_snapshot(TrainState& s) {
  Snapshot snap;
  for (auto& [_, t] : named_state(*s.model)) snap.state.push_back(t.detach().clone());
  snap.centers = s.centers.detach().clone();
  snap.rng_state = s.rng.get_state();
  snap.epoch = s.epoch;
  return snap;
}

void restore_snapshot(TrainState& s, const Snapshot& snap) {
  torch::NoGradGuard no_grad;
  auto state = named_state(*s.model);
  for (std::size_t i = 0; i < state.size(); ++i) state[i].second.copy_(snap.state[i]);
  s.centers.copy_(snap.centers);
  s.rng.set_state(snap.rng_state);
  s.epoch = snap.epoch;
}

}  // namespace

void TrainConfig::validate() const {
  if (!(warmup_epochs >= 0 && warmup_epochs < drop_epoch && drop_epoch < max_epochs)) {
    throw ConfigError("train: need 0 <= warmup_epochs < drop_epoch < max_epochs");
  }
  if (!(base_lr >= 0) || !(warmup_start_lr >= 0)) throw ConfigError("train: learning rates must be >= 0");
  if (!(drop_factor > 0 && drop_factor <= 1)) throw ConfigError("train: drop_factor must be in (0,1]");
  if (weight_decay < 0) throw ConfigError("train: weight_decay must be >= 0");
  if (!(momentum >= 0 && momentum < 1)) throw ConfigError("train: momentum must be in [0,1)");
  if (batch_clips < 2) throw ConfigError("train: batch_clips must be >= 2 (batch norm statistics)");
  if (patience < 0) throw ConfigError("train: patience must be >= 0");
  if (embedding_dim < 1) throw ConfigError("train: embedding_dim must be >= 1");
  if (!(scale.s_start > scale.s_end && scale.s_end > 0)) throw ConfigError("train.loss: need scale_start > scale_end > 0");
  if (!(gumbel_temperature > 0)) throw ConfigError("train.loss: gumbel_temperature must be > 0");
  if (!(loss.am.margin >= 0 && loss.am.margin < 1)) throw ConfigError("train.loss: margin must be in [0,1)");
  if (loss.am.entropy_weight < 0) throw ConfigError("train.loss: entropy_weight must be >= 0");
  if (tv_weight < 0) throw ConfigError("train.loss: tv_weight must be >= 0");
  if (!(augment_config.min_intersection > 0 && augment_config.min_intersection <= 1)) {
    throw ConfigError("train.augmentation: min_intersection must be in (0,1]");
  }
}

double lr_at(const TrainConfig& c, double epoch) {
  if (epoch < c.warmup_epochs) {
    return c.warmup_start_lr + (c.base_lr - c.warmup_start_lr) * epoch / c.warmup_epochs;
  }
  if (epoch <= c.drop_epoch) return c.base_lr;
  return c.base_lr * c.drop_factor;
}

torch::Tensor init_class_centers(int num_classes, int dim, at::Generator& gen) {
  if (num_classes < 2) throw ConfigError("need at least 2 classes");
  auto w = torch::randn({num_classes, dim}, gen, torch::kFloat);
  return w / w.norm(2, 1, true);
}

void renormalize_centers(torch::Tensor& centers) {
  torch::NoGradGuard no_grad;
  centers.div_(centers.norm(2, 1, true));
}

TrainState make_train_state(const BackboneConfig& backbone, const TrainConfig& config,
                            std::vector<std::string> class_names, InputNorm norm) {
  config.validate();
  TrainState s;
  s.config = config;
  s.norm = norm;
  s.class_names = std::move(class_names);
  // Weight init draws from the global generator; seed it so construction is
  // reproducible too.
  torch::manual_seed(config.seed);
  s.model = GestureNet(backbone, config.embedding_dim);
  s.model->backbone()->set_gumbel({config.gumbel_temperature, GumbelConfig::Mode::kSample});
  s.rng = make_generator(config.seed);
  s.centers = init_class_centers(static_cast<int>(s.class_names.size()), config.embedding_dim, s.rng);
  return s;
}

nlohmann::json to_json(const EpochRecord& r) {
  return {{"epoch", r.epoch}, {"lr", r.lr},       {"scale", r.scale},
          {"am", r.am},       {"push", r.push},   {"cpush", r.cpush},
          {"tv", r.tv},       {"total", r.total}, {"train_top1", r.train_top1},
          {"val_top1", r.val_top1}, {"val_mAP", r.val_map}};
}

torch::Tensor make_training_clip(const ClipAnnotation& ann, const Video& video, const BackboneConfig& backbone,
                                 const TrainConfig& config, const InputNorm& norm, Rng& rng) {
  const int T = backbone.input_temporal;
  const int S = backbone.input_spatial;
  std::vector<int> idx;
  if (config.augment) {
    auto window = sample_training_window(ann, T, config.augment_config.min_intersection, rng);
    idx = window_frame_indices(window, ann.num_frames());
  } else {
    idx = central_window_indices(ann, T);
  }
  auto frames = gather_frames(video, idx);
  auto boxes = gather_boxes(ann.boxes, idx);
  auto clip = crop_and_resize(frames, boxes, BoxMode::kMax, S);
  if (config.augment) clip = augment_clip(clip, sample_augment_params(config.augment_config, S, S, rng));
  return preprocess_clip(clip, norm);
}

std::unique_ptr<torch::optim::SGD> make_optimizer(GestureNetImpl& model, torch::Tensor& centers,
                                                  const TrainConfig& config) {
  std::vector<torch::Tensor> decay, no_decay;
  for (auto& p : model.parameters()) {
    if (!p.requires_grad()) continue;
    (p.dim() > 1 ? decay : no_decay).push_back(p);
  }
  centers.set_requires_grad(true);
  no_decay.push_back(centers);
  auto base = torch::optim::SGDOptions(config.base_lr).momentum(config.momentum);
  std::vector<torch::optim::OptimizerParamGroup> groups;
  groups.emplace_back(decay, std::make_unique<torch::optim::SGDOptions>(
                                 torch::optim::SGDOptions(config.base_lr).momentum(config.momentum).weight_decay(config.weight_decay)));
  groups.emplace_back(no_decay, std::make_unique<torch::optim::SGDOptions>(
                                    torch::optim::SGDOptions(config.base_lr).momentum(config.momentum).weight_decay(0.0)));
  return std::make_unique<torch::optim::SGD>(std::move(groups), base);
}

FitResult fit(TrainState& state, const Dataset& train, const Dataset* val, const EpochCallback& on_epoch) {
  const auto& cfg = state.config;
  cfg.validate();
  if (train.size() < 2) throw DataError("training set needs at least 2 clips");
  const auto& bcfg = state.model->config();
  auto optimizer = make_optimizer(*state.model, state.centers, cfg);

  FitResult result;
  double best_val = -1;
  int stale = 0;
  Snapshot best;

  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);

  for (; state.epoch < cfg.max_epochs; ) {
    const int epoch = state.epoch;
    Snapshot last_good = take_snapshot(state);
    Rng data_rng(cfg.seed * 1000003ULL + static_cast<uint64_t>(epoch));
    std::shuffle(order.begin(), order.end(), data_rng);

    LossConfig loss_cfg = cfg.loss;
    loss_cfg.am.scale = scale_at(cfg.scale, epoch);
    EpochRecord rec;
    rec.epoch = epoch;
    rec.scale = loss_cfg.am.scale;

    const std::size_t bs = static_cast<std::size_t>(cfg.batch_clips);
    const std::size_t num_batches = (order.size() + bs - 1) / bs;
    int counted = 0;
    for (std::size_t b = 0; b < num_batches; ++b) {
      const std::size_t lo = b * bs;
      const std::size_t hi = std::min(order.size(), lo + bs);
      if (hi - lo < 2) continue;  // batch norm needs two samples
      const double progress = epoch < cfg.warmup_epochs ? static_cast<double>(b) / num_batches : 0.0;
      const double lr = lr_at(cfg, epoch + progress);
      for (auto& g : optimizer->param_groups()) static_cast<torch::optim::SGDOptions&>(g.options()).lr(lr);
      if (b == 0) rec.lr = lr;

      std::vector<torch::Tensor> clips;
      std::vector<int64_t> labels;
      for (std::size_t i = lo; i < hi; ++i) {
        const auto& ann = train.manifest.records[order[i]];
        clips.push_back(make_training_clip(ann, train.videos[order[i]], bcfg, cfg, state.norm, data_rng));
        labels.push_back(ann.label);
      }
      auto out = state.model->forward(torch::stack(clips), RunMode::train(state.rng));
      std::vector<torch::Tensor> tv_scores;
      for (const auto& a : out.attention) tv_scores.push_back(a.scores);
      auto terms = compute_loss_terms(out.embedding, torch::tensor(labels), state.centers, tv_scores, loss_cfg);
      for (auto& t : terms.tv) t = t * cfg.tv_weight;

      torch::Tensor total;
      try {
        total = total_loss(terms);
      } catch (const NumericError& e) {
        restore_snapshot(state, last_good);
        result.aborted = true;
        result.error = e.what();
        return result;
      }
      optimizer->zero_grad();
      total.backward();
      optimizer->step();
      renormalize_centers(state.centers);

      rec.am += terms.am.item<double>();
      rec.push += terms.push.item<double>();
      rec.cpush += terms.cpush.item<double>();
      for (const auto& t : terms.tv) rec.tv += t.item<double>();
      rec.total += total.item<double>();
      ++counted;
    }
    if (counted > 0) {
      rec.am /= counted;
      rec.push /= counted;
      rec.cpush /= counted;
      rec.tv /= counted;
      rec.total /= counted;
    }
    state.epoch = epoch + 1;

    auto centers = state.centers.detach();
    if (cfg.eval_train) rec.train_top1 = evaluate(*state.model, centers, train, state.norm).top1;
    if (val != nullptr && val->size() > 0) {
      auto rep = evaluate(*state.model, centers, *val, state.norm);
      rec.val_top1 = rep.top1;
      rec.val_map = rep.map;
    }
    result.history.push_back(rec);
    if (on_epoch) on_epoch(rec);

    if (val != nullptr && val->size() > 0) {
      if (rec.val_top1 > best_val) {
        best_val = rec.val_top1;
        best = take_snapshot(state);
        result.best_epoch = epoch;
        stale = 0;
      } else if (cfg.patience > 0 && ++stale >= cfg.patience) {
        result.stopped_early = true;
        break;
      }
    }
  }
  if (result.best_epoch >= 0) {
    const int reached = state.epoch;
    restore_snapshot(state, best);
    state.epoch = reached;
  }
  return result;
}

const torch::Tensor* Checkpoint::find(const std::string& name) const {
  for (const auto& [n, t] : entries) {
    if (n == name) return &t;
  }
  return nullptr;
}

Checkpoint make_checkpoint(TrainState& state) {
  Checkpoint c;
  c.epoch = state.epoch;
  c.config = {{"backbone", to_json(state.model->config())},
              {"train", to_json(state.config)},
              {"input_norm", to_json(state.norm)},
              {"class_names", state.class_names},
              {"embedding_dim", state.model->head()->dim()}};
  for (auto& [name, t] : named_state(*state.model)) c.entries.emplace_back(name, t.detach());
  c.entries.emplace_back("centers", state.centers.detach());
  c.entries.emplace_back("rng_state", state.rng.get_state());
  return c;
}

void save_checkpoint(const Checkpoint& checkpoint, const std::string& path) {
  nlohmann::json manifest = nlohmann::json::array();
  uint64_t offset = 0;
  std::vector<torch::Tensor> blobs;
  for (const auto& [name, t] : checkpoint.entries) {
    auto c = t.contiguous().cpu();
    const uint64_t nbytes = static_cast<uint64_t>(c.numel()) * c.element_size();
    manifest.push_back({{"name", name},
                        {"dtype", dtype_name(c.scalar_type())},
                        {"shape", c.sizes().vec()},
                        {"offset", offset},
                        {"nbytes", nbytes}});
    offset += nbytes;
    blobs.push_back(c);
  }
  const nlohmann::json header = {{"entries", manifest}, {"config", checkpoint.config}, {"epoch", checkpoint.epoch}};
  const std::string text = header.dump();
  const auto tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw CheckpointError("cannot write checkpoint '" + path + "'");
    out.write(kCkptMagic, 4);
    out.write(reinterpret_cast<const char*>(&kCkptVersion), sizeof kCkptVersion);
    const uint64_t size = text.size();
    out.write(reinterpret_cast<const char*>(&size), sizeof size);
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& b : blobs) {
      out.write(static_cast<const char*>(b.data_ptr()), static_cast<std::streamsize>(b.numel() * b.element_size()));
    }
    if (!out) throw CheckpointError("failed writing checkpoint '" + path + "'");
  }
  std::filesystem::rename(tmp, path);
}

void save_checkpoint(TrainState& state, const std::string& path) { save_checkpoint(make_checkpoint(state), path); }

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw CheckpointError("cannot open checkpoint '" + path + "'");
  const auto file_size = static_cast<uint64_t>(in.tellg());
  in.seekg(0);
  char magic[4];
  uint32_t version = 0;
  uint64_t header_size = 0;
  in.read(magic, 4);
  in.read(reinterpret_cast<char*>(&version), sizeof version);
  in.read(reinterpret_cast<char*>(&header_size), sizeof header_size);
  if (!in || std::memcmp(magic, kCkptMagic, 4) != 0) throw CheckpointError("'" + path + "' is not a checkpoint");
  if (version != kCkptVersion) throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  const uint64_t data_start = 4 + sizeof version + sizeof header_size + header_size;
  if (header_size == 0 || data_start > file_size) throw CheckpointError("checkpoint '" + path + "' is truncated");
  std::string text(header_size, '\0');
  in.read(text.data(), static_cast<std::streamsize>(header_size));
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError("checkpoint '" + path + "' has a corrupt header: " + e.what());
  }

  Checkpoint c;
  try {
    c.config = header.at("config");
    c.epoch = header.at("epoch").get<int>();
    uint64_t expected = 0;
    std::vector<std::string> missing;
    for (const auto& e : header.at("entries")) {
      expected = std::max(expected, e.at("offset").get<uint64_t>() + e.at("nbytes").get<uint64_t>());
    }
    if (data_start + expected != file_size) {
      throw CheckpointError("checkpoint '" + path + "' is truncated or has trailing data (expected " +
                            std::to_string(data_start + expected) + " bytes, found " + std::to_string(file_size) + ")");
    }
    for (const auto& e : header.at("entries")) {
      const auto shape = e.at("shape").get<std::vector<int64_t>>();
      auto t = torch::empty(shape, dtype_from_name(e.at("dtype").get<std::string>()));
      const auto nbytes = e.at("nbytes").get<uint64_t>();
      if (nbytes != static_cast<uint64_t>(t.numel()) * t.element_size()) {
        throw CheckpointError("entry '" + e.at("name").get<std::string>() + "' size disagrees with its shape");
      }
      in.seekg(static_cast<std::streamoff>(data_start + e.at("offset").get<uint64_t>()));
      in.read(static_cast<char*>(t.data_ptr()), static_cast<std::streamsize>(nbytes));
      if (!in) throw CheckpointError("checkpoint '" + path + "' is truncated");
      c.entries.emplace_back(e.at("name").get<std::string>(), t);
    }
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError("checkpoint '" + path + "' has a malformed manifest: " + e.what());
  }
  return c;
}

void load_model_weights(GestureNetImpl& model, const Checkpoint& checkpoint) {
  static const std::set<std::string> extras = {"centers", "rng_state"};
  auto state = named_state(model);
  std::set<std::string> known;
  for (const auto& [name, _] : state) known.insert(name);
  std::vector<std::string> unknown;
  for (const auto& [name, _] : checkpoint.entries) {
    if (!known.contains(name) && !extras.contains(name)) unknown.push_back(name);
  }
  if (!unknown.empty()) {
    std::string msg = "checkpoint has unknown entries:";
    for (const auto& n : unknown) msg += " " + n;
    throw CheckpointError(msg);
  }
  std::vector<std::string> missing;
  for (const auto& [name, t] : state) {
    const auto* src = checkpoint.find(name);
    if (src == nullptr) {
      missing.push_back(name);
      continue;
    }
    if (src->sizes() != t.sizes() || src->scalar_type() != t.scalar_type()) {
      throw CheckpointError("shape mismatch for entry '" + name + "': checkpoint " + c10::str(src->sizes()) +
                            ", model " + c10::str(t.sizes()));
    }
  }
  if (!missing.empty()) {
    std::string msg = "checkpoint is missing entries:";
    for (const auto& n : missing) msg += " " + n;
    throw CheckpointError(msg);
  }
  torch::NoGradGuard no_grad;
  for (auto& [name, t] : state) t.copy_(*checkpoint.find(name));
}

TrainState state_from_checkpoint(const Checkpoint& checkpoint) {
  TrainState s;
  try {
    const auto& cfg = checkpoint.config;
    s.config = train_config_from_json(cfg.at("train"));
    s.norm = input_norm_from_json(cfg.at("input_norm"));
    s.class_names = cfg.at("class_names").get<std::vector<std::string>>();
    const auto backbone = backbone_config_from_json(cfg.at("backbone"));
    s.model = GestureNet(backbone, cfg.at("embedding_dim").get<int64_t>());
    s.model->backbone()->set_gumbel({s.config.gumbel_temperature, GumbelConfig::Mode::kSample});
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("checkpoint config echo is malformed: ") + e.what());
  } catch (const ConfigError& e) {
    throw CheckpointError(std::string("checkpoint config echo is invalid: ") + e.what());
  }
  load_model_weights(*s.model, checkpoint);
  const auto* centers = checkpoint.find("centers");
  if (centers == nullptr) throw CheckpointError("checkpoint is missing entries: centers");
  if (centers->dim() != 2 || centers->size(0) != static_cast<int64_t>(s.class_names.size()) ||
      centers->size(1) != s.model->head()->dim()) {
    throw CheckpointError("shape mismatch for entry 'centers'");
  }
  s.centers = centers->clone();
  s.rng = make_generator(s.config.seed);
  if (const auto* rng = checkpoint.find("rng_state")) s.rng.set_state(*rng);
  s.epoch = checkpoint.epoch;
  return s;
}

}  // namespace gesture
