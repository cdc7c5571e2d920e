#include "gesture/config_io.hpp"

#include <cmath>

#include "gesture/error.hpp"

namespace gesture {
namespace {

std::string join(const std::string& path, const std::string& key) {
  return path.empty() ? key : path + "." + key;
}

// Reads `key` from an already-merged document; merge_strict has vetted types.
template <typename T>
T read(const nlohmann::json& doc, const std::string& key, const std::string& path) {
  try {
    return doc.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError("type mismatch for key '" + join(path, key) + "'");
  }
}

}  // namespace

void merge_strict(nlohmann::json& base, const nlohmann::json& patch, const std::string& path) {
  if (!patch.is_object()) throw ConfigError("expected an object at '" + (path.empty() ? "<root>" : path) + "'");
  for (const auto& [key, value] : patch.items()) {
    const auto full = join(path, key);
    if (!base.is_object() || !base.contains(key)) throw ConfigError("unknown key '" + full + "'");
    auto& target = base[key];
    if (target.is_object()) {
      merge_strict(target, value, full);
      continue;
    }
    bool ok = false;
    if (target.is_null()) ok = true;
    else if (target.is_boolean()) ok = value.is_boolean();
    else if (target.is_number_float()) ok = value.is_number();
    else if (target.is_number_integer()) ok = value.is_number_integer() ||
                                             (value.is_number_float() && value.get<double>() == std::floor(value.get<double>()));
    else if (target.is_string()) ok = value.is_string();
    else if (target.is_array()) ok = value.is_array();
    if (!ok) throw ConfigError("type mismatch for key '" + full + "': got " + value.dump());
    if (target.is_number_integer() && value.is_number_float()) {
      target = static_cast<int64_t>(value.get<double>());
    } else {
      target = value;
    }
  }
}

nlohmann::json to_json(const TrainConfig& c) {
  const auto& a = c.augment_config;
  return {
      {"base_lr", c.base_lr},
      {"warmup_epochs", c.warmup_epochs},
      {"warmup_start_lr", c.warmup_start_lr},
      {"drop_epoch", c.drop_epoch},
      {"drop_factor", c.drop_factor},
      {"weight_decay", c.weight_decay},
      {"momentum", c.momentum},
      {"batch_clips", c.batch_clips},
      {"max_epochs", c.max_epochs},
      {"patience", c.patience},
      {"seed", c.seed},
      {"embedding_dim", c.embedding_dim},
      {"augment", c.augment},
      {"eval_train", c.eval_train},
      {"loss",
       {{"margin", c.loss.am.margin},
        {"entropy_weight", c.loss.am.entropy_weight},
        {"push_margin", c.loss.push_margin},
        {"center_push_margin", c.loss.center_push_margin},
        {"pr_product", c.loss.use_pr_product},
        {"tv_weight", c.tv_weight},
        {"gumbel_temperature", c.gumbel_temperature},
        {"scale_start", c.scale.s_start},
        {"scale_end", c.scale.s_end},
        {"scale_epochs", c.scale.duration_epochs}}},
      {"augmentation",
       {{"brightness", a.brightness},
        {"contrast", a.contrast},
        {"saturation", a.saturation},
        {"hue", a.hue},
        {"erase_prob", a.erase_prob},
        {"erase_area_min", a.erase_area_min},
        {"erase_area_max", a.erase_area_max},
        {"erase_aspect_min", a.erase_aspect_min},
        {"erase_aspect_max", a.erase_aspect_max},
        {"mixup_max", a.mixup_max},
        {"min_intersection", a.min_intersection}}},
  };
}

TrainConfig train_config_from_json(const nlohmann::json& doc) {
  TrainConfig c;
  auto merged = to_json(c);
  merge_strict(merged, doc, "train");
  c.base_lr = read<double>(merged, "base_lr", "train");
  c.warmup_epochs = read<int>(merged, "warmup_epochs", "train");
  c.warmup_start_lr = read<double>(merged, "warmup_start_lr", "train");
  c.drop_epoch = read<int>(merged, "drop_epoch", "train");
  c.drop_factor = read<double>(merged, "drop_factor", "train");
  c.weight_decay = read<double>(merged, "weight_decay", "train");
  c.momentum = read<double>(merged, "momentum", "train");
  c.batch_clips = read<int>(merged, "batch_clips", "train");
  c.max_epochs = read<int>(merged, "max_epochs", "train");
  c.patience = read<int>(merged, "patience", "train");
  c.seed = read<uint64_t>(merged, "seed", "train");
  c.embedding_dim = read<int>(merged, "embedding_dim", "train");
  c.augment = read<bool>(merged, "augment", "train");
  c.eval_train = read<bool>(merged, "eval_train", "train");
  const auto& l = merged.at("loss");
  c.loss.am.margin = read<double>(l, "margin", "train.loss");
  c.loss.am.entropy_weight = read<double>(l, "entropy_weight", "train.loss");
  c.loss.push_margin = read<double>(l, "push_margin", "train.loss");
  c.loss.center_push_margin = read<double>(l, "center_push_margin", "train.loss");
  c.loss.use_pr_product = read<bool>(l, "pr_product", "train.loss");
  c.tv_weight = read<double>(l, "tv_weight", "train.loss");
  c.gumbel_temperature = read<double>(l, "gumbel_temperature", "train.loss");
  c.scale.s_start = read<double>(l, "scale_start", "train.loss");
  c.scale.s_end = read<double>(l, "scale_end", "train.loss");
  c.scale.duration_epochs = read<double>(l, "scale_epochs", "train.loss");
  const auto& a = merged.at("augmentation");
  auto& ac = c.augment_config;
  ac.brightness = read<double>(a, "brightness", "train.augmentation");
  ac.contrast = read<double>(a, "contrast", "train.augmentation");
  ac.saturation = read<double>(a, "saturation", "train.augmentation");
  ac.hue = read<double>(a, "hue", "train.augmentation");
  ac.erase_prob = read<double>(a, "erase_prob", "train.augmentation");
  ac.erase_area_min = read<double>(a, "erase_area_min", "train.augmentation");
  ac.erase_area_max = read<double>(a, "erase_area_max", "train.augmentation");
  ac.erase_aspect_min = read<double>(a, "erase_aspect_min", "train.augmentation");
  ac.erase_aspect_max = read<double>(a, "erase_aspect_max", "train.augmentation");
  ac.mixup_max = read<double>(a, "mixup_max", "train.augmentation");
  ac.min_intersection = read<double>(a, "min_intersection", "train.augmentation");
  c.validate();
  return c;
}

nlohmann::json to_json(const InputNorm& n) { return {{"mean", n.mean}, {"std", n.std}}; }

InputNorm input_norm_from_json(const nlohmann::json& doc) {
  InputNorm n;
  auto merged = to_json(n);
  merge_strict(merged, doc, "input_norm");
  auto mean = read<std::vector<double>>(merged, "mean", "input_norm");
  auto std = read<std::vector<double>>(merged, "std", "input_norm");
  if (mean.size() != 3 || std.size() != 3) throw ConfigError("input_norm mean/std need 3 values");
  for (int i = 0; i < 3; ++i) {
    if (!(std[i] > 0)) throw ConfigError("input_norm.std must be positive");
    n.mean[i] = mean[i];
    n.std[i] = std[i];
  }
  return n;
}

nlohmann::json to_json(const StreamConfig& c) { return {{"threshold", c.threshold}, {"stride", c.stride}}; }

StreamConfig stream_config_from_json(const nlohmann::json& doc) {
  StreamConfig c;
  auto merged = to_json(c);
  merge_strict(merged, doc, "infer");
  c.threshold = read<double>(merged, "threshold", "infer");
  c.stride = read<int>(merged, "stride", "infer");
  if (c.stride < 1) throw ConfigError("infer.stride must be >= 1");
  return c;
}

nlohmann::json to_json(const EvalOptions& o) { return {{"class_balanced", o.class_balanced}, {"batch", o.batch}}; }

EvalOptions eval_options_from_json(const nlohmann::json& doc) {
  EvalOptions o;
  auto merged = to_json(o);
  merge_strict(merged, doc, "eval");
  o.class_balanced = read<bool>(merged, "class_balanced", "eval");
  o.batch = read<int>(merged, "batch", "eval");
  if (o.batch < 1) throw ConfigError("eval.batch must be >= 1");
  return o;
}

}  // namespace gesture
