#include "gesture/cli.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "gesture/error.hpp"
#include "gesture/evaluator.hpp"
#include "gesture/stream.hpp"
#include "gesture/synthetic.hpp"
#include "gesture/trainer.hpp"
#include "gesture/video_io.hpp"

namespace gesture {
namespace fs = std::filesystem;
namespace {

nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  const auto text = buf.str();
  if (text.find_first_not_of(" \t\r\n") == std::string::npos) return nlohmann::json::object();
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("'" + path + "' is not valid JSON: " + e.what());
  }
}

void write_json_file(const fs::path& path, const nlohmann::json& doc) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write '" + path.string() + "'");
  out << doc.dump(2) << "\n";
}

void emit(std::ostream& log, nlohmann::json event) {
  log << event.dump() << std::endl;
}

void require(const std::string& value, const std::string& flag, const std::string& command) {
  if (value.empty()) throw ConfigError(command + " requires " + flag);
}

fs::path prepare_out(const std::string& out) {
  fs::path dir(out);
  fs::create_directories(dir);
  fs::remove(dir / "error.json");
  return dir;
}

int synth_data(const CommandArgs& a, std::ostream& log) {
  require(a.out, "--out", a.command);
  auto doc = to_json(SyntheticDatasetSpec{});
  if (!a.spec.empty()) merge_strict(doc, read_json_file(a.spec), "spec");
  for (const auto& o : a.overrides) apply_override(doc, o);
  const auto spec = synthetic_spec_from_json(doc);
  const auto dir = prepare_out(a.out);
  write_json_file(dir / "spec.json", to_json(spec));
  emit(log, {{"event", "synth_start"}, {"spec", to_json(spec)}});
  const auto ds = generate_synthetic_dataset(spec);
  const auto manifest = write_dataset(ds, a.out);
  emit(log, {{"event", "synth_done"}, {"manifest", manifest}, {"clips", ds.size()},
             {"classes", ds.manifest.class_names.size()}});
  return 0;
}

int train(const CommandArgs& a, std::ostream& log) {
  require(a.data, "--data", a.command);
  require(a.out, "--out", a.command);
  const auto cfg = parse_config(a.config, a.overrides);
  const auto dir = prepare_out(a.out);
  write_json_file(dir / "config.json", to_json(cfg));

  const auto data = load_dataset(a.data);
  Dataset val;
  if (!cfg.val_data.empty()) val = load_dataset(cfg.val_data);
  auto state = make_train_state(cfg.backbone, cfg.train, data.manifest.class_names, cfg.input_norm);
  const auto stats = network_stats(*state.model);
  emit(log, {{"event", "train_start"}, {"clips", data.size()}, {"val_clips", val.size()},
             {"classes", data.manifest.class_names.size()}, {"params", stats.params}, {"flops", stats.flops}});

  std::ofstream history(dir / "history.jsonl");
  const auto result = fit(state, data, cfg.val_data.empty() ? nullptr : &val, [&](const EpochRecord& r) {
    auto j = to_json(r);
    history << j.dump() << std::endl;
    j["event"] = "epoch";
    emit(log, j);
  });
  const auto ckpt = (dir / "checkpoint.gckp").string();
  save_checkpoint(state, ckpt);
  emit(log, {{"event", "train_done"}, {"checkpoint", ckpt}, {"epochs", result.history.size()},
             {"stopped_early", result.stopped_early}, {"best_epoch", result.best_epoch}});
  if (result.aborted) throw NumericError(result.error + " (last good state saved to " + ckpt + ")");
  return 0;
}

TrainState open_checkpoint(const std::string& path) { return state_from_checkpoint(load_checkpoint(path)); }

int evaluate_cmd(const CommandArgs& a, std::ostream& log) {
  require(a.checkpoint, "--checkpoint", a.command);
  require(a.data, "--data", a.command);
  require(a.out, "--out", a.command);
  const auto cfg = parse_config(a.config, a.overrides);
  const auto dir = prepare_out(a.out);
  auto ckpt = load_checkpoint(a.checkpoint);
  auto state = state_from_checkpoint(ckpt);
  const auto data = load_dataset(a.data);
  emit(log, {{"event", "evaluate_start"}, {"checkpoint", a.checkpoint}, {"clips", data.size()}});
  const auto report = evaluate(*state.model, state.centers, data, state.norm, cfg.eval);
  auto doc = to_json(report);
  doc["class_names"] = state.class_names;
  doc["config"] = ckpt.config;
  doc["eval"] = to_json(cfg.eval);
  doc["checkpoint_epoch"] = ckpt.epoch;
  write_json_file(dir / "report.json", doc);
  emit(log, {{"event", "evaluate_done"}, {"top1", report.top1}, {"mAP", report.map}, {"samples", report.samples}});
  return 0;
}

int infer(const CommandArgs& a, std::ostream& log) {
  require(a.checkpoint, "--checkpoint", a.command);
  require(a.frames_dir, "--frames-dir", a.command);
  require(a.boxes, "--boxes", a.command);
  require(a.out, "--out", a.command);
  const auto cfg = parse_config(a.config, a.overrides);
  const auto dir = prepare_out(a.out);
  auto state = open_checkpoint(a.checkpoint);
  const auto frames = load_frame_dir(a.frames_dir);
  const auto boxes = load_boxes(a.boxes);
  if (static_cast<int64_t>(boxes.size()) != frames.size(0)) {
    throw DataError("frames dir has " + std::to_string(frames.size(0)) + " frames but box file has " +
                    std::to_string(boxes.size()) + " boxes");
  }
  StreamRecognizer rec(state.model, state.centers, state.norm, cfg.infer);
  std::ofstream out(dir / "predictions.txt");
  out << "# frame\tclass_id\tclass_name\tconfidence\n";
  int emitted = 0, rejected = 0;
  for (int64_t i = 0; i < frames.size(0); ++i) {
    const auto r = rec.push_frame(frames[i], boxes[i]);
    out << i << '\t';
    if (r.prediction) {
      ++emitted;
      const auto& p = *r.prediction;
      if (p.class_id) out << *p.class_id << '\t' << state.class_names.at(*p.class_id);
      else out << "-\t-";
      out << '\t' << p.confidence << '\n';
    } else {
      if (r.status == StreamRecognizer::Status::kRejected) ++rejected;
      out << "-\t-\t-\n";
    }
  }
  emit(log, {{"event", "infer_done"}, {"frames", frames.size(0)}, {"predictions", emitted},
             {"rejected_frames", rejected}, {"output", (dir / "predictions.txt").string()}});
  return 0;
}

int inspect(const CommandArgs& a, std::ostream& log) {
  require(a.checkpoint, "--checkpoint", a.command);
  auto ckpt = load_checkpoint(a.checkpoint);
  auto state = state_from_checkpoint(ckpt);
  const auto backbone = model_stats(*state.model->backbone());
  const auto network = network_stats(*state.model);
  emit(log, {{"event", "inspect"},
             {"checkpoint", a.checkpoint},
             {"epoch", ckpt.epoch},
             {"params", backbone.params},
             {"flops", backbone.flops},
             {"network_params", network.params},
             {"network_flops", network.flops},
             {"input", state.model->backbone()->input_shape().str()},
             {"features", state.model->backbone()->output_shape().str()},
             {"embedding_dim", state.model->head()->dim()},
             {"classes", state.class_names}});
  return 0;
}

}  // namespace

nlohmann::json to_json(const RunConfig& c) {
  auto train = to_json(c.train);
  train.erase("seed");
  return {{"seed", c.seed},
          {"backbone", to_json(c.backbone)},
          {"train", train},
          {"infer", to_json(c.infer)},
          {"eval", to_json(c.eval)},
          {"input_norm", to_json(c.input_norm)},
          {"val_data", c.val_data}};
}

nlohmann::json default_run_document() { return to_json(RunConfig{}); }

RunConfig run_config_from_json(const nlohmann::json& doc) {
  auto merged = default_run_document();
  merge_strict(merged, doc);
  RunConfig c;
  try {
    c.seed = merged.at("seed").get<uint64_t>();
    c.val_data = merged.at("val_data").get<std::string>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError("type mismatch for key 'seed' or 'val_data'");
  }
  c.backbone = backbone_config_from_json(merged.at("backbone"));
  auto train = merged.at("train");
  train["seed"] = c.seed;
  c.train = train_config_from_json(train);
  c.infer = stream_config_from_json(merged.at("infer"));
  c.eval = eval_options_from_json(merged.at("eval"));
  c.input_norm = input_norm_from_json(merged.at("input_norm"));
  return c;
}

void apply_override(nlohmann::json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "' is not key=value");
  const auto key = assignment.substr(0, eq);
  const auto text = assignment.substr(eq + 1);
  nlohmann::json value;
  try {
    value = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception&) {
    value = text;
  }
  nlohmann::json patch = value;
  std::string rest = key;
  std::vector<std::string> parts;
  for (std::size_t pos; (pos = rest.find('.')) != std::string::npos; rest = rest.substr(pos + 1)) {
    parts.push_back(rest.substr(0, pos));
  }
  parts.push_back(rest);
  for (auto it = parts.rbegin(); it != parts.rend(); ++it) {
    if (it->empty()) throw ConfigError("override key '" + key + "' has an empty component");
    patch = nlohmann::json{{*it, patch}};
  }
  merge_strict(doc, patch);
}

RunConfig parse_config(const std::string& path, const std::vector<std::string>& overrides) {
  auto doc = default_run_document();
  if (!path.empty()) merge_strict(doc, read_json_file(path));
  for (const auto& o : overrides) apply_override(doc, o);
  return run_config_from_json(doc);
}

int run(const CommandArgs& args, std::ostream& log) {
  const auto t0 = std::chrono::steady_clock::now();
  try {
    int status = 1;
    if (args.command == "synth-data") status = synth_data(args, log);
    else if (args.command == "train") status = train(args, log);
    else if (args.command == "evaluate") status = evaluate_cmd(args, log);
    else if (args.command == "infer") status = infer(args, log);
    else if (args.command == "inspect") status = inspect(args, log);
    else throw ConfigError("unknown command '" + args.command + "'");
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    emit(log, {{"event", "done"}, {"command", args.command}, {"seconds", secs}});
    return status;
  } catch (const std::exception& e) {
    nlohmann::json err = {{"event", "error"}, {"command", args.command}, {"message", e.what()}};
    emit(log, err);
    if (!args.out.empty()) {
      try {
        fs::create_directories(args.out);
        write_json_file(fs::path(args.out) / "error.json", err);
      } catch (const std::exception&) {
      }
    }
    return 1;
  }
}

}  // namespace gesture
