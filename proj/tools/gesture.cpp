#include <iostream>

#include <CLI11.hpp>

#include "gesture/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Gesture recognition: synthetic data, training, evaluation, stream inference"};
  app.require_subcommand(1);
  gesture::CommandArgs args;

  auto add_overrides = [&](CLI::App* cmd) {
    cmd->add_option("--set", args.overrides, "Override a config key, e.g. train.base_lr=0.02")->take_all();
  };

  auto* synth = app.add_subcommand("synth-data", "Generate the synthetic motion dataset");
  synth->add_option("--spec", args.spec, "Dataset spec JSON (defaults if omitted)");
  synth->add_option("--out", args.out, "Output directory")->required();
  add_overrides(synth);

  auto* train = app.add_subcommand("train", "Train a model");
  train->add_option("--config", args.config, "Run config JSON");
  train->add_option("--data", args.data, "Training manifest")->required();
  train->add_option("--out", args.out, "Output directory")->required();
  add_overrides(train);

  auto* eval = app.add_subcommand("evaluate", "Evaluate a checkpoint with the continuous-stream protocol");
  eval->add_option("--checkpoint", args.checkpoint, "Checkpoint file")->required();
  eval->add_option("--data", args.data, "Evaluation manifest")->required();
  eval->add_option("--out", args.out, "Output directory")->required();
  eval->add_option("--config", args.config, "Run config JSON (eval section)");
  add_overrides(eval);

  auto* infer = app.add_subcommand("infer", "Per-frame predictions over a frame directory");
  infer->add_option("--checkpoint", args.checkpoint, "Checkpoint file")->required();
  infer->add_option("--frames-dir", args.frames_dir, "Directory of numbered frames")->required();
  infer->add_option("--boxes", args.boxes, "Box file, one x0 y0 x1 y1 per line")->required();
  infer->add_option("--out", args.out, "Output directory")->required();
  infer->add_option("--config", args.config, "Run config JSON (infer section)");
  add_overrides(infer);

  auto* inspect = app.add_subcommand("inspect", "Print checkpoint summary and model size");
  inspect->add_option("--checkpoint", args.checkpoint, "Checkpoint file")->required();

  CLI11_PARSE(app, argc, argv);
  args.command = app.get_subcommands().front()->get_name();
  return gesture::run(args, std::cout);
}
