// mesoforge: train, evaluate and inspect Meso-4 / MesoInception-4 detectors.

#include <functional>
#include <iostream>
#include <list>
#include <memory>

#include <CLI11.hpp>

#include "mesoforge/cli.hpp"
#include "mesoforge/parallel.hpp"

using mesoforge::RunConfig;

namespace {

// Options of one subcommand. Values land in `flags`; with --config the file
// supplies the base and only flags given on the command line override it.
struct Command {
  CLI::App* app = nullptr;
  RunConfig flags;
  std::string config_file;
  bool no_augment = false;
  std::vector<std::pair<CLI::Option*, std::function<void(RunConfig&)>>> copies;

  template <typename F>
  CLI::Option* add(const std::string& name, F field, const std::string& help) {
    CLI::Option* o = app->add_option(name, field(flags), help)->capture_default_str();
    copies.emplace_back(o, [this, field](RunConfig& dst) { field(dst) = field(flags); });
    return o;
  }

  RunConfig resolve() const {
    RunConfig base = flags;
    if (!config_file.empty()) {
      base = mesoforge::load_run_config(config_file);
      base.command = flags.command;
      for (const auto& [option, copy] : copies) {
        if (option->count() > 0) copy(base);
      }
    }
    if (no_augment) base.augment = false;
    return base;
  }
};

#define FIELD(member) [](RunConfig& c) -> auto& { return c.member; }

Command& make_command(CLI::App& root, std::list<Command>& commands, const std::string& name,
                      const std::string& help) {
  Command& cmd = commands.emplace_back();
  cmd.app = root.add_subcommand(name, help);
  cmd.flags.command = name;
  cmd.flags.output_dir = "mesoforge-" + name;
  cmd.flags.threads = mesoforge::default_threads();
  cmd.app->add_option("--config", cmd.config_file,
                      "Rerun from a run.json; other flags override its values")
      ->check(CLI::ExistingFile);
  cmd.add("--out", FIELD(output_dir), "Output directory");
  cmd.add("--threads", FIELD(threads), "Worker threads (default: $MESOFORGE_THREADS or 1)");
  cmd.add("--seed", FIELD(seed), "Master seed");
  return cmd;
}

void add_checkpoint(Command& cmd) {
  cmd.add("--checkpoint", FIELD(checkpoint), "Weights file (.msw)");
  if (cmd.flags.command != "inspect") {
    cmd.flags.arch.clear();
    cmd.add("--arch", FIELD(arch), "Expected architecture of the checkpoint");
  }
}

void add_batch(Command& cmd) {
  cmd.add("--batch-size", FIELD(batch_size), "Images per forward pass");
}

}  // namespace

int main(int argc, char** argv) {
  mesoforge::tune_allocator();
  CLI::App root{"Compact face-forgery detectors: Meso-4 and MesoInception-4"};
  root.require_subcommand(1);
  std::list<Command> commands;

  Command& train = make_command(root, commands, "train", "Train a detector on a manifest");
  train.add("--arch", FIELD(arch), "meso4 or mesoinception4");
  train.add("--manifest", FIELD(manifest), "Training manifest (JSON lines)");
  train.add("--val-manifest", FIELD(validation_manifest),
            "Validation manifest; default: hold out --val-fraction of the videos");
  train.add("--val-fraction", FIELD(val_fraction), "Held-out share of videos per class");
  add_batch(train);
  train.add("--epochs", FIELD(epochs), "Epoch budget");
  train.add("--patience", FIELD(patience), "Epochs without validation improvement");
  train.add("--max-steps", FIELD(max_steps), "Optimizer step cap; negative: none");
  train.add("--lr", FIELD(schedule.initial), "Initial learning rate");
  train.add("--lr-divisor", FIELD(schedule.divisor), "Learning-rate divisor");
  train.add("--lr-period", FIELD(schedule.period), "Iterations between divisions");
  train.add("--lr-floor", FIELD(schedule.floor), "Learning-rate floor");
  train.app->add_flag("--no-augment", train.no_augment, "Disable augmentation");
  train.add("--zoom-min", FIELD(augmentation.zoom_min), "Smallest zoom factor");
  train.add("--zoom-max", FIELD(augmentation.zoom_max), "Largest zoom factor");
  train.add("--rotation", FIELD(augmentation.rotation_deg), "Max rotation (degrees)");
  train.add("--flip-prob", FIELD(augmentation.flip_prob), "Horizontal flip probability");
  train.add("--brightness", FIELD(augmentation.brightness), "Max brightness shift");
  train.add("--hue", FIELD(augmentation.hue_deg), "Max hue rotation (degrees)");
  train.add("--bn-recalibration", FIELD(bn_recalibration_batches),
            "Batches used to re-estimate batch-norm statistics after each epoch");

  Command& eval = make_command(root, commands, "eval", "Score a labelled manifest");
  add_checkpoint(eval);
  eval.add("--manifest", FIELD(manifest), "Test manifest");
  add_batch(eval);
  eval.add("--threshold", FIELD(threshold), "Scores at or above count as real");
  eval.add("--format", FIELD(report_format), "table, csv or json")
      ->check(CLI::IsMember({"table", "csv", "json"}));

  Command& predict = make_command(root, commands, "predict", "Score individual images");
  add_checkpoint(predict);
  predict.add("images", FIELD(images), "Image files");
  predict.add("--manifest", FIELD(manifest), "Score the images of a manifest as well");
  add_batch(predict);
  predict.add("--threshold", FIELD(threshold), "Scores at or above count as real");

  Command& aggregate = make_command(root, commands, "aggregate", "Video-level verdicts");
  add_checkpoint(aggregate);
  aggregate.add("--manifest", FIELD(manifest), "Manifest with video_id and frame_type");
  aggregate.add("--mode", FIELD(aggregate_mode), "all_frames, iframes_only or both")
      ->check(CLI::IsMember({"all_frames", "iframes_only", "both"}));
  aggregate.add("--frame-stride", FIELD(frame_stride), "Keep every k-th frame");
  add_batch(aggregate);
  aggregate.add("--threshold", FIELD(threshold), "Mean scores at or above count as real");

  Command& visualize =
      make_command(root, commands, "visualize", "Activation maximisation and mean maps");
  add_checkpoint(visualize);
  visualize.add("--layer", FIELD(layer), "Layer name or index; default: hidden dense layer");
  visualize.add("--lambda", FIELD(lambda), "Weight of the p-norm penalty");
  visualize.add("--p", FIELD(p), "Norm order");
  visualize.add("--step", FIELD(step), "Ascent step size");
  visualize.add("--iterations", FIELD(iterations), "Ascent steps");
  visualize.add("--mean-layer", FIELD(mean_layer), "Also render per-class mean maps of a layer");
  visualize.add("--manifest", FIELD(manifest), "Images for --mean-layer");
  add_batch(visualize);

  Command& inspect = make_command(root, commands, "inspect", "Layers and parameter counts");
  inspect.add("--arch", FIELD(arch), "meso4 or mesoinception4 (without --checkpoint)");
  add_checkpoint(inspect);
  inspect.add("--inception1", FIELD(inception1), "Widths a,b,c,d of the first module");
  inspect.add("--inception2", FIELD(inception2), "Widths a,b,c,d of the second module");

  try {
    root.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return root.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return root.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << mesoforge::error_json({mesoforge::kExitConfig, "config"}, e.what()) << "\n";
    return mesoforge::kExitConfig;
  }

  for (const Command& cmd : commands) {
    if (!cmd.app->parsed()) continue;
    try {
      mesoforge::run_command(cmd.resolve(), std::cout);
      return mesoforge::kExitOk;
    } catch (const std::exception& e) {
      const mesoforge::ErrorInfo info = mesoforge::classify_error(e);
      std::cout.flush();
      std::cerr << mesoforge::error_json(info, e.what()) << "\n";
      return info.exit_code;
    }
  }
  return mesoforge::kExitConfig;
}
