#include <cstdlib>
#include <fstream>
#include <set>

#include "mesoforge/aggregate.hpp"
#include "mesoforge/cli.hpp"
#include "mesoforge/metrics.hpp"
#include "mesoforge/model.hpp"

namespace mesoforge {

namespace {

const std::set<std::string> kCommands = {"train",     "eval",      "predict",
                                         "aggregate", "visualize", "inspect"};

template <typename T>
void read(const nlohmann::json& j, const char* key, T& field) {
  const auto it = j.find(key);
  if (it == j.end()) return;
  try {
    field = it->get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("run config: bad value for '") + key + "': " + e.what());
  }
}

}  // namespace

void RunConfig::validate() const {
  if (!kCommands.count(command)) {
    throw ConfigError("unknown command '" + command + "'");
  }
  if (arch.empty() && command == "train") throw ConfigError("train: --arch is required");
  try {
    if (!arch.empty()) parse_arch(arch);
    parse_report_format(report_format);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (aggregate_mode != "both") {
    try {
      parse_aggregate_mode(aggregate_mode);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string(e.what()) + " or both");
    }
  }
  if (threads < 1) throw ConfigError("--threads must be >= 1");
  if (batch_size < 1) throw ConfigError("--batch-size must be >= 1");
  if (epochs < 0) throw ConfigError("--epochs must be >= 0");
  if (patience < 1) throw ConfigError("--patience must be >= 1");
  if (!(val_fraction >= 0.0 && val_fraction < 1.0)) {
    throw ConfigError("--val-fraction must lie in [0, 1)");
  }
  if (!(schedule.initial > 0.0) || !(schedule.divisor >= 1.0) || schedule.period < 1 ||
      !(schedule.floor >= 0.0)) {
    throw ConfigError("learning-rate schedule needs lr > 0, divisor >= 1, period >= 1, floor >= 0");
  }
  if (bn_recalibration_batches < 0) throw ConfigError("--bn-recalibration must be >= 0");
  if (frame_stride < 1) throw ConfigError("--frame-stride must be >= 1");
  if (!(threshold >= 0.0 && threshold <= 1.0)) {
    throw ConfigError("--threshold must lie in [0, 1]");
  }
  if (!(lambda >= 0.0)) throw ConfigError("--lambda must be >= 0");
  if (!(p >= 1.0)) throw ConfigError("--p must be >= 1");
  if (!(step > 0.0)) throw ConfigError("--step must be > 0");
  if (iterations < 0) throw ConfigError("--iterations must be >= 0");
  try {
    augmentation.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (output_dir.empty()) throw ConfigError("empty output directory");
}

nlohmann::ordered_json to_json(const RunConfig& c) {
  nlohmann::ordered_json j;
  j["command"] = c.command;
  j["arch"] = c.arch;
  j["manifest"] = c.manifest;
  j["validation_manifest"] = c.validation_manifest;
  j["checkpoint"] = c.checkpoint;
  j["output_dir"] = c.output_dir;
  j["seed"] = c.seed;
  j["threads"] = c.threads;
  j["batch_size"] = c.batch_size;
  j["epochs"] = c.epochs;
  j["patience"] = c.patience;
  j["max_steps"] = c.max_steps;
  j["val_fraction"] = c.val_fraction;
  j["lr"] = c.schedule.initial;
  j["lr_divisor"] = c.schedule.divisor;
  j["lr_period"] = c.schedule.period;
  j["lr_floor"] = c.schedule.floor;
  j["augment"] = c.augment;
  j["zoom_min"] = c.augmentation.zoom_min;
  j["zoom_max"] = c.augmentation.zoom_max;
  j["rotation_deg"] = c.augmentation.rotation_deg;
  j["flip_prob"] = c.augmentation.flip_prob;
  j["brightness"] = c.augmentation.brightness;
  j["hue_deg"] = c.augmentation.hue_deg;
  j["bn_recalibration_batches"] = c.bn_recalibration_batches;
  j["threshold"] = c.threshold;
  j["report_format"] = c.report_format;
  j["aggregate_mode"] = c.aggregate_mode;
  j["frame_stride"] = c.frame_stride;
  j["images"] = c.images;
  j["lambda"] = c.lambda;
  j["p"] = c.p;
  j["step"] = c.step;
  j["iterations"] = c.iterations;
  j["layer"] = c.layer;
  j["mean_layer"] = c.mean_layer;
  j["inception1"] = c.inception1;
  j["inception2"] = c.inception2;
  return j;
}

RunConfig run_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("run config: expected a JSON object");
  const nlohmann::ordered_json known = to_json(RunConfig{});
  for (const auto& [key, value] : j.items()) {
    if (!known.contains(key)) throw ConfigError("run config: unknown key '" + key + "'");
  }
  RunConfig c;
  read(j, "command", c.command);
  read(j, "arch", c.arch);
  read(j, "manifest", c.manifest);
  read(j, "validation_manifest", c.validation_manifest);
  read(j, "checkpoint", c.checkpoint);
  read(j, "output_dir", c.output_dir);
  read(j, "seed", c.seed);
  read(j, "threads", c.threads);
  read(j, "batch_size", c.batch_size);
  read(j, "epochs", c.epochs);
  read(j, "patience", c.patience);
  read(j, "max_steps", c.max_steps);
  read(j, "val_fraction", c.val_fraction);
  read(j, "lr", c.schedule.initial);
  read(j, "lr_divisor", c.schedule.divisor);
  read(j, "lr_period", c.schedule.period);
  read(j, "lr_floor", c.schedule.floor);
  read(j, "augment", c.augment);
  read(j, "zoom_min", c.augmentation.zoom_min);
  read(j, "zoom_max", c.augmentation.zoom_max);
  read(j, "rotation_deg", c.augmentation.rotation_deg);
  read(j, "flip_prob", c.augmentation.flip_prob);
  read(j, "brightness", c.augmentation.brightness);
  read(j, "hue_deg", c.augmentation.hue_deg);
  read(j, "bn_recalibration_batches", c.bn_recalibration_batches);
  read(j, "threshold", c.threshold);
  read(j, "report_format", c.report_format);
  read(j, "aggregate_mode", c.aggregate_mode);
  read(j, "frame_stride", c.frame_stride);
  read(j, "images", c.images);
  read(j, "lambda", c.lambda);
  read(j, "p", c.p);
  read(j, "step", c.step);
  read(j, "iterations", c.iterations);
  read(j, "layer", c.layer);
  read(j, "mean_layer", c.mean_layer);
  read(j, "inception1", c.inception1);
  read(j, "inception2", c.inception2);
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open run config " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("run config " + path.string() + ": " + e.what());
  }
  // run.json nests the settings under "config"; a bare object also works.
  if (j.is_object() && j.contains("config")) return run_config_from_json(j["config"]);
  return run_config_from_json(j);
}

int default_threads() {
  const char* env = std::getenv("MESOFORGE_THREADS");
  if (!env || !*env) return 1;
  char* end = nullptr;
  const long v = std::strtol(env, &end, 10);
  if (*end != '\0' || v < 1 || v > 1024) return 1;
  return static_cast<int>(v);
}

}  // namespace mesoforge
