#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "mesoforge/data.hpp"
#include "mesoforge/optim.hpp"

namespace mesoforge {

/// Invalid flag values or combinations. Maps to exit code 2.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitNumerical = 4;

/// Fully resolved settings of one command. Serialised to run.json, from
/// which the command can be rerun.
struct RunConfig {
  std::string command;
  /// Required by train; elsewhere optional and checked against the checkpoint.
  std::string arch = "meso4";
  std::string manifest;
  std::string validation_manifest;  // empty: split off val_fraction of manifest
  std::string checkpoint;
  std::string output_dir;
  std::uint64_t seed = 0;
  int threads = 1;

  // train
  int batch_size = 75;
  int epochs = 30;
  int patience = 5;
  std::int64_t max_steps = -1;
  double val_fraction = 0.10;
  LrSchedule schedule;
  bool augment = true;
  AugmentConfig augmentation;
  int bn_recalibration_batches = 8;

  // eval / aggregate
  double threshold = 0.5;
  std::string report_format = "table";
  std::string aggregate_mode = "both";  // all_frames, iframes_only or both
  int frame_stride = 1;

  // predict
  std::vector<std::string> images;

  // visualize
  double lambda = 10.0;
  double p = 6.0;
  double step = 0.05;
  int iterations = 100;
  std::string layer;       // empty: the last hidden dense layer
  std::string mean_layer;  // empty: skip mean activation maps

  // inspect
  std::string inception1 = "1,4,4,1";
  std::string inception2 = "1,4,4,2";

  void validate() const;
};

nlohmann::ordered_json to_json(const RunConfig& config);
/// Missing keys keep their defaults; unknown keys raise ConfigError.
RunConfig run_config_from_json(const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& path);

/// Threads from MESOFORGE_THREADS, or 1 when unset or invalid.
int default_threads();

/// Runs config.command, writing run.json and the command's files under
/// config.output_dir and a human-readable summary to `out`. Errors
/// propagate as exceptions; see exit_code_for().
void run_command(const RunConfig& config, std::ostream& out);

void cmd_train(const RunConfig& config, std::ostream& out);
void cmd_eval(const RunConfig& config, std::ostream& out);
void cmd_predict(const RunConfig& config, std::ostream& out);
void cmd_aggregate(const RunConfig& config, std::ostream& out);
void cmd_visualize(const RunConfig& config, std::ostream& out);
void cmd_inspect(const RunConfig& config, std::ostream& out);

/// Exit code and error category of an exception thrown by a command.
struct ErrorInfo {
  int exit_code = 1;
  std::string category;
};
ErrorInfo classify_error(const std::exception& e);

/// {"error": category, "exit_code": n, "message": text} on one line.
std::string error_json(const ErrorInfo& info, const std::string& message);

}  // namespace mesoforge
