#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <sys/wait.h>
#include <unistd.h>

#include <json.hpp>

#include "mesoforge/aggregate.hpp"
#include "mesoforge/checkpoint.hpp"
#include "mesoforge/cli.hpp"
#include "mesoforge/metrics.hpp"
#include "mesoforge/synthetic.hpp"

using namespace mesoforge;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

// A scratch directory with a tiny synthetic dataset, shared by the
// end-to-end cases.
const fs::path& workspace() {
  static const fs::path dir = [] {
    const fs::path d = fs::temp_directory_path() / ("mesoforge_test_cli_" + std::to_string(getpid()));
    fs::remove_all(d);
    static const struct Remove {
      fs::path path;
      ~Remove() {
        std::error_code ec;
        fs::remove_all(path, ec);
      }
    } remove{d};
    SyntheticSpec spec;
    spec.videos = 8;
    spec.frames_per_video = 2;
    spec.train_videos = 6;
    spec.seed = 3;
    write_synthetic_dataset(spec, d / "data");
    return d;
  }();
  return dir;
}

RunConfig train_config(const std::string& out) {
  RunConfig c;
  c.command = "train";
  c.arch = "meso4";
  c.manifest = (workspace() / "data" / "train.jsonl").string();
  c.output_dir = (workspace() / out).string();
  c.seed = 11;
  c.batch_size = 4;
  c.epochs = 2;
  c.val_fraction = 0.34;
  c.bn_recalibration_batches = 1;
  return c;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(MESOFORGE_CLI) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("run config survives a JSON round trip") {
  RunConfig c;
  c.command = "aggregate";
  c.arch = "mesoinception4";
  c.seed = 42;
  c.frame_stride = 3;
  c.aggregate_mode = "iframes_only";
  c.images = {"a.png", "b.png"};
  c.schedule.period = 500;
  c.augmentation.flip_prob = 0.25;
  c.augment = false;
  c.output_dir = "out";
  const RunConfig back = run_config_from_json(nlohmann::json(to_json(c)));
  CHECK(to_json(back).dump() == to_json(c).dump());
  CHECK_NOTHROW(back.validate());
}

TEST_CASE("run config rejects unknown keys and bad values") {
  nlohmann::json j = nlohmann::json(to_json(RunConfig{}));
  j["learning_rate"] = 0.1;
  CHECK_THROWS_AS(run_config_from_json(j), ConfigError);

  RunConfig c;
  c.command = "train";
  c.output_dir = "out";
  CHECK_NOTHROW(c.validate());
  c.output_dir.clear();
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c.output_dir = "out";
  c.arch.clear();
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c.arch = "meso5";
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = RunConfig{};
  c.command = "train";
  c.batch_size = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = RunConfig{};
  c.command = "nope";
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = RunConfig{};
  c.command = "eval";
  c.threshold = 1.5;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("errors map to exit codes") {
  CHECK(classify_error(ConfigError("x")).exit_code == kExitConfig);
  CHECK(classify_error(DataError("x")).exit_code == kExitData);
  CHECK(classify_error(NoIFramesError("x")).exit_code == kExitData);
  CHECK(classify_error(MetricsError("x")).exit_code == kExitData);
  CHECK(classify_error(NumericalError("x")).exit_code == kExitNumerical);
  CHECK(classify_error(std::runtime_error("x")).exit_code == 1);
  const auto j = nlohmann::json::parse(error_json({kExitData, "data"}, "missing \"file\""));
  CHECK(j["error"] == "data");
  CHECK(j["exit_code"] == kExitData);
  CHECK(j["message"] == "missing \"file\"");
}

TEST_CASE("thread count from the environment") {
  setenv("MESOFORGE_THREADS", "3", 1);
  CHECK(default_threads() == 3);
  setenv("MESOFORGE_THREADS", "three", 1);
  CHECK(default_threads() == 1);
  setenv("MESOFORGE_THREADS", "0", 1);
  CHECK(default_threads() == 1);
  unsetenv("MESOFORGE_THREADS");
  CHECK(default_threads() == 1);
}

TEST_CASE("train, then eval, aggregate, predict, visualize and inspect") {
  std::ostringstream log;
  const RunConfig tc = train_config("train");
  run_command(tc, log);
  const fs::path dir = tc.output_dir;
  for (const char* f : {"run.json", "checkpoint.msw", "loss_trace.csv", "epochs.csv",
                        "summary.json", "ingest.json", "train_split.jsonl",
                        "validation_split.jsonl"}) {
    CHECK_MESSAGE(fs::exists(dir / f), f);
  }
  const auto summary = nlohmann::json::parse(slurp(dir / "summary.json"));
  CHECK(summary["epochs_run"] == 2);
  const std::string checkpoint = (dir / "checkpoint.msw").string();
  const std::string test = (workspace() / "data" / "test.jsonl").string();

  RunConfig e;
  e.command = "eval";
  e.checkpoint = checkpoint;
  e.manifest = test;
  e.output_dir = (workspace() / "eval").string();
  e.report_format = "json";
  run_command(e, log);
  const auto report = nlohmann::json::parse(slurp(fs::path(e.output_dir) / "report.json"));
  CHECK(report["count"] == 4);

  RunConfig a = e;
  a.command = "aggregate";
  a.aggregate_mode = "both";
  a.output_dir = (workspace() / "aggregate").string();
  run_command(a, log);
  std::istringstream verdicts(slurp(fs::path(a.output_dir) / "verdicts_all_frames.jsonl"));
  int lines = 0;
  for (std::string line; std::getline(verdicts, line);) {
    const auto v = nlohmann::json::parse(line);
    CHECK(v["frame_count"] == 2);
    ++lines;
  }
  CHECK(lines == 2);
  CHECK(fs::exists(fs::path(a.output_dir) / "verdicts_iframes_only.jsonl"));

  RunConfig p = e;
  p.command = "predict";
  p.manifest.clear();
  p.images = {(workspace() / "data" / synthetic_video_id(6) / "frame_000.png").string()};
  p.output_dir = (workspace() / "predict").string();
  run_command(p, log);
  CHECK(fs::exists(fs::path(p.output_dir) / "predictions.jsonl"));
  p.images.push_back((workspace() / "missing.png").string());
  CHECK_THROWS_AS(run_command(p, log), DataError);

  RunConfig v = e;
  v.command = "visualize";
  v.iterations = 2;
  v.mean_layer = "0";
  v.output_dir = (workspace() / "visualize").string();
  run_command(v, log);
  CHECK(fs::exists(fs::path(v.output_dir) / "gallery" / "index.json"));

  RunConfig i;
  i.command = "inspect";
  i.arch = "mesoinception4";
  i.output_dir = (workspace() / "inspect").string();
  run_command(i, log);
  const auto inspect = nlohmann::json::parse(slurp(fs::path(i.output_dir) / "inspect.json"));
  CHECK(inspect.dump().find("28156") != std::string::npos);

  RunConfig wrong = e;
  wrong.arch = "mesoinception4";
  CHECK_THROWS(run_command(wrong, log));
}

TEST_CASE("single-threaded training is byte-for-byte repeatable") {
  std::ostringstream log;
  RunConfig a = train_config("repeat_a");
  a.epochs = 1;
  a.threads = 1;
  RunConfig b = a;
  b.output_dir = (workspace() / "repeat_b").string();
  run_command(a, log);
  run_command(b, log);
  const std::string ta = slurp(fs::path(a.output_dir) / "loss_trace.csv");
  CHECK(ta.size() > 20);
  CHECK(ta == slurp(fs::path(b.output_dir) / "loss_trace.csv"));
}

TEST_CASE("the command-line tool reports exit codes") {
  const fs::path ws = workspace();
  CHECK(run_cli("inspect --arch meso4 --out " + (ws / "cli_inspect").string()) == kExitOk);
  CHECK(run_cli("inspect --arch meso5 --out " + (ws / "cli_inspect").string()) == kExitConfig);
  CHECK(run_cli("train --arch meso4 --batch-size 0 --manifest x") == kExitConfig);
  CHECK(run_cli("eval --checkpoint " + (ws / "none.msw").string() + " --manifest " +
                (ws / "data" / "test.jsonl").string() + " --out " + (ws / "cli_eval").string()) ==
        kExitData);
  CHECK(run_cli("frobnicate") == kExitConfig);

  // Rerunning from run.json reproduces the trace.
  const fs::path first = ws / "cli_train";
  REQUIRE(run_cli("train --arch meso4 --epochs 1 --batch-size 4 --val-fraction 0.34 "
                  "--bn-recalibration 1 --seed 5 --threads 1 --manifest " +
                  (ws / "data" / "train.jsonl").string() + " --out " + first.string()) == 0);
  const fs::path again = ws / "cli_rerun";
  REQUIRE(run_cli("train --config " + (first / "run.json").string() + " --out " +
                  again.string()) == 0);
  CHECK(slurp(first / "loss_trace.csv") == slurp(again / "loss_trace.csv"));
}
