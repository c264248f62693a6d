#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "mesoforge/synthetic.hpp"
#include "mesoforge/train.hpp"

using namespace mesoforge;

namespace {

SyntheticSpec tiny_spec() {
  SyntheticSpec spec;
  spec.videos = 12;
  spec.frames_per_video = 3;
  spec.train_videos = 8;
  spec.image_size = 32;
  spec.seed = 2;
  return spec;
}

ModelGraph tiny_model(std::uint64_t seed) {
  ModelOptions options;
  options.input_size = 32;
  options.final_pool = 4;
  Rng rng(seed);
  return build_model(Arch::Meso4, rng, options);
}

TrainConfig tiny_config() {
  TrainConfig c;
  c.epochs = 3;
  c.batch_size = 6;
  c.seed = 9;
  c.bn_recalibration_batches = 1;
  return c;
}

struct Fixture {
  SyntheticSpec spec = tiny_spec();
  ManifestSplit split = split_validation(synthetic_train_manifest(spec), 0.25, 4);
  ImageLoader loader = synthetic_loader(spec);
};

// Validation loss, mean 0.5 (a - y)^2, recomputed from inference scores.
double mse(const ModelGraph& model, const DatasetManifest& m, const ImageLoader& loader) {
  const std::vector<float> scores = predict_manifest(model, m, loader, 5);
  double sum = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const double d = static_cast<double>(scores[i]) - m.records[i].label;
    sum += 0.5 * d * d;
  }
  return sum / static_cast<double>(scores.size());
}

}  // namespace

TEST_CASE("the stop hook ends training after the epoch") {
  const Fixture f;
  ModelGraph model = tiny_model(1);
  TrainHooks hooks;
  int seen = 0;
  hooks.on_epoch = [&](const EpochRecord&) { ++seen; };
  hooks.should_stop = [](const EpochRecord& e) { return e.epoch == 1; };
  const TrainResult r = train(model, f.split.train, f.split.validation, f.loader, tiny_config(), hooks);
  CHECK(r.stopped_by_hook);
  CHECK_FALSE(r.early_stopped);
  CHECK(r.epochs.size() == 1);
  CHECK(seen == 1);
  CHECK(r.steps == 3);  // 18 training frames in batches of 6
}

TEST_CASE("the step cap and the loss trace") {
  const Fixture f;
  ModelGraph model = tiny_model(1);
  TrainConfig c = tiny_config();
  c.max_steps = 4;
  c.adam.schedule.period = 2;
  const TrainResult r = train(model, f.split.train, f.split.validation, f.loader, c);
  CHECK(r.steps == 4);
  REQUIRE(r.trace.size() == 4);
  for (std::size_t k = 0; k < r.trace.size(); ++k) {
    CHECK(r.trace[k].iteration == static_cast<std::int64_t>(k));
    CHECK(r.trace[k].epoch == (k < 3 ? 1 : 2));
    CHECK(r.trace[k].lr == c.adam.schedule.at(static_cast<std::int64_t>(k)));
    CHECK(std::isfinite(r.trace[k].loss));
  }
  std::ostringstream csv;
  write_loss_trace(r.trace, csv);
  std::istringstream lines(csv.str());
  std::string line;
  std::getline(lines, line);
  CHECK(line == "iteration,epoch,lr,loss");
  int rows = 0;
  while (std::getline(lines, line)) ++rows;
  CHECK(rows == 4);
}

TEST_CASE("the best validation epoch is restored") {
  const Fixture f;
  ModelGraph model = tiny_model(3);
  TrainConfig c = tiny_config();
  c.epochs = 4;
  c.patience = 1;
  const TrainResult r = train(model, f.split.train, f.split.validation, f.loader, c);
  REQUIRE(r.best_val_loss);
  CHECK(mse(model, f.split.validation, f.loader) == doctest::Approx(*r.best_val_loss).epsilon(1e-5));

  // best_epoch is the first strict minimum; patience counts trailing misses.
  double best = std::numeric_limits<double>::infinity();
  int best_epoch = 0, stale = 0;
  for (const EpochRecord& e : r.epochs) {
    REQUIRE(e.val_loss);
    REQUIRE(e.val_accuracy);
    if (e.improved) {
      CHECK(*e.val_loss < best);
      best = *e.val_loss;
      best_epoch = e.epoch;
      stale = 0;
    } else {
      ++stale;
    }
  }
  if (best_epoch > 0) CHECK(r.best_epoch == best_epoch);
  CHECK(r.early_stopped == (stale >= c.patience));
}

TEST_CASE("without a validation set the last epoch is kept") {
  const Fixture f;
  ModelGraph model = tiny_model(4);
  TrainConfig c = tiny_config();
  c.epochs = 2;
  const TrainResult r = train(model, f.split.train, DatasetManifest{}, f.loader, c);
  CHECK(r.best_epoch == 2);
  CHECK_FALSE(r.best_val_loss);
  CHECK(r.epochs.size() == 2);
  CHECK_FALSE(r.epochs[0].val_loss);
}

TEST_CASE("training is a function of the seed") {
  const Fixture f;
  TrainConfig c = tiny_config();
  c.epochs = 1;
  auto run = [&](std::uint64_t seed) {
    ModelGraph model = tiny_model(5);
    c.seed = seed;
    return train(model, f.split.train, f.split.validation, f.loader, c).trace;
  };
  const auto a = run(1), b = run(1), d = run(2);
  REQUIRE(a.size() == b.size());
  for (std::size_t k = 0; k < a.size(); ++k) CHECK(a[k].loss == b[k].loss);
  bool differs = false;
  for (std::size_t k = 0; k < a.size(); ++k) differs = differs || a[k].loss != d[k].loss;
  CHECK(differs);
}

TEST_CASE("batch-norm recalibration touches running statistics only") {
  const Fixture f;
  ModelGraph model = tiny_model(6);
  const ParamStore before = model.params();
  Rng rng(7);
  recalibrate_batchnorm(model, f.split.train, f.loader, 6, 2, rng);
  bool running_changed = false;
  for (std::size_t i = 0; i < before.size(); ++i) {
    const auto old = before.value(i).data();
    const auto now = model.params().value(i).data();
    const bool same = std::equal(old.begin(), old.end(), now.begin());
    if (before[i].trainable) CHECK_MESSAGE(same, before[i].name);
    else running_changed = running_changed || !same;
  }
  CHECK(running_changed);

  ModelGraph again = tiny_model(6);
  Rng rng2(7);
  recalibrate_batchnorm(again, f.split.train, f.loader, 6, 2, rng2);
  for (std::size_t i = 0; i < before.size(); ++i) {
    const auto x = model.params().value(i).data();
    const auto y = again.params().value(i).data();
    CHECK(std::equal(x.begin(), x.end(), y.begin()));
  }
}

TEST_CASE("a non-finite loss is reported") {
  ModelGraph model = tiny_model(8);
  Tensor x(model.input_shape(2));
  x.fill(std::numeric_limits<float>::quiet_NaN());
  const std::vector<float> labels{0.0f, 1.0f};
  AdamState state(model.params());
  Rng rng(1);
  CHECK_THROWS_AS(train_step(model, x, labels, state, AdamConfig{}, rng), NumericalError);
}
