#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>

#include "mesoforge/aggregate.hpp"
#include "mesoforge/checkpoint.hpp"
#include "mesoforge/cli.hpp"
#include "mesoforge/introspect.hpp"
#include "mesoforge/metrics.hpp"
#include "mesoforge/parallel.hpp"
#include "mesoforge/train.hpp"

namespace mesoforge {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace {

constexpr const char* kVersion = "0.1.0";

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
  if (!out) throw DataError("error writing " + path.string());
}

void write_json(const fs::path& path, const ojson& j) { write_text(path, j.dump(2) + "\n"); }

fs::path prepare_output(const RunConfig& c) {
  const fs::path dir(c.output_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DataError("cannot create output directory " + dir.string() + ": " + ec.message());
  ojson run;
  run["tool"] = "mesoforge";
  run["version"] = kVersion;
  run["config"] = to_json(c);
  write_json(dir / "run.json", run);
  return dir;
}

void require(const std::string& value, const char* flag, const std::string& command) {
  if (value.empty()) throw ConfigError(command + ": " + flag + " is required");
}

DatasetManifest read_manifest(const std::string& path) {
  DatasetManifest m = load_manifest(path);
  validate_manifest(m, path);
  if (m.empty()) throw DataError("manifest " + path + " has no records");
  return m;
}

// Rewrites relative image paths as absolute ones so that records from
// different manifests can share one loader.
void absolutize(DatasetManifest& m) {
  for (ManifestRecord& r : m.records) r.image_path = fs::absolute(m.resolve(r)).string();
  m.base_dir = fs::current_path();
}

ModelGraph load_checkpoint(const RunConfig& c) {
  require(c.checkpoint, "--checkpoint", c.command);
  ModelGraph model = load_model(c.checkpoint);
  if (!c.arch.empty() && parse_arch(c.arch) != model.arch()) {
    throw ConfigError("checkpoint " + c.checkpoint + " holds " + to_string(model.arch()) +
                      ", not " + c.arch);
  }
  return model;
}

ojson shape_json(const Shape& s) { return ojson::array({s.n, s.c, s.h, s.w}); }

ojson counts_json(const ClassCounts& counts) {
  return ojson{{"forged", counts.forged}, {"real", counts.real}};
}

ojson histogram_json(const ResolutionHistogram& h) {
  ojson bins = ojson::array();
  for (int b = 0; b < ResolutionHistogram::kBins; ++b) {
    bins.push_back({{"shorter_side", ResolutionHistogram::bin_label(b)},
                    {"forged", h.forged[b]},
                    {"real", h.real[b]}});
  }
  return ojson{{"bins", bins}, {"unreadable", h.unreadable}};
}

InceptionParams parse_inception(const std::string& text, const char* flag) {
  InceptionParams p;
  int* fields[4] = {&p.a, &p.b, &p.c, &p.d};
  std::stringstream ss(text);
  std::string item;
  int k = 0;
  while (std::getline(ss, item, ',')) {
    if (k == 4) break;
    try {
      std::size_t used = 0;
      *fields[k] = std::stoi(item, &used);
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ConfigError(std::string(flag) + ": '" + item + "' is not an integer");
    }
    if (*fields[k] < 1) throw ConfigError(std::string(flag) + ": widths must be >= 1");
    ++k;
  }
  if (k != 4 || ss.rdbuf()->in_avail() > 0) {
    throw ConfigError(std::string(flag) + ": expected four widths a,b,c,d, got '" + text + "'");
  }
  return p;
}

std::string widths(const InceptionParams& p) {
  return std::to_string(p.a) + "," + std::to_string(p.b) + "," + std::to_string(p.c) +
         "," + std::to_string(p.d);
}

std::size_t resolve_layer(const ModelGraph& model, const std::string& spec) {
  if (const auto found = model.find_layer(spec)) return *found;
  std::size_t used = 0;
  std::size_t index = model.layer_count();
  try {
    index = std::stoul(spec, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != spec.size() || index >= model.layer_count()) {
    std::string names;
    for (std::size_t i = 0; i < model.layer_count(); ++i) {
      names += (i ? ", " : "") + model.layer(i).name();
    }
    throw ConfigError("unknown layer '" + spec + "' (use an index in [0, " +
                      std::to_string(model.layer_count()) + ") or one of: " + names + ")");
  }
  return index;
}

std::vector<double> to_double(const std::vector<float>& v) {
  return std::vector<double>(v.begin(), v.end());
}

std::vector<int> labels_of(const DatasetManifest& m) {
  std::vector<int> labels;
  labels.reserve(m.size());
  for (const ManifestRecord& r : m.records) labels.push_back(r.label);
  return labels;
}

}  // namespace

// ---------------------------------------------------------------------------

void cmd_train(const RunConfig& c, std::ostream& out) {
  require(c.manifest, "--manifest", "train");
  DatasetManifest manifest = read_manifest(c.manifest);
  DatasetManifest train_set;
  DatasetManifest val_set;
  if (!c.validation_manifest.empty()) {
    train_set = std::move(manifest);
    val_set = read_manifest(c.validation_manifest);
    absolutize(train_set);
    absolutize(val_set);
  } else if (c.val_fraction > 0.0) {
    ManifestSplit split = split_validation(manifest, c.val_fraction,
                                           stable_hash("split", c.seed));
    train_set = std::move(split.train);
    val_set = std::move(split.validation);
  } else {
    train_set = std::move(manifest);
  }
  const fs::path dir = prepare_output(c);

  ojson ingest;
  ingest["train"] = {{"records", train_set.size()}, {"classes", counts_json(train_set.counts())}};
  ingest["validation"] = {{"records", val_set.size()}, {"classes", counts_json(val_set.counts())}};
  ingest["resolution"] = histogram_json(resolution_histogram(train_set));
  write_json(dir / "ingest.json", ingest);
  write_manifest(train_set, dir / "train_split.jsonl");
  if (!val_set.empty()) write_manifest(val_set, dir / "validation_split.jsonl");
  out << "train: " << train_set.size() << " images (" << train_set.counts().forged
      << " forged, " << train_set.counts().real << " real), validation: " << val_set.size()
      << "\n";

  Rng init_rng(stable_hash("init", c.seed));
  ModelGraph model = build_model(parse_arch(c.arch), init_rng);

  TrainConfig tc;
  tc.epochs = c.epochs;
  tc.patience = c.patience;
  tc.batch_size = c.batch_size;
  tc.max_steps = c.max_steps;
  tc.adam.schedule = c.schedule;
  tc.augment = c.augment ? std::optional<AugmentConfig>(c.augmentation) : std::nullopt;
  tc.seed = stable_hash("train", c.seed);
  tc.bn_recalibration_batches = c.bn_recalibration_batches;

  TrainHooks hooks;
  hooks.on_epoch = [&](const EpochRecord& e) {
    out << "epoch " << e.epoch << "  train loss " << fmt("%.5f", e.train_loss);
    if (e.val_loss) {
      out << "  val loss " << fmt("%.5f", *e.val_loss) << "  val acc "
          << fmt("%.4f", *e.val_accuracy) << (e.improved ? "  *" : "");
    }
    out << "\n" << std::flush;
  };
  const ImageLoader loader = file_loader(train_set);
  const TrainResult result = train(model, train_set, val_set, loader, tc, hooks);

  save_weights(model, dir / "checkpoint.msw",
               {{"best_epoch", result.best_epoch}, {"steps", result.steps}, {"seed", c.seed}});
  {
    std::ofstream trace(dir / "loss_trace.csv", std::ios::binary);
    write_loss_trace(result.trace, trace);
  }
  std::string epochs = "epoch,train_loss,val_loss,val_accuracy,improved\n";
  for (const EpochRecord& e : result.epochs) {
    epochs += std::to_string(e.epoch) + "," + fmt("%.17g", e.train_loss) + "," +
              (e.val_loss ? fmt("%.17g", *e.val_loss) : "") + "," +
              (e.val_accuracy ? fmt("%.17g", *e.val_accuracy) : "") + "," +
              (e.improved ? "1" : "0") + "\n";
  }
  write_text(dir / "epochs.csv", epochs);
  ojson summary;
  summary["arch"] = c.arch;
  summary["steps"] = result.steps;
  summary["epochs_run"] = result.epochs.size();
  summary["best_epoch"] = result.best_epoch;
  summary["best_val_loss"] =
      result.best_val_loss ? ojson(*result.best_val_loss) : ojson(nullptr);
  summary["early_stopped"] = result.early_stopped;
  write_json(dir / "summary.json", summary);
  out << "steps " << result.steps << ", best epoch " << result.best_epoch
      << (result.early_stopped ? " (early stop)" : "") << "\ncheckpoint "
      << (dir / "checkpoint.msw").string() << "\n";
}

void cmd_eval(const RunConfig& c, std::ostream& out) {
  require(c.manifest, "--manifest", "eval");
  const ModelGraph model = load_checkpoint(c);
  const DatasetManifest manifest = read_manifest(c.manifest);
  const ReportFormat format = parse_report_format(c.report_format);
  const fs::path dir = prepare_output(c);

  const std::vector<double> scores =
      to_double(predict_manifest(model, manifest, file_loader(manifest), c.batch_size));
  const std::vector<int> labels = labels_of(manifest);
  const EvalReport report = evaluate(scores, labels, c.threshold);

  write_text(dir / "report.txt", render_report(report, ReportFormat::Table));
  write_text(dir / "report.csv", render_report(report, ReportFormat::Csv));
  write_text(dir / "report.json", render_report(report, ReportFormat::Json));
  if (!report.roc.empty()) write_text(dir / "roc.csv", render_roc_csv(report.roc));
  std::string csv = "image_path,label,score\n";
  for (std::size_t i = 0; i < scores.size(); ++i) {
    csv += manifest.records[i].image_path + "," + std::to_string(labels[i]) + "," +
           fmt("%.9g", scores[i]) + "\n";
  }
  write_text(dir / "scores.csv", csv);
  out << render_report(report, format);
}

void cmd_predict(const RunConfig& c, std::ostream& out) {
  const ModelGraph model = load_checkpoint(c);
  std::vector<std::string> images = c.images;
  if (!c.manifest.empty()) {
    const DatasetManifest m = read_manifest(c.manifest);
    for (const ManifestRecord& r : m.records) images.push_back(m.resolve(r).string());
  }
  if (images.empty()) throw ConfigError("predict: give image paths or --manifest");
  const fs::path dir = prepare_output(c);

  std::ofstream jsonl(dir / "predictions.jsonl", std::ios::binary);
  std::size_t failed = 0;
  for (std::size_t start = 0; start < images.size(); start += c.batch_size) {
    const std::size_t end = std::min(images.size(), start + static_cast<std::size_t>(c.batch_size));
    std::vector<Tensor> decoded(end - start);
    std::vector<std::string> errors(end - start);
    parallel_for(end - start, [&](std::size_t k) {
      try {
        decoded[k] = decode_image(images[start + k]);
      } catch (const std::exception& e) {
        errors[k] = e.what();
      }
    });
    std::vector<std::size_t> ok;
    for (std::size_t k = 0; k < decoded.size(); ++k) {
      if (errors[k].empty()) ok.push_back(k);
    }
    std::vector<float> scores;
    if (!ok.empty()) {
      const int s = kImageSize;
      Tensor batch(Shape{static_cast<int>(ok.size()), 3, s, s});
      const std::size_t per = static_cast<std::size_t>(3) * s * s;
      for (std::size_t i = 0; i < ok.size(); ++i) {
        std::copy(decoded[ok[i]].data().begin(), decoded[ok[i]].data().end(),
                  batch.data().begin() + i * per);
      }
      scores = model.predict(batch);
    }
    std::size_t next = 0;
    for (std::size_t k = 0; k < decoded.size(); ++k) {
      ojson rec;
      rec["image"] = images[start + k];
      if (errors[k].empty()) {
        const double score = scores[next++];
        rec["score"] = score;
        rec["label"] = score >= c.threshold ? "real" : "forged";
      } else {
        rec["error"] = errors[k];
        ++failed;
      }
      const std::string line = rec.dump();
      jsonl << line << "\n";
      out << line << "\n";
    }
  }
  if (failed > 0) {
    throw DataError("predict: " + std::to_string(failed) + " of " +
                    std::to_string(images.size()) + " images could not be read");
  }
}

void cmd_aggregate(const RunConfig& c, std::ostream& out) {
  require(c.manifest, "--manifest", "aggregate");
  const ModelGraph model = load_checkpoint(c);
  const DatasetManifest manifest = read_manifest(c.manifest);
  std::vector<AggregateMode> modes;
  if (c.aggregate_mode == "both") {
    modes = {AggregateMode::AllFrames, AggregateMode::IFramesOnly};
  } else {
    modes = {parse_aggregate_mode(c.aggregate_mode)};
  }
  const std::vector<VideoGroup> groups = group_by_video(manifest);
  if (groups.empty()) throw DataError("aggregate: manifest has no videos");
  const ImageLoader loader = file_loader(manifest);

  // Score every sampled frame once, then aggregate per mode.
  std::vector<std::vector<FrameScore>> frame_scores;
  std::vector<FrameFailure> failures;
  std::vector<double> all_scores;
  std::vector<int> all_labels;
  for (const VideoGroup& g : groups) {
    const VideoGroup sampled = sample_frames(g, c.frame_stride);
    frame_scores.push_back(score_frames(model, manifest.subset(sampled.records), loader,
                                        c.batch_size, &failures));
    for (const FrameScore& f : frame_scores.back()) {
      all_scores.push_back(f.score);
      all_labels.push_back(g.label);
    }
  }
  std::map<AggregateMode, std::vector<VideoVerdict>> verdicts;
  for (AggregateMode mode : modes) {
    for (std::size_t v = 0; v < groups.size(); ++v) {
      verdicts[mode].push_back(aggregate_video(frame_scores[v], mode, c.threshold));
    }
  }
  const fs::path dir = prepare_output(c);

  const EvalReport frame_report = evaluate(all_scores, all_labels, c.threshold);
  ojson report;
  report["threshold"] = c.threshold;
  report["frame_stride"] = c.frame_stride;
  report["videos"] = groups.size();
  report["frames_scored"] = all_scores.size();
  report["frames_failed"] = failures.size();
  report["frame_accuracy"] = frame_report.accuracy_total;
  std::map<AggregateMode, double> accuracy;
  for (AggregateMode mode : modes) {
    const std::vector<VideoVerdict>& vs = verdicts[mode];
    std::int64_t correct = 0;
    std::int64_t frames = 0;
    std::string lines;
    for (std::size_t v = 0; v < vs.size(); ++v) {
      correct += vs[v].label == groups[v].label;
      frames += vs[v].frame_count;
      lines += verdict_json(vs[v]) + "\n";
    }
    write_text(dir / ("verdicts_" + to_string(mode) + ".jsonl"), lines);
    accuracy[mode] = static_cast<double>(correct) / static_cast<double>(vs.size());
    report[to_string(mode)] = {{"video_accuracy", accuracy[mode]}, {"frames_used", frames}};
  }
  const bool both = modes.size() == 2;
  if (both) {
    report["difference_iframes_minus_all"] =
        accuracy[AggregateMode::IFramesOnly] - accuracy[AggregateMode::AllFrames];
  }
  ojson fails = ojson::array();
  for (const FrameFailure& f : failures) {
    fails.push_back({{"image_path", f.image_path}, {"error", f.error}});
  }
  report["failures"] = fails;
  write_json(dir / "video_report.json", report);

  std::string csv = "video_id,label";
  for (AggregateMode mode : modes) csv += "," + to_string(mode) + "_mean," + to_string(mode) + "_frames";
  csv += "\n";
  for (std::size_t v = 0; v < groups.size(); ++v) {
    csv += groups[v].video_id + "," + std::to_string(groups[v].label);
    for (AggregateMode mode : modes) {
      const VideoVerdict& vv = verdicts[mode][v];
      csv += "," + fmt("%.9g", vv.mean_score) + "," + std::to_string(vv.frame_count);
    }
    csv += "\n";
  }
  write_text(dir / "video_scores.csv", csv);

  char line[160];
  std::string table;
  std::snprintf(line, sizeof line, "%-14s %8s %8s %10s\n", "level", "videos", "frames", "accuracy");
  table += line;
  std::snprintf(line, sizeof line, "%-14s %8s %8zu %10.4f\n", "frame", "-", all_scores.size(),
                frame_report.accuracy_total);
  table += line;
  for (AggregateMode mode : modes) {
    std::snprintf(line, sizeof line, "%-14s %8zu %8lld %10.4f\n", to_string(mode).c_str(),
                  groups.size(),
                  static_cast<long long>(report[to_string(mode)]["frames_used"].get<std::int64_t>()),
                  accuracy[mode]);
    table += line;
  }
  if (both) {
    std::snprintf(line, sizeof line, "%-14s %8s %8s %+10.4f\n", "difference", "", "",
                  report["difference_iframes_minus_all"].get<double>());
    table += line;
  }
  if (!failures.empty()) table += std::to_string(failures.size()) + " frames failed to load\n";
  write_text(dir / "video_report.txt", table);
  out << table;
}

void cmd_visualize(const RunConfig& c, std::ostream& out) {
  const ModelGraph model = load_checkpoint(c);
  const std::size_t hidden = hidden_dense_layer(model);
  const std::size_t layer = c.layer.empty() ? hidden : resolve_layer(model, c.layer);
  const int units = model.layer_output_shape(layer).c;
  std::optional<SignSplit> split;
  if (layer == hidden) split = hidden_neuron_sign_split(model);
  std::optional<std::size_t> mean_layer;
  if (!c.mean_layer.empty()) {
    require(c.manifest, "--manifest (needed by --mean-layer)", "visualize");
    mean_layer = resolve_layer(model, c.mean_layer);
  }
  const fs::path dir = prepare_output(c);
  const fs::path gallery = dir / "gallery";

  auto group_of = [&](int unit) -> std::string {
    if (!split) return "all";
    auto has = [unit](const std::vector<int>& v) {
      return std::find(v.begin(), v.end(), unit) != v.end();
    };
    if (has(split->negative)) return "negative";
    if (has(split->positive)) return "positive";
    return "zero";
  };
  // Weights from the hidden neurons to the output neuron.
  std::span<const float> output_weights;
  for (std::size_t i = model.layer_count(); i-- > 0;) {
    if (const auto* dense = dynamic_cast<const DenseLayer*>(&model.layer(i))) {
      output_weights = model.params().value(dense->weight_slot()).data();
      break;
    }
  }

  ojson index = ojson::array();
  for (int unit = 0; unit < units; ++unit) {
    ActMaxConfig ac;
    ac.layer = layer;
    ac.unit = unit;
    ac.lambda = c.lambda;
    ac.p = c.p;
    ac.step = c.step;
    ac.iterations = c.iterations;
    ac.seed = stable_hash("actmax/" + std::to_string(layer) + "/" + std::to_string(unit), c.seed);
    const ActMaxResult r = activation_maximize(model, ac);
    const std::string group = group_of(unit);
    const fs::path sub = gallery / group;
    fs::create_directories(sub);
    const std::string stem =
        "actmax_layer" + std::to_string(layer) + "_unit" + std::to_string(unit);
    write_png(sub / (stem + ".png"), r.image);
    ojson side;
    side["layer"] = layer;
    side["layer_name"] = model.layer(layer).name();
    side["unit"] = unit;
    side["group"] = group;
    if (split) side["output_weight"] = output_weights[unit];
    side["lambda"] = c.lambda;
    side["p"] = c.p;
    side["step"] = c.step;
    side["iterations"] = c.iterations;
    side["seed"] = ac.seed;
    side["final_activation"] = r.final_activation;
    side["final_objective"] = r.trace.back();
    side["trace"] = r.trace;
    write_json(sub / (stem + ".json"), side);
    index.push_back({{"image", (fs::path(group) / (stem + ".png")).string()},
                     {"unit", unit},
                     {"group", group},
                     {"final_activation", r.final_activation}});
    out << stem << "  " << group << "  activation " << fmt("%.4f", r.final_activation)
        << "  objective " << fmt("%.4f", r.trace.front()) << " -> "
        << fmt("%.4f", r.trace.back()) << "\n" << std::flush;
  }
  write_json(gallery / "index.json", index);

  if (mean_layer) {
    const DatasetManifest manifest = read_manifest(c.manifest);
    const ClassActivation act = mean_class_activation(model, manifest, file_loader(manifest),
                                                      *mean_layer, c.batch_size);
    const std::string stem = "mean_layer" + std::to_string(*mean_layer);
    std::vector<double> diff(act.real.size());
    for (std::size_t k = 0; k < diff.size(); ++k) diff[k] = act.real[k] - act.forged[k];
    write_png(dir / (stem + "_forged.png"),
              activation_grid(act.forged, act.channels, act.height, act.width));
    write_png(dir / (stem + "_real.png"),
              activation_grid(act.real, act.channels, act.height, act.width));
    write_png(dir / (stem + "_real_minus_forged.png"),
              activation_grid(diff, act.channels, act.height, act.width));
    ojson j;
    j["layer"] = act.layer;
    j["layer_name"] = model.layer(act.layer).name();
    j["shape"] = {act.channels, act.height, act.width};
    j["forged_count"] = act.forged_count;
    j["real_count"] = act.real_count;
    j["forged"] = act.forged;
    j["real"] = act.real;
    write_json(dir / (stem + ".json"), j);
    out << "mean activation maps of layer " << act.layer << " (" << act.forged_count
        << " forged, " << act.real_count << " real images)\n";
  }
}

void cmd_inspect(const RunConfig& c, std::ostream& out) {
  std::optional<ModelGraph> model;
  if (!c.checkpoint.empty()) {
    model.emplace(load_checkpoint(c));
  } else {
    ModelOptions o;
    o.inception1 = parse_inception(c.inception1, "--inception1");
    o.inception2 = parse_inception(c.inception2, "--inception2");
    Rng rng(stable_hash("init", c.seed));
    model.emplace(build_model(parse_arch(c.arch.empty() ? "meso4" : c.arch), rng, o));
  }
  const fs::path dir = prepare_output(c);
  const ModelGraph& m = *model;

  std::string text;
  char line[200];
  text += "architecture " + to_string(m.arch()) + ", input " + m.input_shape().str() + "\n\n";
  std::snprintf(line, sizeof line, "%-4s %-16s %-12s %-18s %10s %14s\n", "#", "layer", "kind",
                "output", "trainable", "non-trainable");
  text += line;
  std::map<std::string, LayerParamCount> per_layer;
  for (const LayerParamCount& p : param_breakdown(m)) per_layer[p.layer] = p;
  ojson layers = ojson::array();
  for (std::size_t i = 0; i < m.layer_count(); ++i) {
    const Layer& l = m.layer(i);
    const Shape shape = m.layer_output_shape(i);
    const auto it = per_layer.find(l.name());
    const std::int64_t tr = it == per_layer.end() ? 0 : it->second.trainable;
    const std::int64_t nt = it == per_layer.end() ? 0 : it->second.non_trainable;
    std::snprintf(line, sizeof line, "%-4zu %-16s %-12s %-18s %10lld %14lld\n", i,
                  l.name().c_str(), l.kind().c_str(), shape.str().c_str(),
                  static_cast<long long>(tr), static_cast<long long>(nt));
    text += line;
    layers.push_back({{"index", i},
                      {"name", l.name()},
                      {"kind", l.kind()},
                      {"output_shape", shape_json(shape)},
                      {"trainable", tr},
                      {"non_trainable", nt}});
  }
  const ParamCounts total = count_params(m);
  const std::int64_t published = m.arch() == Arch::Meso4 ? kMeso4PublishedTrainable
                                                         : kMesoInception4PublishedTrainable;
  text += "\ntrainable " + std::to_string(total.trainable) + ", non-trainable " +
          std::to_string(total.non_trainable) + ", published trainable " +
          std::to_string(published) + " (delta " +
          std::to_string(total.trainable - published) + ")\n";

  ojson j;
  j["arch"] = to_string(m.arch());
  j["input_shape"] = shape_json(m.input_shape());
  j["layers"] = layers;
  j["trainable"] = total.trainable;
  j["non_trainable"] = total.non_trainable;
  j["published_trainable"] = published;
  if (m.arch() == Arch::MesoInception4) {
    const ReconciliationReport rec =
        reconcile_mesoinception4(m.options().inception1, m.options().inception2);
    text += "\n" + rec.render();
    ojson matches = ojson::array();
    for (const InceptionVariant& v : rec.exact_matches) {
      matches.push_back({{"inception1", widths(v.first)},
                         {"inception2", widths(v.second)},
                         {"distance", v.distance}});
    }
    j["reconciliation"] = {{"inception1", widths(rec.first)},
                           {"inception2", widths(rec.second)},
                           {"trainable", rec.trainable},
                           {"delta", rec.delta()},
                           {"exact_matches", matches}};
  }
  write_text(dir / "inspect.txt", text);
  write_json(dir / "inspect.json", j);
  out << text;
}

void run_command(const RunConfig& config, std::ostream& out) {
  config.validate();
  set_num_threads(config.threads);
  if (config.command == "train") return cmd_train(config, out);
  if (config.command == "eval") return cmd_eval(config, out);
  if (config.command == "predict") return cmd_predict(config, out);
  if (config.command == "aggregate") return cmd_aggregate(config, out);
  if (config.command == "visualize") return cmd_visualize(config, out);
  if (config.command == "inspect") return cmd_inspect(config, out);
  throw ConfigError("unknown command '" + config.command + "'");
}

ErrorInfo classify_error(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return {kExitConfig, "config"};
  if (dynamic_cast<const NumericalError*>(&e)) return {kExitNumerical, "numerical"};
  if (dynamic_cast<const DataError*>(&e)) return {kExitData, "data"};
  if (dynamic_cast<const CheckpointError*>(&e)) return {kExitData, "checkpoint"};
  if (dynamic_cast<const MetricsError*>(&e)) return {kExitData, "data"};
  if (dynamic_cast<const fs::filesystem_error*>(&e)) return {kExitData, "io"};
  if (dynamic_cast<const std::out_of_range*>(&e)) return {kExitConfig, "config"};
  if (dynamic_cast<const std::invalid_argument*>(&e)) return {kExitConfig, "config"};
  return {1, "internal"};
}

std::string error_json(const ErrorInfo& info, const std::string& message) {
  ojson j;
  j["error"] = info.category;
  j["exit_code"] = info.exit_code;
  j["message"] = message;
  return j.dump();
}

}  // namespace mesoforge
