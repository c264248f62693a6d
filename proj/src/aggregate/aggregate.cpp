#include "mesoforge/aggregate.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include <json.hpp>

namespace mesoforge {

std::string to_string(AggregateMode mode) {
  return mode == AggregateMode::AllFrames ? "all_frames" : "iframes_only";
}

AggregateMode parse_aggregate_mode(std::string_view text) {
  if (text == "all_frames") return AggregateMode::AllFrames;
  if (text == "iframes_only") return AggregateMode::IFramesOnly;
  throw std::invalid_argument("unknown aggregation mode '" + std::string(text) +
                              "' (expected all_frames or iframes_only)");
}

VideoVerdict aggregate_video(std::span<const FrameScore> scores, AggregateMode mode,
                             double threshold) {
  VideoVerdict v;
  v.mode = mode;
  v.video_id = scores.empty() ? "" : scores.front().video_id;
  // Neumaier summation keeps the mean of a handful of scores exact enough
  // for the threshold comparison to follow the real-valued mean.
  double sum = 0.0;
  double carry = 0.0;
  std::int64_t count = 0;
  for (const FrameScore& f : scores) {
    if (!std::isfinite(f.score) || f.score <= 0.0 || f.score >= 1.0) {
      throw DataError("frame " + std::to_string(f.frame_index) + " of video '" +
                      f.video_id + "' has score outside (0, 1)");
    }
    if (mode == AggregateMode::IFramesOnly && f.frame_type != FrameType::I) continue;
    const double t = sum + f.score;
    carry += std::fabs(sum) >= std::fabs(f.score) ? (sum - t) + f.score
                                                  : (f.score - t) + sum;
    sum = t;
    ++count;
  }
  if (count == 0) {
    if (mode == AggregateMode::IFramesOnly && !scores.empty()) {
      throw NoIFramesError("video '" + v.video_id +
                           "' has no I-frames; use mode all_frames instead");
    }
    throw DataError("aggregate_video: no frames to aggregate");
  }
  v.frame_count = count;
  v.mean_score = (sum + carry) / static_cast<double>(count);
  v.label = v.mean_score >= threshold ? kLabelReal : kLabelForged;
  return v;
}

std::vector<FrameScore> score_frames(const ModelGraph& model,
                                     const DatasetManifest& video,
                                     const ImageLoader& loader, int batch_size,
                                     std::vector<FrameFailure>* failures) {
  if (batch_size < 1) throw std::invalid_argument("score_frames: batch size must be >= 1");
  std::vector<std::size_t> order(video.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::ranges::stable_sort(order, [&](std::size_t a, std::size_t b) {
    return video.records[a].frame_index < video.records[b].frame_index;
  });

  std::vector<std::size_t> ok;
  std::vector<Tensor> images;
  for (std::size_t i : order) {
    try {
      images.push_back(loader(video.records[i]));
      ok.push_back(i);
    } catch (const DataError& e) {
      if (failures) failures->push_back({video.records[i].image_path, e.what()});
    }
  }
  if (ok.empty()) {
    throw DataError("no frame of video '" +
                    (video.empty() ? std::string() : video.records[0].video_id) +
                    "' could be loaded");
  }

  std::vector<FrameScore> out;
  out.reserve(ok.size());
  for (std::size_t first = 0; first < ok.size(); first += batch_size) {
    const std::size_t count = std::min<std::size_t>(batch_size, ok.size() - first);
    const Tensor batch = stack_batch(
        std::span<const Tensor>(images).subspan(first, count));
    const std::vector<float> s = model.predict(batch);
    for (std::size_t k = 0; k < count; ++k) {
      const ManifestRecord& r = video.records[ok[first + k]];
      out.push_back({r.video_id, r.frame_index, r.frame_type, s[k]});
    }
  }
  return out;
}

std::vector<VideoGroup> group_by_video(const DatasetManifest& manifest) {
  std::map<std::string, VideoGroup> groups;
  for (std::size_t i = 0; i < manifest.records.size(); ++i) {
    const ManifestRecord& r = manifest.records[i];
    if (r.video_id.empty()) {
      throw DataError("record '" + r.image_path + "' has no video_id");
    }
    auto [it, inserted] = groups.try_emplace(r.video_id);
    VideoGroup& g = it->second;
    if (inserted) {
      g.video_id = r.video_id;
      g.label = r.label;
    } else if (g.label != r.label) {
      throw DataError("video '" + r.video_id + "' mixes labels");
    }
    g.records.push_back(i);
  }
  std::vector<VideoGroup> out;
  out.reserve(groups.size());
  for (auto& [id, g] : groups) {
    std::ranges::stable_sort(g.records, [&](std::size_t a, std::size_t b) {
      return manifest.records[a].frame_index < manifest.records[b].frame_index;
    });
    out.push_back(std::move(g));
  }
  return out;
}

VideoGroup sample_frames(const VideoGroup& group, int stride) {
  if (stride < 1) throw std::invalid_argument("frame stride must be >= 1");
  VideoGroup out{group.video_id, group.label, {}};
  for (std::size_t k = 0; k < group.records.size(); k += stride) {
    out.records.push_back(group.records[k]);
  }
  return out;
}

std::string verdict_json(const VideoVerdict& v) {
  nlohmann::ordered_json j;
  j["video_id"] = v.video_id;
  j["mean_score"] = v.mean_score;
  j["frame_count"] = v.frame_count;
  j["mode"] = to_string(v.mode);
  j["label"] = v.label;
  return j.dump();
}

}  // namespace mesoforge
