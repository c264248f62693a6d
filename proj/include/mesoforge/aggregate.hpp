#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mesoforge/data.hpp"
#include "mesoforge/model.hpp"

namespace mesoforge {

enum class AggregateMode { AllFrames, IFramesOnly };

std::string to_string(AggregateMode mode);
/// Accepts "all_frames" and "iframes_only".
AggregateMode parse_aggregate_mode(std::string_view text);

struct FrameScore {
  std::string video_id;
  std::int64_t frame_index = 0;
  FrameType frame_type = FrameType::Unknown;
  double score = 0.5;
};

struct VideoVerdict {
  std::string video_id;
  double mean_score = 0.5;
  std::int64_t frame_count = 0;
  AggregateMode mode = AggregateMode::AllFrames;
  int label = kLabelReal;
};

/// Raised in iframes_only mode when a video has no I-frame.
class NoIFramesError : public DataError {
 public:
  using DataError::DataError;
};

/// Mean of the retained frame scores; label is real when the mean is at
/// least `threshold` (a mean equal to the threshold counts as real).
VideoVerdict aggregate_video(std::span<const FrameScore> scores,
                             AggregateMode mode, double threshold = 0.5);

struct FrameFailure {
  std::string image_path;
  std::string error;
};

/// Scores the frames of one video in inference mode, `batch_size` frames at
/// a time, sorted by frame_index. Frames that fail to load are reported in
/// `failures` and skipped; a video whose frames all fail raises DataError.
std::vector<FrameScore> score_frames(const ModelGraph& model,
                                     const DatasetManifest& video,
                                     const ImageLoader& loader,
                                     int batch_size = 75,
                                     std::vector<FrameFailure>* failures = nullptr);

struct VideoGroup {
  std::string video_id;
  int label = kLabelForged;
  std::vector<std::size_t> records;  // sorted by frame_index
};

/// Groups records by video_id in lexicographic video order. Records without
/// a video_id raise DataError, as do videos mixing labels.
std::vector<VideoGroup> group_by_video(const DatasetManifest& manifest);

/// Keeps every `stride`-th frame of a group, starting with the first.
VideoGroup sample_frames(const VideoGroup& group, int stride);

/// One JSON-lines record: {video_id, mean_score, frame_count, mode, label}.
std::string verdict_json(const VideoVerdict& verdict);

}  // namespace mesoforge
