#pragma once

#include <cstdint>
#include <filesystem>

#include "mesoforge/data.hpp"

namespace mesoforge {

/// Procedural two-class stand-in for a face-forgery dataset. Every video has
/// its own texture (base colour, oriented sinusoids, fine-grained noise)
/// that drifts slightly from frame to frame. Frames of "forged" videos have
/// a Gaussian-blurred central region. Even video indices are forged, odd
/// ones real, so every split by index range stays balanced.
struct SyntheticSpec {
  int videos = 100;
  int frames_per_video = 25;
  int train_videos = 80;  // videos [0, train_videos) form the training set
  int image_size = kImageSize;
  std::uint64_t seed = 0;
  double blur_sigma_min = 1.5;
  double blur_sigma_max = 2.5;
  /// Side of the blurred square relative to the image side.
  double region_fraction = 0.5;
  /// Frames with frame_index % gop == 0 are tagged I, the rest alternate P/B.
  int gop = 12;

  void validate() const;
};

int synthetic_label(int video);
std::string synthetic_video_id(int video);
FrameType synthetic_frame_type(const SyntheticSpec& spec, int frame);

/// Renders one frame as (1, 3, S, S) with values in [0, 1]. Pure function of
/// (spec, video, frame).
Tensor render_synthetic_frame(const SyntheticSpec& spec, int video, int frame);

/// Records for videos [first_video, last_video), frames in order. Image paths
/// are "<video_id>/frame_<k>.png" with k zero-padded to three digits.
DatasetManifest synthetic_manifest(const SyntheticSpec& spec, int first_video,
                                   int last_video);
DatasetManifest synthetic_train_manifest(const SyntheticSpec& spec);
DatasetManifest synthetic_test_manifest(const SyntheticSpec& spec);

/// Renders from the record's video_id and frame_index without touching disk.
ImageLoader synthetic_loader(const SyntheticSpec& spec);

/// Writes PNG frames plus train.jsonl and test.jsonl under `dir`.
void write_synthetic_dataset(const SyntheticSpec& spec,
                             const std::filesystem::path& dir);

}  // namespace mesoforge
