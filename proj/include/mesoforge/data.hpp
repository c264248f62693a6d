#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "mesoforge/rng.hpp"
#include "mesoforge/tensor.hpp"

namespace mesoforge {

inline constexpr int kLabelForged = 0;
inline constexpr int kLabelReal = 1;
inline constexpr int kImageSize = 256;

/// Malformed manifests, unreadable images and infeasible splits.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class FrameType { I, P, B, Unknown };

std::string to_string(FrameType type);
/// Accepts "I", "P", "B" and "unknown".
FrameType parse_frame_type(std::string_view text);

// ---------------------------------------------------------------------------
// Manifests

struct ManifestRecord {
  std::string image_path;  // as written; relative paths resolve against the manifest
  int label = kLabelForged;
  std::string video_id;    // empty when the image is not part of a video
  std::int64_t frame_index = 0;
  FrameType frame_type = FrameType::Unknown;
};

struct ClassCounts {
  std::int64_t forged = 0;
  std::int64_t real = 0;
  bool operator==(const ClassCounts&) const = default;
};

struct DatasetManifest {
  std::vector<ManifestRecord> records;
  std::filesystem::path base_dir;

  std::size_t size() const { return records.size(); }
  bool empty() const { return records.empty(); }
  ClassCounts counts() const;
  std::filesystem::path resolve(const ManifestRecord& record) const;
  /// Same base directory, records picked by index.
  DatasetManifest subset(const std::vector<std::size_t>& indices) const;
};

/// Parses JSON lines: {"image_path", "label", "video_id", "frame_index",
/// "frame_type"}; only image_path and label are required. Blank lines are
/// skipped. Errors carry the 1-based line number.
DatasetManifest parse_manifest(std::istream& in,
                               const std::filesystem::path& base_dir,
                               const std::string& source = "<manifest>");
DatasetManifest load_manifest(const std::filesystem::path& path);

void write_manifest(const DatasetManifest& manifest, std::ostream& out);
void write_manifest(const DatasetManifest& manifest,
                    const std::filesystem::path& path);

/// Unique paths, binary labels, and a video_id on every record whose
/// frame_type is known.
void validate_manifest(const DatasetManifest& manifest,
                       const std::string& source = "<manifest>");

struct ManifestSplit {
  DatasetManifest train;
  DatasetManifest validation;
};

/// Holds out whole videos, class by class, so that no video_id appears on
/// both sides. Records without a video_id count as single-frame videos.
/// Each class contributes max(1, round(fraction * videos)) validation
/// videos, leaving at least one for training.
ManifestSplit split_validation(const DatasetManifest& manifest,
                               double fraction = 0.10, std::uint64_t seed = 0);

// ---------------------------------------------------------------------------
// Images: tensors of shape (1, 3, h, w), RGB, values in [0, 1].

/// Decodes PNG or JPEG and resizes to size x size. The shorter side of the
/// source must be at least `size`.
Tensor decode_image(const std::filesystem::path& path, int size = kImageSize);

/// Bilinear resampling with pixel-center alignment and edge clamping.
Tensor resize_bilinear(const Tensor& image, int out_h, int out_w);

/// 8-bit RGB, rounding and clamping each value.
void write_png(const std::filesystem::path& path, const Tensor& image);

/// Width and height of an image file.
std::pair<int, int> image_dimensions(const std::filesystem::path& path);

struct ResolutionHistogram {
  /// Shorter-side bins: [0,256), [256,384), [384,512), [512,768), [768,inf).
  static constexpr int kBins = 5;
  std::int64_t forged[kBins] = {};
  std::int64_t real[kBins] = {};
  std::int64_t unreadable = 0;

  static std::string bin_label(int bin);
};

ResolutionHistogram resolution_histogram(const DatasetManifest& manifest);

// ---------------------------------------------------------------------------
// Augmentation

struct AugmentConfig {
  double zoom_min = 0.9;
  double zoom_max = 1.1;
  double rotation_deg = 15.0;  // uniform in [-rotation_deg, rotation_deg]
  double flip_prob = 0.5;
  double brightness = 0.1;     // additive, uniform in [-brightness, brightness]
  double hue_deg = 10.0;       // uniform in [-hue_deg, hue_deg]
  std::uint64_t seed = 0;

  /// All ranges zero and flip probability zero.
  static AugmentConfig none();
  bool is_identity() const;
  void validate() const;
};

/// The random parameters of one augmentation, drawn in a fixed order.
struct AugmentDraw {
  bool flip = false;
  double angle_deg = 0.0;
  double zoom = 1.0;
  double brightness = 0.0;
  double hue_deg = 0.0;
};

AugmentDraw draw_augment(const AugmentConfig& config, Rng& rng);

/// Flip, rotation, zoom, brightness, hue, in that order. Steps whose
/// parameter is neutral are skipped, so a neutral draw returns the input
/// unchanged.
Tensor apply_augment(const Tensor& image, const AugmentDraw& draw);
Tensor augment(const Tensor& image, const AugmentConfig& config, Rng& rng);

Tensor hflip(const Tensor& image);
/// Rotation about the image center, bilinear, edge-replicate fill.
Tensor rotate(const Tensor& image, double angle_deg);
/// Scales about the center: zoom > 1 crops in, zoom < 1 shrinks with
/// edge-replicate fill. Output keeps the input size.
Tensor zoom(const Tensor& image, double factor);
Tensor adjust_brightness(const Tensor& image, double delta);
Tensor rotate_hue(const Tensor& image, double delta_deg);

// ---------------------------------------------------------------------------
// Batching

/// Produces the (1, 3, S, S) image of a record.
using ImageLoader = std::function<Tensor(const ManifestRecord&)>;

/// Decodes from disk relative to the manifest's base directory.
ImageLoader file_loader(const DatasetManifest& manifest, int size = kImageSize);

struct Batch {
  Tensor images;                    // (n, 3, S, S)
  std::vector<float> labels;        // one per item
  std::vector<std::size_t> indices; // manifest record indices
};

/// Manifest indices of each batch of one epoch: every record exactly once,
/// the last batch possibly short, order shuffled by `rng` when requested.
std::vector<std::vector<std::size_t>> epoch_batches(std::size_t count,
                                                    int batch_size,
                                                    bool shuffle, Rng& rng);

/// Loads the records concurrently and stacks them. Augmentation parameters
/// are drawn from `rng` sequentially in batch order before any decoding.
Batch load_batch(const DatasetManifest& manifest,
                 const std::vector<std::size_t>& indices,
                 const ImageLoader& loader,
                 const AugmentConfig* augment = nullptr, Rng* rng = nullptr);

/// One epoch over a manifest.
class BatchIterator {
 public:
  BatchIterator(const DatasetManifest& manifest, ImageLoader loader,
                int batch_size, bool shuffle, Rng& rng,
                std::optional<AugmentConfig> augment = std::nullopt);

  std::optional<Batch> next();
  std::size_t batch_count() const { return batches_.size(); }

 private:
  const DatasetManifest& manifest_;
  ImageLoader loader_;
  std::vector<std::vector<std::size_t>> batches_;
  std::size_t cursor_ = 0;
  std::optional<AugmentConfig> augment_;
  Rng rng_;
};

}  // namespace mesoforge
