#include <algorithm>
#include <cmath>
#include <map>

#include "mesoforge/data.hpp"

namespace mesoforge {

ManifestSplit split_validation(const DatasetManifest& manifest, double fraction,
                               std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0)) {
    throw std::invalid_argument("split_validation: fraction must lie in (0, 1)");
  }
  // Group record indices by video within each class. std::map keeps the
  // group order independent of hashing.
  std::map<std::string, std::vector<std::size_t>> groups[2];
  for (std::size_t i = 0; i < manifest.records.size(); ++i) {
    const ManifestRecord& r = manifest.records[i];
    const std::string key =
        r.video_id.empty() ? "\x01record:" + r.image_path : "video:" + r.video_id;
    groups[r.label == kLabelReal ? 1 : 0][key].push_back(i);
  }
  for (const auto& [key, members] : groups[0]) {
    if (groups[1].contains(key)) {
      throw DataError("split_validation: video '" + key.substr(6) +
                      "' contains both labels");
    }
  }

  Rng rng(seed);
  std::vector<std::size_t> train_idx;
  std::vector<std::size_t> val_idx;
  const char* names[2] = {"forged", "real"};
  for (int label = 0; label < 2; ++label) {
    const auto& by_video = groups[label];
    if (by_video.size() < 2) {
      throw DataError(std::string("split_validation: class ") + names[label] +
                      " has " + std::to_string(by_video.size()) +
                      " video(s), at least 2 are required");
    }
    std::vector<const std::vector<std::size_t>*> order;
    for (const auto& [key, members] : by_video) order.push_back(&members);
    rng.shuffle(order);
    const auto videos = static_cast<std::ptrdiff_t>(order.size());
    const auto wanted = static_cast<std::ptrdiff_t>(
        std::llround(fraction * static_cast<double>(videos)));
    const std::ptrdiff_t n_val = std::clamp<std::ptrdiff_t>(wanted, 1, videos - 1);
    for (std::ptrdiff_t k = 0; k < videos; ++k) {
      auto& dst = k < n_val ? val_idx : train_idx;
      dst.insert(dst.end(), order[k]->begin(), order[k]->end());
    }
  }
  std::ranges::sort(train_idx);
  std::ranges::sort(val_idx);
  return {manifest.subset(train_idx), manifest.subset(val_idx)};
}

}  // namespace mesoforge
