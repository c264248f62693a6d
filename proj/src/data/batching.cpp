#include <numeric>

#include "mesoforge/data.hpp"
#include "mesoforge/parallel.hpp"

namespace mesoforge {

ImageLoader file_loader(const DatasetManifest& manifest, int size) {
  return [base = manifest.base_dir, size](const ManifestRecord& record) {
    const std::filesystem::path p(record.image_path);
    return decode_image(p.is_absolute() ? p : base / p, size);
  };
}

std::vector<std::vector<std::size_t>> epoch_batches(std::size_t count,
                                                    int batch_size, bool shuffle,
                                                    Rng& rng) {
  if (batch_size < 1) throw std::invalid_argument("batch size must be >= 1");
  std::vector<std::size_t> order(count);
  std::iota(order.begin(), order.end(), std::size_t{0});
  if (shuffle) rng.shuffle(order);
  std::vector<std::vector<std::size_t>> batches;
  const auto bs = static_cast<std::size_t>(batch_size);
  for (std::size_t first = 0; first < count; first += bs) {
    const std::size_t last = std::min(count, first + bs);
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(first),
                         order.begin() + static_cast<std::ptrdiff_t>(last));
  }
  return batches;
}

Batch load_batch(const DatasetManifest& manifest,
                 const std::vector<std::size_t>& indices,
                 const ImageLoader& loader, const AugmentConfig* augment,
                 Rng* rng) {
  if (indices.empty()) throw std::invalid_argument("load_batch: empty batch");
  const bool augmenting = augment != nullptr && !augment->is_identity();
  if (augmenting && rng == nullptr) {
    throw std::invalid_argument("load_batch: augmentation needs an rng");
  }
  std::vector<AugmentDraw> draws(indices.size());
  if (augmenting) {
    for (AugmentDraw& d : draws) d = draw_augment(*augment, *rng);
  }
  std::vector<Tensor> images(indices.size());
  parallel_for(indices.size(), [&](std::size_t k) {
    Tensor img = loader(manifest.records.at(indices[k]));
    if (augmenting) img = apply_augment(img, draws[k]);
    images[k] = std::move(img);
  });
  Batch batch;
  batch.images = stack_batch(images);
  batch.indices = indices;
  batch.labels.reserve(indices.size());
  for (std::size_t i : indices) {
    batch.labels.push_back(static_cast<float>(manifest.records[i].label));
  }
  return batch;
}

BatchIterator::BatchIterator(const DatasetManifest& manifest, ImageLoader loader,
                             int batch_size, bool shuffle, Rng& rng,
                             std::optional<AugmentConfig> augment)
    : manifest_(manifest),
      loader_(std::move(loader)),
      batches_(epoch_batches(manifest.size(), batch_size, shuffle, rng)),
      augment_(std::move(augment)),
      rng_(rng.fork()) {}

std::optional<Batch> BatchIterator::next() {
  if (cursor_ >= batches_.size()) return std::nullopt;
  const auto& indices = batches_[cursor_++];
  return load_batch(manifest_, indices, loader_,
                    augment_ ? &*augment_ : nullptr, &rng_);
}

}  // namespace mesoforge
