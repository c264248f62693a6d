#pragma once

// MSW1 portable weight files:
//
//   offset 0   8 bytes   magic "MSNETW1\0"
//   offset 8   8 bytes   header length L, unsigned little-endian
//   offset 16  L bytes   UTF-8 JSON header
//              zero padding up to the next multiple of 64
//   blob       raw little-endian f32 tensors in header order, row-major,
//              each starting at a 64-byte aligned `byte_offset` relative to
//              the blob start
//
// The header carries format_version, arch_tag, inception_params,
// model_options, the tensor table [name, dtype, shape, byte_offset,
// trainable], blob_size and init metadata.

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "mesoforge/model.hpp"

namespace mesoforge {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr char kCheckpointMagic[8] = {'M', 'S', 'N', 'E',
                                             'T', 'W', '1', '\0'};
inline constexpr int kCheckpointVersion = 1;
inline constexpr std::size_t kCheckpointAlignment = 64;

/// Writes every parameter, including batch-norm running statistics.
/// `extra` is merged into the header under "metadata".
void save_weights(const ModelGraph& model, const std::filesystem::path& path,
                  const nlohmann::json& extra = nlohmann::json::object());

/// Loads values into an existing graph. The architecture tag and every
/// tensor name and shape must match.
void load_weights(ModelGraph& model, const std::filesystem::path& path);

/// Parsed header without the tensor data.
nlohmann::json read_checkpoint_header(const std::filesystem::path& path);

/// Rebuilds the graph described by the header and loads its weights.
ModelGraph load_model(const std::filesystem::path& path);

}  // namespace mesoforge
