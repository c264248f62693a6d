#include "mesoforge/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <vector>

namespace mesoforge {

using nlohmann::json;

namespace {

std::size_t align_up(std::size_t v) {
  return (v + kCheckpointAlignment - 1) / kCheckpointAlignment *
         kCheckpointAlignment;
}

void put_u64_le(std::ostream& out, std::uint64_t v) {
  unsigned char bytes[8];
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(bytes), 8);
}

std::uint64_t get_u64_le(const unsigned char* bytes) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
  return v;
}

std::uint32_t to_le(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::little) return v;
  return ((v & 0xFFu) << 24) | ((v & 0xFF00u) << 8) | ((v >> 8) & 0xFF00u) |
         (v >> 24);
}

json inception_json(const InceptionParams& p) {
  return json::array({p.a, p.b, p.c, p.d});
}

InceptionParams inception_from_json(const json& j) {
  if (!j.is_array() || j.size() != 4) {
    throw CheckpointError("inception_params entries must be [a,b,c,d]");
  }
  return {j[0].get<int>(), j[1].get<int>(), j[2].get<int>(), j[3].get<int>()};
}

json build_header(const ModelGraph& model, const json& extra,
                  std::size_t& blob_size) {
  const ModelOptions& o = model.options();
  json header;
  header["format_version"] = kCheckpointVersion;
  header["arch_tag"] = to_string(model.arch());
  if (model.arch() == Arch::MesoInception4) {
    header["inception_params"] =
        json::array({inception_json(o.inception1), inception_json(o.inception2)});
  } else {
    header["inception_params"] = nullptr;
  }
  header["model_options"] = {{"input_size", o.input_size},
                             {"final_pool", o.final_pool},
                             {"dropout_rate", o.dropout_rate},
                             {"leaky_slope", o.leaky_slope},
                             {"bn_epsilon", o.bn_epsilon},
                             {"bn_momentum", o.bn_momentum}};
  json tensors = json::array();
  std::size_t offset = 0;
  for (const Param& p : model.params()) {
    const Shape& s = p.value.shape();
    tensors.push_back({{"name", p.name},
                       {"dtype", "f32"},
                       {"shape", {s.n, s.c, s.h, s.w}},
                       {"byte_offset", offset},
                       {"trainable", p.trainable}});
    offset = align_up(offset + p.value.size() * sizeof(float));
  }
  blob_size = offset;
  header["tensors"] = std::move(tensors);
  header["blob_size"] = blob_size;
  header["init"] = {{"scheme", model.init_info().scheme},
                    {"seed", model.init_info().seed},
                    {"bias", "zeros"},
                    {"batchnorm", "gamma=1 beta=0 running_mean=0 running_var=1"},
                    {"block_order", "conv-bn-relu"}};
  header["metadata"] = extra.is_null() ? json::object() : extra;
  return header;
}

struct RawFile {
  json header;
  std::vector<unsigned char> blob;
};

RawFile read_raw(const std::filesystem::path& path, bool with_blob) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  unsigned char prefix[16];
  in.read(reinterpret_cast<char*>(prefix), sizeof prefix);
  if (in.gcount() != sizeof prefix) {
    throw CheckpointError("truncated checkpoint " + path.string() +
                          ": missing magic/header length");
  }
  if (std::memcmp(prefix, kCheckpointMagic, sizeof kCheckpointMagic) != 0) {
    throw CheckpointError(path.string() + " is not an MSW1 checkpoint (bad magic)");
  }
  const std::uint64_t header_len = get_u64_le(prefix + 8);
  const auto file_size = std::filesystem::file_size(path);
  if (header_len > file_size) {
    throw CheckpointError("truncated checkpoint " + path.string() +
                          ": header length exceeds file size");
  }
  std::string text(header_len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(header_len));
  if (static_cast<std::uint64_t>(in.gcount()) != header_len) {
    throw CheckpointError("truncated checkpoint " + path.string() + ": header");
  }
  RawFile raw;
  try {
    raw.header = json::parse(text);
  } catch (const json::exception& e) {
    throw CheckpointError("corrupt checkpoint header in " + path.string() +
                          ": " + e.what());
  }
  const int version = raw.header.value("format_version", -1);
  if (version != kCheckpointVersion) {
    throw CheckpointError("unsupported checkpoint format_version " +
                          std::to_string(version));
  }
  if (!with_blob) return raw;

  const std::size_t blob_start = align_up(16 + header_len);
  const std::size_t blob_size = raw.header.at("blob_size").get<std::size_t>();
  if (blob_start + blob_size > file_size) {
    throw CheckpointError("truncated checkpoint " + path.string() + ": expected " +
                          std::to_string(blob_start + blob_size) +
                          " bytes, file has " + std::to_string(file_size));
  }
  in.seekg(static_cast<std::streamoff>(blob_start));
  raw.blob.resize(blob_size);
  in.read(reinterpret_cast<char*>(raw.blob.data()),
          static_cast<std::streamsize>(blob_size));
  if (static_cast<std::size_t>(in.gcount()) != blob_size) {
    throw CheckpointError("truncated checkpoint " + path.string() + ": blob");
  }
  return raw;
}

ModelOptions options_from_header(const json& header) {
  ModelOptions o;
  const json& mo = header.at("model_options");
  o.input_size = mo.at("input_size").get<int>();
  o.final_pool = mo.at("final_pool").get<int>();
  o.dropout_rate = mo.at("dropout_rate").get<float>();
  o.leaky_slope = mo.at("leaky_slope").get<float>();
  o.bn_epsilon = mo.at("bn_epsilon").get<float>();
  o.bn_momentum = mo.at("bn_momentum").get<float>();
  const json& ip = header.at("inception_params");
  if (!ip.is_null()) {
    if (!ip.is_array() || ip.size() != 2) {
      throw CheckpointError("inception_params must hold two modules");
    }
    o.inception1 = inception_from_json(ip[0]);
    o.inception2 = inception_from_json(ip[1]);
  }
  return o;
}

void apply_blob(ModelGraph& model, const RawFile& raw) {
  const json& tensors = raw.header.at("tensors");
  ParamStore& params = model.params();
  if (tensors.size() != params.size()) {
    throw CheckpointError("checkpoint has " + std::to_string(tensors.size()) +
                          " tensors, model expects " +
                          std::to_string(params.size()));
  }
  // Validate everything before touching the model.
  for (std::size_t i = 0; i < params.size(); ++i) {
    const json& entry = tensors[i];
    const Param& p = params[i];
    const std::string name = entry.at("name").get<std::string>();
    if (name != p.name) {
      throw CheckpointError("tensor #" + std::to_string(i) + ": checkpoint has '" +
                            name + "', model expects '" + p.name + "'");
    }
    if (entry.at("dtype").get<std::string>() != "f32") {
      throw CheckpointError("tensor '" + name + "': unsupported dtype");
    }
    const auto dims = entry.at("shape").get<std::vector<int>>();
    const Shape& s = p.value.shape();
    if (dims != std::vector<int>{s.n, s.c, s.h, s.w}) {
      std::string got;
      for (int d : dims) got += (got.empty() ? "" : ",") + std::to_string(d);
      throw CheckpointError("tensor '" + name + "': checkpoint shape (" + got +
                            ") != model shape " + s.str());
    }
    const std::size_t offset = entry.at("byte_offset").get<std::size_t>();
    if (offset % kCheckpointAlignment != 0 ||
        offset + p.value.size() * sizeof(float) > raw.blob.size()) {
      throw CheckpointError("tensor '" + name + "': byte_offset out of range");
    }
    if (entry.at("trainable").get<bool>() != p.trainable) {
      throw CheckpointError("tensor '" + name + "': trainable flag mismatch");
    }
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const std::size_t offset = tensors[i].at("byte_offset").get<std::size_t>();
    auto dst = params.values(i);
    for (std::size_t k = 0; k < dst.size(); ++k) {
      std::uint32_t bits;
      std::memcpy(&bits, raw.blob.data() + offset + k * 4, 4);
      dst[k] = std::bit_cast<float>(to_le(bits));
    }
  }
}

}  // namespace

void save_weights(const ModelGraph& model, const std::filesystem::path& path,
                  const json& extra) {
  std::size_t blob_size = 0;
  const std::string text = build_header(model, extra, blob_size).dump();
  std::vector<unsigned char> blob(blob_size, 0);
  std::size_t offset = 0;
  for (const Param& p : model.params()) {
    for (std::size_t k = 0; k < p.value.size(); ++k) {
      const std::uint32_t bits = to_le(std::bit_cast<std::uint32_t>(p.value[k]));
      std::memcpy(blob.data() + offset + k * 4, &bits, 4);
    }
    offset = align_up(offset + p.value.size() * sizeof(float));
  }

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("cannot write checkpoint " + path.string());
  out.write(kCheckpointMagic, sizeof kCheckpointMagic);
  put_u64_le(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  const std::size_t pad = align_up(16 + text.size()) - (16 + text.size());
  const std::vector<char> zeros(pad, 0);
  out.write(zeros.data(), static_cast<std::streamsize>(pad));
  out.write(reinterpret_cast<const char*>(blob.data()),
            static_cast<std::streamsize>(blob.size()));
  if (!out) throw CheckpointError("failed writing checkpoint " + path.string());
}

void load_weights(ModelGraph& model, const std::filesystem::path& path) {
  const RawFile raw = read_raw(path, true);
  const std::string tag = raw.header.at("arch_tag").get<std::string>();
  if (tag != to_string(model.arch())) {
    throw CheckpointError("checkpoint architecture '" + tag +
                          "' does not match model '" + to_string(model.arch()) +
                          "'");
  }
  apply_blob(model, raw);
}

json read_checkpoint_header(const std::filesystem::path& path) {
  return read_raw(path, false).header;
}

ModelGraph load_model(const std::filesystem::path& path) {
  const RawFile raw = read_raw(path, true);
  Arch arch;
  ModelOptions options;
  try {
    arch = parse_arch(raw.header.at("arch_tag").get<std::string>());
    options = options_from_header(raw.header);
  } catch (const std::exception& e) {
    throw CheckpointError("corrupt checkpoint header in " + path.string() +
                          ": " + e.what());
  }
  const json& init = raw.header.at("init");
  Rng rng(0);
  ModelGraph model = build_model(arch, rng, options);
  model.set_init_info({init.value("scheme", std::string("glorot_uniform")),
                       init.value("seed", std::uint64_t{0})});
  apply_blob(model, raw);
  return model;
}

}  // namespace mesoforge
