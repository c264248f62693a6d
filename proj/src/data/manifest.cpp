#include <fstream>
#include <sstream>
#include <unordered_set>

#include <json.hpp>

#include "mesoforge/data.hpp"

namespace mesoforge {

using nlohmann::json;

std::string to_string(FrameType type) {
  switch (type) {
    case FrameType::I: return "I";
    case FrameType::P: return "P";
    case FrameType::B: return "B";
    case FrameType::Unknown: return "unknown";
  }
  return "unknown";
}

FrameType parse_frame_type(std::string_view text) {
  if (text == "I") return FrameType::I;
  if (text == "P") return FrameType::P;
  if (text == "B") return FrameType::B;
  if (text == "unknown") return FrameType::Unknown;
  throw DataError("unknown frame_type '" + std::string(text) +
                  "' (expected I, P, B or unknown)");
}

ClassCounts DatasetManifest::counts() const {
  ClassCounts c;
  for (const ManifestRecord& r : records) {
    (r.label == kLabelReal ? c.real : c.forged) += 1;
  }
  return c;
}

std::filesystem::path DatasetManifest::resolve(const ManifestRecord& record) const {
  const std::filesystem::path p(record.image_path);
  return p.is_absolute() ? p : base_dir / p;
}

DatasetManifest DatasetManifest::subset(const std::vector<std::size_t>& indices) const {
  DatasetManifest out;
  out.base_dir = base_dir;
  out.records.reserve(indices.size());
  for (std::size_t i : indices) out.records.push_back(records.at(i));
  return out;
}

namespace {

ManifestRecord parse_record(const json& j) {
  if (!j.is_object()) throw DataError("expected a JSON object");
  ManifestRecord r;
  if (!j.contains("image_path") || !j["image_path"].is_string()) {
    throw DataError("missing string field 'image_path'");
  }
  r.image_path = j["image_path"].get<std::string>();
  if (r.image_path.empty()) throw DataError("empty 'image_path'");
  if (!j.contains("label") || !j["label"].is_number_integer()) {
    throw DataError("missing integer field 'label'");
  }
  r.label = j["label"].get<int>();
  if (j.contains("video_id") && !j["video_id"].is_null()) {
    if (!j["video_id"].is_string()) throw DataError("'video_id' must be a string");
    r.video_id = j["video_id"].get<std::string>();
  }
  if (j.contains("frame_index") && !j["frame_index"].is_null()) {
    if (!j["frame_index"].is_number_integer()) {
      throw DataError("'frame_index' must be an integer");
    }
    r.frame_index = j["frame_index"].get<std::int64_t>();
  }
  if (j.contains("frame_type") && !j["frame_type"].is_null()) {
    if (!j["frame_type"].is_string()) throw DataError("'frame_type' must be a string");
    r.frame_type = parse_frame_type(j["frame_type"].get<std::string>());
  }
  return r;
}

void check_record(const ManifestRecord& r) {
  if (r.label != kLabelForged && r.label != kLabelReal) {
    throw DataError("label must be 0 (forged) or 1 (real), got " +
                    std::to_string(r.label));
  }
  if (r.frame_type != FrameType::Unknown && r.video_id.empty()) {
    throw DataError("frame_type " + to_string(r.frame_type) +
                    " given without a video_id");
  }
}

}  // namespace

DatasetManifest parse_manifest(std::istream& in,
                               const std::filesystem::path& base_dir,
                               const std::string& source) {
  DatasetManifest manifest;
  manifest.base_dir = base_dir;
  std::unordered_set<std::string> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      ManifestRecord r = parse_record(json::parse(line));
      check_record(r);
      if (!seen.insert(r.image_path).second) {
        throw DataError("duplicate image_path '" + r.image_path + "'");
      }
      manifest.records.push_back(std::move(r));
    } catch (const json::exception& e) {
      throw DataError(source + ":" + std::to_string(line_no) +
                      ": malformed JSON: " + e.what());
    } catch (const DataError& e) {
      throw DataError(source + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return manifest;
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest " + path.string());
  return parse_manifest(in, path.parent_path(), path.string());
}

void write_manifest(const DatasetManifest& manifest, std::ostream& out) {
  for (const ManifestRecord& r : manifest.records) {
    json j;
    j["image_path"] = r.image_path;
    j["label"] = r.label;
    if (!r.video_id.empty()) j["video_id"] = r.video_id;
    j["frame_index"] = r.frame_index;
    j["frame_type"] = to_string(r.frame_type);
    out << j.dump() << "\n";
  }
}

void write_manifest(const DatasetManifest& manifest,
                    const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write manifest " + path.string());
  write_manifest(manifest, out);
}

void validate_manifest(const DatasetManifest& manifest, const std::string& source) {
  std::unordered_set<std::string> seen;
  for (std::size_t i = 0; i < manifest.records.size(); ++i) {
    const ManifestRecord& r = manifest.records[i];
    try {
      check_record(r);
      if (!seen.insert(r.image_path).second) {
        throw DataError("duplicate image_path '" + r.image_path + "'");
      }
    } catch (const DataError& e) {
      throw DataError(source + ": record " + std::to_string(i + 1) + ": " + e.what());
    }
  }
}

}  // namespace mesoforge
