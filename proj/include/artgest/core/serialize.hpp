#pragma once

#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "artgest/core/tensor.hpp"
#include "artgest/version.hpp"

namespace artgest {

using nlohmann::json;

/// Binary tensor archive: 8-byte magic, u64 header length, JSON header
/// {format_version, meta, tensors:[{name,shape,offset}]}, then raw float32
/// little-endian payload. Used for checkpoints and pretrained weights.
namespace archive {

inline constexpr char kMagic[8] = {'A', 'G', 'A', 'R', 'C', 'H', 'V', '\n'};

struct Archive {
  json meta;
  std::vector<std::pair<std::string, Tensor>> tensors;

  const Tensor* find(const std::string& name) const {
    for (const auto& [n, t] : tensors)
      if (n == name) return &t;
    return nullptr;
  }
};

inline void save(const std::filesystem::path& path, const json& meta,
                 const std::vector<std::pair<std::string, Tensor>>& tensors) {
  json header;
  header["format_version"] = kCheckpointFormatVersion;
  header["meta"] = meta;
  header["tensors"] = json::array();
  uint64_t offset = 0;
  for (const auto& [name, t] : tensors) {
    json entry;
    entry["name"] = name;
    entry["shape"] = t.shape();
    entry["offset"] = offset;
    header["tensors"].push_back(std::move(entry));
    offset += static_cast<uint64_t>(t.numel()) * sizeof(float);
  }
  const std::string header_text = header.dump();

  std::ofstream out(path, std::ios::binary);
  require(out.good(), ErrorCode::IoError, "cannot write " + path.string());
  out.write(kMagic, sizeof(kMagic));
  const uint64_t len = header_text.size();
  out.write(reinterpret_cast<const char*>(&len), sizeof(len));
  out.write(header_text.data(), static_cast<std::streamsize>(len));
  for (const auto& [name, t] : tensors)
    out.write(reinterpret_cast<const char*>(t.data()),
              static_cast<std::streamsize>(t.numel() * sizeof(float)));
  require(out.good(), ErrorCode::IoError, "short write to " + path.string());
}

inline Archive load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorCode::IoError, "cannot open " + path.string());

  char magic[8];
  in.read(magic, sizeof(magic));
  require(in.gcount() == sizeof(magic) && std::memcmp(magic, kMagic, sizeof(magic)) == 0,
          ErrorCode::CorruptCheckpoint, path.string() + ": bad magic");
  uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  require(in.good() && len > 0 && len < (1ull << 30), ErrorCode::CorruptCheckpoint,
          path.string() + ": bad header length");
  std::string header_text(len, '\0');
  in.read(header_text.data(), static_cast<std::streamsize>(len));
  require(in.good(), ErrorCode::CorruptCheckpoint, path.string() + ": truncated header");

  json header;
  try {
    header = json::parse(header_text);
  } catch (const json::exception& e) {
    fail(ErrorCode::CorruptCheckpoint, path.string() + ": header parse: " + e.what());
  }
  const int version = header.value("format_version", -1);
  require(version == kCheckpointFormatVersion, ErrorCode::VersionMismatch,
          path.string() + ": format version " + std::to_string(version) + ", expected " +
              std::to_string(kCheckpointFormatVersion));

  Archive ar;
  ar.meta = header.value("meta", json::object());
  for (const auto& entry : header.at("tensors")) {
    const std::string name = entry.at("name").get<std::string>();
    const Shape shape = entry.at("shape").get<Shape>();
    Tensor t(shape);
    in.read(reinterpret_cast<char*>(t.data()),
            static_cast<std::streamsize>(t.numel() * sizeof(float)));
    require(in.gcount() == static_cast<std::streamsize>(t.numel() * sizeof(float)),
            ErrorCode::CorruptCheckpoint, path.string() + ": truncated payload at " + name);
    ar.tensors.emplace_back(name, std::move(t));
  }
  return ar;
}

}  // namespace archive
}  // namespace artgest
