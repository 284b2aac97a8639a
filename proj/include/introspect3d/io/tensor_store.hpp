#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "introspect3d/core/tensor.hpp"

namespace i3d::store {

namespace fs = std::filesystem;
using json = nlohmann::json;

struct StoreError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// One named f32 tensor. Shapes are row-major, every entry >= 1.
struct TensorRecord {
  std::string name;
  std::vector<std::size_t> shape;
  std::vector<float> data;

  TensorRecord() = default;
  TensorRecord(std::string n, std::vector<std::size_t> s, std::vector<float> d)
      : name(std::move(n)), shape(std::move(s)), data(std::move(d)) {}

  static TensorRecord from_tensor(std::string name, const Tensor<float>& t) {
    return TensorRecord(std::move(name), t.shape(), t.vec());
  }

  Tensor<float> to_tensor() const {
    Tensor<float> t(shape);
    t.vec() = data;
    return t;
  }
};

constexpr int kFormatVersion = 1;

inline std::size_t shape_numel(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) {
    if (d == 0) throw StoreError("tensor shape entries must be >= 1");
    n *= d;
  }
  return n;
}

// Blobs are little-endian f32 regardless of host order.
inline void write_le_f32(std::ofstream& out, const std::vector<float>& data) {
  if constexpr (std::endian::native == std::endian::little) {
    out.write(reinterpret_cast<const char*>(data.data()),
              static_cast<std::streamsize>(data.size() * 4));
  } else {
    std::vector<unsigned char> buf(data.size() * 4);
    for (std::size_t i = 0; i < data.size(); ++i) {
      std::uint32_t bits;
      std::memcpy(&bits, &data[i], 4);
      buf[4 * i + 0] = static_cast<unsigned char>(bits);
      buf[4 * i + 1] = static_cast<unsigned char>(bits >> 8);
      buf[4 * i + 2] = static_cast<unsigned char>(bits >> 16);
      buf[4 * i + 3] = static_cast<unsigned char>(bits >> 24);
    }
    out.write(reinterpret_cast<const char*>(buf.data()),
              static_cast<std::streamsize>(buf.size()));
  }
}

inline void read_le_f32(std::ifstream& in, std::vector<float>& data) {
  if constexpr (std::endian::native == std::endian::little) {
    in.read(reinterpret_cast<char*>(data.data()),
            static_cast<std::streamsize>(data.size() * 4));
  } else {
    std::vector<unsigned char> buf(data.size() * 4);
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    for (std::size_t i = 0; i < data.size(); ++i) {
      const std::uint32_t bits = static_cast<std::uint32_t>(buf[4 * i + 0]) |
                                 (static_cast<std::uint32_t>(buf[4 * i + 1]) << 8) |
                                 (static_cast<std::uint32_t>(buf[4 * i + 2]) << 16) |
                                 (static_cast<std::uint32_t>(buf[4 * i + 3]) << 24);
      std::memcpy(&data[i], &bits, 4);
    }
  }
}

/// Writes `manifest.json` plus one `<name>.bin` blob per tensor. The manifest
/// carries byte offsets so a packed layout stays representable; this writer
/// always uses offset 0 per file.
inline void write_bundle(const std::vector<TensorRecord>& records,
                         const std::map<std::string, std::string>& attributes,
                         const fs::path& dir) {
  std::map<std::string, bool> seen;
  for (const auto& r : records) {
    if (r.name.empty()) throw StoreError("tensor name must be non-empty");
    if (seen.count(r.name)) throw StoreError("duplicate tensor name: " + r.name);
    seen[r.name] = true;
    if (shape_numel(r.shape) != r.data.size())
      throw StoreError("tensor '" + r.name + "': data length does not match shape");
  }

  std::error_code ec;
  fs::create_directories(dir, ec);
  if (!fs::is_directory(dir)) throw StoreError("cannot create directory: " + dir.string());

  json manifest;
  manifest["format_version"] = kFormatVersion;
  manifest["attributes"] = attributes;
  manifest["tensors"] = json::array();
  for (const auto& r : records) {
    const std::string file = r.name + ".bin";
    {
      std::ofstream blob(dir / file, std::ios::binary | std::ios::trunc);
      if (!blob) throw StoreError("cannot open blob for writing: " + (dir / file).string());
      write_le_f32(blob, r.data);
      if (!blob) throw StoreError("write failed for blob: " + (dir / file).string());
    }
    manifest["tensors"].push_back({{"name", r.name},
                                   {"dtype", "f32"},
                                   {"shape", r.shape},
                                   {"file", file},
                                   {"byte_offset", 0}});
  }

  std::ofstream mf(dir / "manifest.json", std::ios::binary | std::ios::trunc);
  if (!mf) throw StoreError("cannot open manifest for writing in: " + dir.string());
  mf << manifest.dump(2) << "\n";
  if (!mf) throw StoreError("manifest write failed in: " + dir.string());
}

inline json load_manifest(const fs::path& dir) {
  const fs::path mpath = dir / "manifest.json";
  std::ifstream mf(mpath, std::ios::binary);
  if (!mf) throw StoreError("missing manifest: " + mpath.string());
  json manifest;
  try {
    mf >> manifest;
  } catch (const json::exception& e) {
    throw StoreError("malformed manifest " + mpath.string() + ": " + e.what());
  }
  if (!manifest.contains("tensors") || !manifest["tensors"].is_array())
    throw StoreError("manifest has no tensor list: " + mpath.string());
  return manifest;
}

inline TensorRecord read_blob(const fs::path& dir, const json& entry) {
  const std::string dtype = entry.at("dtype").get<std::string>();
  if (dtype != "f32") throw StoreError("unsupported dtype '" + dtype + "'");
  TensorRecord r;
  r.name = entry.at("name").get<std::string>();
  r.shape = entry.at("shape").get<std::vector<std::size_t>>();
  const std::string file = entry.at("file").get<std::string>();
  const std::uint64_t offset = entry.value("byte_offset", std::uint64_t(0));
  const std::size_t n = shape_numel(r.shape);

  const fs::path bpath = dir / file;
  std::ifstream blob(bpath, std::ios::binary);
  if (!blob) throw StoreError("missing blob file: " + bpath.string());
  blob.seekg(0, std::ios::end);
  const auto fsize = static_cast<std::uint64_t>(blob.tellg());
  if (fsize < offset + n * 4)
    throw StoreError("tensor '" + r.name + "': blob holds " + std::to_string(fsize) +
                     " bytes, need " + std::to_string(offset + n * 4));
  blob.seekg(static_cast<std::streamoff>(offset));
  r.data.resize(n);
  read_le_f32(blob, r.data);
  if (!blob) throw StoreError("short read on blob: " + bpath.string());
  return r;
}

/// Reads every tensor named in the manifest. Shape/byte mismatches and
/// unsupported dtypes raise StoreError; no partial result escapes.
inline std::pair<std::vector<TensorRecord>, std::map<std::string, std::string>> read_bundle(
    const fs::path& dir) {
  const json manifest = load_manifest(dir);
  std::vector<TensorRecord> records;
  for (const auto& entry : manifest["tensors"]) records.push_back(read_blob(dir, entry));
  std::map<std::string, std::string> attributes;
  if (manifest.contains("attributes"))
    attributes = manifest["attributes"].get<std::map<std::string, std::string>>();
  return {std::move(records), std::move(attributes)};
}

/// Reads a single tensor from a bundle without touching sibling blobs.
inline TensorRecord read_tensor(const fs::path& dir, const std::string& name) {
  const json manifest = load_manifest(dir);
  for (const auto& entry : manifest["tensors"])
    if (entry.at("name").get<std::string>() == name) return read_blob(dir, entry);
  throw StoreError("bundle " + dir.string() + " has no tensor '" + name + "'");
}

inline std::map<std::string, std::string> read_attributes(const fs::path& dir) {
  const json manifest = load_manifest(dir);
  if (!manifest.contains("attributes")) return {};
  return manifest["attributes"].get<std::map<std::string, std::string>>();
}

}  // namespace i3d::store
