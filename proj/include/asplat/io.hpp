#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "asplat/cameras.hpp"
#include "asplat/image.hpp"

namespace asplat::io {

namespace fs = std::filesystem;

std::vector<std::uint8_t> read_file(const fs::path& path);
void write_file(const fs::path& path, const std::vector<std::uint8_t>& bytes);
void write_text(const fs::path& path, const std::string& text);
std::string read_text(const fs::path& path);

// 8-bit RGB. Values are clamped to [0,1] and rounded.
void write_png(const fs::path& path, const Image& rgb);
Image read_png(const fs::path& path);

// Single-channel or RGB float32 PFM, little-endian, rows bottom to top.
std::vector<std::uint8_t> encode_pfm(const Image& img);
Image decode_pfm(const std::vector<std::uint8_t>& bytes);
void write_pfm(const fs::path& path, const Image& img);
Image read_pfm(const fs::path& path);

// Row-major float32 matrix with a JSON sidecar at path + ".json".
void write_matrix(const fs::path& path, int rows, int cols, const std::vector<double>& data,
                  const std::string& meta_json = "{}");

// 64-bit FNV-1a, hex encoded.
std::string hash_hex(const std::vector<std::uint8_t>& bytes);
std::string hash_hex(const std::string& text);

struct ViewEntry {
  std::string name;
  std::string image;  // relative to the scene directory
  std::string depth;
  Intrinsics intrinsics;
  Extrinsics extrinsics;
  std::string split = "input";  // input | novel
};

struct Manifest {
  std::string name;
  std::string units = "meters";
  std::string depth_provenance;
  std::vector<ViewEntry> views;

  std::string to_json() const;
  static Manifest from_json(const std::string& text);
};

Manifest load_manifest(const fs::path& scene_dir);
void save_manifest(const fs::path& scene_dir, const Manifest& m);

// Loads every view of the split ("input", "novel" or "" for all), in
// manifest order, and validates it.
std::vector<CameraView> load_views(const fs::path& scene_dir, const std::string& split);

}  // namespace asplat::io
