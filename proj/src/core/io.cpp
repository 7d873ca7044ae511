#include "asplat/io.hpp"

#include <cmath>
#include <algorithm>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>
#include <png.h>

#include "asplat/error.hpp"

namespace asplat::io {

std::vector<std::uint8_t> read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorCode::kIo, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const fs::path& path, const std::vector<std::uint8_t>& bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), ErrorCode::kIo, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  require(static_cast<bool>(out), ErrorCode::kIo, "short write to " + path.string());
}

void write_text(const fs::path& path, const std::string& text) {
  write_file(path, std::vector<std::uint8_t>(text.begin(), text.end()));
}

std::string read_text(const fs::path& path) {
  const auto b = read_file(path);
  return {b.begin(), b.end()};
}

void write_png(const fs::path& path, const Image& rgb) {
  require(rgb.channels == 3 || rgb.channels == 1, ErrorCode::kContract, "write_png: 1 or 3 channels");
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::vector<png_byte> buf(rgb.data.size());
  for (std::size_t i = 0; i < buf.size(); ++i)
    buf[i] = static_cast<png_byte>(std::lround(std::clamp(rgb.data[i], 0.0, 1.0) * 255.0));
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(rgb.width);
  img.height = static_cast<png_uint_32>(rgb.height);
  img.format = rgb.channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  const int ok = png_image_write_to_file(&img, path.c_str(), 0, buf.data(), 0, nullptr);
  const std::string msg = img.message;
  png_image_free(&img);
  require(ok != 0, ErrorCode::kIo, "write_png " + path.string() + ": " + msg);
}

Image read_png(const fs::path& path) {
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  require(png_image_begin_read_from_file(&img, path.c_str()) != 0, ErrorCode::kIo,
          "read_png " + path.string() + ": " + img.message);
  img.format = PNG_FORMAT_RGB;
  std::vector<png_byte> buf(PNG_IMAGE_SIZE(img));
  const int ok = png_image_finish_read(&img, nullptr, buf.data(), 0, nullptr);
  const std::string msg = img.message;
  png_image_free(&img);
  require(ok != 0, ErrorCode::kParse, "read_png " + path.string() + ": " + msg);
  Image out(static_cast<int>(img.width), static_cast<int>(img.height), 3);
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = buf[i] / 255.0;
  return out;
}

std::vector<std::uint8_t> encode_pfm(const Image& img) {
  require(img.channels == 1 || img.channels == 3, ErrorCode::kContract, "pfm: 1 or 3 channels");
  std::ostringstream header;
  header << (img.channels == 3 ? "PF" : "Pf") << "\n" << img.width << " " << img.height << "\n-1\n";
  const std::string h = header.str();
  std::vector<std::uint8_t> out(h.begin(), h.end());
  out.reserve(out.size() + img.data.size() * 4);
  for (int y = img.height - 1; y >= 0; --y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < img.channels; ++c) {
        const float v = static_cast<float>(img.at(x, y, c));
        std::uint8_t b[4];
        std::memcpy(b, &v, 4);
        out.insert(out.end(), b, b + 4);
      }
  return out;
}

Image decode_pfm(const std::vector<std::uint8_t>& bytes) {
  std::size_t pos = 0;
  auto token = [&]() {
    while (pos < bytes.size() && std::isspace(bytes[pos])) ++pos;
    std::string t;
    while (pos < bytes.size() && !std::isspace(bytes[pos])) t.push_back(static_cast<char>(bytes[pos++]));
    return t;
  };
  const std::string magic = token();
  require(magic == "PF" || magic == "Pf", ErrorCode::kParse, "pfm: bad magic");
  int w = 0, h = 0;
  double scale = 0;
  try {
    w = std::stoi(token());
    h = std::stoi(token());
    scale = std::stod(token());
  } catch (const std::exception&) {
    fail(ErrorCode::kParse, "pfm: bad header");
  }
  require(w > 0 && h > 0, ErrorCode::kParse, "pfm: bad dimensions");
  require(scale < 0, ErrorCode::kParse, "pfm: only little-endian files are supported");
  ++pos;  // single whitespace after the scale
  const int c = magic == "PF" ? 3 : 1;
  Image img(w, h, c);
  require(bytes.size() - pos >= img.data.size() * 4, ErrorCode::kParse, "pfm: truncated data");
  for (int y = h - 1; y >= 0; --y)
    for (int x = 0; x < w; ++x)
      for (int ch = 0; ch < c; ++ch) {
        float v;
        std::memcpy(&v, bytes.data() + pos, 4);
        pos += 4;
        img.at(x, y, ch) = v;
      }
  return img;
}

void write_pfm(const fs::path& path, const Image& img) { write_file(path, encode_pfm(img)); }
Image read_pfm(const fs::path& path) { return decode_pfm(read_file(path)); }

void write_matrix(const fs::path& path, int rows, int cols, const std::vector<double>& data,
                  const std::string& meta_json) {
  require(data.size() == static_cast<std::size_t>(rows) * cols, ErrorCode::kContract,
          "write_matrix: size mismatch");
  std::vector<std::uint8_t> out(data.size() * 4);
  for (std::size_t i = 0; i < data.size(); ++i) {
    const float v = static_cast<float>(data[i]);
    std::memcpy(out.data() + 4 * i, &v, 4);
  }
  write_file(path, out);
  nlohmann::json j;
  j["rows"] = rows;
  j["cols"] = cols;
  j["dtype"] = "float32";
  j["order"] = "row-major";
  j["meta"] = nlohmann::json::parse(meta_json);
  write_text(path.string() + ".json", j.dump(2));
}

std::string hash_hex(const std::vector<std::uint8_t>& bytes) {
  std::uint64_t h = 1469598103934665603ull;
  for (std::uint8_t b : bytes) {
    h ^= b;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string hash_hex(const std::string& text) {
  return hash_hex(std::vector<std::uint8_t>(text.begin(), text.end()));
}

std::string Manifest::to_json() const {
  nlohmann::json j;
  j["name"] = name;
  j["units"] = units;
  j["depth_provenance"] = depth_provenance;
  j["views"] = nlohmann::json::array();
  for (const auto& v : views) {
    const auto& K = v.intrinsics;
    std::vector<double> R(9);
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) R[r * 3 + c] = v.extrinsics.R(r, c);
    j["views"].push_back({{"name", v.name},
                          {"image", v.image},
                          {"depth", v.depth},
                          {"split", v.split},
                          {"intrinsics",
                           {{"fx", K.fx}, {"fy", K.fy}, {"cx", K.cx}, {"cy", K.cy},
                            {"width", K.width}, {"height", K.height}}},
                          {"extrinsics",
                           {{"R", R}, {"T", {v.extrinsics.T.x(), v.extrinsics.T.y(), v.extrinsics.T.z()}}}}});
  }
  return j.dump(2);
}

Manifest Manifest::from_json(const std::string& text) {
  Manifest m;
  try {
    const auto j = nlohmann::json::parse(text);
    m.name = j.at("name").get<std::string>();
    m.units = j.value("units", "meters");
    m.depth_provenance = j.value("depth_provenance", "unknown");
    for (const auto& v : j.at("views")) {
      ViewEntry e;
      e.name = v.at("name").get<std::string>();
      e.image = v.at("image").get<std::string>();
      e.depth = v.at("depth").get<std::string>();
      e.split = v.value("split", "input");
      require(e.split == "input" || e.split == "novel", ErrorCode::kParse,
              "manifest: view " + e.name + " has unknown split '" + e.split + "'");
      const auto& k = v.at("intrinsics");
      e.intrinsics.fx = k.at("fx").get<double>();
      e.intrinsics.fy = k.at("fy").get<double>();
      e.intrinsics.cx = k.at("cx").get<double>();
      e.intrinsics.cy = k.at("cy").get<double>();
      e.intrinsics.width = k.at("width").get<int>();
      e.intrinsics.height = k.at("height").get<int>();
      const auto R = v.at("extrinsics").at("R").get<std::vector<double>>();
      const auto T = v.at("extrinsics").at("T").get<std::vector<double>>();
      require(R.size() == 9 && T.size() == 3, ErrorCode::kParse,
              "manifest: view " + e.name + " has malformed extrinsics");
      for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) e.extrinsics.R(r, c) = R[r * 3 + c];
      e.extrinsics.T = Vec3(T[0], T[1], T[2]);
      m.views.push_back(std::move(e));
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kParse, std::string("manifest: ") + e.what());
  }
  return m;
}

Manifest load_manifest(const fs::path& scene_dir) {
  const Manifest m = Manifest::from_json(read_text(scene_dir / "manifest.json"));
  bool has_input = false;
  for (const auto& v : m.views) has_input |= v.split == "input";
  require(has_input, ErrorCode::kPrecondition, "manifest: no input views in " + scene_dir.string());
  return m;
}

void save_manifest(const fs::path& scene_dir, const Manifest& m) {
  write_text(scene_dir / "manifest.json", m.to_json());
}

std::vector<CameraView> load_views(const fs::path& scene_dir, const std::string& split) {
  const Manifest m = load_manifest(scene_dir);
  std::vector<CameraView> out;
  for (const auto& e : m.views) {
    if (!split.empty() && e.split != split) continue;
    CameraView v;
    v.name = e.name;
    v.intrinsics = e.intrinsics;
    v.extrinsics = e.extrinsics;
    v.image = read_png(scene_dir / e.image);
    v.depth = read_pfm(scene_dir / e.depth);
    require(v.depth.channels == 1, ErrorCode::kParse, "view " + e.name + ": depth must be single-channel");
    v.validate();
    out.push_back(std::move(v));
  }
  return out;
}

}  // namespace asplat::io
