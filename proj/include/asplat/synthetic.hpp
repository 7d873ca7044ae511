#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "asplat/cameras.hpp"
#include "asplat/io.hpp"

namespace asplat::synth {

struct Material {
  Vec3 a{0.8, 0.8, 0.8};
  Vec3 b{0.2, 0.2, 0.2};
  double period = 0.5;  // checker cell size in world units
  bool gradient = false;  // blend a→b along the first surface axis instead
};

struct Rect {
  Vec3 center;
  Vec3 u, v;  // unit in-plane axes
  double half_u = 1, half_v = 1;
  Material material;
};

struct Sphere {
  Vec3 center;
  double radius = 1;
  Material material;
};

struct World {
  std::vector<Rect> rects;
  std::vector<Sphere> spheres;
  Vec3 light_dir{0.3, -0.8, 0.5};  // toward the light; normalized on use
  Vec3 background = Vec3::Zero();
};

struct Hit {
  double t = 0;  // along a ray whose camera-space z component is 1, i.e. z-depth
  Vec3 color = Vec3::Zero();
  bool hit = false;
};

Hit trace(const World& w, const Vec3& origin, const Vec3& dir);

struct GenConfig {
  std::string preset = "box-room";  // box-room | textured-planes | sphere-field
  int width = 128;
  int height = 96;
  int input_views = 8;
  int novel_views = 2;
  double hfov_deg = 70.0;
  std::uint64_t seed = 0;
};

World make_world(const GenConfig& config);
std::vector<io::ViewEntry> make_cameras(const GenConfig& config);

// Renders pixel (x, y) at integer coordinates, matching the projection model.
CameraView render_view(const World& w, const io::ViewEntry& e);

// Writes manifest.json, images/*.png and depth/*.pfm; returns the manifest.
io::Manifest gen_scene(const std::filesystem::path& dir, const GenConfig& config);

}  // namespace asplat::synth
