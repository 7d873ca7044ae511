#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "asplat/cameras.hpp"
#include "asplat/scene_model.hpp"

namespace asplat {

struct AnchorConfig {
  int stride = 1;
  double lo_pct = 0.01;
  double hi_pct = 0.99;
  double margin = 0.05;
  double voxel_size = 0.0;   // normalized units; 0 selects cube edge / 64
  int cap = 65536;
  long long seed_index = -1; // -1 selects the point nearest the centroid
};

struct AnchorSet {
  std::vector<Vec3> positions;  // normalized units
  std::size_t source_count = 0;
  double voxel_size = 0.0;
  std::size_t seed_index = 0;
  std::size_t occupied_voxels = 0;
  SceneNormalization normalization;
  ClipBounds bounds;  // world units
};

ClipBounds robust_bounds(const std::vector<Vec3>& points, double lo_pct = 0.01,
                         double hi_pct = 0.99, double margin = 0.05);

// Throws kEmptyAnchors when nothing survives.
std::vector<Vec3> clip_points(const std::vector<Vec3>& points, const ClipBounds& bounds);

std::size_t count_occupied_voxels(const std::vector<Vec3>& points, double voxel_size,
                                  const Vec3& origin);
std::size_t voxel_budget(const std::vector<Vec3>& points, double voxel_size, std::size_t cap,
                         const Vec3& origin);

std::size_t nearest_to_centroid(const std::vector<Vec3>& points);

// Exact farthest point sampling, O(N·k). Ties go to the lowest index.
std::vector<std::size_t> fps(const std::vector<Vec3>& points, std::size_t k,
                             std::size_t seed_index);

AnchorSet build_anchors(const std::vector<CameraView>& views, const AnchorConfig& config);

std::vector<std::uint8_t> write_anchor_ply(const AnchorSet& anchors);
std::string anchor_sidecar_json(const AnchorSet& anchors);

}  // namespace asplat
