#include "asplat/anchor_sampler.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_set>

#include <json.hpp>

#include "asplat/error.hpp"
#include "asplat/parallel.hpp"
#include "asplat/ply.hpp"

namespace asplat {
namespace {

struct VoxelKey {
  std::int64_t x, y, z;
  bool operator==(const VoxelKey&) const = default;
};

struct VoxelHash {
  std::size_t operator()(const VoxelKey& k) const noexcept {
    std::uint64_t h = static_cast<std::uint64_t>(k.x) * 0x9E3779B97F4A7C15ull;
    h ^= static_cast<std::uint64_t>(k.y) + 0x7F4A7C159E3779B9ull + (h << 6) + (h >> 2);
    h ^= static_cast<std::uint64_t>(k.z) + 0x94D049BB133111EBull + (h << 6) + (h >> 2);
    return static_cast<std::size_t>(h);
  }
};

// 1-based nearest rank, clamped to [1, n].
std::size_t nearest_rank(double pct, std::size_t n) {
  const double r = std::ceil(pct * static_cast<double>(n) - 1e-9);
  return static_cast<std::size_t>(std::clamp(r, 1.0, static_cast<double>(n)));
}

}  // namespace

ClipBounds robust_bounds(const std::vector<Vec3>& points, double lo_pct, double hi_pct,
                         double margin) {
  require(points.size() >= 2, ErrorCode::kInvalidArgument, "robust_bounds: need >= 2 points");
  require(lo_pct >= 0 && lo_pct < hi_pct && hi_pct <= 1, ErrorCode::kInvalidArgument,
          "robust_bounds: need 0 <= lo < hi <= 1");
  require(margin >= 0, ErrorCode::kInvalidArgument, "robust_bounds: negative margin");
  const std::size_t n = points.size();
  const std::size_t lo_rank = nearest_rank(lo_pct, n);
  const std::size_t hi_rank = nearest_rank(hi_pct, n);
  ClipBounds b;
  std::vector<double> axis(n);
  for (int a = 0; a < 3; ++a) {
    for (std::size_t i = 0; i < n; ++i) axis[i] = points[i][a];
    std::sort(axis.begin(), axis.end());
    double lo = axis[lo_rank - 1];
    double hi = axis[hi_rank - 1];
    const double extent = hi - lo;
    if (extent <= 0) {
      lo -= 1e-6;
      hi += 1e-6;
    } else {
      lo -= margin * extent;
      hi += margin * extent;
    }
    b.min[a] = lo;
    b.max[a] = hi;
  }
  return b;
}

std::vector<Vec3> clip_points(const std::vector<Vec3>& points, const ClipBounds& bounds) {
  std::vector<Vec3> kept;
  kept.reserve(points.size());
  for (const auto& p : points) {
    if ((p.array() >= bounds.min.array()).all() && (p.array() <= bounds.max.array()).all())
      kept.push_back(p);
  }
  require(!kept.empty(), ErrorCode::kEmptyAnchors, "clip_points: no point inside the clip box");
  return kept;
}

std::size_t count_occupied_voxels(const std::vector<Vec3>& points, double voxel_size,
                                  const Vec3& origin) {
  require(voxel_size > 0, ErrorCode::kInvalidArgument, "voxel_size must be positive");
  std::unordered_set<VoxelKey, VoxelHash> occupied;
  occupied.reserve(points.size());
  for (const auto& p : points) {
    const Vec3 q = (p - origin) / voxel_size;
    occupied.insert({static_cast<std::int64_t>(std::floor(q.x())),
                     static_cast<std::int64_t>(std::floor(q.y())),
                     static_cast<std::int64_t>(std::floor(q.z()))});
  }
  return occupied.size();
}

std::size_t voxel_budget(const std::vector<Vec3>& points, double voxel_size, std::size_t cap,
                         const Vec3& origin) {
  require(cap >= 1, ErrorCode::kInvalidArgument, "voxel_budget: cap must be >= 1");
  return std::min(cap, count_occupied_voxels(points, voxel_size, origin));
}

std::size_t nearest_to_centroid(const std::vector<Vec3>& points) {
  require(!points.empty(), ErrorCode::kInvalidArgument, "nearest_to_centroid: no points");
  Vec3 c = Vec3::Zero();
  for (const auto& p : points) c += p;
  c /= static_cast<double>(points.size());
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < points.size(); ++i) {
    const double d = (points[i] - c).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = i;
    }
  }
  return best;
}

std::vector<std::size_t> fps(const std::vector<Vec3>& points, std::size_t k,
                             std::size_t seed_index) {
  const std::size_t n = points.size();
  require(k >= 1 && k <= n, ErrorCode::kInvalidBudget,
          "fps: budget " + std::to_string(k) + " outside [1, " + std::to_string(n) + "]");
  require(seed_index < n, ErrorCode::kInvalidArgument, "fps: seed index out of range");
  std::vector<std::size_t> selected;
  selected.reserve(k);
  std::vector<double> min_d(n, std::numeric_limits<double>::infinity());
  std::size_t current = seed_index;
  for (;;) {
    selected.push_back(current);
    if (selected.size() == k) break;
    const Vec3 c = points[current];
    std::size_t best = 0;
    double best_d = -1.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double d = (points[i] - c).squaredNorm();
      if (d < min_d[i]) min_d[i] = d;
      if (min_d[i] > best_d) {
        best_d = min_d[i];
        best = i;
      }
    }
    current = best;
  }
  return selected;
}

AnchorSet build_anchors(const std::vector<CameraView>& views, const AnchorConfig& config) {
  require(!views.empty(), ErrorCode::kInvalidArgument, "build_anchors: no views");
  require(config.cap >= 1, ErrorCode::kInvalidArgument, "build_anchors: cap must be >= 1");
  std::vector<std::vector<Vec3>> per_view(views.size());
  parallel_for(views.size(), [&](std::size_t i) {
    per_view[i] = backproject_view(views[i], config.stride);
  });
  std::vector<Vec3> dense;
  for (auto& pv : per_view) dense.insert(dense.end(), pv.begin(), pv.end());
  require(!dense.empty(), ErrorCode::kEmptyAnchors, "build_anchors: no valid depth in any view");

  AnchorSet out;
  out.source_count = dense.size();
  if (dense.size() >= 2) {
    out.bounds = robust_bounds(dense, config.lo_pct, config.hi_pct, config.margin);
  } else {
    out.bounds = {dense[0] - Vec3::Constant(1e-6), dense[0] + Vec3::Constant(1e-6)};
  }
  const std::vector<Vec3> kept = clip_points(dense, out.bounds);
  auto [norm, normalized] = normalize_scene(kept, out.bounds);
  out.normalization = norm;

  out.voxel_size = config.voxel_size > 0 ? config.voxel_size : 2.0 / 64.0;
  const Vec3 origin = norm.normalize(out.bounds.min);
  out.occupied_voxels = count_occupied_voxels(normalized, out.voxel_size, origin);
  const std::size_t budget =
      std::min<std::size_t>(static_cast<std::size_t>(config.cap), out.occupied_voxels);
  if (config.seed_index >= 0) {
    require(static_cast<std::size_t>(config.seed_index) < normalized.size(),
            ErrorCode::kInvalidArgument, "build_anchors: seed index out of range");
    out.seed_index = static_cast<std::size_t>(config.seed_index);
  } else {
    out.seed_index = nearest_to_centroid(normalized);
  }
  const auto idx = fps(normalized, budget, out.seed_index);
  out.positions.reserve(idx.size());
  for (std::size_t i : idx) out.positions.push_back(normalized[i]);
  return out;
}

std::vector<std::uint8_t> write_anchor_ply(const AnchorSet& anchors) {
  ply::Table t;
  for (const char* n : {"x", "y", "z"}) t.properties.push_back({n, ply::Type::kFloat32});
  t.rows = anchors.positions.size();
  for (const auto& p : anchors.positions) {
    const Vec3 w = anchors.normalization.denormalize(p);
    t.values.insert(t.values.end(), {w.x(), w.y(), w.z()});
  }
  return ply::write(t);
}

std::string anchor_sidecar_json(const AnchorSet& anchors) {
  nlohmann::json j;
  j["source_count"] = anchors.source_count;
  j["voxel_size"] = anchors.voxel_size;
  j["seed"] = anchors.seed_index;
  j["anchor_count"] = anchors.positions.size();
  j["occupied_voxels"] = anchors.occupied_voxels;
  j["normalization"]["center"] = {anchors.normalization.center.x(),
                                  anchors.normalization.center.y(),
                                  anchors.normalization.center.z()};
  j["normalization"]["half_extent"] = anchors.normalization.half_extent;
  return j.dump(2);
}

}  // namespace asplat
