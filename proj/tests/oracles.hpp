#pragma once

// Brute-force reference implementations used only by tests.

#include <algorithm>
#include <limits>
#include <set>
#include <tuple>
#include <vector>

#include "asplat/rasterizer.hpp"

namespace asplat::oracle {

// Recomputes every candidate's distance to the whole selected set each round.
inline std::vector<std::size_t> fps(const std::vector<Vec3>& pts, std::size_t k, std::size_t seed) {
  std::vector<std::size_t> sel{seed};
  while (sel.size() < k) {
    double best = -1;
    std::size_t arg = 0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      double dmin = std::numeric_limits<double>::infinity();
      for (std::size_t s : sel) dmin = std::min(dmin, (pts[i] - pts[s]).squaredNorm());
      if (dmin > best) {
        best = dmin;
        arg = i;
      }
    }
    sel.push_back(arg);
  }
  return sel;
}

inline std::size_t occupied_voxels(const std::vector<Vec3>& pts, double voxel, const Vec3& origin) {
  std::set<std::tuple<long long, long long, long long>> s;
  for (const auto& p : pts) {
    const Vec3 q = (p - origin) / voxel;
    s.insert({static_cast<long long>(std::floor(q.x())), static_cast<long long>(std::floor(q.y())),
              static_cast<long long>(std::floor(q.z()))});
  }
  return s.size();
}

// Per-pixel compositor over every projected splat, no tiling: each pixel
// sorts the full splat list itself.
inline RenderOutput composite(const SplatInput& in, const Intrinsics& K, const Extrinsics& E,
                              const Vec3& bg, const RenderOptions& opt = {}) {
  std::vector<Splat2D> splats;
  for (std::size_t i = 0; i < in.size(); ++i) {
    auto s = project_gaussian(in.means[i], in.scales[i], in.rotations[i], in.colors[i],
                              in.opacities[i], K, E, opt);
    if (s) {
      s->gaussian_id = i;
      splats.push_back(*s);
    }
  }
  RenderOutput out{Image(K.width, K.height, 3), Image(K.width, K.height, 1),
                   Image(K.width, K.height, 1)};
  for (int y = 0; y < K.height; ++y)
    for (int x = 0; x < K.width; ++x) {
      std::vector<const Splat2D*> order;
      for (const auto& s : splats) order.push_back(&s);
      std::sort(order.begin(), order.end(), [](const Splat2D* a, const Splat2D* b) {
        return std::make_pair(a->depth, a->gaussian_id) < std::make_pair(b->depth, b->gaussian_id);
      });
      double T = 1;
      Vec3 c = Vec3::Zero();
      double z = 0;
      for (const Splat2D* s : order) {
        if (T < opt.min_transmittance) break;
        const Vec2 d(x - s->mean2d.x(), y - s->mean2d.y());
        const double m2 = d.dot(s->conic * d);
        if (m2 > 9.0) continue;
        const double w = std::min(opt.alpha_clamp, s->opacity * std::exp(-0.5 * m2));
        c += w * T * s->color;
        z += w * T * s->depth;
        T *= 1 - w;
      }
      for (int ch = 0; ch < 3; ++ch) out.rgb.at(x, y, ch) = c[ch] + T * bg[ch];
      out.alpha.at(x, y) = 1 - T;
      out.depth.at(x, y) = z / std::max(1 - T, 1e-8);
    }
  return out;
}

}  // namespace asplat::oracle
