#pragma once

#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "asplat/cameras.hpp"
#include "asplat/image.hpp"
#include "asplat/scene_model.hpp"

namespace asplat {

using Vec2 = Eigen::Vector2d;
using Mat2 = Eigen::Matrix2d;

// Activated Gaussians in world units.
struct SplatInput {
  std::vector<Vec3> means;
  std::vector<Vec3> scales;
  std::vector<Vec4> rotations;  // unit quaternions (w, x, y, z)
  std::vector<Vec3> colors;
  std::vector<double> opacities;

  std::size_t size() const { return means.size(); }
};

struct Splat2D {
  Vec2 mean2d;
  Mat2 cov2d;
  Mat2 conic;
  double depth = 0.0;
  Vec3 color;
  double opacity = 0.0;
  int radius = 0;  // pixels, 3σ bounding square
  std::size_t gaussian_id = 0;
};

struct RenderOptions {
  int tile_size = 16;
  double dilation = 0.3;
  double alpha_clamp = 0.99;
  double min_transmittance = 1e-4;
  double z_near = kZNear;
  double guard_band = 1.3;  // Jacobian clamp, in multiples of the half field of view
};

struct RenderOutput {
  Image rgb;    // H×W×3
  Image depth;  // H×W×1, expected depth
  Image alpha;  // H×W×1
};

struct TileStats {
  int tiles_x = 0;
  int tiles_y = 0;
  std::vector<int> splat_counts;  // row-major over tiles
};

struct SplatGrads {
  std::vector<Vec3> means;
  std::vector<Vec3> scales;
  std::vector<Vec4> rotations;
  std::vector<Vec3> colors;
  std::vector<double> opacities;
};

// Returns nullopt when the Gaussian is behind the camera or its 3σ box
// misses the image.
std::optional<Splat2D> project_gaussian(const Vec3& mean, const Vec3& scale, const Vec4& rotation,
                                        const Vec3& color, double opacity, const Intrinsics& K,
                                        const Extrinsics& E, const RenderOptions& options = {});

RenderOutput rasterize(const SplatInput& splats, const Intrinsics& K, const Extrinsics& E,
                       const Vec3& background, const RenderOptions& options = {},
                       TileStats* stats = nullptr);

// Image gradients may be empty (treated as zero).
SplatGrads rasterize_backward(const SplatInput& splats, const Intrinsics& K, const Extrinsics& E,
                              const Vec3& background, const Image& grad_rgb,
                              const Image& grad_depth, const RenderOptions& options = {});

SplatInput scene_splats(const GaussianScene& scene);

RenderOutput render(const GaussianScene& scene, const Intrinsics& K, const Extrinsics& E,
                    const Vec3& background, const RenderOptions& options = {},
                    TileStats* stats = nullptr);

// Gradients with respect to every raw parameter of the scene, size() × 14.
std::vector<double> render_backward(const GaussianScene& scene, const Intrinsics& K,
                                    const Extrinsics& E, const Vec3& background,
                                    const Image& grad_rgb, const Image& grad_depth,
                                    const RenderOptions& options = {});

// Pulls world-space splat gradients back through activation and scene
// normalization onto raw parameters.
std::vector<double> splat_grads_to_raw(const GaussianScene& scene, const SplatGrads& grads);

}  // namespace asplat
