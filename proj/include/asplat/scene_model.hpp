#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "asplat/cameras.hpp"

namespace asplat {

using Vec4 = Eigen::Vector4d;

inline constexpr double kOffsetBound = 10.0 / 128.0;
inline constexpr double kScaleMin = 1e-4;
inline constexpr double kScaleMax = 0.5;
inline constexpr double kShC0 = 0.28209479177387814;

// Raw (pre-activation) layout of one Gaussian.
namespace raw {
inline constexpr int kOffset = 0;   // 3
inline constexpr int kOpacity = 3;  // 1
inline constexpr int kScale = 4;    // 3, log-space
inline constexpr int kRot = 7;      // 4, (w, x, y, z)
inline constexpr int kSh = 11;      // 3
inline constexpr int kCount = 14;
}  // namespace raw

struct ScaleLimits {
  double min = kScaleMin;
  double max = kScaleMax;
};

struct ActivatedGaussian {
  Vec3 offset;
  double opacity = 0.0;
  Vec3 scale;
  Vec4 rotation;  // unit (w, x, y, z)
  Vec3 sh;
  bool rotation_degenerate = false;
};

ActivatedGaussian activate(const double* raw_params, double bound = kOffsetBound,
                           const ScaleLimits& limits = {});

// A + offset, nudged toward A by at most one ulp so that the computed
// |mu - A| never exceeds `bound` componentwise.
Vec3 compose_center(const Vec3& anchor, const Vec3& offset, double bound = kOffsetBound);

Mat3 quat_to_rotation(const Vec4& q);
Mat3 covariance(const Vec3& scale, const Vec4& q);
Vec3 sh_to_rgb(const Vec3& sh);

struct SceneNormalization {
  Vec3 center = Vec3::Zero();
  double half_extent = 1.0;

  Vec3 normalize(const Vec3& p) const { return (p - center) / half_extent; }
  Vec3 denormalize(const Vec3& p) const { return p * half_extent + center; }
};

struct ClipBounds {
  Vec3 min = Vec3::Zero();
  Vec3 max = Vec3::Ones();
};

SceneNormalization normalization_for(const ClipBounds& bounds);
// Uses the axis-aligned box of `points`.
std::pair<SceneNormalization, std::vector<Vec3>> normalize_scene(const std::vector<Vec3>& points);
std::pair<SceneNormalization, std::vector<Vec3>> normalize_scene(const std::vector<Vec3>& points,
                                                                 const ClipBounds& bounds);

struct GaussianScene {
  std::vector<Vec3> anchors;  // normalized units
  int gaussians_per_anchor = 4;
  std::vector<double> raw;    // size() × raw::kCount
  SceneNormalization normalization;
  double offset_bound = kOffsetBound;
  ScaleLimits scale_limits;

  std::size_t size() const { return raw.size() / raw::kCount; }
  std::size_t anchor_of(std::size_t j) const { return j / gaussians_per_anchor; }
  const double* raw_of(std::size_t j) const { return raw.data() + j * raw::kCount; }
  double* raw_of(std::size_t j) { return raw.data() + j * raw::kCount; }

  ActivatedGaussian activated(std::size_t j) const;
  Vec3 center(std::size_t j) const;  // normalized units

  // Throws kContract when cardinality, finiteness or the offset bound fail.
  void validate() const;
  // Rounds every stored value to float32, the precision of serialized scenes.
  GaussianScene quantized() const;
};

// Allocates k raw parameter rows per anchor; every value zero.
GaussianScene make_scene(const std::vector<Vec3>& anchors, const SceneNormalization& norm,
                         int gaussians_per_anchor = 4);

double max_offset_deviation(const GaussianScene& scene);

std::vector<std::uint8_t> write_ply(const GaussianScene& scene);
GaussianScene read_ply(const std::vector<std::uint8_t>& bytes);
std::string scene_sidecar_json(const GaussianScene& scene);

}  // namespace asplat
