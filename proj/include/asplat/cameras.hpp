#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "asplat/image.hpp"

namespace asplat {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;

inline constexpr double kZNear = 1e-4;

struct Intrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 1;
  int height = 1;

  void validate() const;
};

// Camera-to-world: P_w = R * P_c + T.
struct Extrinsics {
  Mat3 R = Mat3::Identity();
  Vec3 T = Vec3::Zero();

  void validate() const;
  const Vec3& center() const { return T; }
};

struct CameraView {
  std::string name;
  Image image;  // H×W×3 in [0,1]
  Image depth;  // H×W×1, 0 marks invalid
  Intrinsics intrinsics;
  Extrinsics extrinsics;

  void validate() const;
};

struct Projection {
  double u = 0.0;
  double v = 0.0;
  double z = 0.0;
  bool behind = false;
};

Vec3 backproject_pixel(double u, double v, double depth, const Intrinsics& K,
                       const Extrinsics& E);

Projection project_point(const Vec3& p, const Intrinsics& K, const Extrinsics& E,
                         double z_near = kZNear);

// Plücker coordinates (direction, moment) of the ray through the pixel center
// (u + 0.5, v + 0.5).
Vec6 ray_embedding(int u, int v, const Intrinsics& K, const Extrinsics& E);

// Row-major over every stride-th pixel, skipping depth 0.
std::vector<Vec3> backproject_view(const CameraView& view, int stride);

// Rotation that looks from `eye` toward `target` with the camera's +y axis
// pointing along `down`.
Extrinsics look_at(const Vec3& eye, const Vec3& target, const Vec3& down);

}  // namespace asplat
