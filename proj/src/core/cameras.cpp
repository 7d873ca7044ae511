#include "asplat/cameras.hpp"

#include <cmath>
#include <sstream>

#include <Eigen/Geometry>

#include "asplat/error.hpp"

namespace asplat {
namespace {

bool finite3(const Vec3& v) { return v.allFinite(); }

}  // namespace

void Intrinsics::validate() const {
  require(std::isfinite(fx) && std::isfinite(fy) && std::isfinite(cx) &&
              std::isfinite(cy),
          ErrorCode::kNumeric, "intrinsics contain non-finite values");
  require(fx > 0 && fy > 0, ErrorCode::kInvalidArgument,
          "intrinsics: focal lengths must be positive");
  require(width > 0 && height > 0, ErrorCode::kInvalidArgument,
          "intrinsics: image size must be positive");
  require(cx >= 0 && cx < width && cy >= 0 && cy < height,
          ErrorCode::kInvalidArgument,
          "intrinsics: principal point outside the image");
}

void Extrinsics::validate() const {
  require(R.allFinite() && T.allFinite(), ErrorCode::kNumeric,
          "extrinsics contain non-finite values");
  const double orth = (R * R.transpose() - Mat3::Identity()).cwiseAbs().maxCoeff();
  require(orth <= 1e-9 && std::abs(R.determinant() - 1.0) <= 1e-9,
          ErrorCode::kInvalidArgument, "extrinsics: R is not a rotation");
}

void CameraView::validate() const {
  intrinsics.validate();
  extrinsics.validate();
  const int w = intrinsics.width;
  const int h = intrinsics.height;
  require(image.width == w && image.height == h && image.channels == 3,
          ErrorCode::kContract, "view '" + name + "': image does not match intrinsics");
  require(depth.width == w && depth.height == h && depth.channels == 1,
          ErrorCode::kContract, "view '" + name + "': depth does not match intrinsics");
  for (double x : image.data)
    require(std::isfinite(x), ErrorCode::kNumeric, "view '" + name + "': non-finite pixel");
  for (double d : depth.data)
    require(std::isfinite(d) && d >= 0, ErrorCode::kNumeric,
            "view '" + name + "': invalid depth value");
}

Vec3 backproject_pixel(double u, double v, double depth, const Intrinsics& K,
                       const Extrinsics& E) {
  require(std::isfinite(u) && std::isfinite(v) && std::isfinite(depth),
          ErrorCode::kNumeric, "backproject_pixel: non-finite input");
  require(depth > 0, ErrorCode::kInvalidDepth, "backproject_pixel: depth must be positive");
  require(u >= 0 && u < K.width && v >= 0 && v < K.height, ErrorCode::kInvalidArgument,
          "backproject_pixel: pixel outside the image");
  const Vec3 pc((u - K.cx) / K.fx * depth, (v - K.cy) / K.fy * depth, depth);
  return E.R * pc + E.T;
}

Projection project_point(const Vec3& p, const Intrinsics& K, const Extrinsics& E,
                         double z_near) {
  require(finite3(p), ErrorCode::kNumeric, "project_point: non-finite point");
  const Vec3 pc = E.R.transpose() * (p - E.T);
  Projection out;
  out.z = pc.z();
  if (pc.z() <= z_near) {
    out.behind = true;
    return out;
  }
  out.u = K.fx * pc.x() / pc.z() + K.cx;
  out.v = K.fy * pc.y() / pc.z() + K.cy;
  return out;
}

Vec6 ray_embedding(int u, int v, const Intrinsics& K, const Extrinsics& E) {
  require(u >= 0 && u < K.width && v >= 0 && v < K.height, ErrorCode::kInvalidArgument,
          "ray_embedding: pixel outside the image");
  const Vec3 dc((u + 0.5 - K.cx) / K.fx, (v + 0.5 - K.cy) / K.fy, 1.0);
  const Vec3 d = (E.R * dc).normalized();
  const Vec3 m = E.T.cross(d);
  Vec6 out;
  out << d, m;
  require(out.allFinite(), ErrorCode::kNumeric, "ray_embedding: non-finite result");
  return out;
}

std::vector<Vec3> backproject_view(const CameraView& view, int stride) {
  require(stride >= 1, ErrorCode::kInvalidArgument, "backproject_view: stride must be >= 1");
  std::vector<Vec3> out;
  const Intrinsics& K = view.intrinsics;
  for (int y = 0; y < K.height; y += stride) {
    for (int x = 0; x < K.width; x += stride) {
      const double d = view.depth.at(x, y);
      if (d <= 0) continue;
      out.push_back(backproject_pixel(x, y, d, K, view.extrinsics));
    }
  }
  return out;
}

Extrinsics look_at(const Vec3& eye, const Vec3& target, const Vec3& down) {
  const Vec3 z = (target - eye).normalized();
  const Vec3 x = down.cross(z).normalized();
  const Vec3 y = z.cross(x);
  Extrinsics e;
  e.R.col(0) = x;
  e.R.col(1) = y;
  e.R.col(2) = z;
  e.T = eye;
  return e;
}

}  // namespace asplat
