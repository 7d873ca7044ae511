#include "asplat/scene_model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <json.hpp>

#include "asplat/error.hpp"
#include "asplat/ply.hpp"

namespace asplat {
namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double nudge_component(double a, double offset, double bound) {
  double m = a + offset;
  while (std::abs(m - a) > bound) m = std::nextafter(m, a);
  return m;
}

constexpr const char* kPlyTag = "asplat ";

}  // namespace

ActivatedGaussian activate(const double* p, double bound, const ScaleLimits& limits) {
  require(bound > 0, ErrorCode::kInvalidArgument, "activate: offset bound must be positive");
  ActivatedGaussian g;
  for (int i = 0; i < 3; ++i) g.offset[i] = bound * std::tanh(p[raw::kOffset + i]);
  g.opacity = sigmoid(p[raw::kOpacity]);
  for (int i = 0; i < 3; ++i)
    g.scale[i] = std::clamp(std::exp(p[raw::kScale + i]), limits.min, limits.max);
  Vec4 q(p[raw::kRot], p[raw::kRot + 1], p[raw::kRot + 2], p[raw::kRot + 3]);
  const double n = q.norm();
  if (n < 1e-12) {
    g.rotation = Vec4(1, 0, 0, 0);
    g.rotation_degenerate = true;
  } else {
    g.rotation = q / n;
  }
  for (int i = 0; i < 3; ++i) g.sh[i] = p[raw::kSh + i];
  return g;
}

Vec3 compose_center(const Vec3& anchor, const Vec3& offset, double bound) {
  require(offset.cwiseAbs().maxCoeff() <= bound, ErrorCode::kPrecondition,
          "compose_center: offset exceeds bound");
  Vec3 mu;
  for (int i = 0; i < 3; ++i) mu[i] = nudge_component(anchor[i], offset[i], bound);
  return mu;
}

Mat3 quat_to_rotation(const Vec4& q) {
  const double w = q[0], x = q[1], y = q[2], z = q[3];
  Mat3 R;
  R << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
       2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
       2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
  return R;
}

Mat3 covariance(const Vec3& scale, const Vec4& q) {
  const Mat3 R = quat_to_rotation(q);
  const Mat3 M = R * scale.asDiagonal();
  return M * M.transpose();
}

Vec3 sh_to_rgb(const Vec3& sh) {
  Vec3 c;
  for (int i = 0; i < 3; ++i) c[i] = std::clamp(0.5 + kShC0 * sh[i], 0.0, 1.0);
  return c;
}

SceneNormalization normalization_for(const ClipBounds& b) {
  SceneNormalization n;
  n.center = 0.5 * (b.min + b.max);
  n.half_extent = 0.5 * (b.max - b.min).maxCoeff();
  if (!(n.half_extent > 0)) n.half_extent = 1e-6;
  return n;
}

std::pair<SceneNormalization, std::vector<Vec3>> normalize_scene(const std::vector<Vec3>& points,
                                                                 const ClipBounds& bounds) {
  require(!points.empty(), ErrorCode::kInvalidArgument, "normalize_scene: no points");
  const SceneNormalization n = normalization_for(bounds);
  std::vector<Vec3> out;
  out.reserve(points.size());
  for (const auto& p : points) out.push_back(n.normalize(p));
  return {n, out};
}

std::pair<SceneNormalization, std::vector<Vec3>> normalize_scene(const std::vector<Vec3>& points) {
  require(!points.empty(), ErrorCode::kInvalidArgument, "normalize_scene: no points");
  ClipBounds b{points.front(), points.front()};
  for (const auto& p : points) {
    b.min = b.min.cwiseMin(p);
    b.max = b.max.cwiseMax(p);
  }
  return normalize_scene(points, b);
}

ActivatedGaussian GaussianScene::activated(std::size_t j) const {
  return activate(raw_of(j), offset_bound, scale_limits);
}

Vec3 GaussianScene::center(std::size_t j) const {
  return compose_center(anchors[anchor_of(j)], activated(j).offset, offset_bound);
}

void GaussianScene::validate() const {
  require(!anchors.empty(), ErrorCode::kContract, "scene has no anchors");
  require(gaussians_per_anchor >= 1, ErrorCode::kContract, "gaussians_per_anchor must be >= 1");
  require(raw.size() == anchors.size() * gaussians_per_anchor * raw::kCount, ErrorCode::kContract,
          "scene cardinality is not gaussians_per_anchor × anchors");
  for (std::size_t j = 0; j < size(); ++j)
    for (int k = 0; k < raw::kCount; ++k)
      require(std::isfinite(raw_of(j)[k]), ErrorCode::kNumeric,
              "non-finite raw parameter at gaussian " + std::to_string(j));
  require(max_offset_deviation(*this) <= offset_bound, ErrorCode::kContract,
          "offset bound violated");
}

GaussianScene GaussianScene::quantized() const {
  GaussianScene q = *this;
  for (auto& a : q.anchors) a = a.cast<float>().cast<double>();
  for (auto& v : q.raw) v = static_cast<float>(v);
  return q;
}

GaussianScene make_scene(const std::vector<Vec3>& anchors, const SceneNormalization& norm,
                         int gaussians_per_anchor) {
  require(!anchors.empty(), ErrorCode::kEmptyAnchors, "make_scene: no anchors");
  require(gaussians_per_anchor >= 1, ErrorCode::kInvalidArgument,
          "make_scene: gaussians_per_anchor must be >= 1");
  GaussianScene s;
  s.anchors = anchors;
  s.gaussians_per_anchor = gaussians_per_anchor;
  s.normalization = norm;
  s.raw.assign(anchors.size() * gaussians_per_anchor * raw::kCount, 0.0);
  return s;
}

double max_offset_deviation(const GaussianScene& scene) {
  double worst = 0.0;
  for (std::size_t j = 0; j < scene.size(); ++j) {
    const Vec3 mu = scene.center(j);
    worst = std::max(worst, (mu - scene.anchors[scene.anchor_of(j)]).cwiseAbs().maxCoeff());
  }
  return worst;
}

std::string scene_sidecar_json(const GaussianScene& scene) {
  nlohmann::json j;
  j["normalization"]["center"] = {scene.normalization.center.x(), scene.normalization.center.y(),
                                  scene.normalization.center.z()};
  j["normalization"]["half_extent"] = scene.normalization.half_extent;
  j["anchor_count"] = scene.anchors.size();
  j["gaussians_per_anchor"] = scene.gaussians_per_anchor;
  j["offset_bound"] = scene.offset_bound;
  j["scale_limits"] = {scene.scale_limits.min, scene.scale_limits.max};
  return j.dump();
}

std::vector<std::uint8_t> write_ply(const GaussianScene& scene) {
  require(scene.size() > 0, ErrorCode::kContract, "write_ply: empty scene");
  scene.validate();
  using ply::Type;
  ply::Table t;
  t.comments.push_back(kPlyTag + scene_sidecar_json(scene));
  const char* names[] = {"x", "y", "z", "f_dc_0", "f_dc_1", "f_dc_2", "opacity",
                         "scale_0", "scale_1", "scale_2", "rot_0", "rot_1", "rot_2", "rot_3",
                         "offset_0", "offset_1", "offset_2",
                         "anchor_x", "anchor_y", "anchor_z"};
  for (const char* n : names) t.properties.push_back({n, Type::kFloat32});
  t.properties.push_back({"anchor_id", Type::kUInt32});
  t.rows = scene.size();
  t.values.reserve(t.rows * t.properties.size());
  for (std::size_t j = 0; j < scene.size(); ++j) {
    const double* r = scene.raw_of(j);
    const Vec3 world = scene.normalization.denormalize(scene.center(j));
    const Vec3& a = scene.anchors[scene.anchor_of(j)];
    const double row[] = {world.x(), world.y(), world.z(),
                          r[raw::kSh], r[raw::kSh + 1], r[raw::kSh + 2], r[raw::kOpacity],
                          r[raw::kScale], r[raw::kScale + 1], r[raw::kScale + 2],
                          r[raw::kRot], r[raw::kRot + 1], r[raw::kRot + 2], r[raw::kRot + 3],
                          r[raw::kOffset], r[raw::kOffset + 1], r[raw::kOffset + 2],
                          a.x(), a.y(), a.z(), static_cast<double>(scene.anchor_of(j))};
    t.values.insert(t.values.end(), std::begin(row), std::end(row));
  }
  return ply::write(t);
}

GaussianScene read_ply(const std::vector<std::uint8_t>& bytes) {
  const ply::Table t = ply::read(bytes);
  require(t.rows > 0, ErrorCode::kParse, "read_ply: empty scene");
  nlohmann::json meta;
  bool found = false;
  for (const auto& c : t.comments) {
    if (c.rfind(kPlyTag, 0) == 0) {
      try {
        meta = nlohmann::json::parse(c.substr(std::string(kPlyTag).size()));
      } catch (const std::exception& e) {
        fail(ErrorCode::kParse, std::string("read_ply: bad metadata comment: ") + e.what());
      }
      found = true;
    }
  }
  require(found, ErrorCode::kParse, "read_ply: missing asplat metadata comment");

  GaussianScene s;
  try {
    const auto& c = meta.at("normalization").at("center");
    s.normalization.center = Vec3(c.at(0).get<double>(), c.at(1).get<double>(), c.at(2).get<double>());
    s.normalization.half_extent = meta.at("normalization").at("half_extent").get<double>();
    s.gaussians_per_anchor = meta.at("gaussians_per_anchor").get<int>();
    if (meta.contains("offset_bound")) s.offset_bound = meta["offset_bound"].get<double>();
    if (meta.contains("scale_limits")) {
      s.scale_limits.min = meta["scale_limits"].at(0).get<double>();
      s.scale_limits.max = meta["scale_limits"].at(1).get<double>();
    }
    const std::size_t anchors = meta.at("anchor_count").get<std::size_t>();
    require(s.gaussians_per_anchor >= 1 && anchors * s.gaussians_per_anchor == t.rows,
            ErrorCode::kParse, "read_ply: vertex count is not anchor_count × gaussians_per_anchor");
    s.anchors.resize(anchors);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kParse, std::string("read_ply: metadata: ") + e.what());
  }

  auto col = [&](const char* name) {
    const int c = t.column(name);
    require(c >= 0, ErrorCode::kParse, std::string("read_ply: missing property '") + name + "'");
    return c;
  };
  const int c_sh = col("f_dc_0"), c_op = col("opacity"), c_sc = col("scale_0"),
            c_rot = col("rot_0"), c_off = col("offset_0"), c_ax = col("anchor_x"),
            c_id = col("anchor_id");
  require(col("f_dc_2") == c_sh + 2 && col("scale_2") == c_sc + 2 && col("rot_3") == c_rot + 3 &&
              col("offset_2") == c_off + 2 && col("anchor_z") == c_ax + 2,
          ErrorCode::kParse, "read_ply: property order mismatch");

  s.raw.assign(t.rows * raw::kCount, 0.0);
  std::vector<bool> anchor_seen(s.anchors.size(), false);
  for (std::size_t j = 0; j < t.rows; ++j) {
    const std::size_t id = static_cast<std::size_t>(t.get(j, c_id));
    require(id == j / s.gaussians_per_anchor, ErrorCode::kParse,
            "read_ply: vertex " + std::to_string(j) + " has anchor_id out of anchor-major order");
    double* r = s.raw_of(j);
    for (int i = 0; i < 3; ++i) {
      r[raw::kSh + i] = t.get(j, c_sh + i);
      r[raw::kScale + i] = t.get(j, c_sc + i);
      r[raw::kOffset + i] = t.get(j, c_off + i);
    }
    r[raw::kOpacity] = t.get(j, c_op);
    for (int i = 0; i < 4; ++i) r[raw::kRot + i] = t.get(j, c_rot + i);
    const Vec3 a(t.get(j, c_ax), t.get(j, c_ax + 1), t.get(j, c_ax + 2));
    if (!anchor_seen[id]) {
      s.anchors[id] = a;
      anchor_seen[id] = true;
    } else {
      require(s.anchors[id] == a, ErrorCode::kParse,
              "read_ply: vertex " + std::to_string(j) + " disagrees on its anchor position");
    }
  }
  s.validate();
  return s;
}

}  // namespace asplat
