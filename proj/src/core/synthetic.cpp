#include "asplat/synthetic.hpp"

#include <cmath>
#include <random>

#include "asplat/error.hpp"
#include "asplat/parallel.hpp"

namespace asplat::synth {

namespace {

constexpr double kPi = 3.14159265358979323846;

Vec3 shade(const Material& m, double s, double t) {
  if (m.gradient) {
    const double f = 0.5 + 0.5 * std::sin(s / m.period);
    return m.a * f + m.b * (1 - f);
  }
  const long cs = static_cast<long>(std::floor(s / m.period));
  const long ct = static_cast<long>(std::floor(t / m.period));
  return ((cs + ct) & 1) ? m.b : m.a;
}

double lambert(const World& w, const Vec3& n) {
  return 0.55 + 0.45 * std::abs(n.dot(w.light_dir.normalized()));
}

Material random_material(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.1, 0.95);
  Material m;
  m.a = Vec3(u(rng), u(rng), u(rng));
  m.b = Vec3(u(rng), u(rng), u(rng)) * 0.5;
  std::uniform_real_distribution<double> p(0.35, 0.7);
  m.period = p(rng);
  m.gradient = std::uniform_int_distribution<int>(0, 3)(rng) == 0;
  return m;
}

Rect rect(const Vec3& c, const Vec3& u, const Vec3& v, double hu, double hv, const Material& m) {
  return Rect{c, u.normalized(), v.normalized(), hu, hv, m};
}

}  // namespace

Hit trace(const World& w, const Vec3& o, const Vec3& d) {
  Hit best;
  best.t = std::numeric_limits<double>::infinity();
  for (const auto& r : w.rects) {
    const Vec3 n = r.u.cross(r.v);
    const double den = n.dot(d);
    if (std::abs(den) < 1e-12) continue;
    const double t = n.dot(r.center - o) / den;
    if (!(t > 1e-6) || t >= best.t) continue;
    const Vec3 p = o + t * d - r.center;
    const double s = p.dot(r.u), q = p.dot(r.v);
    if (std::abs(s) > r.half_u || std::abs(q) > r.half_v) continue;
    best = {t, shade(r.material, s + r.half_u, q + r.half_v) * lambert(w, n), true};
  }
  for (const auto& sp : w.spheres) {
    const Vec3 oc = o - sp.center;
    const double a = d.squaredNorm(), b = oc.dot(d), c = oc.squaredNorm() - sp.radius * sp.radius;
    const double disc = b * b - a * c;
    if (disc < 0) continue;
    const double sq = std::sqrt(disc);
    double t = (-b - sq) / a;
    if (!(t > 1e-6)) t = (-b + sq) / a;
    if (!(t > 1e-6) || t >= best.t) continue;
    const Vec3 n = (o + t * d - sp.center) / sp.radius;
    const double lon = std::atan2(n.z(), n.x()) * sp.radius;
    const double lat = std::asin(std::clamp(n.y(), -1.0, 1.0)) * sp.radius;
    best = {t, shade(sp.material, lon, lat) * lambert(w, n), true};
  }
  if (!best.hit) best = {0.0, w.background, false};
  return best;
}

World make_world(const GenConfig& c) {
  std::mt19937_64 rng(c.seed * 0x9e3779b97f4a7c15ULL + 17);
  World w;
  const Vec3 X(1, 0, 0), Y(0, 1, 0), Z(0, 0, 1);
  if (c.preset == "box-room") {
    // y points down; the floor sits at y = +1.5.
    const double hx = 2.0, hy = 1.5, hz = 2.0;
    w.rects.push_back(rect(Vec3(0, hy, 0), X, Z, hx, hz, random_material(rng)));     // floor
    w.rects.push_back(rect(Vec3(0, -hy, 0), X, Z, hx, hz, random_material(rng)));    // ceiling
    w.rects.push_back(rect(Vec3(0, 0, hz), X, Y, hx, hy, random_material(rng)));
    w.rects.push_back(rect(Vec3(0, 0, -hz), X, Y, hx, hy, random_material(rng)));
    w.rects.push_back(rect(Vec3(hx, 0, 0), Z, Y, hz, hy, random_material(rng)));
    w.rects.push_back(rect(Vec3(-hx, 0, 0), Z, Y, hz, hy, random_material(rng)));
    w.spheres.push_back({Vec3(0.25, hy - 0.45, 0.1), 0.45, random_material(rng)});
    w.spheres.push_back({Vec3(-0.45, hy - 0.25, -0.35), 0.25, random_material(rng)});
  } else if (c.preset == "textured-planes") {
    w.rects.push_back(rect(Vec3(0, 1.2, 0), X, Z, 3, 3, random_material(rng)));
    w.rects.push_back(rect(Vec3(0, -0.8, 4.0), X, Y, 4.5, 2, random_material(rng)));
    std::uniform_real_distribution<double> u(-0.8, 0.8);
    for (int i = 0; i < 3; ++i) {
      const Vec3 a = Vec3(1, u(rng) * 0.5, u(rng)).normalized();
      const Vec3 b = Vec3(u(rng) * 0.5, 1, u(rng) * 0.5).normalized();
      const Vec3 bo = (b - b.dot(a) * a).normalized();
      w.rects.push_back(rect(Vec3(u(rng), u(rng) * 0.5, u(rng)), a, bo, 0.5, 0.4, random_material(rng)));
    }
  } else if (c.preset == "sphere-field") {
    w.rects.push_back(rect(Vec3(0, 1.0, 0), X, Z, 3, 3, random_material(rng)));
    std::uniform_real_distribution<double> u(-1.0, 1.0), r(0.2, 0.45);
    for (int i = 0; i < 5; ++i) {
      const double rad = r(rng);
      w.spheres.push_back({Vec3(u(rng), 1.0 - rad - 0.3 * std::abs(u(rng)), u(rng)), rad, random_material(rng)});
    }
  } else {
    fail(ErrorCode::kConfig, "unknown preset '" + c.preset + "' (expected box-room, textured-planes or sphere-field)");
  }
  return w;
}

std::vector<io::ViewEntry> make_cameras(const GenConfig& c) {
  require(c.width >= 8 && c.height >= 8 && c.input_views >= 1 && c.novel_views >= 0,
          ErrorCode::kConfig, "gen-scene: invalid view configuration");
  Intrinsics K;
  K.width = c.width;
  K.height = c.height;
  K.fx = K.fy = 0.5 * c.width / std::tan(0.5 * c.hfov_deg * kPi / 180.0);
  K.cx = 0.5 * c.width;
  K.cy = 0.5 * c.height;
  const bool inside = c.preset == "box-room";
  const double radius = inside ? 1.3 : (c.preset == "sphere-field" ? 2.6 : 3.0);
  const Vec3 target = inside ? Vec3(0, 0.6, 0) : Vec3(0, 0.3, 0);
  const double height = inside ? -0.3 : -1.2;
  auto make = [&](const std::string& name, double theta, const std::string& split) {
    io::ViewEntry e;
    e.name = name;
    e.image = "images/" + name + ".png";
    e.depth = "depth/" + name + ".pfm";
    e.split = split;
    e.intrinsics = K;
    const Vec3 eye(radius * std::cos(theta), height, radius * std::sin(theta));
    // Inside the room cameras look outward across the center so walls fill the frame.
    e.extrinsics = look_at(eye, inside ? Vec3(-eye.x(), target.y(), -eye.z()) : target, Vec3(0, 1, 0));
    return e;
  };
  // Input views sit on a uniform orbit; novel views are fixed halfway
  // positions that do not depend on the input count.
  std::vector<io::ViewEntry> out;
  for (int i = 0; i < c.input_views; ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "input_%03d", i);
    out.push_back(make(name, 2 * kPi * i / c.input_views, "input"));
  }
  for (int j = 0; j < c.novel_views; ++j) {
    char name[32];
    std::snprintf(name, sizeof name, "novel_%03d", j);
    out.push_back(make(name, 2 * kPi * (j + 0.37) / std::max(1, c.novel_views), "novel"));
  }
  return out;
}

CameraView render_view(const World& w, const io::ViewEntry& e) {
  CameraView v;
  v.name = e.name;
  v.intrinsics = e.intrinsics;
  v.extrinsics = e.extrinsics;
  const Intrinsics& K = e.intrinsics;
  v.image = Image(K.width, K.height, 3);
  v.depth = Image(K.width, K.height, 1);
  parallel_for(static_cast<std::size_t>(K.height), [&](std::size_t yy) {
    const int y = static_cast<int>(yy);
    for (int x = 0; x < K.width; ++x) {
      const Vec3 cam((x - K.cx) / K.fx, (y - K.cy) / K.fy, 1.0);
      const Hit h = trace(w, e.extrinsics.T, e.extrinsics.R * cam);
      for (int ch = 0; ch < 3; ++ch) v.image.at(x, y, ch) = std::clamp(h.color[ch], 0.0, 1.0);
      v.depth.at(x, y) = h.hit ? h.t : 0.0;
    }
  });
  return v;
}

io::Manifest gen_scene(const std::filesystem::path& dir, const GenConfig& c) {
  const World w = make_world(c);
  io::Manifest m;
  m.name = c.preset + "-" + std::to_string(c.seed);
  m.depth_provenance = "synthetic-raytraced";
  m.views = make_cameras(c);
  for (const auto& e : m.views) {
    const CameraView v = render_view(w, e);
    io::write_png(dir / e.image, v.image);
    io::write_pfm(dir / e.depth, v.depth);
  }
  io::save_manifest(dir, m);
  return m;
}

}  // namespace asplat::synth
