#include <doctest.h>

#include <cstring>
#include <random>

#include "asplat/error.hpp"
#include "asplat/parallel.hpp"
#include "asplat/rasterizer.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace asplat;
using asplat::testing::uniform;

namespace {

Intrinsics square_camera(int w, int h, double f) {
  Intrinsics K;
  K.width = w;
  K.height = h;
  K.fx = K.fy = f;
  K.cx = w / 2.0;
  K.cy = h / 2.0;
  return K;
}

SplatInput random_splats(std::mt19937_64& rng, std::size_t n) {
  SplatInput in;
  for (std::size_t i = 0; i < n; ++i) {
    in.means.emplace_back(uniform(rng, -1.2, 1.2), uniform(rng, -1.2, 1.2), uniform(rng, 2, 6));
    in.scales.emplace_back(uniform(rng, 0.02, 0.3), uniform(rng, 0.02, 0.3), uniform(rng, 0.02, 0.3));
    Vec4 q(uniform(rng, -1, 1), uniform(rng, -1, 1), uniform(rng, -1, 1), uniform(rng, -1, 1));
    in.rotations.push_back(q.normalized());
    in.colors.emplace_back(uniform(rng, 0, 1), uniform(rng, 0, 1), uniform(rng, 0, 1));
    in.opacities.push_back(uniform(rng, 0.05, 0.95));
  }
  return in;
}

double max_abs_diff(const Image& a, const Image& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.data.size(); ++i) m = std::max(m, std::abs(a.data[i] - b.data[i]));
  return m;
}

// Small scene in normalized units viewed by a camera at distance 3.
GaussianScene fd_scene(std::mt19937_64& rng, std::size_t anchors) {
  std::vector<Vec3> a;
  for (std::size_t i = 0; i < anchors; ++i)
    a.emplace_back(uniform(rng, -0.4, 0.4), uniform(rng, -0.3, 0.3), uniform(rng, -0.3, 0.3));
  SceneNormalization n;
  GaussianScene s = make_scene(a, n, 4);
  for (std::size_t j = 0; j < s.size(); ++j) {
    double* r = s.raw_of(j);
    for (int i = 0; i < 3; ++i) r[raw::kOffset + i] = uniform(rng, -1, 1);
    r[raw::kOpacity] = uniform(rng, -1.5, 1.0);
    for (int i = 0; i < 3; ++i) r[raw::kScale + i] = std::log(uniform(rng, 0.04, 0.15));
    for (int i = 0; i < 4; ++i) r[raw::kRot + i] = uniform(rng, -1, 1);
    for (int i = 0; i < 3; ++i) r[raw::kSh + i] = uniform(rng, -1.2, 1.2);
  }
  return s;
}

struct FdProblem {
  Intrinsics K = square_camera(40, 32, 40);
  Extrinsics E;
  Vec3 bg{0.1, 0.2, 0.3};
  Image target{40, 32, 3};
  Image depth_w{40, 32, 1};

  FdProblem(std::mt19937_64& rng) {
    E.T = Vec3(0, 0, -3);
    for (auto& v : target.data) v = uniform(rng, 0, 1);
    for (auto& v : depth_w.data) v = uniform(rng, -0.2, 0.2);
  }

  double loss(const GaussianScene& s) const {
    const RenderOutput r = render(s, K, E, bg);
    double l = 0;
    for (std::size_t i = 0; i < r.rgb.data.size(); ++i) {
      const double d = r.rgb.data[i] - target.data[i];
      l += d * d;
    }
    for (std::size_t i = 0; i < r.depth.data.size(); ++i) l += depth_w.data[i] * r.depth.data[i];
    return l;
  }

  std::vector<double> grad(const GaussianScene& s) const {
    const RenderOutput r = render(s, K, E, bg);
    Image g_rgb(K.width, K.height, 3);
    for (std::size_t i = 0; i < g_rgb.data.size(); ++i) g_rgb.data[i] = 2 * (r.rgb.data[i] - target.data[i]);
    return render_backward(s, K, E, bg, g_rgb, depth_w);
  }
};

}  // namespace

TEST_CASE("project_gaussian on the optical axis") {
  const double f = 50, s = 0.02;
  const Intrinsics K = square_camera(64, 64, f);
  const auto sp = project_gaussian(Vec3(0, 0, 1), Vec3::Constant(s), Vec4(1, 0, 0, 0),
                                   Vec3::Ones(), 0.5, K, Extrinsics{});
  REQUIRE(sp.has_value());
  CHECK(sp->mean2d.isApprox(Vec2(K.cx, K.cy)));
  CHECK(sp->cov2d(0, 0) == doctest::Approx(f * f * s * s + 0.3));
  CHECK(sp->cov2d(1, 1) == doctest::Approx(f * f * s * s + 0.3));
  CHECK(std::abs(sp->cov2d(0, 1)) < 1e-12);
  CHECK(sp->depth == doctest::Approx(1.0));
  CHECK_FALSE(project_gaussian(Vec3(0, 0, -1), Vec3::Constant(s), Vec4(1, 0, 0, 0), Vec3::Ones(),
                               0.5, K, Extrinsics{}));
  CHECK_FALSE(project_gaussian(Vec3(100, 0, 1), Vec3::Constant(s), Vec4(1, 0, 0, 0), Vec3::Ones(),
                               0.5, K, Extrinsics{}));
}

TEST_CASE("projected covariances are positive definite") {
  std::mt19937_64 rng(101);
  for (int scene = 0; scene < 1000; ++scene) {
    const Intrinsics K = asplat::testing::random_intrinsics(rng);
    const Extrinsics E = asplat::testing::random_extrinsics(rng);
    const SplatInput in = random_splats(rng, 4);
    for (std::size_t i = 0; i < in.size(); ++i) {
      const Vec3 world = E.R * in.means[i] + E.T;
      const auto sp = project_gaussian(world, in.scales[i], in.rotations[i], in.colors[i],
                                       in.opacities[i], K, E);
      if (sp) CHECK(sp->cov2d.determinant() > 0);
    }
  }
}

TEST_CASE("render with nothing visible is pure background") {
  SplatInput in;
  in.means.emplace_back(0, 0, -5);
  in.scales.emplace_back(0.1, 0.1, 0.1);
  in.rotations.emplace_back(1, 0, 0, 0);
  in.colors.emplace_back(1, 0, 0);
  in.opacities.push_back(0.9);
  const Vec3 bg(0.2, 0.4, 0.6);
  const RenderOutput r = rasterize(in, square_camera(20, 20, 20), Extrinsics{}, bg);
  for (int y = 0; y < 20; ++y)
    for (int x = 0; x < 20; ++x) {
      CHECK(r.alpha.at(x, y) == 0.0);
      CHECK(r.depth.at(x, y) == 0.0);
      for (int c = 0; c < 3; ++c) CHECK(r.rgb.at(x, y, c) == bg[c]);
    }
}

TEST_CASE("an opaque near-delta Gaussian colors the center pixel") {
  SplatInput in;
  in.means.emplace_back(0, 0, 2);
  in.scales.emplace_back(1e-4, 1e-4, 1e-4);
  in.rotations.emplace_back(1, 0, 0, 0);
  in.colors.emplace_back(0.9, 0.1, 0.3);
  in.opacities.push_back(0.999);
  const Intrinsics K = square_camera(16, 16, 30);
  const Vec3 bg = Vec3::Zero();
  const RenderOutput r = rasterize(in, K, Extrinsics{}, bg);
  const RenderOutput o = oracle::composite(in, K, Extrinsics{}, bg);
  CHECK(r.alpha.at(8, 8) == doctest::Approx(0.99));
  CHECK(r.rgb.at(8, 8, 0) == doctest::Approx(0.99 * 0.9));
  CHECK(r.depth.at(8, 8) == doctest::Approx(2.0));
  CHECK(max_abs_diff(r.rgb, o.rgb) < 1e-12);
}

TEST_CASE("red in front of blue matches the brute-force compositor") {
  SplatInput in;
  in.means = {Vec3(0.05, 0, 3), Vec3(0, 0.03, 2)};
  in.scales = {Vec3(0.3, 0.25, 0.2), Vec3(0.2, 0.3, 0.1)};
  in.rotations = {Vec4(1, 0, 0, 0), Vec4(0.9, 0.1, 0.3, 0.2).normalized()};
  in.colors = {Vec3(0, 0, 1), Vec3(1, 0, 0)};
  in.opacities = {0.8, 0.7};
  const Intrinsics K = square_camera(48, 40, 40);
  const RenderOutput r = rasterize(in, K, Extrinsics{}, Vec3(0.5, 0.5, 0.5));
  const RenderOutput o = oracle::composite(in, K, Extrinsics{}, Vec3(0.5, 0.5, 0.5));
  CHECK(max_abs_diff(r.rgb, o.rgb) <= 1e-5);
  CHECK(max_abs_diff(r.depth, o.depth) <= 1e-5);
  CHECK(r.rgb.at(24, 20, 0) > r.rgb.at(24, 20, 2));  // red wins at the center
}

TEST_CASE("tiled forward equals the brute-force compositor") {
  std::mt19937_64 rng(202);
  for (int t = 0; t < 10; ++t) {
    const SplatInput in = random_splats(rng, 1 + static_cast<std::size_t>(uniform(rng, 0, 120)));
    const Intrinsics K = square_camera(64, 64, uniform(rng, 30, 80));
    const Vec3 bg(uniform(rng, 0, 1), uniform(rng, 0, 1), uniform(rng, 0, 1));
    const RenderOutput r = rasterize(in, K, Extrinsics{}, bg);
    const RenderOutput o = oracle::composite(in, K, Extrinsics{}, bg);
    CHECK(max_abs_diff(r.rgb, o.rgb) <= 1e-5);
    CHECK(max_abs_diff(r.depth, o.depth) <= 1e-5);
    CHECK(max_abs_diff(r.alpha, o.alpha) <= 1e-5);
    for (double a : r.alpha.data) CHECK((a >= 0 && a <= 1));
  }
}

TEST_CASE("adding a Gaussian never lowers accumulated alpha") {
  std::mt19937_64 rng(303);
  const Intrinsics K = square_camera(32, 32, 30);
  for (int t = 0; t < 20; ++t) {
    SplatInput in = random_splats(rng, 30);
    const RenderOutput before = rasterize(in, K, Extrinsics{}, Vec3::Zero());
    const SplatInput extra = random_splats(rng, 1);
    in.means.push_back(extra.means[0]);
    in.scales.push_back(extra.scales[0]);
    in.rotations.push_back(extra.rotations[0]);
    in.colors.push_back(extra.colors[0]);
    in.opacities.push_back(extra.opacities[0]);
    const RenderOutput after = rasterize(in, K, Extrinsics{}, Vec3::Zero());
    for (std::size_t i = 0; i < before.alpha.data.size(); ++i) {
      // Early termination can shift the stopping point by < min transmittance.
      const bool saturated = before.alpha.data[i] > 1 - 1e-4 || after.alpha.data[i] > 1 - 1e-4;
      CHECK(after.alpha.data[i] >= before.alpha.data[i] - (saturated ? 1e-4 : 0.0));
    }
  }
}

TEST_CASE("render_backward: zero upstream gradient gives zero parameter gradients") {
  std::mt19937_64 rng(404);
  const GaussianScene s = fd_scene(rng, 3);
  FdProblem p(rng);
  const auto g = render_backward(s, p.K, p.E, p.bg, Image(40, 32, 3), Image(40, 32, 1));
  for (double v : g) CHECK(v == 0.0);
  CHECK_THROWS_AS(render_backward(s, p.K, p.E, p.bg, Image(10, 10, 3), Image()), Error);
}

TEST_CASE("single Gaussian gradients match central differences") {
  std::mt19937_64 rng(505);
  GaussianScene s = fd_scene(rng, 1);
  s.gaussians_per_anchor = 1;
  s.raw.resize(raw::kCount);
  s.anchors[0] = Vec3(0.05, -0.03, 0.1);
  double* r = s.raw_of(0);
  const double init[raw::kCount] = {0.3, -0.2, 0.1, 0.4, std::log(0.12), std::log(0.08), std::log(0.1),
                                    0.9, 0.2, -0.3, 0.25, 0.4, -0.6, 0.8};
  std::copy(std::begin(init), std::end(init), r);
  FdProblem p(rng);
  const auto g = p.grad(s);
  const double h = 1e-4;
  for (int k = 0; k < raw::kCount; ++k) {
    GaussianScene plus = s, minus = s;
    plus.raw[k] += h;
    minus.raw[k] -= h;
    const double fd = (p.loss(plus) - p.loss(minus)) / (2 * h);
    const double rel = std::abs(g[k] - fd) / std::max(std::abs(g[k]), 1e-6);
    INFO("param " << k << " analytic " << g[k] << " fd " << fd);
    CHECK(rel <= 1e-3);
  }
}

TEST_CASE("gradients of a splat outside the guard band match central differences") {
  std::mt19937_64 rng(507);
  GaussianScene s = fd_scene(rng, 1);
  s.gaussians_per_anchor = 1;
  s.raw.resize(raw::kCount);
  // x/z sits just past the band edge 1.3 * 20 / 40 = 0.65 while the
  // footprint still reaches over the right image border.
  s.anchors[0] = Vec3(2.32, 0.1, 0.5);
  double* r = s.raw_of(0);
  const double init[raw::kCount] = {0.2, -0.4, 0.3, 0.6, std::log(0.24), std::log(0.2), std::log(0.22),
                                    0.8, 0.3, -0.2, 0.4, 0.5, -0.4, 0.7};
  std::copy(std::begin(init), std::end(init), r);
  FdProblem p(rng);
  const Vec3 mu = s.center(0);
  REQUIRE(mu.x() / (mu.z() + 3.0) > 1.3 * 20.0 / 40.0);
  REQUIRE(render(s, p.K, p.E, p.bg).alpha.data != Image(40, 32, 1).data);
  const auto g = p.grad(s);
  const double h = 1e-5;
  for (int k = 0; k < raw::kCount; ++k) {
    GaussianScene plus = s, minus = s;
    plus.raw[k] += h;
    minus.raw[k] -= h;
    const double fd = (p.loss(plus) - p.loss(minus)) / (2 * h);
    INFO("param " << k << " analytic " << g[k] << " fd " << fd);
    CHECK(std::abs(g[k] - fd) <= 1e-3 * std::max(std::abs(fd), 1e-3));
  }
}

TEST_CASE("gradients match central differences across many random parameters") {
  std::mt19937_64 rng(606);
  const GaussianScene s = fd_scene(rng, 6);
  FdProblem p(rng);
  const auto g = p.grad(s);
  const double h = 1e-4;
  int checked = 0;
  for (int trial = 0; trial < 120; ++trial) {
    const std::size_t idx = static_cast<std::size_t>(uniform(rng, 0, s.raw.size()));
    GaussianScene plus = s, minus = s;
    plus.raw[idx] += h;
    minus.raw[idx] -= h;
    const double fd = (p.loss(plus) - p.loss(minus)) / (2 * h);
    const double rel = std::abs(g[idx] - fd) / std::max(std::abs(g[idx]), 1e-6);
    INFO("raw index " << idx << " analytic " << g[idx] << " fd " << fd);
    CHECK(rel <= 1e-3);
    ++checked;
  }
  CHECK(checked >= 100);
}

TEST_CASE("a fully occluded Gaussian receives no gradient") {
  SplatInput in;
  for (int i = 0; i < 3; ++i) {
    in.means.emplace_back(0, 0, 1.0 + 0.1 * i);
    in.scales.emplace_back(2.0, 2.0, 0.01);
    in.rotations.emplace_back(1, 0, 0, 0);
    in.colors.emplace_back(0.3, 0.3, 0.3);
    in.opacities.push_back(1.0);
  }
  in.means.emplace_back(0, 0, 3.0);
  in.scales.emplace_back(0.05, 0.05, 0.05);
  in.rotations.emplace_back(1, 0, 0, 0);
  in.colors.emplace_back(1, 0, 0);
  in.opacities.push_back(0.9);
  const Intrinsics K = square_camera(24, 24, 20);
  Image g_rgb(24, 24, 3, 1.0), g_d(24, 24, 1, 1.0);
  const SplatGrads g = rasterize_backward(in, K, Extrinsics{}, Vec3::Zero(), g_rgb, g_d);
  CHECK(g.means[3].isZero());
  CHECK(g.scales[3].isZero());
  CHECK(g.colors[3].isZero());
  CHECK(g.opacities[3] == 0.0);
  CHECK_FALSE(g.colors[0].isZero());
}

TEST_CASE("render and backward are bit-identical across thread counts") {
  std::mt19937_64 rng(707);
  const GaussianScene s = fd_scene(rng, 40);
  FdProblem p(rng);
  set_thread_count(1);
  const RenderOutput a = render(s, p.K, p.E, p.bg);
  const auto ga = p.grad(s);
  set_thread_count(4);
  const RenderOutput b = render(s, p.K, p.E, p.bg);
  const auto gb = p.grad(s);
  set_thread_count(1);
  CHECK(std::memcmp(a.rgb.data.data(), b.rgb.data.data(), a.rgb.data.size() * 8) == 0);
  CHECK(std::memcmp(a.depth.data.data(), b.depth.data.data(), a.depth.data.size() * 8) == 0);
  CHECK(std::memcmp(ga.data(), gb.data(), ga.size() * 8) == 0);
}

TEST_CASE("tile statistics and non-finite attributes") {
  std::mt19937_64 rng(808);
  SplatInput in = random_splats(rng, 20);
  TileStats stats;
  const Intrinsics K = square_camera(40, 20, 30);
  rasterize(in, K, Extrinsics{}, Vec3::Zero(), {}, &stats);
  CHECK(stats.tiles_x == 3);
  CHECK(stats.tiles_y == 2);
  CHECK(stats.splat_counts.size() == 6);
  in.opacities[7] = std::nan("");
  try {
    rasterize(in, K, Extrinsics{}, Vec3::Zero());
    FAIL("expected numeric error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kNumeric);
    CHECK(std::string(e.what()).find("gaussian 7") != std::string::npos);
  }
}
