#include <doctest.h>

#include <algorithm>
#include <random>

#include "asplat/anchor_sampler.hpp"
#include "asplat/error.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace asplat;
using asplat::testing::uniform;

namespace {

std::vector<Vec3> random_cloud(std::mt19937_64& rng, std::size_t n, double lo = 0, double hi = 1) {
  std::vector<Vec3> pts(n);
  for (auto& p : pts) p = Vec3(uniform(rng, lo, hi), uniform(rng, lo, hi), uniform(rng, lo, hi));
  return pts;
}

CameraView flat_view(int w, int h, double depth) {
  CameraView v;
  v.intrinsics.fx = v.intrinsics.fy = 10;
  v.intrinsics.cx = w / 2.0;
  v.intrinsics.cy = h / 2.0;
  v.intrinsics.width = w;
  v.intrinsics.height = h;
  v.image = Image(w, h, 3, 0.5);
  v.depth = Image(w, h, 1, depth);
  return v;
}

}  // namespace

TEST_CASE("robust_bounds on a unit grid with no trimming") {
  std::vector<Vec3> grid;
  for (int x = 0; x <= 4; ++x)
    for (int y = 0; y <= 4; ++y)
      for (int z = 0; z <= 4; ++z) grid.emplace_back(x / 4.0, y / 4.0, z / 4.0);
  const ClipBounds b = robust_bounds(grid, 0.0, 1.0, 0.0);
  CHECK(b.min.isApprox(Vec3(0, 0, 0)));
  CHECK(b.max.isApprox(Vec3(1, 1, 1)));
}

TEST_CASE("robust_bounds excludes a single flyer") {
  std::mt19937_64 rng(2);
  auto pts = random_cloud(rng, 99);
  pts.emplace_back(100, 0, 0);
  const ClipBounds b = robust_bounds(pts, 0.01, 0.99, 0.05);
  // Nearest-rank oracle: rank ceil(0.99 * 100) = 99 is the largest non-flyer x.
  std::vector<double> xs;
  for (const auto& p : pts) xs.push_back(p.x());
  std::sort(xs.begin(), xs.end());
  const double extent = xs[98] - xs[0];
  CHECK(b.max.x() == doctest::Approx(xs[98] + 0.05 * extent));
  CHECK(b.max.x() < 100);
  const auto kept = clip_points(pts, b);
  CHECK(kept.size() == 99);
}

TEST_CASE("robust_bounds with identical points is a 1e-6 box") {
  std::vector<Vec3> pts(5, Vec3(1, 2, 3));
  const ClipBounds b = robust_bounds(pts);
  CHECK((b.max - Vec3(1, 2, 3)).cwiseAbs().maxCoeff() == doctest::Approx(1e-6));
  CHECK((Vec3(1, 2, 3) - b.min).cwiseAbs().maxCoeff() == doctest::Approx(1e-6));
  CHECK_THROWS_AS(robust_bounds({Vec3::Zero()}), Error);
}

TEST_CASE("clip_points matches a brute-force box predicate and is idempotent") {
  std::mt19937_64 rng(4);
  const auto pts = random_cloud(rng, 500, -2, 2);
  const ClipBounds b{Vec3(-1, -1.5, -0.5), Vec3(1, 0.5, 1.5)};
  const auto kept = clip_points(pts, b);
  std::vector<Vec3> expected;
  for (const auto& p : pts) {
    bool in = true;
    for (int a = 0; a < 3; ++a) in = in && p[a] >= b.min[a] && p[a] <= b.max[a];
    if (in) expected.push_back(p);
  }
  REQUIRE(kept.size() == expected.size());
  for (std::size_t i = 0; i < kept.size(); ++i) CHECK(kept[i] == expected[i]);
  CHECK(clip_points(kept, b) == kept);
  CHECK(clip_points(pts, ClipBounds{Vec3(-3, -3, -3), Vec3(3, 3, 3)}) == pts);

  try {
    clip_points(pts, ClipBounds{Vec3(5, 5, 5), Vec3(6, 6, 6)});
    FAIL("expected empty-anchor error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kEmptyAnchors);
  }
}

TEST_CASE("voxel_budget counts occupied voxels") {
  const std::vector<Vec3> pts{Vec3(0.1, 0, 0), Vec3(0.2, 0, 0), Vec3(1.5, 0, 0)};
  CHECK(voxel_budget(pts, 1.0, 100, Vec3::Zero()) == 2);
  CHECK(voxel_budget(pts, 1.0, 1, Vec3::Zero()) == 1);
  CHECK(voxel_budget({Vec3(3, 3, 3)}, 0.5, 10, Vec3::Zero()) == 1);

  std::mt19937_64 rng(8);
  for (int t = 0; t < 20; ++t) {
    auto cloud = random_cloud(rng, 300, -1, 1);
    const double voxel = uniform(rng, 0.05, 0.5);
    const Vec3 origin(-1, -1, -1);
    const std::size_t expected = oracle::occupied_voxels(cloud, voxel, origin);
    CHECK(voxel_budget(cloud, voxel, 1 << 20, origin) == expected);
    std::shuffle(cloud.begin(), cloud.end(), rng);
    CHECK(voxel_budget(cloud, voxel, 1 << 20, origin) == expected);
  }
}

TEST_CASE("fps degenerate budgets") {
  std::mt19937_64 rng(1);
  const auto pts = random_cloud(rng, 20);
  const auto all = fps(pts, 20, 7);
  CHECK(all.front() == 7);
  auto sorted = all;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < 20; ++i) CHECK(sorted[i] == i);
  CHECK(fps(pts, 1, 3) == std::vector<std::size_t>{3});
  try {
    fps(pts, 21, 0);
    FAIL("expected invalid-budget error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kInvalidBudget);
  }
}

TEST_CASE("fps on collinear points picks the ends then the middle") {
  std::vector<Vec3> line;
  for (int x = 0; x <= 10; ++x) line.emplace_back(x, 0, 0);
  CHECK(fps(line, 3, 0) == std::vector<std::size_t>{0, 10, 5});
  CHECK(oracle::fps(line, 3, 0) == std::vector<std::size_t>{0, 10, 5});
}

TEST_CASE("fps matches brute force and its min-distance sequence never increases") {
  std::mt19937_64 rng(12);
  for (int t = 0; t < 30; ++t) {
    const std::size_t n = 2 + static_cast<std::size_t>(uniform(rng, 0, 200));
    const auto pts = random_cloud(rng, n);
    const std::size_t k = 1 + static_cast<std::size_t>(uniform(rng, 0, std::min<double>(n, 32)));
    const std::size_t seed = static_cast<std::size_t>(uniform(rng, 0, n));
    const auto got = fps(pts, k, seed);
    CHECK(got == oracle::fps(pts, k, seed));
    CHECK(got == fps(pts, k, seed));
    double prev = std::numeric_limits<double>::infinity();
    for (std::size_t i = 1; i < got.size(); ++i) {
      double d = std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < i; ++j) d = std::min(d, (pts[got[i]] - pts[got[j]]).squaredNorm());
      CHECK(d <= prev);
      prev = d;
    }
  }
}

TEST_CASE("build_anchors on a tiny view keeps every point") {
  CameraView v = flat_view(2, 2, 1.0);
  AnchorConfig cfg;
  cfg.voxel_size = 1e-3;
  const AnchorSet a = build_anchors({v}, cfg);
  CHECK(a.source_count == 4);
  REQUIRE(a.positions.size() == 4);
  std::vector<Vec3> world;
  for (const auto& p : a.positions) world.push_back(a.normalization.denormalize(p));
  const auto expected = backproject_view(v, 1);
  for (const auto& e : expected) {
    bool found = false;
    for (const auto& w : world) found = found || (w - e).norm() < 1e-12;
    CHECK(found);
  }
  for (const auto& p : a.positions) CHECK(p.cwiseAbs().maxCoeff() <= 1.0);
}

TEST_CASE("build_anchors with duplicated views yields the same anchors") {
  CameraView v = flat_view(24, 18, 2.0);
  for (int y = 0; y < 18; ++y)
    for (int x = 0; x < 24; ++x) v.depth.at(x, y) = 2.0 + 0.05 * x + 0.02 * y;
  AnchorConfig cfg;
  cfg.lo_pct = 0.0;
  cfg.hi_pct = 1.0;
  cfg.cap = 40;
  const AnchorSet one = build_anchors({v}, cfg);
  const AnchorSet two = build_anchors({v, v}, cfg);
  CHECK(one.occupied_voxels == two.occupied_voxels);
  CHECK(two.source_count == 2 * one.source_count);
  REQUIRE(one.positions.size() == two.positions.size());
  for (std::size_t i = 0; i < one.positions.size(); ++i)
    CHECK((one.positions[i] - two.positions[i]).norm() < 1e-12);
}

TEST_CASE("build_anchors is deterministic and reports empty depth") {
  CameraView v = flat_view(16, 12, 3.0);
  AnchorConfig cfg;
  const AnchorSet a = build_anchors({v}, cfg);
  const AnchorSet b = build_anchors({v}, cfg);
  CHECK(a.positions == b.positions);
  CameraView empty = flat_view(4, 4, 0.0);
  try {
    build_anchors({empty}, cfg);
    FAIL("expected empty-anchor error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kEmptyAnchors);
  }
}
