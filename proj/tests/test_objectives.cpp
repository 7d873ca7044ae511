#include <doctest.h>

#include <cmath>
#include <random>

#include "asplat/error.hpp"
#include "asplat/objectives.hpp"
#include "asplat/render_op.hpp"
#include "test_util.hpp"

using namespace asplat;
using asplat::testing::uniform;

namespace {

Image constant(int w, int h, int c, double v) { return Image(w, h, c, v); }

Image random_image(std::mt19937_64& rng, int w, int h, int c) {
  Image img(w, h, c);
  for (auto& v : img.data) v = uniform(rng, 0, 1);
  return img;
}

CameraView small_view(std::mt19937_64& rng, double z) {
  CameraView v;
  v.name = "v";
  v.intrinsics.width = 24;
  v.intrinsics.height = 16;
  v.intrinsics.fx = v.intrinsics.fy = 24;
  v.intrinsics.cx = 12;
  v.intrinsics.cy = 8;
  v.extrinsics.T = Vec3(uniform(rng, -0.2, 0.2), uniform(rng, -0.2, 0.2), -z);
  v.image = random_image(rng, 24, 16, 3);
  v.depth = Image(24, 16, 1, z);
  return v;
}

GaussianScene small_scene(std::mt19937_64& rng, int anchors) {
  std::vector<Vec3> a;
  for (int i = 0; i < anchors; ++i)
    a.emplace_back(uniform(rng, -0.5, 0.5), uniform(rng, -0.4, 0.4), uniform(rng, -0.2, 0.2));
  GaussianScene s = make_scene(a, SceneNormalization{}, 2);
  for (std::size_t j = 0; j < s.size(); ++j) {
    double* r = s.raw_of(j);
    for (int i = 0; i < 3; ++i) r[raw::kOffset + i] = uniform(rng, -1, 1);
    r[raw::kOpacity] = uniform(rng, 0.5, 3);
    for (int i = 0; i < 3; ++i) r[raw::kScale + i] = std::log(uniform(rng, 0.1, 0.3));
    for (int i = 0; i < 4; ++i) r[raw::kRot + i] = uniform(rng, -1, 1);
    for (int i = 0; i < 3; ++i) r[raw::kSh + i] = uniform(rng, -1, 1);
  }
  return s;
}

}  // namespace

TEST_CASE("ssim examples") {
  std::mt19937_64 rng(1);
  const Image x = random_image(rng, 20, 20, 3);
  CHECK(ssim(x, x) == doctest::Approx(1.0).epsilon(1e-12));
  const double c1 = 1e-4;
  CHECK(std::abs(ssim(constant(16, 16, 3, 0), constant(16, 16, 3, 1)) - c1 / (1 + c1)) <= 1e-6);
  const Image y = random_image(rng, 20, 20, 3);
  CHECK(ssim(x, y) == doctest::Approx(ssim(y, x)));
  CHECK_THROWS_AS(ssim(x, constant(10, 20, 3, 0)), Error);
}

TEST_CASE("render_loss examples") {
  std::mt19937_64 rng(2);
  const Image x = random_image(rng, 16, 16, 3);
  CHECK(render_loss(x, x) == doctest::Approx(0.0).epsilon(1e-12));
  const double a = 0.4, b = 0.5, c1 = 1e-4;
  const double s = (2 * a * b + c1) / (a * a + b * b + c1);
  CHECK(std::abs(render_loss(constant(16, 16, 3, a), constant(16, 16, 3, b)) - (0.1 + 0.2 * (1 - s))) <= 1e-6);
}

TEST_CASE("render_loss gradient matches central differences") {
  std::mt19937_64 rng(3);
  ad::Parameter p;
  p.shape = {12, 12, 3};
  p.value.resize(12 * 12 * 3);
  for (auto& v : p.value) v = uniform(rng, 0.1, 0.9);
  const ad::Tensor gt = to_tensor(random_image(rng, 12, 12, 3));
  auto eval = [&]() {
    ad::Tape t;
    return render_loss(t.param(p), gt).item();
  };
  p.grad.assign(p.value.size(), 0);
  {
    ad::Tape t;
    t.backward(render_loss(t.param(p), gt));
  }
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t i = static_cast<std::size_t>(uniform(rng, 0, p.value.size()));
    const double keep = p.value[i], h = 1e-5;
    p.value[i] = keep + h;
    const double fp = eval();
    p.value[i] = keep - h;
    const double fm = eval();
    p.value[i] = keep;
    const double fd = (fp - fm) / (2 * h);
    CHECK(std::abs(fd - p.grad[i]) <= 1e-3 * std::max(std::abs(fd), 1e-3));
  }
}

TEST_CASE("regularizer examples") {
  CHECK(opacity_reg({1.0, 1.0}) == 0.0);
  CHECK(opacity_reg({0.5, 0.5, 0.5}) == 0.5);
  CHECK(opacity_reg({0.2, 0.8}) == doctest::Approx(0.5));
  CHECK(scale_reg({Vec3::Constant(0.1)}) == doctest::Approx(1e-3));
  CHECK(scale_reg({Vec3::Ones()}) == 1.0);
  CHECK(scale_reg({Vec3::Ones(), Vec3::Constant(0.5)}) == doctest::Approx(0.5625));
}

TEST_CASE("regularizer gradients point toward opaque and small") {
  std::mt19937_64 rng(4);
  const GaussianScene s = small_scene(rng, 3);
  ad::Parameter p;
  p.shape = {static_cast<int>(s.size()), raw::kCount};
  p.value = s.raw;
  p.grad.assign(p.value.size(), 0);
  {
    ad::Tape t;
    ad::Var r = t.param(p);
    t.backward(ad::add(opacity_reg(r), scale_reg(r, s.scale_limits)));
  }
  for (std::size_t j = 0; j < s.size(); ++j) {
    CHECK(p.grad[j * raw::kCount + raw::kOpacity] < 0);
    for (int i = 0; i < 3; ++i) CHECK(p.grad[j * raw::kCount + raw::kScale + i] > 0);
  }
}

TEST_CASE("psnr examples") {
  std::mt19937_64 rng(5);
  const Image x = random_image(rng, 8, 8, 3);
  CHECK(std::isinf(psnr(x, x)));
  CHECK(std::abs(psnr(constant(8, 8, 3, 0.25), constant(8, 8, 3, 0.75)) - 6.0206) <= 1e-4);
  CHECK(psnr(constant(4, 4, 1, 0), constant(4, 4, 1, 0.1)) >
        psnr(constant(4, 4, 1, 0), constant(4, 4, 1, 0.2)));
}

TEST_CASE("depth metric examples") {
  Image p(2, 1, 1), g(2, 1, 1);
  p.data = {1, 2};
  g.data = {2, 2};
  CHECK(std::abs(absrel(p, g) - 0.25) <= 1e-6);
  CHECK(absrel(g, g) == 0.0);
  CHECK(delta1(g, g) == 1.0);
  p.data = {1.0, 1.3};
  g.data = {1, 1};
  CHECK(std::abs(delta1(p, g) - 0.5) <= 1e-6);
  CHECK(delta1(p, g) == delta1(g, p));
  try {
    absrel(p, Image(2, 1, 1));
    FAIL("expected undefined metric");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kUndefinedMetric);
  }
  CHECK_THROWS_AS(delta1(p, g, {0, 0}), Error);
}

TEST_CASE("total_loss breakdown and linearity") {
  std::mt19937_64 rng(6);
  const GaussianScene s = small_scene(rng, 4);
  const std::vector<CameraView> views{small_view(rng, 2.5), small_view(rng, 3.0)};
  ad::Parameter p;
  p.shape = {static_cast<int>(s.size()), raw::kCount};
  p.value = s.raw;
  LossWeights w;
  ad::Tape t1;
  const TotalLoss a = total_loss(t1.param(p), s, views, w, Vec3::Zero());
  CHECK(std::abs(a.terms.render + a.terms.depth + a.terms.opacity + a.terms.scale - a.terms.total) <= 1e-12);
  CHECK(a.terms.depth > 0);
  for (double v : {a.terms.render, a.terms.depth, a.terms.opacity, a.terms.scale}) CHECK(v >= 0);
  w.depth *= 2;
  ad::Tape t2;
  const TotalLoss b = total_loss(t2.param(p), s, views, w, Vec3::Zero());
  CHECK(b.terms.depth == doctest::Approx(2 * a.terms.depth).epsilon(1e-12));
  CHECK(b.terms.render == a.terms.render);
  CHECK(b.terms.opacity == a.terms.opacity);
  CHECK(b.terms.scale == a.terms.scale);
}

TEST_CASE("total_loss gradient matches central differences") {
  std::mt19937_64 rng(7);
  const GaussianScene s = small_scene(rng, 3);
  const std::vector<CameraView> views{small_view(rng, 2.5)};
  ad::Parameter p;
  p.shape = {static_cast<int>(s.size()), raw::kCount};
  p.value = s.raw;
  p.grad.assign(p.value.size(), 0);
  {
    ad::Tape t;
    t.backward(total_loss(t.param(p), s, views, {}, Vec3::Zero()).value);
  }
  auto eval = [&]() {
    ad::Tape t;
    return total_loss(t.param(p), s, views, {}, Vec3::Zero()).terms.total;
  };
  int checked = 0, passed = 0;
  for (std::size_t i = 0; i < p.value.size(); ++i) {
    const double keep = p.value[i], h = 1e-5;
    p.value[i] = keep + h;
    const double fp = eval();
    p.value[i] = keep - h;
    const double fm = eval();
    p.value[i] = keep;
    const double fd = (fp - fm) / (2 * h);
    ++checked;
    const double rel = std::abs(fd - p.grad[i]) / std::max(std::abs(fd), 1e-3);
    INFO("raw " << i << " fd " << fd << " analytic " << p.grad[i]);
    CHECK(rel <= 2e-3);
    passed += rel <= 2e-3;
  }
  CHECK(passed == checked);
}

TEST_CASE("metrics report json and averaging") {
  std::vector<ViewMetrics> v{{"a", 20.0, 0.8, 0.1, 0.9}, {"b", 24.0, 0.6, 0.3, 0.7}};
  const MetricsReport r = summarize(v, 64, 1.5);
  CHECK(r.psnr == 22.0);
  CHECK(std::abs(r.ssim - 0.7) <= 1e-12);
  CHECK(std::abs(r.absrel - 0.2) <= 1e-12);
  CHECK(std::abs(r.delta1 - 0.8) <= 1e-12);
  const MetricsReport back = MetricsReport::from_json(r.to_json());
  CHECK(back.psnr == r.psnr);
  CHECK(back.num_gs == 64);
  CHECK(back.views.size() == 2);
  std::vector<ViewMetrics> same{{"a", std::numeric_limits<double>::infinity(), 1, 0, 1}};
  const MetricsReport inf = summarize(same, 4, 0);
  CHECK(inf.to_json().find("\"inf\"") != std::string::npos);
  CHECK(std::isinf(MetricsReport::from_json(inf.to_json()).psnr));
  CHECK(inf.finite());
  CHECK_THROWS_AS(summarize({}, 1, 0), Error);
}
