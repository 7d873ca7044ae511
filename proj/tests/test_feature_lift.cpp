#include <doctest.h>

#include <random>

#include "asplat/feature_lift.hpp"
#include "test_util.hpp"

using namespace asplat;
using asplat::testing::central_difference;
using asplat::testing::grad_close;
using asplat::testing::uniform;

namespace {

CameraView flat_view(int size, double depth, std::uint64_t seed, const Vec3& center = Vec3::Zero()) {
  std::mt19937_64 rng(seed);
  CameraView v;
  v.name = "v" + std::to_string(seed);
  v.intrinsics = {static_cast<double>(size), static_cast<double>(size), size / 2.0, size / 2.0, size, size};
  v.extrinsics.T = center;
  v.image = Image(size, size, 3);
  for (auto& x : v.image.data) x = uniform(rng, 0, 1);
  v.depth = Image(size, size, 1, depth);
  return v;
}

// Feature map constant per channel, as a leaf on `tape`.
ad::Var constant_map(ad::Tape& tape, int h, int w, const std::vector<double>& per_channel) {
  const int C = static_cast<int>(per_channel.size());
  ad::Tensor t({h, w, C});
  for (std::size_t i = 0; i < t.data.size(); ++i) t.data[i] = per_channel[i % C];
  return tape.constant(t);
}

}  // namespace

TEST_CASE("stack_inputs channel layout and masking") {
  CameraView v = flat_view(8, 3.0, 1, Vec3(0.5, 0, 0));
  SceneNormalization norm;
  norm.center = Vec3(0.5, 0, 0);
  norm.half_extent = 2.0;
  const ad::Tensor t = stack_inputs(v, norm);
  REQUIRE(t.shape == std::vector<int>{8, 8, kInputChannels});
  Extrinsics en = v.extrinsics;
  en.T = norm.normalize(v.extrinsics.T);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) {
      const double* px = t.data.data() + (y * 8 + x) * kInputChannels;
      for (int c = 0; c < 3; ++c) CHECK(px[c] == v.image.at(x, y, c));
      CHECK(px[3] == doctest::Approx(1.5));
      const Vec6 r = ray_embedding(x, y, v.intrinsics, en);
      for (int c = 0; c < 6; ++c) CHECK(px[4 + c] == r[c]);
      CHECK(std::abs(r.head<3>().dot(r.tail<3>())) < 1e-12);
    }
  const ad::Tensor masked = stack_inputs(v, norm, {true, false, false});
  CHECK(masked.shape[2] == kInputChannels);
  for (std::size_t i = 0; i < masked.data.size(); ++i)
    if (i % kInputChannels >= 3) CHECK(masked.data[i] == 0.0);
}

TEST_CASE("encoder output shape, zero weights, and finite differences") {
  std::mt19937_64 rng(2);
  nn::ParamSet enc;
  init_encoder(enc, 5, rng);
  const CameraView v = flat_view(16, 2.0, 3);
  const ad::Tensor in = stack_inputs(v, {});
  {
    ad::Tape tape;
    CHECK(encode_view(tape, in, enc).shape() == std::vector<int>{4, 4, 5});
  }
  nn::ParamSet zero;
  init_encoder(zero, 5, rng);
  for (auto* p : zero.all()) nn::fill(*p, 0.0);
  {
    ad::Tape tape;
    for (double x : encode_view(tape, in, zero).value().data) CHECK(x == 0.0);
  }

  const CameraView small = flat_view(8, 2.0, 4);
  const ad::Tensor s_in = stack_inputs(small, {});
  ad::Tensor probe({2, 2, 5});
  for (auto& x : probe.data) x = uniform(rng, -1, 1);
  auto loss = [&] {
    ad::Tape tape;
    ad::Var f = encode_view(tape, s_in, enc);
    return ad::sum(ad::mul(f, tape.constant(probe))).item();
  };
  enc.zero_grad();
  {
    ad::Tape tape;
    ad::Var f = encode_view(tape, s_in, enc);
    tape.backward(ad::sum(ad::mul(f, tape.constant(probe))));
  }
  for (auto* p : enc.all())
    for (std::size_t i = 0; i < p->value.size(); i += 7) {
      const double fd = central_difference(*p, i, loss, 1e-5);
      INFO(p->name << "[" << i << "] " << p->grad[i] << " vs " << fd);
      CHECK(grad_close(p->grad[i], fd, 1e-3));
    }
}

TEST_CASE("visibility: on-surface, behind, occluded, off-image") {
  const CameraView v = flat_view(16, 2.0, 5);
  CHECK(visibility(Vec3(0, 0, 2), v));
  CHECK(visibility(Vec3(0.1, -0.1, 2.05), v));
  CHECK_FALSE(visibility(Vec3(0, 0, -2), v));
  CHECK_FALSE(visibility(Vec3(0, 0, 3), v));   // hidden behind the depth surface
  CHECK_FALSE(visibility(Vec3(50, 0, 2), v));  // outside the image
  CameraView holes = v;
  holes.depth = Image(16, 16, 1, 0.0);
  CHECK_FALSE(visibility(Vec3(0, 0, 2), holes));
}

TEST_CASE("aggregate pooling modes on the 1 / 3 example") {
  const CameraView a = flat_view(16, 2.0, 6), b = flat_view(16, 2.0, 7);
  const std::vector<Vec3> anchors{Vec3(0, 0, 2), Vec3(0, 0, -5)};
  auto run = [&](Pooling mode, bool swap) {
    ad::Tape tape;
    std::vector<ad::Var> maps{constant_map(tape, 4, 4, {1.0, -2.0}), constant_map(tape, 4, 4, {3.0, -1.0})};
    std::vector<CameraView> views{a, b};
    if (swap) {
      std::swap(maps[0], maps[1]);
      std::swap(views[0], views[1]);
    }
    const AnchorFeatures f = aggregate(anchors, maps, views, mode);
    CHECK(f.counts == std::vector<int>{2, 0});
    // Invisible anchors get zero features.
    CHECK(f.features.value().data[2] == 0.0);
    CHECK(f.features.value().data[3] == 0.0);
    return std::vector<double>{f.features.value().data[0], f.features.value().data[1]};
  };
  CHECK(run(Pooling::kAverage, false) == std::vector<double>{2.0, -1.5});
  CHECK(run(Pooling::kMax, false) == std::vector<double>{3.0, -1.0});
  CHECK(run(Pooling::kFifo, false) == std::vector<double>{1.0, -2.0});
  // avg and max ignore view order; fifo follows it.
  CHECK(run(Pooling::kAverage, true) == run(Pooling::kAverage, false));
  CHECK(run(Pooling::kMax, true) == run(Pooling::kMax, false));
  CHECK(run(Pooling::kFifo, true) == std::vector<double>{3.0, -1.0});
}

TEST_CASE("aggregate is 1-Lipschitz for avg and max, and its gradient matches finite differences") {
  std::mt19937_64 rng(8);
  const CameraView a = flat_view(16, 2.0, 9), b = flat_view(16, 2.0, 10, Vec3(0.2, 0, 0));
  std::vector<Vec3> anchors;
  for (int i = 0; i < 12; ++i) anchors.push_back(Vec3(uniform(rng, -0.8, 0.8), uniform(rng, -0.8, 0.8), 2.0));
  std::vector<ad::Parameter> maps(2);
  for (auto& m : maps) {
    m.shape = {4, 4, 3};
    m.value.resize(48);
    m.grad.assign(48, 0.0);
    for (auto& x : m.value) x = uniform(rng, -1, 1);
  }
  ad::Tensor probe({12, 3});
  for (auto& x : probe.data) x = uniform(rng, -1, 1);
  for (Pooling mode : {Pooling::kAverage, Pooling::kMax, Pooling::kFifo}) {
    auto loss = [&] {
      ad::Tape tape;
      const auto f = aggregate(anchors, {tape.param(maps[0]), tape.param(maps[1])}, {a, b}, mode);
      return ad::sum(ad::mul(f.features, tape.constant(probe))).item();
    };
    for (auto& m : maps) std::fill(m.grad.begin(), m.grad.end(), 0.0);
    {
      ad::Tape tape;
      const auto f = aggregate(anchors, {tape.param(maps[0]), tape.param(maps[1])}, {a, b}, mode);
      tape.backward(ad::sum(ad::mul(f.features, tape.constant(probe))));
    }
    for (auto& m : maps)
      for (std::size_t i = 0; i < m.value.size(); ++i) {
        const double fd = central_difference(m, i, loss, 1e-6);
        CHECK(grad_close(m.grad[i], fd, 1e-3));
      }
    if (mode == Pooling::kFifo) continue;
    // Perturbing inputs by at most e moves each output by at most e.
    auto features = [&](double shift) {
      ad::Tape tape;
      std::vector<ad::Var> vars;
      for (auto& m : maps) {
        ad::Tensor t(m.shape, m.value);
        for (std::size_t i = 0; i < t.data.size(); ++i) t.data[i] += shift * std::sin(3.0 * i);
        vars.push_back(tape.constant(t));
      }
      return aggregate(anchors, vars, {a, b}, mode).features.value().data;
    };
    const auto f0 = features(0), f1 = features(0.01);
    for (std::size_t i = 0; i < f0.size(); ++i) CHECK(std::abs(f1[i] - f0[i]) <= 0.01 + 1e-15);
  }
}

TEST_CASE("pooling names parse and print") {
  for (Pooling p : {Pooling::kAverage, Pooling::kMax, Pooling::kFifo}) CHECK(parse_pooling(to_string(p)) == p);
  CHECK(testing::code_of([] { parse_pooling("median"); }) == ErrorCode::kConfig);
}
