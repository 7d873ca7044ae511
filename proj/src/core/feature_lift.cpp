#include "asplat/feature_lift.hpp"

#include <cmath>

#include "asplat/error.hpp"
#include "asplat/parallel.hpp"

namespace asplat {

Pooling parse_pooling(const std::string& s) {
  if (s == "avg" || s == "average") return Pooling::kAverage;
  if (s == "max") return Pooling::kMax;
  if (s == "fifo") return Pooling::kFifo;
  fail(ErrorCode::kConfig, "unknown pooling mode '" + s + "' (expected avg, max or fifo)");
}

std::string to_string(Pooling p) {
  switch (p) {
    case Pooling::kAverage: return "avg";
    case Pooling::kMax: return "max";
    case Pooling::kFifo: return "fifo";
  }
  return "avg";
}

ad::Tensor stack_inputs(const CameraView& view, const SceneNormalization& norm, const InputMask& mask) {
  const Intrinsics& K = view.intrinsics;
  ad::Tensor out({K.height, K.width, kInputChannels});
  Extrinsics normalized = view.extrinsics;
  normalized.T = norm.normalize(view.extrinsics.T);
  for (int y = 0; y < K.height; ++y)
    for (int x = 0; x < K.width; ++x) {
      double* px = out.data.data() + (static_cast<std::size_t>(y) * K.width + x) * kInputChannels;
      if (mask.rgb)
        for (int c = 0; c < 3; ++c) px[c] = view.image.at(x, y, c);
      if (mask.depth) px[3] = view.depth.at(x, y) / norm.half_extent;
      if (mask.ray) {
        const Vec6 r = ray_embedding(x, y, K, normalized);
        for (int c = 0; c < 6; ++c) px[4 + c] = r[c];
      }
    }
  return out;
}

void init_encoder(nn::ParamSet& params, int feature_dim, std::mt19937_64& rng) {
  require(feature_dim >= 1, ErrorCode::kConfig, "feature_dim must be >= 1");
  auto& w1 = params.add("enc.w1", {feature_dim, 3, 3, kInputChannels});
  params.add("enc.b1", {feature_dim});
  auto& w2 = params.add("enc.w2", {feature_dim, 3, 3, feature_dim});
  params.add("enc.b2", {feature_dim});
  nn::xavier(w1, 9 * kInputChannels, 9 * feature_dim, rng);
  nn::xavier(w2, 9 * feature_dim, 9 * feature_dim, rng);
}

ad::Var encode_view(ad::Tape& tape, const ad::Tensor& stacked, nn::ParamSet& params) {
  require(stacked.shape.size() == 3 && stacked.shape[2] == kInputChannels, ErrorCode::kContract,
          "encode_view: expected H×W×10 input");
  require(stacked.shape[0] % kEncoderStride == 0 && stacked.shape[1] % kEncoderStride == 0,
          ErrorCode::kContract, "encode_view: image size must be divisible by 4");
  const auto& w1 = params.get("enc.w1");
  require(w1.shape[3] == kInputChannels, ErrorCode::kContract, "encode_view: weight shape mismatch");
  ad::Var x = tape.constant(stacked);
  ad::Var h = ad::tanh(ad::conv3x3(x, tape.param(params.get("enc.w1")), tape.param(params.get("enc.b1")), 2));
  return ad::conv3x3(h, tape.param(params.get("enc.w2")), tape.param(params.get("enc.b2")), 2);
}

bool visibility(const Vec3& world, const CameraView& view, double tau) {
  const Projection p = project_point(world, view.intrinsics, view.extrinsics);
  if (p.behind || !(p.z > kZNear)) return false;
  const int x = static_cast<int>(std::lround(p.u));
  const int y = static_cast<int>(std::lround(p.v));
  if (x < 0 || y < 0 || x >= view.intrinsics.width || y >= view.intrinsics.height) return false;
  const double d = view.depth.at(x, y);
  if (!(d > 0) || !std::isfinite(d)) return false;
  return std::abs(d - p.z) / p.z <= tau;
}

namespace {

struct Tap {
  std::size_t index[4];
  double weight[4];
};

// Clamp-to-edge bilinear footprint at continuous pixel coordinates.
Tap bilinear_tap(double fx, double fy, int w, int h) {
  fx = std::clamp(fx, 0.0, static_cast<double>(w - 1));
  fy = std::clamp(fy, 0.0, static_cast<double>(h - 1));
  const int x0 = std::min(static_cast<int>(std::floor(fx)), w - 1);
  const int y0 = std::min(static_cast<int>(std::floor(fy)), h - 1);
  const int x1 = std::min(x0 + 1, w - 1), y1 = std::min(y0 + 1, h - 1);
  const double ax = fx - x0, ay = fy - y0;
  Tap t;
  t.index[0] = static_cast<std::size_t>(y0) * w + x0;
  t.index[1] = static_cast<std::size_t>(y0) * w + x1;
  t.index[2] = static_cast<std::size_t>(y1) * w + x0;
  t.index[3] = static_cast<std::size_t>(y1) * w + x1;
  t.weight[0] = (1 - ax) * (1 - ay);
  t.weight[1] = ax * (1 - ay);
  t.weight[2] = (1 - ax) * ay;
  t.weight[3] = ax * ay;
  return t;
}

struct Sample {
  int view;
  Tap tap;
};

}  // namespace

AnchorFeatures aggregate(const std::vector<Vec3>& anchors_world, const std::vector<ad::Var>& maps,
                         const std::vector<CameraView>& views, Pooling mode, double tau,
                         int scale_factor) {
  require(maps.size() == views.size() && !maps.empty(), ErrorCode::kContract,
          "aggregate: one feature map per view required");
  ad::Tape* tape = maps.front().tape;
  const int C = maps.front().shape().at(2);
  for (const auto& m : maps)
    require(m.shape().size() == 3 && m.shape()[2] == C, ErrorCode::kContract,
            "aggregate: feature maps disagree on channel count");
  const std::size_t N = anchors_world.size();

  std::vector<std::vector<Sample>> samples(N);
  parallel_for(N, [&](std::size_t a) {
    for (std::size_t v = 0; v < views.size(); ++v) {
      if (!visibility(anchors_world[a], views[v], tau)) continue;
      const Projection p = project_point(anchors_world[a], views[v].intrinsics, views[v].extrinsics);
      const auto& shape = maps[v].shape();
      samples[a].push_back({static_cast<int>(v), bilinear_tap(p.u / scale_factor, p.v / scale_factor,
                                                              shape[1], shape[0])});
    }
  });

  ad::Tensor out({static_cast<int>(N), C});
  // Source sample chosen per output entry under max pooling.
  std::vector<int> argmax(mode == Pooling::kMax ? N * C : 0, -1);
  AnchorFeatures result;
  result.counts.resize(N);
  parallel_for(N, [&](std::size_t a) {
    const auto& s = samples[a];
    result.counts[a] = static_cast<int>(s.size());
    if (s.empty()) return;
    const std::size_t used = mode == Pooling::kFifo ? 1 : s.size();
    for (int c = 0; c < C; ++c) {
      double acc = mode == Pooling::kMax ? -std::numeric_limits<double>::infinity() : 0.0;
      for (std::size_t k = 0; k < used; ++k) {
        const auto& data = maps[s[k].view].value().data;
        double v = 0;
        for (int q = 0; q < 4; ++q) v += s[k].tap.weight[q] * data[s[k].tap.index[q] * C + c];
        if (mode == Pooling::kMax) {
          if (v > acc) {
            acc = v;
            argmax[a * C + c] = static_cast<int>(k);
          }
        } else {
          acc += v;
        }
      }
      out.data[a * C + c] = mode == Pooling::kAverage ? acc / static_cast<double>(used) : acc;
    }
  });

  std::vector<int> inputs;
  for (const auto& m : maps) inputs.push_back(m.id);
  result.features = tape->record(std::move(out), inputs,
      [inputs, samples = std::move(samples), argmax = std::move(argmax), mode, C](ad::Tape& t, int self) {
        const auto& g = t.grad(self);
        for (std::size_t a = 0; a < samples.size(); ++a) {
          const auto& s = samples[a];
          if (s.empty()) continue;
          const std::size_t used = mode == Pooling::kFifo ? 1 : s.size();
          for (std::size_t k = 0; k < used; ++k) {
            if (!t.requires_grad(inputs[s[k].view])) continue;
            auto& gm = t.grad(inputs[s[k].view]);
            for (int c = 0; c < C; ++c) {
              double gv = g[a * C + c];
              if (mode == Pooling::kAverage) gv /= static_cast<double>(used);
              if (mode == Pooling::kMax && argmax[a * C + c] != static_cast<int>(k)) continue;
              for (int q = 0; q < 4; ++q) gm[s[k].tap.index[q] * C + c] += s[k].tap.weight[q] * gv;
            }
          }
        }
      });
  return result;
}

AnchorFeatures lift_features(ad::Tape& tape, const std::vector<Vec3>& anchors,
                             const SceneNormalization& norm, const std::vector<CameraView>& views,
                             nn::ParamSet& encoder, const LiftConfig& config) {
  require(!views.empty(), ErrorCode::kPrecondition, "lift_features: no views");
  std::vector<ad::Var> maps;
  for (const auto& v : views) maps.push_back(encode_view(tape, stack_inputs(v, norm, config.mask), encoder));
  std::vector<Vec3> world;
  world.reserve(anchors.size());
  for (const auto& a : anchors) world.push_back(norm.denormalize(a));
  return aggregate(world, maps, views, config.pooling, config.tau);
}

}  // namespace asplat
