#pragma once

#include <random>
#include <string>
#include <vector>

#include "asplat/autodiff.hpp"
#include "asplat/cameras.hpp"
#include "asplat/nn.hpp"
#include "asplat/scene_model.hpp"

namespace asplat {

enum class Pooling { kAverage, kMax, kFifo };
Pooling parse_pooling(const std::string& s);
std::string to_string(Pooling p);

// Zeroed channel groups for the input-information ablation; the channel
// count stays 10 either way.
struct InputMask {
  bool rgb = true;
  bool depth = true;
  bool ray = true;
};

inline constexpr int kInputChannels = 10;
inline constexpr int kEncoderStride = 4;

// H×W×10: RGB, depth / half_extent, Plücker ray (direction, moment) with the
// camera center expressed in normalized scene units.
ad::Tensor stack_inputs(const CameraView& view, const SceneNormalization& norm,
                        const InputMask& mask = {});

void init_encoder(nn::ParamSet& params, int feature_dim, std::mt19937_64& rng);
// Two stride-2 3×3 convolutions with tanh between: H×W×10 -> H/4×W/4×C.
ad::Var encode_view(ad::Tape& tape, const ad::Tensor& stacked, nn::ParamSet& params);

bool visibility(const Vec3& world, const CameraView& view, double tau = 0.05);

struct AnchorFeatures {
  ad::Var features;         // N×C
  std::vector<int> counts;  // visible views per anchor
};

// Bilinear samples at projected pixel / scale_factor, pooled across visible
// views in input order. Anchors with no visible view get a zero row.
AnchorFeatures aggregate(const std::vector<Vec3>& anchors_world, const std::vector<ad::Var>& maps,
                         const std::vector<CameraView>& views, Pooling mode, double tau = 0.05,
                         int scale_factor = kEncoderStride);

struct LiftConfig {
  int feature_dim = 32;
  Pooling pooling = Pooling::kAverage;
  double tau = 0.05;
  InputMask mask;
};

// stack_inputs -> encode_view -> aggregate for every anchor (normalized units).
AnchorFeatures lift_features(ad::Tape& tape, const std::vector<Vec3>& anchors,
                             const SceneNormalization& norm, const std::vector<CameraView>& views,
                             nn::ParamSet& encoder, const LiftConfig& config);

}  // namespace asplat
