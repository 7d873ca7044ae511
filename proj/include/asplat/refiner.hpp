#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "asplat/autodiff.hpp"
#include "asplat/cameras.hpp"
#include "asplat/feature_lift.hpp"
#include "asplat/nn.hpp"
#include "asplat/rasterizer.hpp"

namespace asplat {

struct RefinerConfig {
  int error_dim = 24;
  int width = 64;
  int error_blocks = 1;
  int serial_blocks = 2;
  int ffn_mult = 2;
  int window = 64;
  int passes = 1;
  int decoder_width = 64;  // width of the decoder tokens fed to the update
  double tau = 0.05;
};

inline constexpr int kErrorScales = 3;  // pooling factors 2, 4, 8
inline constexpr int kErrorBaseChannels = 3 * kErrorScales;

// Fixed 9×D matrix with orthonormal rows, drawn from a constant seed.
const ad::Tensor& error_projection(int error_dim);

// Multi-scale differences F(gt) − F(rendered) at 1/4 resolution, before the
// channel expansion: H/4×W/4×9.
ad::Var error_base(ad::Var rendered_rgb, const ad::Tensor& gt);
// H/4×W/4×D.
ad::Var error_features(ad::Var rendered_rgb, const ad::Tensor& gt, int error_dim = 24);

struct ErrorTokens {
  ad::Var features;         // M×D, mean over visible views
  std::vector<int> counts;
};
ErrorTokens lift_errors(const std::vector<ad::Var>& error_maps, const std::vector<Vec3>& centers_world,
                        const std::vector<CameraView>& views, double tau = 0.05);

// Interleaves `bits` low bits of each coordinate: x at bit 3i, y at 3i+1, z at 3i+2.
std::uint64_t morton_code(std::uint32_t x, std::uint32_t y, std::uint32_t z, int bits = 10);
// Ordering of normalized points by 10-bit Morton code, ties by index.
std::vector<int> morton_order(const std::vector<Vec3>& points);

void init_refiner(nn::ParamSet& params, const RefinerConfig& config, std::mt19937_64& rng);

ad::Var error_attention(ad::Var errors, nn::ParamSet& params, const RefinerConfig& config);

// Per-Gaussian input [raw ‖ decoder token of the parent anchor ‖ refined
// error token] attended in Morton windows; returns raw-space deltas.
ad::Var serialized_update(ad::Var raw, ad::Var anchor_tokens, ad::Var error_tokens,
                          const std::vector<Vec3>& centers, int gaussians_per_anchor,
                          nn::ParamSet& params, const RefinerConfig& config);

// Normalized and world centers of every Gaussian for given raw values.
std::vector<Vec3> scene_centers(const GaussianScene& layout, const std::vector<double>& raw, bool world);

struct RefineInputs {
  const GaussianScene* layout = nullptr;      // anchors, normalization, bounds
  const std::vector<CameraView>* views = nullptr;
  Vec3 background = Vec3::Zero();
  RenderOptions render;
  // Lifted first-pass error tokens (M×D values); reused when non-null. Valid
  // only for the raw values they were computed from.
  const ad::Tensor* first_pass_errors = nullptr;
};

// Lifted error tokens for one pass starting from `raw`.
ErrorTokens compute_error_tokens(ad::Var raw, const RefineInputs& in, const RefinerConfig& config);

// Runs `config.passes` refinement passes and returns the updated raw values.
ad::Var refine(ad::Var raw, ad::Var anchor_tokens, const RefineInputs& in, nn::ParamSet& params,
               const RefinerConfig& config);

}  // namespace asplat
