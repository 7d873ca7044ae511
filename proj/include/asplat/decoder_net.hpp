#pragma once

#include <random>
#include <string>
#include <vector>

#include "asplat/autodiff.hpp"
#include "asplat/nn.hpp"
#include "asplat/scene_model.hpp"

namespace asplat {

// Pre-normalization residual block:
//   x' = x + Attn(LN(x)) Wo,   x'' = x' + FFN(LN(x')).
// Parameters live under `prefix` in the set.
void init_attention_block(nn::ParamSet& params, const std::string& prefix, int width, int hidden,
                          std::mt19937_64& rng);
ad::Var attention_block(ad::Var x, nn::ParamSet& params, const std::string& prefix,
                        const ad::Windows& windows = {});

struct DecoderConfig {
  int feature_dim = 32;
  int width = 64;
  int blocks = 2;
  int ffn_mult = 2;
  int gaussians_per_anchor = 4;
  int max_tokens = 4096;
  double init_scale = 0.03;       // normalized units, through the head bias
  double head_init_gain = 0.1;
};

void init_decoder(nn::ParamSet& params, const DecoderConfig& config, std::mt19937_64& rng);

struct Decoded {
  ad::Var raw;     // (k·N)×14, anchor-major
  ad::Var tokens;  // N×width after the attention blocks
};

// features: N×C anchor features; anchors in normalized units.
Decoded decode(ad::Var features, const std::vector<Vec3>& anchors, nn::ParamSet& params,
               const DecoderConfig& config);

// Parameter-free forward pass into a scene (values only).
GaussianScene forward_scene(const Decoded& decoded, const GaussianScene& layout);

}  // namespace asplat
