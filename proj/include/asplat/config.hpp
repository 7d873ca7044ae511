#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "asplat/anchor_sampler.hpp"
#include "asplat/decoder_net.hpp"
#include "asplat/feature_lift.hpp"
#include "asplat/objectives.hpp"
#include "asplat/rasterizer.hpp"
#include "asplat/refiner.hpp"
#include "asplat/synthetic.hpp"

namespace asplat {

struct OptimConfig {
  double lr = 1e-3;
  int steps = 2000;
  int views_per_step = 0;      // 0 uses every input view each step
  int checkpoint_every = 100;  // 0 disables periodic checkpoints
};

struct RunConfig {
  std::uint64_t seed = 0;
  int threads = 0;  // 0 defers to ASPLAT_THREADS, then 1
  AnchorConfig anchors{1, 0.01, 0.99, 0.05, 0.0, 1024, -1};
  LiftConfig lift;
  DecoderConfig decoder;
  RefinerConfig refiner;
  LossWeights loss;
  OptimConfig fit{2e-2, 600, 2, 0};
  OptimConfig stage1{1e-3, 2000, 0, 100};
  OptimConfig stage2{1e-3, 500, 0, 100};
  RenderOptions render;
  Vec3 background = Vec3::Zero();
  synth::GenConfig gen;

  // Unknown keys and mistyped values are rejected.
  static RunConfig from_json(const std::string& text);
  static RunConfig load(const std::filesystem::path& path);
  // This config with a partial document laid over it.
  RunConfig merged(const std::string& text) const;
  std::string to_json(int indent = 2) const;
  void validate() const;
  // Copy with widths that one module takes from another filled in.
  RunConfig resolved() const;
};

}  // namespace asplat
