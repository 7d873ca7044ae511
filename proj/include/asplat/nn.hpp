#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "asplat/autodiff.hpp"

namespace asplat::nn {

// Named parameters in insertion order; the order fixes checkpoint layout.
class ParamSet {
 public:
  ParamSet() = default;
  ParamSet(const ParamSet&) = delete;
  ParamSet& operator=(const ParamSet&) = delete;
  ParamSet(ParamSet&&) = default;
  ParamSet& operator=(ParamSet&&) = default;

  ad::Parameter& add(const std::string& name, std::vector<int> shape);
  ad::Parameter& get(const std::string& name);
  const ad::Parameter& get(const std::string& name) const;
  bool has(const std::string& name) const;

  std::vector<ad::Parameter*> all();
  std::vector<const ad::Parameter*> all() const;
  std::size_t count() const;  // scalar parameters
  void zero_grad();
  void set_trainable(bool on);
  ParamSet clone() const;

 private:
  std::vector<std::unique_ptr<ad::Parameter>> params_;
};

// Uniform(-b, b) with b = sqrt(6 / (fan_in + fan_out)) times `gain`.
void xavier(ad::Parameter& p, int fan_in, int fan_out, std::mt19937_64& rng, double gain = 1.0);
void fill(ad::Parameter& p, double v);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Weights and moments are rounded to float32 after every step so a run
// resumed from a float32 checkpoint continues bit-identically.
class Adam {
 public:
  Adam() = default;
  Adam(std::vector<ad::Parameter*> params, AdamConfig config);

  void step();
  std::uint64_t steps() const { return t_; }
  const AdamConfig& config() const { return config_; }

  std::vector<std::vector<double>>& first() { return m_; }
  std::vector<std::vector<double>>& second() { return v_; }
  void set_steps(std::uint64_t t) { t_ = t; }

 private:
  std::vector<ad::Parameter*> params_;
  AdamConfig config_;
  std::vector<std::vector<double>> m_, v_;
  std::uint64_t t_ = 0;
};

// Rounds every value of every parameter to float32.
void quantize(ParamSet& params);

// "ASPL" container: magic, u32 version, u64 header length, JSON header,
// little-endian float32 tensors in header order (then Adam moments).
struct Checkpoint {
  std::string section;      // e.g. "stage1", "stage2", "fit"
  std::string config_json = "{}";
  std::string extra_json = "{}";
  std::vector<std::pair<std::string, const ParamSet*>> groups;
  Adam* optimizer = nullptr;  // optional; covers parameters in group order
};

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ck);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck);

struct LoadedCheckpoint {
  std::string section;
  std::string config_json;
  std::string extra_json;
  std::uint64_t optimizer_steps = 0;
  bool has_optimizer = false;
};

// Fills matching groups (names and shapes must agree) and, when given, the
// optimizer state.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path,
                                 const std::vector<std::pair<std::string, ParamSet*>>& groups,
                                 Adam* optimizer = nullptr);
LoadedCheckpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes,
                                   const std::vector<std::pair<std::string, ParamSet*>>& groups,
                                   Adam* optimizer = nullptr);

}  // namespace asplat::nn
