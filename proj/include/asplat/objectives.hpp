#pragma once

#include <limits>
#include <string>
#include <vector>

#include "asplat/autodiff.hpp"
#include "asplat/cameras.hpp"
#include "asplat/rasterizer.hpp"

namespace asplat {

struct LossWeights {
  double render = 200.0;    // λ_I
  double ssim = 0.2;        // γ_SSIM
  double lpips = 0.2;       // kept for configs; no LPIPS term is computed
  double depth = 100.0;     // λ_D
  double opacity = 0.1;     // λ_α
  double scale = 1e4;       // λ_s

  void validate() const;
};

// Plain-value metrics and losses.
double ssim(const Image& x, const Image& y);
double l1(const Image& x, const Image& y);
double render_loss(const Image& rendered, const Image& gt, const LossWeights& w = {});
double opacity_reg(const std::vector<double>& alpha);
double scale_reg(const std::vector<Vec3>& scales);
// +inf when the images are identical.
double psnr(const Image& x, const Image& y);
// Mask selects pixels; empty mask means every pixel with gt > 0.
double absrel(const Image& pred, const Image& gt, const std::vector<unsigned char>& mask = {});
double delta1(const Image& pred, const Image& gt, const std::vector<unsigned char>& mask = {});

// Differentiable counterparts on a tape.
ad::Var render_loss(ad::Var rgb, const ad::Tensor& gt, const LossWeights& w = {});
ad::Var opacity_reg(ad::Var raw);
ad::Var scale_reg(ad::Var raw, const ScaleLimits& limits = {});

// Pixels with valid ground-truth depth and rendered alpha above 0.5.
std::vector<unsigned char> depth_mask(const Image& gt_depth, const ad::Tensor& alpha);

struct LossBreakdown {
  double render = 0.0;   // λ_I Σ ℓ_I
  double depth = 0.0;    // λ_D Σ ℓ₁(D̂, D)
  double opacity = 0.0;  // λ_α ℓ_α
  double scale = 0.0;    // λ_s ℓ_s
  double total = 0.0;
};

struct TotalLoss {
  ad::Var value;
  LossBreakdown terms;
};

// Renders every view from `raw` and assembles the weighted objective.
TotalLoss total_loss(ad::Var raw, const GaussianScene& layout, const std::vector<CameraView>& views,
                     const LossWeights& w, const Vec3& background,
                     const RenderOptions& options = {});
// Rendering term only, λ_I Σ ℓ_I.
TotalLoss rendering_loss(ad::Var raw, const GaussianScene& layout,
                         const std::vector<CameraView>& views, const LossWeights& w,
                         const Vec3& background, const RenderOptions& options = {});

struct ViewMetrics {
  std::string name;
  double psnr = 0.0;
  double ssim = 0.0;
  double absrel = 0.0;
  double delta1 = 0.0;
};

struct MetricsReport {
  double psnr = 0.0;
  double ssim = 0.0;
  double absrel = 0.0;
  double delta1 = 0.0;
  std::size_t num_gs = 0;
  double recon_time_s = 0.0;
  std::vector<ViewMetrics> views;

  bool finite() const;  // inf PSNR counts as finite; NaN does not
  std::string to_json(int indent = 2) const;
  static MetricsReport from_json(const std::string& text);
};

ViewMetrics evaluate_view(const RenderOutput& rendered, const CameraView& gt);
// Aggregates are per-view means.
MetricsReport summarize(std::vector<ViewMetrics> views, std::size_t num_gs, double recon_time_s);

}  // namespace asplat
