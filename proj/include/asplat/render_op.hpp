#pragma once

#include "asplat/autodiff.hpp"
#include "asplat/rasterizer.hpp"

namespace asplat {

ad::Tensor to_tensor(const Image& img);
Image to_image(const ad::Tensor& t);

// Differentiable render of a scene whose raw parameters live on a tape.
// `layout` supplies anchors, normalization and bounds; its raw values are
// ignored. Output is (H·W)×5 with columns r, g, b, depth, alpha; the alpha
// column carries no gradient.
ad::Var render_var(ad::Var raw, const GaussianScene& layout, const Intrinsics& K,
                   const Extrinsics& E, const Vec3& background,
                   const RenderOptions& options = {});

struct RenderVars {
  ad::Var rgb;        // H×W×3
  ad::Var depth;      // H×W×1
  ad::Tensor alpha;   // H×W×1, detached
};
RenderVars split_render(ad::Var out, int height, int width);

// Copies a tape value back into a scene with the same layout.
GaussianScene with_raw(const GaussianScene& layout, const std::vector<double>& raw);

}  // namespace asplat
