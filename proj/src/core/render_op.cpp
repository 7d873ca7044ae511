#include "asplat/render_op.hpp"

#include "asplat/error.hpp"

namespace asplat {

ad::Tensor to_tensor(const Image& img) {
  return ad::Tensor({img.height, img.width, img.channels}, img.data);
}

Image to_image(const ad::Tensor& t) {
  require(t.shape.size() == 3, ErrorCode::kContract, "to_image: expected H×W×C tensor");
  Image img(t.shape[1], t.shape[0], t.shape[2]);
  img.data = t.data;
  return img;
}

GaussianScene with_raw(const GaussianScene& layout, const std::vector<double>& raw) {
  require(raw.size() == layout.raw.size(), ErrorCode::kContract, "with_raw: size mismatch");
  GaussianScene s = layout;
  s.raw = raw;
  return s;
}

ad::Var render_var(ad::Var raw, const GaussianScene& layout, const Intrinsics& K,
                   const Extrinsics& E, const Vec3& background, const RenderOptions& options) {
  require(raw.numel() == layout.raw.size(), ErrorCode::kContract,
          "render_var: raw parameter count does not match the scene layout");
  GaussianScene scene = with_raw(layout, raw.value().data);
  const RenderOutput r = render(scene, K, E, background, options);
  const std::size_t n = r.rgb.pixels();
  ad::Tensor out({static_cast<int>(n), 5});
  for (std::size_t p = 0; p < n; ++p) {
    for (int c = 0; c < 3; ++c) out.data[p * 5 + c] = r.rgb.data[p * 3 + c];
    out.data[p * 5 + 3] = r.depth.data[p];
    out.data[p * 5 + 4] = r.alpha.data[p];
  }
  const int ir = raw.id;
  return raw.tape->record(std::move(out), {ir},
                          [ir, scene = std::move(scene), K, E, background, options](ad::Tape& t, int self) {
    const auto& g = t.grad(self);
    Image g_rgb(K.width, K.height, 3), g_depth(K.width, K.height, 1);
    const std::size_t n = g_rgb.pixels();
    for (std::size_t p = 0; p < n; ++p) {
      for (int c = 0; c < 3; ++c) g_rgb.data[p * 3 + c] = g[p * 5 + c];
      g_depth.data[p] = g[p * 5 + 3];
    }
    const std::vector<double> graw = render_backward(scene, K, E, background, g_rgb, g_depth, options);
    auto& dst = t.grad(ir);
    for (std::size_t i = 0; i < graw.size(); ++i) dst[i] += graw[i];
  });
}

RenderVars split_render(ad::Var out, int height, int width) {
  require(out.rows() == height * width && out.cols() == 5, ErrorCode::kContract,
          "split_render: unexpected render shape");
  RenderVars v;
  v.rgb = ad::reshape(ad::slice_cols(out, 0, 3), {height, width, 3});
  v.depth = ad::reshape(ad::slice_cols(out, 3, 1), {height, width, 1});
  v.alpha = ad::Tensor({height, width, 1});
  const auto& d = out.value().data;
  for (int p = 0; p < height * width; ++p) v.alpha.data[p] = d[p * 5 + 4];
  return v;
}

}  // namespace asplat
