#include "asplat/refiner.hpp"

#include <algorithm>
#include <map>
#include <mutex>
#include <numeric>

#include <Eigen/QR>

#include "asplat/decoder_net.hpp"
#include "asplat/error.hpp"
#include "asplat/render_op.hpp"

namespace asplat {

const ad::Tensor& error_projection(int D) {
  require(D >= kErrorBaseChannels, ErrorCode::kConfig, "error_dim must be >= 9");
  static std::mutex mu;
  static std::map<int, ad::Tensor> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(D);
  if (it != cache.end()) return it->second;
  std::mt19937_64 rng(0x61736c7470726f6aULL);
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::MatrixXd A(D, kErrorBaseChannels);
  for (int r = 0; r < D; ++r)
    for (int c = 0; c < kErrorBaseChannels; ++c) A(r, c) = n(rng);
  const Eigen::MatrixXd Q = Eigen::HouseholderQR<Eigen::MatrixXd>(A).householderQ() *
                            Eigen::MatrixXd::Identity(D, kErrorBaseChannels);
  ad::Tensor P({kErrorBaseChannels, D});
  for (int r = 0; r < kErrorBaseChannels; ++r)
    for (int c = 0; c < D; ++c) P.data[r * D + c] = Q(c, r);
  return cache.emplace(D, std::move(P)).first->second;
}

ad::Var error_base(ad::Var rendered, const ad::Tensor& gt) {
  const auto& s = rendered.shape();
  require(s.size() == 3 && s[2] == 3 && gt.shape == s, ErrorCode::kContract,
          "error_features: rendered and ground truth must both be H×W×3");
  require(s[0] % 8 == 0 && s[1] % 8 == 0, ErrorCode::kContract,
          "error_features: image size must be divisible by 8");
  const int h = s[0] / 4, w = s[1] / 4;
  ad::Tape& t = *rendered.tape;
  // Pooling and resizing are linear, so F(gt) − F(r) = F(gt − r).
  ad::Var diff = ad::sub(t.constant(gt), rendered);
  std::vector<ad::Var> parts;
  for (int f : {2, 4, 8}) {
    ad::Var p = ad::resize_bilinear(ad::avg_pool(diff, f), h, w);
    parts.push_back(ad::reshape(p, {h * w, 3}));
  }
  return ad::reshape(ad::concat_cols(parts), {h, w, kErrorBaseChannels});
}

ad::Var error_features(ad::Var rendered, const ad::Tensor& gt, int D) {
  ad::Var base = error_base(rendered, gt);
  const int h = base.shape()[0], w = base.shape()[1];
  ad::Var flat = ad::reshape(base, {h * w, kErrorBaseChannels});
  return ad::reshape(ad::matmul(flat, rendered.tape->constant(error_projection(D))), {h, w, D});
}

ErrorTokens lift_errors(const std::vector<ad::Var>& maps, const std::vector<Vec3>& centers,
                        const std::vector<CameraView>& views, double tau) {
  AnchorFeatures a = aggregate(centers, maps, views, Pooling::kAverage, tau, kEncoderStride);
  return {a.features, std::move(a.counts)};
}

std::uint64_t morton_code(std::uint32_t x, std::uint32_t y, std::uint32_t z, int bits) {
  std::uint64_t code = 0;
  for (int i = 0; i < bits; ++i) {
    code |= static_cast<std::uint64_t>((x >> i) & 1u) << (3 * i);
    code |= static_cast<std::uint64_t>((y >> i) & 1u) << (3 * i + 1);
    code |= static_cast<std::uint64_t>((z >> i) & 1u) << (3 * i + 2);
  }
  return code;
}

std::vector<int> morton_order(const std::vector<Vec3>& points) {
  constexpr int kBits = 10;
  constexpr double kCells = 1 << kBits;
  std::vector<std::uint64_t> codes(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    std::uint32_t q[3];
    for (int k = 0; k < 3; ++k) {
      const double c = std::floor((points[i][k] + 1.0) * 0.5 * kCells);
      q[k] = static_cast<std::uint32_t>(std::clamp(c, 0.0, kCells - 1));
    }
    codes[i] = morton_code(q[0], q[1], q[2], kBits);
  }
  std::vector<int> order(points.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return codes[a] < codes[b]; });
  return order;
}

void init_refiner(nn::ParamSet& params, const RefinerConfig& c, std::mt19937_64& rng) {
  require(c.width >= 1 && c.window >= 1 && c.passes >= 1 && c.error_blocks >= 0 && c.serial_blocks >= 0,
          ErrorCode::kConfig, "refiner: invalid shape configuration");
  nn::xavier(params.add("ref.err.embed.w", {c.error_dim, c.width}), c.error_dim, c.width, rng);
  params.add("ref.err.embed.b", {c.width});
  for (int b = 0; b < c.error_blocks; ++b)
    init_attention_block(params, "ref.err.block" + std::to_string(b), c.width, c.ffn_mult * c.width, rng);
  const int in = raw::kCount + c.decoder_width + c.width;
  nn::xavier(params.add("ref.ser.embed.w", {in, c.width}), in, c.width, rng);
  params.add("ref.ser.embed.b", {c.width});
  for (int b = 0; b < c.serial_blocks; ++b)
    init_attention_block(params, "ref.ser.block" + std::to_string(b), c.width, c.ffn_mult * c.width, rng);
  // Zero head: refinement starts as the identity.
  params.add("ref.ser.head.w", {c.width, raw::kCount});
  params.add("ref.ser.head.b", {raw::kCount});
}

ad::Var error_attention(ad::Var errors, nn::ParamSet& params, const RefinerConfig& c) {
  ad::Tape& t = *errors.tape;
  ad::Var x = ad::add_rowvec(ad::matmul(errors, t.param(params.get("ref.err.embed.w"))),
                             t.param(params.get("ref.err.embed.b")));
  for (int b = 0; b < c.error_blocks; ++b) x = attention_block(x, params, "ref.err.block" + std::to_string(b));
  return x;
}

ad::Var serialized_update(ad::Var raw, ad::Var anchor_tokens, ad::Var error_tokens,
                          const std::vector<Vec3>& centers, int k, nn::ParamSet& params,
                          const RefinerConfig& c) {
  const int M = raw.rows();
  require(error_tokens.rows() == M && static_cast<int>(centers.size()) == M &&
              anchor_tokens.rows() * k == M,
          ErrorCode::kContract, "serialized_update: token counts disagree");
  ad::Tape& t = *raw.tape;
  std::vector<int> parent(M);
  for (int j = 0; j < M; ++j) parent[j] = j / k;
  ad::Var x = ad::concat_cols({raw, ad::gather_rows(anchor_tokens, parent), error_tokens});
  x = ad::add_rowvec(ad::matmul(x, t.param(params.get("ref.ser.embed.w"))),
                     t.param(params.get("ref.ser.embed.b")));
  const std::vector<int> order = morton_order(centers);
  std::vector<int> inverse(M);
  for (int i = 0; i < M; ++i) inverse[order[i]] = i;
  ad::Windows windows;
  for (int s = 0; s < M; s += c.window) windows.emplace_back(s, std::min(c.window, M - s));
  x = ad::gather_rows(x, order);
  for (int b = 0; b < c.serial_blocks; ++b)
    x = attention_block(x, params, "ref.ser.block" + std::to_string(b), windows);
  x = ad::add_rowvec(ad::matmul(x, t.param(params.get("ref.ser.head.w"))),
                     t.param(params.get("ref.ser.head.b")));
  return ad::gather_rows(x, inverse);
}

std::vector<Vec3> scene_centers(const GaussianScene& layout, const std::vector<double>& raw, bool world) {
  const GaussianScene s = with_raw(layout, raw);
  std::vector<Vec3> out(s.size());
  for (std::size_t j = 0; j < s.size(); ++j) {
    out[j] = s.center(j);
    if (world) out[j] = s.normalization.denormalize(out[j]);
  }
  return out;
}

ErrorTokens compute_error_tokens(ad::Var raw, const RefineInputs& in, const RefinerConfig& c) {
  require(in.layout && in.views && !in.views->empty(), ErrorCode::kPrecondition,
          "refine: layout and views are required");
  std::vector<ad::Var> maps;
  for (const auto& v : *in.views) {
    const Intrinsics& K = v.intrinsics;
    const RenderVars r = split_render(render_var(raw, *in.layout, K, v.extrinsics, in.background, in.render),
                                      K.height, K.width);
    maps.push_back(error_features(r.rgb, to_tensor(v.image), c.error_dim));
  }
  return lift_errors(maps, scene_centers(*in.layout, raw.value().data, true), *in.views, c.tau);
}

ad::Var refine(ad::Var raw, ad::Var anchor_tokens, const RefineInputs& in, nn::ParamSet& params,
               const RefinerConfig& c) {
  for (int pass = 0; pass < c.passes; ++pass) {
    ad::Var e = pass == 0 && in.first_pass_errors ? raw.tape->constant(*in.first_pass_errors)
                                                   : compute_error_tokens(raw, in, c).features;
    ad::Var eps = error_attention(e, params, c);
    const std::vector<Vec3> centers = scene_centers(*in.layout, raw.value().data, false);
    raw = ad::add(raw, serialized_update(raw, anchor_tokens, eps, centers, in.layout->gaussians_per_anchor,
                                         params, c));
  }
  return raw;
}

}  // namespace asplat
