#include "asplat/decoder_net.hpp"

#include <cmath>

#include "asplat/error.hpp"

namespace asplat {

void init_attention_block(nn::ParamSet& params, const std::string& prefix, int width, int hidden,
                          std::mt19937_64& rng) {
  nn::fill(params.add(prefix + ".ln1.g", {width}), 1.0);
  params.add(prefix + ".ln1.b", {width});
  for (const char* m : {".wq", ".wk", ".wv", ".wo"})
    nn::xavier(params.add(prefix + m, {width, width}), width, width, rng);
  nn::fill(params.add(prefix + ".ln2.g", {width}), 1.0);
  params.add(prefix + ".ln2.b", {width});
  nn::xavier(params.add(prefix + ".w1", {width, hidden}), width, hidden, rng);
  params.add(prefix + ".b1", {hidden});
  nn::xavier(params.add(prefix + ".w2", {hidden, width}), hidden, width, rng);
  params.add(prefix + ".b2", {width});
}

ad::Var attention_block(ad::Var x, nn::ParamSet& params, const std::string& prefix,
                        const ad::Windows& windows) {
  ad::Tape& t = *x.tape;
  auto P = [&](const char* name) { return t.param(params.get(prefix + name)); };
  ad::Var h = ad::layer_norm(x, P(".ln1.g"), P(".ln1.b"));
  ad::Var a = ad::attention(ad::matmul(h, P(".wq")), ad::matmul(h, P(".wk")), ad::matmul(h, P(".wv")),
                            windows);
  x = ad::add(x, ad::matmul(a, P(".wo")));
  h = ad::layer_norm(x, P(".ln2.g"), P(".ln2.b"));
  h = ad::gelu(ad::add_rowvec(ad::matmul(h, P(".w1")), P(".b1")));
  h = ad::add_rowvec(ad::matmul(h, P(".w2")), P(".b2"));
  return ad::add(x, h);
}

void init_decoder(nn::ParamSet& params, const DecoderConfig& c, std::mt19937_64& rng) {
  require(c.width >= 1 && c.blocks >= 0 && c.ffn_mult >= 1 && c.gaussians_per_anchor >= 1,
          ErrorCode::kConfig, "decoder: invalid shape configuration");
  const int in = c.feature_dim + 3;
  nn::xavier(params.add("dec.embed.w", {in, c.width}), in, c.width, rng);
  params.add("dec.embed.b", {c.width});
  for (int b = 0; b < c.blocks; ++b)
    init_attention_block(params, "dec.block" + std::to_string(b), c.width, c.ffn_mult * c.width, rng);
  const int out = c.gaussians_per_anchor * raw::kCount;
  nn::xavier(params.add("dec.head.w", {c.width, out}), c.width, out, rng, c.head_init_gain);
  auto& bias = params.add("dec.head.b", {out});
  for (int k = 0; k < c.gaussians_per_anchor; ++k) {
    double* r = bias.value.data() + k * raw::kCount;
    for (int i = 0; i < 3; ++i) r[raw::kScale + i] = static_cast<float>(std::log(c.init_scale));
    r[raw::kRot] = 1.0;
  }
}

Decoded decode(ad::Var features, const std::vector<Vec3>& anchors, nn::ParamSet& params,
               const DecoderConfig& c) {
  const int N = static_cast<int>(anchors.size());
  require(N > 0, ErrorCode::kEmptyAnchors, "decode: no anchors");
  require(features.tape != nullptr && features.rows() == N, ErrorCode::kPrecondition,
          "decode: anchor features are not populated");
  require(features.cols() == c.feature_dim, ErrorCode::kContract, "decode: feature width mismatch");
  require(N <= c.max_tokens, ErrorCode::kConfig,
          "decode: " + std::to_string(N) + " anchors exceed the token cap " + std::to_string(c.max_tokens));
  ad::Tape& t = *features.tape;
  ad::Tensor pos({N, 3});
  for (int i = 0; i < N; ++i)
    for (int k = 0; k < 3; ++k) pos.data[i * 3 + k] = anchors[i][k];
  ad::Var x = ad::concat_cols({features, t.constant(std::move(pos))});
  x = ad::add_rowvec(ad::matmul(x, t.param(params.get("dec.embed.w"))), t.param(params.get("dec.embed.b")));
  for (int b = 0; b < c.blocks; ++b) x = attention_block(x, params, "dec.block" + std::to_string(b));
  ad::Var head = ad::add_rowvec(ad::matmul(x, t.param(params.get("dec.head.w"))),
                                t.param(params.get("dec.head.b")));
  return {ad::reshape(head, {N * c.gaussians_per_anchor, raw::kCount}), x};
}

GaussianScene forward_scene(const Decoded& decoded, const GaussianScene& layout) {
  GaussianScene s = layout;
  require(decoded.raw.numel() == s.raw.size(), ErrorCode::kContract,
          "forward_scene: decoder output does not match the scene layout");
  s.raw = decoded.raw.value().data;
  s.validate();
  return s;
}

}  // namespace asplat
