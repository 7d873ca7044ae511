#include "asplat/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <random>

#include <json.hpp>

#include "asplat/error.hpp"
#include "asplat/io.hpp"
#include "asplat/parallel.hpp"
#include "asplat/ply.hpp"
#include "asplat/render_op.hpp"

namespace asplat {

using nlohmann::json;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// Views used by optimizer step `step`: a cyclic window over the input split.
std::vector<CameraView> step_views(const std::vector<CameraView>& views, int per_step, int step) {
  const int n = static_cast<int>(views.size());
  if (per_step <= 0 || per_step >= n) return views;
  std::vector<CameraView> out;
  const int start = static_cast<int>((static_cast<long long>(step) * per_step) % n);
  for (int i = 0; i < per_step; ++i) out.push_back(views[(start + i) % n]);
  return out;
}

json trace_json(const std::vector<TraceRow>& rows) {
  json a = json::array();
  for (const auto& r : rows)
    a.push_back({r.step, r.scene, r.terms.render, r.terms.depth, r.terms.opacity, r.terms.scale,
                 r.terms.total});
  return a;
}

std::vector<TraceRow> trace_from(const json& a) {
  std::vector<TraceRow> rows;
  for (const auto& e : a) {
    TraceRow r;
    r.step = e[0].get<int>();
    r.scene = e[1].get<int>();
    r.terms = {e[2].get<double>(), e[3].get<double>(), e[4].get<double>(), e[5].get<double>(),
               e[6].get<double>()};
    rows.push_back(r);
  }
  return rows;
}

std::vector<ad::Parameter*> joined(std::initializer_list<nn::ParamSet*> sets) {
  std::vector<ad::Parameter*> out;
  for (auto* s : sets)
    for (auto* p : s->all()) out.push_back(p);
  return out;
}

void write_view(const fs::path& out, const std::string& name, const RenderOutput& r) {
  io::write_png(out / (name + ".png"), r.rgb);
  io::write_pfm(out / (name + ".pfm"), r.depth);
}

std::vector<CameraView> split_views(const SceneData& s, const std::string& split) {
  if (split == "novel") return s.novel;
  if (split == "input") return s.inputs;
  if (split == "all") {
    auto v = s.inputs;
    v.insert(v.end(), s.novel.begin(), s.novel.end());
    return v;
  }
  fail(ErrorCode::kInvalidArgument, "unknown split '" + split + "' (novel|input|all)");
}

GaussianScene layout_for(const SceneData& s, int k) {
  return make_scene(s.anchors.positions, s.anchors.normalization, k);
}

struct DecoderGraph {
  GaussianScene layout;
  AnchorFeatures features;
  Decoded decoded;
};

DecoderGraph decoder_graph(ad::Tape& tape, const SceneData& s, const RunConfig& cfg, Model& m) {
  DecoderGraph g;
  g.layout = layout_for(s, cfg.decoder.gaussians_per_anchor);
  g.features = lift_features(tape, s.anchors.positions, s.anchors.normalization, s.inputs, m.encoder, cfg.lift);
  g.decoded = decode(g.features.features, s.anchors.positions, m.decoder, cfg.decoder);
  return g;
}

RefineInputs refine_inputs(const GaussianScene& layout, const SceneData& s, const RunConfig& cfg,
                           const ad::Tensor* cached) {
  RefineInputs in;
  in.layout = &layout;
  in.views = &s.inputs;
  in.background = cfg.background;
  in.render = cfg.render;
  in.first_pass_errors = cached;
  return in;
}

void check_finite(const LossBreakdown& t, const char* stage, int step) {
  require(std::isfinite(t.total), ErrorCode::kDivergence,
          std::string(stage) + ": loss diverged at step " + std::to_string(step));
}

std::string config_hash(const RunConfig& cfg) { return io::hash_hex(cfg.to_json(-1)); }

}  // namespace

std::vector<int> view_subset(int total, int count) {
  require(count >= 1 && count <= total, ErrorCode::kInvalidArgument,
          "view subset of " + std::to_string(count) + " from " + std::to_string(total) + " views");
  std::vector<int> idx;
  for (int i = 0; i < count; ++i) idx.push_back(static_cast<int>(static_cast<long long>(i) * total / count));
  return idx;
}

SceneData load_scene(const fs::path& dir, const RunConfig& cfg, int input_views) {
  SceneData s;
  const io::Manifest m = io::load_manifest(dir);
  s.name = m.name;
  s.dir = dir;
  s.depth_provenance = m.depth_provenance;
  s.inputs = io::load_views(dir, "input");
  s.novel = io::load_views(dir, "novel");
  if (input_views > 0) {
    std::vector<CameraView> keep;
    for (int i : view_subset(static_cast<int>(s.inputs.size()), input_views)) keep.push_back(s.inputs[i]);
    s.inputs = std::move(keep);
  }
  s.anchors = build_anchors(s.inputs, cfg.anchors);
  return s;
}

double mean_color_baseline(const SceneData& s) {
  require(!s.novel.empty(), ErrorCode::kPrecondition, "baseline: novel split is empty");
  Vec3 sum = Vec3::Zero();
  double n = 0;
  for (const auto& v : s.inputs) {
    for (std::size_t p = 0; p < v.image.pixels(); ++p)
      for (int c = 0; c < 3; ++c) sum[c] += v.image.data[p * 3 + c];
    n += static_cast<double>(v.image.pixels());
  }
  const Vec3 mean = sum / n;
  double total = 0;
  for (const auto& v : s.novel) {
    Image flat(v.image.width, v.image.height, 3);
    for (std::size_t p = 0; p < flat.pixels(); ++p)
      for (int c = 0; c < 3; ++c) flat.data[p * 3 + c] = mean[c];
    total += psnr(flat, v.image);
  }
  return total / static_cast<double>(s.novel.size());
}

std::string trace_csv(const std::vector<TraceRow>& rows) {
  std::string s = "step,scene,total,render,depth,opacity,scale\n";
  for (const auto& r : rows)
    s += std::to_string(r.step) + "," + std::to_string(r.scene) + "," + fmt(r.terms.total) + "," +
         fmt(r.terms.render) + "," + fmt(r.terms.depth) + "," + fmt(r.terms.opacity) + "," +
         fmt(r.terms.scale) + "\n";
  return s;
}

GaussianScene init_fit_scene(const AnchorSet& anchors, int k, std::uint64_t seed) {
  GaussianScene scene = make_scene(anchors.positions, anchors.normalization, k);
  const auto& a = anchors.positions;
  const std::size_t n = a.size();
  // Mean nearest-anchor distance sets the initial footprint.
  double spacing = 0;
  if (n > 1) {
    std::vector<double> nearest(n);
    parallel_for(n, [&](std::size_t i) {
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < n; ++j)
        if (j != i) best = std::min(best, (a[i] - a[j]).norm());
      nearest[i] = best;
    });
    for (double d : nearest) spacing += d;
    spacing /= static_cast<double>(n);
  } else {
    spacing = 0.1;
  }
  const double s0 = std::clamp(0.5 * spacing, 2 * kScaleMin, 0.5 * kScaleMax);
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  std::uniform_real_distribution<double> jitter(-0.5, 0.5);
  for (std::size_t j = 0; j < scene.size(); ++j) {
    double* r = scene.raw_of(j);
    for (int c = 0; c < 3; ++c) r[raw::kOffset + c] = static_cast<float>(jitter(rng));
    for (int c = 0; c < 3; ++c) r[raw::kScale + c] = static_cast<float>(std::log(s0));
    r[raw::kRot] = 1.0;
  }
  return scene;
}

FitResult fit(const SceneData& s, const RunConfig& cfg_in) {
  const RunConfig cfg = cfg_in.resolved();
  require(!s.novel.empty(), ErrorCode::kPrecondition, "fit: novel split is empty");
  FitResult res;
  const auto t0 = Clock::now();
  const GaussianScene layout = init_fit_scene(s.anchors, cfg.decoder.gaussians_per_anchor, cfg.seed);
  ad::Parameter p{"raw", {static_cast<int>(layout.size()), raw::kCount}, layout.raw, {}, true};
  p.grad.assign(p.value.size(), 0.0);
  nn::Adam adam({&p}, {cfg.fit.lr});
  for (int step = 0; step < cfg.fit.steps; ++step) {
    ad::Tape tape;
    ad::Var raw = tape.param(p);
    const TotalLoss L = total_loss(raw, layout, step_views(s.inputs, cfg.fit.views_per_step, step), cfg.loss,
                                   cfg.background, cfg.render);
    check_finite(L.terms, "fit", step);
    std::fill(p.grad.begin(), p.grad.end(), 0.0);
    tape.backward(L.value);
    adam.step();
    res.trace.push_back({step, 0, L.terms});
  }
  res.scene = with_raw(layout, p.value).quantized();
  const double recon = seconds_since(t0);
  std::vector<ViewMetrics> views;
  for (const auto& v : s.novel)
    views.push_back(evaluate_view(render(res.scene, v.intrinsics, v.extrinsics, cfg.background, cfg.render), v));
  res.report = summarize(std::move(views), res.scene.size(), recon);
  res.baseline_psnr = mean_color_baseline(s);
  return res;
}

void write_fit_outputs(const fs::path& out, const SceneData& s, const RunConfig& cfg, const FitResult& r) {
  fs::create_directories(out / "renders");
  io::write_file(out / "scene.ply", write_ply(r.scene));
  io::write_text(out / "metrics.json", r.report.to_json());
  io::write_text(out / "trace.csv", trace_csv(r.trace));
  json summary = {{"scene", s.name},
                  {"num_gs", r.scene.size()},
                  {"anchors", s.anchors.positions.size()},
                  {"input_views", s.inputs.size()},
                  {"steps", cfg.fit.steps},
                  {"baseline_psnr", r.baseline_psnr},
                  {"max_offset", max_offset_deviation(r.scene)},
                  {"config_hash", config_hash(cfg)}};
  io::write_text(out / "fit.json", summary.dump(2));
  for (const auto& v : s.novel)
    write_view(out / "renders", v.name, render(r.scene, v.intrinsics, v.extrinsics, cfg.background, cfg.render));
}

void init_model(Model& m, const RunConfig& cfg_in) {
  const RunConfig cfg = cfg_in.resolved();
  std::mt19937_64 enc_rng(cfg.seed * 3 + 1), dec_rng(cfg.seed * 3 + 2), ref_rng(cfg.seed * 3 + 3);
  init_encoder(m.encoder, cfg.lift.feature_dim, enc_rng);
  init_decoder(m.decoder, cfg.decoder, dec_rng);
  init_refiner(m.refiner, cfg.refiner, ref_rng);
}

bool load_model(const fs::path& dir, const RunConfig& cfg_in, Model& m) {
  const RunConfig cfg = cfg_in.resolved();
  init_model(m, cfg);
  nn::load_checkpoint(dir / "stage1.ckpt", {{"encoder", &m.encoder}, {"decoder", &m.decoder}});
  if (!fs::exists(dir / "stage2.ckpt")) return false;
  nn::load_checkpoint(dir / "stage2.ckpt", {{"refiner", &m.refiner}});
  return true;
}

TrainResult train(const std::vector<fs::path>& dirs, const RunConfig& cfg_in, const fs::path& out,
                  const TrainOptions& opt) {
  const RunConfig cfg = cfg_in.resolved();
  require(!dirs.empty(), ErrorCode::kInvalidArgument, "train: no scenes given");
  fs::create_directories(out);
  std::vector<SceneData> scenes;
  for (const auto& d : dirs) scenes.push_back(load_scene(d, cfg));
  const int S = static_cast<int>(scenes.size());
  for (const auto& s : scenes)
    require(s.inputs.size() >= 2, ErrorCode::kPrecondition, "train: scene '" + s.name + "' needs >= 2 input views");

  TrainResult res;
  int budget = opt.stop_after;  // remaining steps before a simulated interruption
  auto interrupted = [&] { return budget == 0; };
  const std::string cfg_json = cfg.to_json(-1);

  Model m;
  init_model(m, cfg);

  // Stage 1: encoder + decoder on the full objective, scenes round-robin.
  const fs::path ck1 = out / "stage1.ckpt", part1 = out / "stage1.partial.ckpt";
  if (opt.resume && fs::exists(ck1)) {
    const auto lc = nn::load_checkpoint(ck1, {{"encoder", &m.encoder}, {"decoder", &m.decoder}});
    res.stage1 = trace_from(json::parse(lc.extra_json).at("trace"));
  } else {
    nn::Adam adam(joined({&m.encoder, &m.decoder}), {cfg.stage1.lr});
    if (opt.resume && fs::exists(part1)) {
      const auto lc = nn::load_checkpoint(part1, {{"encoder", &m.encoder}, {"decoder", &m.decoder}}, &adam);
      res.stage1 = trace_from(json::parse(lc.extra_json).at("trace"));
    }
    for (int step = static_cast<int>(res.stage1.size()); step < cfg.stage1.steps; ++step) {
      if (interrupted()) return res;
      const int si = step % S;
      const SceneData& s = scenes[si];
      ad::Tape tape;
      const DecoderGraph g = decoder_graph(tape, s, cfg, m);
      const TotalLoss L = total_loss(g.decoded.raw, g.layout, step_views(s.inputs, cfg.stage1.views_per_step, step),
                                     cfg.loss, cfg.background, cfg.render);
      check_finite(L.terms, "stage1", step);
      m.encoder.zero_grad();
      m.decoder.zero_grad();
      tape.backward(L.value);
      adam.step();
      res.stage1.push_back({step, si, L.terms});
      if (budget > 0) --budget;
      if (cfg.stage1.checkpoint_every > 0 && (step + 1) % cfg.stage1.checkpoint_every == 0 &&
          step + 1 < cfg.stage1.steps) {
        nn::save_checkpoint(part1, {"stage1", cfg_json, json{{"trace", trace_json(res.stage1)}}.dump(),
                                    {{"encoder", &m.encoder}, {"decoder", &m.decoder}}, &adam});
      }
    }
    nn::save_checkpoint(ck1, {"stage1", cfg_json, json{{"trace", trace_json(res.stage1)}}.dump(),
                              {{"encoder", &m.encoder}, {"decoder", &m.decoder}}, nullptr});
    fs::remove(part1);
  }
  io::write_text(out / "stage1_trace.csv", trace_csv(res.stage1));

  // Stage 2: the decoder is frozen, so its outputs and the first-pass error
  // tokens are computed once per scene from the stored checkpoint.
  Model frozen;
  init_model(frozen, cfg);
  nn::load_checkpoint(ck1, {{"encoder", &frozen.encoder}, {"decoder", &frozen.decoder}});
  frozen.encoder.set_trainable(false);
  frozen.decoder.set_trainable(false);
  struct Cached {
    GaussianScene layout;
    ad::Tensor raw, tokens, errors;
  };
  std::vector<Cached> cache(S);
  for (int i = 0; i < S; ++i) {
    ad::Tape tape;
    const DecoderGraph g = decoder_graph(tape, scenes[i], cfg, frozen);
    cache[i].layout = g.layout;
    cache[i].raw = g.decoded.raw.value();
    cache[i].tokens = g.decoded.tokens.value();
    const RefineInputs in = refine_inputs(cache[i].layout, scenes[i], cfg, nullptr);
    cache[i].errors = compute_error_tokens(tape.constant(cache[i].raw), in, cfg.refiner).features.value();
  }

  const fs::path ck2 = out / "stage2.ckpt", part2 = out / "stage2.partial.ckpt";
  if (opt.resume && fs::exists(ck2)) {
    const auto lc = nn::load_checkpoint(ck2, {{"refiner", &m.refiner}});
    res.stage2 = trace_from(json::parse(lc.extra_json).at("trace"));
  } else {
    nn::Adam adam(m.refiner.all(), {cfg.stage2.lr});
    if (opt.resume && fs::exists(part2)) {
      const auto lc = nn::load_checkpoint(part2, {{"refiner", &m.refiner}}, &adam);
      res.stage2 = trace_from(json::parse(lc.extra_json).at("trace"));
    }
    for (int step = static_cast<int>(res.stage2.size()); step < cfg.stage2.steps; ++step) {
      if (interrupted()) return res;
      const int si = step % S;
      const SceneData& s = scenes[si];
      const Cached& c = cache[si];
      ad::Tape tape;
      const RefineInputs in = refine_inputs(c.layout, s, cfg, &c.errors);
      ad::Var refined = refine(tape.constant(c.raw), tape.constant(c.tokens), in, m.refiner, cfg.refiner);
      const TotalLoss L = rendering_loss(refined, c.layout, step_views(s.inputs, cfg.stage2.views_per_step, step),
                                         cfg.loss, cfg.background, cfg.render);
      check_finite(L.terms, "stage2", step);
      m.refiner.zero_grad();
      tape.backward(L.value);
      adam.step();
      res.stage2.push_back({step, si, L.terms});
      if (budget > 0) --budget;
      if (cfg.stage2.checkpoint_every > 0 && (step + 1) % cfg.stage2.checkpoint_every == 0 &&
          step + 1 < cfg.stage2.steps) {
        nn::save_checkpoint(part2, {"stage2", cfg_json, json{{"trace", trace_json(res.stage2)}}.dump(),
                                    {{"refiner", &m.refiner}}, &adam});
      }
    }
    nn::save_checkpoint(ck2, {"stage2", cfg_json, json{{"trace", trace_json(res.stage2)}}.dump(),
                              {{"refiner", &m.refiner}}, nullptr});
    fs::remove(part2);
  }
  io::write_text(out / "stage2_trace.csv", trace_csv(res.stage2));

  json repro = {{"config_hash", io::hash_hex(cfg_json)},
                {"config", json::parse(cfg_json)},
                {"seed", cfg.seed},
                {"version", "0.1.0"},
                {"compiler", __VERSION__},
                {"stage1_checkpoint", io::hash_hex(io::read_file(ck1))},
                {"stage2_checkpoint", io::hash_hex(io::read_file(ck2))},
                {"scenes", json::array()}};
  for (const auto& s : scenes)
    repro["scenes"].push_back({{"name", s.name},
                               {"dir", s.dir.string()},
                               {"manifest_hash", io::hash_hex(io::read_file(s.dir / "manifest.json"))},
                               {"depth_provenance", s.depth_provenance}});
  io::write_text(out / "repro.json", repro.dump(2));
  res.completed = true;
  return res;
}

std::string StageTimes::to_json() const {
  return json{{"anchoring", anchoring}, {"decoding", decoding}, {"refining", refining}, {"rendering", rendering}}
      .dump(2);
}

FeedForward feed_forward(const SceneData& s, const RunConfig& cfg_in, Model& m, bool use_refiner) {
  const RunConfig cfg = cfg_in.resolved();
  FeedForward ff;
  // Anchoring is timed separately because load_scene already built the set.
  const auto ta = Clock::now();
  const AnchorSet check = build_anchors(s.inputs, cfg.anchors);
  ff.times.anchoring = seconds_since(ta);
  require(check.positions.size() == s.anchors.positions.size(), ErrorCode::kContract,
          "feed-forward: anchor set is not reproducible");

  const auto td = Clock::now();
  ad::Tape tape;
  const DecoderGraph g = decoder_graph(tape, s, cfg, m);
  ff.decoded = forward_scene(g.decoded, g.layout).quantized();
  ff.features = g.features.features.value().data;
  ff.times.decoding = seconds_since(td);

  ff.refined = ff.decoded;
  if (use_refiner) {
    const auto tr = Clock::now();
    const RefineInputs in = refine_inputs(g.layout, s, cfg, nullptr);
    ad::Var refined = refine(tape.constant(g.decoded.raw.value()), tape.constant(g.decoded.tokens.value()), in,
                             m.refiner, cfg.refiner);
    ff.refined = with_raw(g.layout, refined.value().data).quantized();
    ff.refined_applied = true;
    ff.times.refining = seconds_since(tr);
  }
  return ff;
}

RenderResult render_cmd(const RenderRequest& rq, const RunConfig& cfg_in, const fs::path& out) {
  const RunConfig cfg = cfg_in.resolved();
  fs::create_directories(out);
  RenderResult res;
  GaussianScene scene;
  json info;
  SceneData s;
  if (!rq.ply.empty()) {
    s.inputs = io::load_views(rq.scene_dir, "input");
    s.novel = io::load_views(rq.scene_dir, "novel");
    scene = read_ply(io::read_file(rq.ply));
    info["source"] = "ply";
  } else {
    require(!rq.checkpoint_dir.empty(), ErrorCode::kMissingCheckpoint,
            "render: feed-forward rendering needs a checkpoint directory");
    require(fs::exists(rq.checkpoint_dir / "stage1.ckpt"), ErrorCode::kMissingCheckpoint,
            "render: no stage1.ckpt in " + rq.checkpoint_dir.string());
    s = load_scene(rq.scene_dir, cfg);
    Model m;
    const bool has_refiner = load_model(rq.checkpoint_dir, cfg, m);
    const FeedForward ff = feed_forward(s, cfg, m, rq.use_refiner && has_refiner);
    scene = ff.refined;
    res.times = ff.times;
    io::write_file(out / "scene.ply", write_ply(scene));
    if (rq.dump_features)
      io::write_matrix(out / "features.bin", static_cast<int>(s.anchors.positions.size()), cfg.lift.feature_dim,
                       ff.features, json{{"pooling", to_string(cfg.lift.pooling)}}.dump());
    info["source"] = "feed-forward";
    info["refined"] = ff.refined_applied;
  }
  json tiles = json::object();
  for (const auto& v : split_views(s, rq.split)) {
    TileStats stats;
    const auto tr = Clock::now();
    const RenderOutput r = render(scene, v.intrinsics, v.extrinsics, cfg.background, cfg.render, &stats);
    res.times.rendering += seconds_since(tr);
    write_view(out, v.name, r);
    res.views.push_back(v.name);
    if (rq.dump_tiles)
      tiles[v.name] = {{"tiles_x", stats.tiles_x}, {"tiles_y", stats.tiles_y}, {"splat_counts", stats.splat_counts}};
  }
  if (rq.dump_tiles) io::write_text(out / "tiles.json", tiles.dump());
  res.num_gs = scene.size();
  info["num_gs"] = res.num_gs;
  info["views"] = res.views;
  info["times"] = json::parse(res.times.to_json());
  info["recon_time_s"] = res.times.anchoring + res.times.decoding + res.times.refining;
  io::write_text(out / "render.json", info.dump(2));
  return res;
}

MetricsReport eval_cmd(const fs::path& scene_dir, const fs::path& rendered_dir) {
  const auto novel = io::load_views(scene_dir, "novel");
  require(!novel.empty(), ErrorCode::kPrecondition, "eval: the novel split is empty");
  std::vector<ViewMetrics> views;
  for (const auto& v : novel) {
    RenderOutput r;
    r.rgb = io::read_png(rendered_dir / (v.name + ".png"));
    r.depth = io::read_pfm(rendered_dir / (v.name + ".pfm"));
    require(r.rgb.same_shape(v.image) && r.depth.same_shape(v.depth), ErrorCode::kPrecondition,
            "eval: rendered view '" + v.name + "' has the wrong size");
    views.push_back(evaluate_view(r, v));
  }
  std::size_t num_gs = 0;
  double recon = 0.0;
  if (fs::exists(rendered_dir / "render.json")) {
    const auto j = json::parse(io::read_text(rendered_dir / "render.json"));
    num_gs = j.value("num_gs", std::size_t{0});
    recon = j.value("recon_time_s", 0.0);
  }
  return summarize(std::move(views), num_gs, recon);
}

std::string ablation_csv(const std::vector<AblationRow>& rows) {
  std::string s = "axis,value,num_gs,psnr,ssim,absrel,delta1,recon_time_s\n";
  for (const auto& r : rows)
    s += r.axis + "," + r.value + "," + std::to_string(r.report.num_gs) + "," + fmt(r.report.psnr) + "," +
         fmt(r.report.ssim) + "," + fmt(r.report.absrel) + "," + fmt(r.report.delta1) + "," +
         fmt(r.report.recon_time_s) + "\n";
  return s;
}

std::string ablation_json(const std::vector<AblationRow>& rows) {
  json a = json::array();
  for (const auto& r : rows)
    a.push_back({{"axis", r.axis}, {"value", r.value}, {"metrics", json::parse(r.report.to_json())}});
  return a.dump(2);
}

std::vector<AblationRow> ablate(const std::vector<fs::path>& dirs, const std::string& axis,
                                const RunConfig& cfg_in, const fs::path& out) {
  const RunConfig cfg = cfg_in.resolved();
  require(!dirs.empty(), ErrorCode::kInvalidArgument, "ablate: no scenes given");
  fs::create_directories(out);
  std::vector<AblationRow> rows;

  // One row pools the novel views of every scene.
  auto fit_row = [&](const std::string& value, const RunConfig& c, int input_views) {
    std::vector<ViewMetrics> views;
    std::size_t num_gs = 0;
    double recon = 0;
    for (const auto& d : dirs) {
      const SceneData s = load_scene(d, c, input_views);
      const FitResult r = fit(s, c);
      views.insert(views.end(), r.report.views.begin(), r.report.views.end());
      num_gs += r.report.num_gs;
      recon += r.report.recon_time_s;
    }
    rows.push_back({axis, value, summarize(std::move(views), num_gs, recon)});
  };

  if (axis == "pooling") {
    for (Pooling p : {Pooling::kAverage, Pooling::kMax, Pooling::kFifo}) {
      RunConfig c = cfg;
      c.lift.pooling = p;
      const fs::path run = out / ("pooling_" + to_string(p));
      train(dirs, c, run);
      Model m;
      const bool has_refiner = load_model(run, c, m);
      std::vector<ViewMetrics> views;
      std::size_t num_gs = 0;
      double recon = 0;
      for (const auto& d : dirs) {
        const SceneData s = load_scene(d, c);
        const FeedForward ff = feed_forward(s, c, m, has_refiner);
        for (const auto& v : s.novel)
          views.push_back(evaluate_view(render(ff.refined, v.intrinsics, v.extrinsics, c.background, c.render), v));
        num_gs += ff.refined.size();
        recon += ff.times.anchoring + ff.times.decoding + ff.times.refining;
      }
      rows.push_back({axis, to_string(p), summarize(std::move(views), num_gs, recon)});
    }
  } else if (axis == "multiplicity") {
    for (int k : {1, 2, 4, 8, 16}) {
      RunConfig c = cfg;
      c.decoder.gaussians_per_anchor = k;
      fit_row(std::to_string(k), c, 0);
    }
  } else if (axis == "views") {
    for (int v : {2, 4, 8}) fit_row(std::to_string(v), cfg, v);
  } else {
    fail(ErrorCode::kInvalidArgument, "ablate: unknown axis '" + axis + "' (pooling|multiplicity|views)");
  }
  io::write_text(out / ("ablate_" + axis + ".json"), ablation_json(rows));
  io::write_text(out / ("ablate_" + axis + ".csv"), ablation_csv(rows));
  return rows;
}

AnchorSet anchors_cmd(const fs::path& scene_dir, const RunConfig& cfg, const fs::path& out) {
  fs::create_directories(out);
  const SceneData s = load_scene(scene_dir, cfg);
  const AnchorSet& a = s.anchors;
  ply::Table t;
  t.properties = {{"x", ply::Type::kFloat32}, {"y", ply::Type::kFloat32}, {"z", ply::Type::kFloat32}};
  t.rows = a.positions.size();
  for (const auto& p : a.positions) {
    const Vec3 w = a.normalization.denormalize(p);
    t.values.insert(t.values.end(), {w.x(), w.y(), w.z()});
  }
  io::write_file(out / "anchors.ply", ply::write(t));
  const json info = {{"count", a.positions.size()},
                     {"source_points", a.source_count},
                     {"occupied_voxels", a.occupied_voxels},
                     {"voxel_size", a.voxel_size},
                     {"seed_index", a.seed_index},
                     {"center", {a.normalization.center.x(), a.normalization.center.y(), a.normalization.center.z()}},
                     {"half_extent", a.normalization.half_extent}};
  io::write_text(out / "anchors.json", info.dump(2));
  return a;
}

}  // namespace asplat
