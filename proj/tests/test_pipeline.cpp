#include <doctest.h>

#include <cmath>
#include <filesystem>

#include <json.hpp>

#include "asplat/io.hpp"
#include "asplat/parallel.hpp"
#include "asplat/pipeline.hpp"
#include "asplat/synthetic.hpp"
#include "test_util.hpp"

using namespace asplat;
using asplat::testing::code_of;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("asplat_test_pipe_" + name);
  fs::remove_all(p);
  return p;
}

RunConfig tiny_config() {
  RunConfig c;
  c.anchors.cap = 48;
  c.lift.feature_dim = 8;
  c.decoder.width = 16;
  c.decoder.blocks = 1;
  c.refiner.width = 16;
  c.refiner.decoder_width = 16;
  c.refiner.error_dim = 12;
  c.refiner.serial_blocks = 1;
  c.fit.steps = 6;
  c.fit.views_per_step = 2;
  c.stage1.steps = 6;
  c.stage1.views_per_step = 2;
  c.stage1.checkpoint_every = 2;
  c.stage2.steps = 4;
  c.stage2.views_per_step = 2;
  c.stage2.checkpoint_every = 2;
  c.gen.width = 48;
  c.gen.height = 32;
  c.gen.input_views = 4;
  return c;
}

fs::path tiny_scene(const std::string& preset, std::uint64_t seed = 0, int input_views = 4) {
  const fs::path dir = fs::temp_directory_path() / ("asplat_test_scene_" + preset + std::to_string(seed) + "_" +
                                                    std::to_string(input_views));
  if (fs::exists(dir / "manifest.json")) return dir;
  synth::GenConfig g = tiny_config().gen;
  g.preset = preset;
  g.seed = seed;
  g.input_views = input_views;
  synth::gen_scene(dir, g);
  return dir;
}

std::vector<std::uint8_t> bytes(const fs::path& p) { return io::read_file(p); }

}  // namespace

TEST_CASE("view subsets are spread over the orbit") {
  CHECK(view_subset(8, 2) == std::vector<int>{0, 4});
  CHECK(view_subset(8, 4) == std::vector<int>{0, 2, 4, 6});
  CHECK(view_subset(8, 8).size() == 8);
  CHECK(code_of([] { view_subset(4, 8); }) == ErrorCode::kInvalidArgument);
}

TEST_CASE("fit: loss goes down, NumGS = k x budget, and the offset bound holds") {
  RunConfig c = tiny_config();
  c.fit.steps = 20;
  c.fit.views_per_step = 0;
  c.fit.lr = 5e-3;
  const SceneData s = load_scene(tiny_scene("box-room"), c);
  CHECK(s.anchors.positions.size() == 48);
  const FitResult r = fit(s, c);
  REQUIRE(r.trace.size() == 20);
  for (int i = 1; i < 20; ++i) CHECK(r.trace[i].terms.total < r.trace[i - 1].terms.total);
  CHECK(r.report.num_gs == 4 * 48);
  CHECK(r.report.finite());
  CHECK(max_offset_deviation(r.scene) <= kOffsetBound);
  CHECK(std::isfinite(r.baseline_psnr));
}

TEST_CASE("fit NumGS does not depend on the number of input views") {
  RunConfig c = tiny_config();
  c.fit.steps = 2;
  const fs::path dir = tiny_scene("box-room", 0, 8);
  std::size_t first = 0;
  for (int v : {2, 4, 8}) {
    const SceneData s = load_scene(dir, c, v);
    CHECK(s.inputs.size() == static_cast<std::size_t>(v));
    const FitResult r = fit(s, c);
    if (first == 0) first = r.report.num_gs;
    CHECK(r.report.num_gs == first);
  }
}

TEST_CASE("fit outputs are identical at 1 and 4 threads") {
  const RunConfig c = tiny_config();
  const fs::path dir = tiny_scene("sphere-field");
  std::vector<std::vector<std::uint8_t>> outs[2];
  for (int t : {1, 4}) {
    set_thread_count(t);
    const SceneData s = load_scene(dir, c);
    const FitResult r = fit(s, c);
    const fs::path out = scratch("threads" + std::to_string(t));
    write_fit_outputs(out, s, c, r);
    for (const char* f : {"scene.ply", "trace.csv", "renders/novel_000.png", "renders/novel_000.pfm"})
      outs[t == 4].push_back(bytes(out / f));
  }
  set_thread_count(1);
  CHECK(outs[0] == outs[1]);
}

TEST_CASE("train: round robin, resume equivalence, freeze contract") {
  const RunConfig c = tiny_config();
  const std::vector<fs::path> scenes{tiny_scene("box-room"), tiny_scene("textured-planes")};
  const fs::path full = scratch("train_full");
  const TrainResult a = train(scenes, c, full);
  REQUIRE(a.completed);
  REQUIRE(a.stage1.size() == 6);
  REQUIRE(a.stage2.size() == 4);
  for (const auto& row : a.stage1) CHECK(row.scene == row.step % 2);
  for (const auto& row : a.stage2) CHECK(row.scene == row.step % 2);
  for (const char* f : {"stage1.ckpt", "stage2.ckpt", "stage1_trace.csv", "stage2_trace.csv", "repro.json"})
    CHECK(fs::exists(full / f));
  CHECK_FALSE(fs::exists(full / "stage1.partial.ckpt"));
  const auto repro = nlohmann::json::parse(io::read_text(full / "repro.json"));
  CHECK(repro.contains("config_hash"));
  CHECK(repro.at("scenes").size() == 2);

  // Interrupted mid stage 1 (after its checkpoint at step 4), then mid stage 2.
  const fs::path part = scratch("train_resume");
  CHECK_FALSE(train(scenes, c, part, {false, 5}).completed);
  CHECK(fs::exists(part / "stage1.partial.ckpt"));
  const auto s1_hash_before = io::hash_hex(bytes(full / "stage1.ckpt"));
  CHECK_FALSE(train(scenes, c, part, {true, 4}).completed);
  CHECK(fs::exists(part / "stage1.ckpt"));
  const auto frozen = bytes(part / "stage1.ckpt");
  const TrainResult b = train(scenes, c, part, {true, -1});
  REQUIRE(b.completed);
  CHECK(trace_csv(b.stage1) == trace_csv(a.stage1));
  CHECK(trace_csv(b.stage2) == trace_csv(a.stage2));
  CHECK(io::read_text(part / "stage2_trace.csv") == io::read_text(full / "stage2_trace.csv"));
  CHECK(bytes(part / "stage2.ckpt") == bytes(full / "stage2.ckpt"));
  // Stage 2 left the stage-1 checkpoint untouched.
  CHECK(bytes(part / "stage1.ckpt") == frozen);
  CHECK(io::hash_hex(bytes(full / "stage1.ckpt")) == s1_hash_before);

  // Zero-initialized refiner head: stage 2 starts from the stage-1 rendering term.
  Model m;
  load_model(full, c, m);
  m.refiner = nn::ParamSet();
  std::mt19937_64 rng(0);
  init_refiner(m.refiner, c.refiner, rng);
  const SceneData s0 = load_scene(scenes[0], c);
  const FeedForward ff = feed_forward(s0, c, m, false);
  ad::Tape tape;
  std::vector<CameraView> views(s0.inputs.begin(), s0.inputs.begin() + 2);
  const TotalLoss L = total_loss(tape.constant(ad::Tensor({static_cast<int>(ff.decoded.size()), raw::kCount},
                                                          ff.decoded.raw)),
                                 ff.decoded, views, c.loss, c.background, c.render);
  CHECK(a.stage2[0].terms.render == doctest::Approx(L.terms.render).epsilon(1e-5));
}

TEST_CASE("render: PLY path reproduces fit renders, feed-forward reports all stages") {
  const RunConfig c = tiny_config();
  const fs::path dir = tiny_scene("box-room");
  const SceneData s = load_scene(dir, c);
  const FitResult r = fit(s, c);
  const fs::path fit_out = scratch("render_fit");
  write_fit_outputs(fit_out, s, c, r);
  RenderRequest rq;
  rq.scene_dir = dir;
  rq.ply = fit_out / "scene.ply";
  rq.dump_tiles = true;
  const fs::path ply_out = scratch("render_ply");
  const RenderResult rr = render_cmd(rq, c, ply_out);
  CHECK(rr.num_gs == r.scene.size());
  for (const auto& v : s.novel) {
    CHECK(bytes(ply_out / (v.name + ".png")) == bytes(fit_out / "renders" / (v.name + ".png")));
    CHECK(bytes(ply_out / (v.name + ".pfm")) == bytes(fit_out / "renders" / (v.name + ".pfm")));
  }
  CHECK(fs::exists(ply_out / "tiles.json"));

  // Feed-forward with a checkpoint, with and without the refiner.
  RunConfig t = c;
  t.stage2.lr = 1e-2;
  const fs::path ck = scratch("render_ck");
  train({dir}, t, ck);
  rq.ply.clear();
  rq.checkpoint_dir = ck;
  rq.dump_features = true;
  const fs::path with = scratch("render_with"), without = scratch("render_without");
  const RenderResult a = render_cmd(rq, t, with);
  rq.use_refiner = false;
  const RenderResult b = render_cmd(rq, t, without);
  CHECK(a.num_gs == b.num_gs);
  CHECK(bytes(with / "scene.ply") != bytes(without / "scene.ply"));
  const auto info = nlohmann::json::parse(io::read_text(with / "render.json"));
  for (const char* k : {"anchoring", "decoding", "refining", "rendering"}) CHECK(info.at("times").contains(k));
  CHECK(info.at("refined").get<bool>());
  CHECK(fs::exists(with / "features.bin"));
  CHECK(fs::exists(with / "features.bin.json"));
  const GaussianScene refined = read_ply(bytes(with / "scene.ply"));
  CHECK(max_offset_deviation(refined) <= kOffsetBound);

  rq.checkpoint_dir = scratch("no_checkpoint");
  CHECK(code_of([&] { render_cmd(rq, t, scratch("render_missing")); }) == ErrorCode::kMissingCheckpoint);
}

TEST_CASE("eval: ground truth against itself, and per-view averaging") {
  const fs::path dir = tiny_scene("textured-planes");
  const fs::path out = scratch("eval_gt");
  fs::create_directories(out);
  const auto novel = io::load_views(dir, "novel");
  for (const auto& v : novel) {
    fs::copy_file(dir / "images" / (v.name + ".png"), out / (v.name + ".png"));
    fs::copy_file(dir / "depth" / (v.name + ".pfm"), out / (v.name + ".pfm"));
  }
  const MetricsReport r = eval_cmd(dir, out);
  CHECK(std::isinf(r.psnr));
  CHECK(r.ssim == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(r.absrel == 0.0);
  CHECK(r.delta1 == 1.0);
  CHECK(r.finite());
  const MetricsReport back = MetricsReport::from_json(r.to_json());
  CHECK(std::isinf(back.psnr));

  // Perturbed renders: the aggregate is the mean of the per-view values.
  Image noisy = io::read_png(out / (novel[0].name + ".png"));
  for (std::size_t i = 0; i < noisy.data.size(); i += 3) noisy.data[i] = 1.0 - noisy.data[i];
  io::write_png(out / (novel[0].name + ".png"), noisy);
  const MetricsReport p = eval_cmd(dir, out);
  double mean = 0;
  for (const auto& v : p.views) mean += v.ssim;
  CHECK(std::abs(mean / p.views.size() - p.ssim) <= 1e-12);
  CHECK(code_of([&] { eval_cmd(dir, scratch("eval_missing")); }) == ErrorCode::kIo);
}

TEST_CASE("ablation harness row counts and NumGS patterns") {
  RunConfig c = tiny_config();
  c.fit.steps = 1;
  c.stage1.steps = 1;
  c.stage2.steps = 1;
  const std::vector<fs::path> scenes{tiny_scene("box-room", 0, 8)};
  const fs::path out = scratch("ablate");
  const auto pool = ablate(scenes, "pooling", c, out);
  CHECK(pool.size() == 3);
  const auto mult = ablate(scenes, "multiplicity", c, out);
  REQUIRE(mult.size() == 5);
  const int ks[] = {1, 2, 4, 8, 16};
  for (int i = 0; i < 5; ++i) CHECK(mult[i].report.num_gs == static_cast<std::size_t>(ks[i]) * 48);
  const auto views = ablate(scenes, "views", c, out);
  REQUIRE(views.size() == 3);
  for (const auto& r : views) CHECK(r.report.num_gs == views[0].report.num_gs);
  for (const auto* rows : {&pool, &mult, &views})
    for (const auto& r : *rows) CHECK(r.report.finite());
  for (const char* f : {"ablate_pooling.csv", "ablate_multiplicity.json", "ablate_views.csv"}) CHECK(fs::exists(out / f));
  CHECK(code_of([&] { ablate(scenes, "color", c, out); }) == ErrorCode::kInvalidArgument);
}

TEST_CASE("anchors command writes the anchor cloud") {
  const RunConfig c = tiny_config();
  const fs::path out = scratch("anchors");
  const AnchorSet a = anchors_cmd(tiny_scene("box-room"), c, out);
  CHECK(a.positions.size() == 48);
  CHECK(fs::exists(out / "anchors.ply"));
  CHECK(nlohmann::json::parse(io::read_text(out / "anchors.json")).at("count") == 48);
}
