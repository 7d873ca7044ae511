// Acceptance run: one PASS/FAIL line per criterion, exit status 0 only when all pass.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "asplat/anchor_sampler.hpp"
#include "asplat/cameras.hpp"
#include "asplat/io.hpp"
#include "asplat/objectives.hpp"
#include "asplat/parallel.hpp"
#include "asplat/pipeline.hpp"
#include "asplat/rasterizer.hpp"
#include "asplat/refiner.hpp"
#include "asplat/synthetic.hpp"
#include "oracles.hpp"

using namespace asplat;
using nlohmann::json;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

fs::path g_root;
double g_max_offset = 0.0;  // over every scene produced in this run
int g_offset_scenes = 0;

void track_offsets(const GaussianScene& s) {
  g_max_offset = std::max(g_max_offset, max_offset_deviation(s));
  ++g_offset_scenes;
}

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

double seconds(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

Mat3 random_rotation(std::mt19937_64& rng) {
  Vec4 q(uniform(rng, -1, 1), uniform(rng, -1, 1), uniform(rng, -1, 1), uniform(rng, -1, 1));
  q.normalize();
  return Eigen::Quaterniond(q[0], q[1], q[2], q[3]).toRotationMatrix();
}

fs::path scene_dir(const std::string& name, synth::GenConfig g) {
  const fs::path d = g_root / name;
  fs::remove_all(d);
  synth::gen_scene(d, g);
  return d;
}

// 1: tiled forward against the per-pixel compositor.
Outcome rasterizer_oracle() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(1001);
  double worst = 0.0;
  for (int t = 0; t < 50; ++t) {
    SplatInput in;
    const int n = 1 + static_cast<int>(uniform(rng, 0, 256));
    for (int i = 0; i < n; ++i) {
      in.means.emplace_back(uniform(rng, -1.5, 1.5), uniform(rng, -1.5, 1.5), uniform(rng, 1.5, 7));
      in.scales.emplace_back(uniform(rng, 0.01, 0.4), uniform(rng, 0.01, 0.4), uniform(rng, 0.01, 0.4));
      in.rotations.push_back(Vec4(uniform(rng, -1, 1), uniform(rng, -1, 1), uniform(rng, -1, 1),
                                  uniform(rng, -1, 1)).normalized());
      in.colors.emplace_back(uniform(rng, 0, 1), uniform(rng, 0, 1), uniform(rng, 0, 1));
      in.opacities.push_back(uniform(rng, 0.02, 0.99));
    }
    Intrinsics K;
    K.width = K.height = 64;
    K.fx = uniform(rng, 30, 90);
    K.fy = K.fx * uniform(rng, 0.9, 1.1);
    K.cx = 32 + uniform(rng, -3, 3);
    K.cy = 32 + uniform(rng, -3, 3);
    const Vec3 bg(uniform(rng, 0, 1), uniform(rng, 0, 1), uniform(rng, 0, 1));
    const RenderOutput r = rasterize(in, K, Extrinsics{}, bg);
    const RenderOutput o = oracle::composite(in, K, Extrinsics{}, bg);
    for (const auto* pair : {&r.rgb, &r.depth, &r.alpha}) {
      const Image& a = *pair;
      const Image& b = pair == &r.rgb ? o.rgb : pair == &r.depth ? o.depth : o.alpha;
      for (std::size_t i = 0; i < a.data.size(); ++i) worst = std::max(worst, std::abs(a.data[i] - b.data[i]));
    }
  }
  const double t = seconds(t0);
  return {worst <= 1e-5 && t < 60.0, "max abs " + fmt("%.3g", worst) + ", " + fmt("%.2f", t) + " s"};
}

// 2: analytic gradients of total_loss against central differences.
Outcome gradients() {
  RunConfig cfg;
  cfg.anchors.cap = 12;
  cfg.lift.feature_dim = 4;
  cfg.decoder.width = 8;
  cfg.decoder.blocks = 1;
  cfg.refiner.width = 8;
  cfg.refiner.error_dim = 12;
  cfg.refiner.serial_blocks = 1;
  cfg.refiner.window = 8;
  cfg.refiner.passes = 1;
  cfg.gen.width = 32;
  cfg.gen.height = 24;
  cfg.gen.input_views = 2;
  cfg.gen.novel_views = 1;
  cfg = cfg.resolved();
  const SceneData s = load_scene(scene_dir("grad_scene", cfg.gen), cfg);
  Model m;
  init_model(m, cfg);
  std::mt19937_64 rng(77);
  // Move every weight off its initial value so no group sits at a symmetric point.
  for (auto* set : {&m.encoder, &m.decoder, &m.refiner})
    for (auto* q : set->all())
      for (auto& v : q->value) v += 0.05 * uniform(rng, -1, 1);
  const GaussianScene layout = make_scene(s.anchors.positions, s.anchors.normalization,
                                          cfg.decoder.gaussians_per_anchor);

  RefineInputs in;
  in.layout = &layout;
  in.views = &s.inputs;
  in.background = cfg.background;
  in.render = cfg.render;
  // Error tokens are sampled at positions that carry no gradient, so they are
  // lifted once from the unperturbed decoder output and held fixed.
  ad::Tensor errors;
  {
    ad::Tape tape;
    const AnchorFeatures f = lift_features(tape, s.anchors.positions, s.anchors.normalization, s.inputs,
                                           m.encoder, cfg.lift);
    const Decoded d = decode(f.features, s.anchors.positions, m.decoder, cfg.decoder);
    errors = compute_error_tokens(tape.constant(d.raw.value()), in, cfg.refiner).features.value();
  }
  in.first_pass_errors = &errors;

  // Network path: features -> decoder -> refiner -> total_loss.
  auto build = [&](ad::Tape& tape) {
    const AnchorFeatures f = lift_features(tape, s.anchors.positions, s.anchors.normalization, s.inputs,
                                           m.encoder, cfg.lift);
    const Decoded d = decode(f.features, s.anchors.positions, m.decoder, cfg.decoder);
    const ad::Var out = refine(d.raw, d.tokens, in, m.refiner, cfg.refiner);
    return total_loss(out, layout, s.inputs, cfg.loss, cfg.background, cfg.render).value;
  };
  auto loss = [&] {
    ad::Tape tape;
    return build(tape).item();
  };
  for (auto* set : {&m.encoder, &m.decoder, &m.refiner}) {
    set->set_trainable(true);
    set->zero_grad();
  }
  {
    ad::Tape tape;
    tape.backward(build(tape));
  }

  // Raw Gaussian parameters straight into total_loss.
  GaussianScene direct = init_fit_scene(s.anchors, cfg.decoder.gaussians_per_anchor, 5);
  for (auto& v : direct.raw) v += 0.2 * uniform(rng, -1, 1);
  ad::Parameter raw{"raw", {static_cast<int>(direct.size()), raw::kCount}, direct.raw, {}, true};
  raw.grad.assign(raw.value.size(), 0.0);
  auto raw_loss = [&] {
    ad::Tape tape;
    return total_loss(tape.param(raw), layout, s.inputs, cfg.loss, cfg.background, cfg.render).value.item();
  };
  {
    ad::Tape tape;
    tape.backward(total_loss(tape.param(raw), layout, s.inputs, cfg.loss, cfg.background, cfg.render).value);
  }

  const double h = 1e-4, rel = 2e-3, floor = 1e-8;
  int checked = 0, failed = 0;
  double worst = 0.0;
  std::map<std::string, int> per_group;
  auto probe = [&](const std::string& group, ad::Parameter& p, std::size_t stride,
                   const std::function<double()>& f) {
    for (std::size_t i = stride / 2; i < p.value.size(); i += stride) {
      const double keep = p.value[i];
      p.value[i] = keep + h;
      const double fp = f();
      p.value[i] = keep - h;
      const double fm = f();
      p.value[i] = keep;
      const double fd = (fp - fm) / (2 * h);
      const double diff = std::abs(fd - p.grad[i]);
      const double scale = std::max(std::abs(fd), std::abs(p.grad[i]));
      const bool ok = diff <= floor || diff <= rel * scale;
      if (diff > floor) worst = std::max(worst, diff / scale);
      ++checked;
      ++per_group[group];
      if (!ok) {
        ++failed;
        std::fprintf(stderr, "  gradient mismatch %s[%zu]: analytic %.9g fd %.9g\n", p.name.c_str(), i,
                     p.grad[i], fd);
      }
    }
  };
  for (auto* q : m.encoder.all()) probe("encoder", *q, std::max<std::size_t>(1, q->value.size() / 8), loss);
  for (auto* q : m.decoder.all()) {
    const bool attn = q->name.find(".wq") != std::string::npos || q->name.find(".wk") != std::string::npos ||
                      q->name.find(".wv") != std::string::npos || q->name.find(".wo") != std::string::npos;
    const bool head = q->name.rfind("dec.head", 0) == 0;
    probe(attn ? "attention" : head ? "head" : "decoder", *q,
          std::max<std::size_t>(1, q->value.size() / (attn || head ? 8 : 2)), loss);
  }
  for (auto* q : m.refiner.all()) probe("refiner", *q, std::max<std::size_t>(1, q->value.size() / 4), loss);
  probe("raw", raw, 29, raw_loss);

  std::ostringstream os;
  os << checked << " params (";
  bool first = true;
  for (const auto& [g, n] : per_group) {
    os << (first ? "" : " ") << g << " " << n;
    first = false;
  }
  os << "), " << failed << " over tolerance, worst rel " << fmt("%.2g", worst);
  const bool spans = per_group["encoder"] && per_group["attention"] && per_group["head"] && per_group["refiner"] &&
                     per_group["raw"];
  return {failed == 0 && checked >= 100 && spans, os.str()};
}

// 3: project/backproject identity and the Plücker constraint.
Outcome geometry() {
  std::mt19937_64 rng(3003);
  double worst = 0.0, plucker = 0.0;
  for (int i = 0; i < 10000; ++i) {
    Intrinsics K;
    K.width = 32 + static_cast<int>(uniform(rng, 0, 200));
    K.height = 32 + static_cast<int>(uniform(rng, 0, 200));
    K.fx = uniform(rng, 20, 400);
    K.fy = uniform(rng, 20, 400);
    K.cx = uniform(rng, 0.3, 0.7) * K.width;
    K.cy = uniform(rng, 0.3, 0.7) * K.height;
    Extrinsics E;
    E.R = random_rotation(rng);
    E.T = Vec3(uniform(rng, -5, 5), uniform(rng, -5, 5), uniform(rng, -5, 5));
    const double u = uniform(rng, 0, K.width), v = uniform(rng, 0, K.height), d = uniform(rng, 0.1, 20);
    const Vec3 P = backproject_pixel(u, v, d, K, E);
    const Projection p = project_point(P, K, E);
    worst = std::max({worst, std::abs(p.u - u), std::abs(p.v - v), std::abs(p.z - d)});
    const Vec6 r = ray_embedding(static_cast<int>(u), static_cast<int>(v), K, E);
    plucker = std::max(plucker, std::abs(r.head<3>().dot(r.tail<3>())));
  }
  return {worst <= 1e-9 && plucker <= 1e-12,
          "round trip " + fmt("%.3g", worst) + ", d.m " + fmt("%.3g", plucker) + " over 1e4 draws"};
}

// 4: farthest point sampling against the quadratic oracle.
Outcome fps_exact() {
  std::mt19937_64 rng(4004);
  int mismatches = 0;
  for (int t = 0; t < 100; ++t) {
    const std::size_t n = 1 + static_cast<std::size_t>(uniform(rng, 0, 512));
    std::vector<Vec3> pts(n);
    for (auto& p : pts) p = Vec3(uniform(rng, -1, 1), uniform(rng, -1, 1), uniform(rng, -1, 1));
    // Some clouds carry exact duplicates to exercise tie breaking.
    if (t % 4 == 0)
      for (std::size_t i = 0; i + 1 < n; i += 7) pts[i + 1] = pts[i];
    const std::size_t k = 1 + static_cast<std::size_t>(uniform(rng, 0, std::min<double>(n, 64)));
    const std::size_t seed = static_cast<std::size_t>(uniform(rng, 0, n));
    if (fps(pts, k, seed) != oracle::fps(pts, k, seed)) ++mismatches;
  }
  return {mismatches == 0, std::to_string(mismatches) + " of 100 clouds differ"};
}

// 5: fixed budget across input-view counts.
Outcome numgs_invariance() {
  RunConfig cfg;
  cfg.anchors.cap = 512;
  cfg.fit.steps = 200;
  cfg.gen.width = 64;
  cfg.gen.height = 48;
  const fs::path dir = scene_dir("views_scene", cfg.gen);
  std::vector<double> ps;
  std::set<std::size_t> gs;
  std::ostringstream os;
  for (int V : {2, 4, 8}) {
    const FitResult r = fit(load_scene(dir, cfg, V), cfg);
    track_offsets(r.scene);
    ps.push_back(r.report.psnr);
    gs.insert(r.report.num_gs);
    os << "V=" << V << " " << fmt("%.2f", r.report.psnr) << " dB/" << r.report.num_gs << " GS  ";
  }
  const bool mono = ps[1] >= ps[0] - 0.3 && ps[2] >= ps[1] - 0.3;
  return {gs.size() == 1 && mono, os.str()};
}

// 6: direct fit quality floor at 96x128.
Outcome fit_quality() {
  RunConfig cfg;  // defaults: box-room 128x96, 8 input / 2 novel views
  const fs::path dir = scene_dir("fit_scene", cfg.gen);
  const auto t0 = Clock::now();
  const FitResult r = fit(load_scene(dir, cfg), cfg);
  const double t = seconds(t0);
  track_offsets(r.scene);
  const auto& m = r.report;
  std::ostringstream os;
  os << "psnr " << fmt("%.2f", m.psnr) << " vs baseline " << fmt("%.2f", r.baseline_psnr) << ", delta1 "
     << fmt("%.4f", m.delta1) << ", absrel " << fmt("%.4f", m.absrel) << ", " << cfg.fit.steps << " steps in "
     << fmt("%.1f", t) << " s";
  const bool ok = m.psnr >= r.baseline_psnr + 8.0 && m.delta1 >= 0.9 && m.absrel <= 0.1 &&
                  cfg.fit.steps <= 2000 && t <= 600.0;
  return {ok, os.str()};
}

RunConfig train_config(std::uint64_t seed) {
  RunConfig cfg;
  cfg.seed = seed;
  cfg.anchors.cap = 256;
  cfg.gen.width = 64;
  cfg.gen.height = 48;
  cfg.gen.input_views = 4;
  cfg.stage1.steps = 100;
  cfg.stage2.steps = 50;
  cfg.stage1.views_per_step = 2;
  cfg.stage2.views_per_step = 2;
  return cfg;
}

std::vector<fs::path> suite(const RunConfig& cfg, const std::string& tag) {
  std::vector<fs::path> dirs;
  for (std::string p : {"box-room", "textured-planes", "sphere-field"}) {
    synth::GenConfig g = cfg.gen;
    g.preset = p;
    g.seed = cfg.seed;
    dirs.push_back(scene_dir(tag + "_" + p, g));
  }
  return dirs;
}

Outcome g_freeze;

// 7 (and 8 from the first seed): refiner gain over three seeds.
Outcome refiner_gain() {
  double gain_sum = 0.0;
  bool numgs_same = true;
  std::ostringstream os;
  for (std::uint64_t seed : {0, 1, 2}) {
    const RunConfig cfg = train_config(seed);
    const auto dirs = suite(cfg, "train" + std::to_string(seed));
    const fs::path out = g_root / ("train_out" + std::to_string(seed));
    fs::remove_all(out);
    if (seed == 0) {
      // Stop right after stage 1, fingerprint its checkpoint, then let stage 2 run.
      TrainOptions stop;
      stop.stop_after = cfg.stage1.steps;
      train(dirs, cfg, out, stop);
      const std::string before = io::hash_hex(io::read_file(out / "stage1.ckpt"));
      TrainOptions resume;
      resume.resume = true;
      const TrainResult r = train(dirs, cfg, out, resume);
      const std::string after = io::hash_hex(io::read_file(out / "stage1.ckpt"));
      g_freeze = {r.completed && before == after && fs::exists(out / "stage2.ckpt"),
                  "stage1.ckpt " + before.substr(0, 16) + (before == after ? " unchanged" : " changed") +
                      " across stage 2"};
    } else {
      train(dirs, cfg, out);
    }
    Model m;
    load_model(out, cfg, m);
    double pre = 0, post = 0;
    int n = 0;
    for (const auto& d : dirs) {
      const SceneData s = load_scene(d, cfg);
      const FeedForward ff = feed_forward(s, cfg, m, true);
      track_offsets(ff.decoded);
      track_offsets(ff.refined);
      numgs_same = numgs_same && ff.decoded.size() == ff.refined.size();
      for (const auto& v : s.novel) {
        pre += psnr(render(ff.decoded, v.intrinsics, v.extrinsics, cfg.background, cfg.render).rgb, v.image);
        post += psnr(render(ff.refined, v.intrinsics, v.extrinsics, cfg.background, cfg.render).rgb, v.image);
        ++n;
      }
    }
    const double gain = (post - pre) / n;
    gain_sum += gain;
    os << "seed " << seed << " " << fmt("%.2f", pre / n) << "->" << fmt("%.2f", post / n) << "  ";
  }
  const double mean = gain_sum / 3.0;
  os << "mean gain " << fmt("%+.3f", mean) << " dB";
  return {mean >= 0.2 && numgs_same, os.str()};
}

Outcome offset_bound() {
  return {g_offset_scenes > 0 && g_max_offset <= kOffsetBound,
          "max |mu - A|_inf " + fmt("%.9g", g_max_offset) + " over " + std::to_string(g_offset_scenes) +
              " scenes (bound " + fmt("%.9g", kOffsetBound) + ")"};
}

// 10: closed-form metric examples.
Outcome metric_examples() {
  auto constant = [](int w, int h, int c, double v) { return Image(w, h, c, v); };
  std::vector<std::pair<std::string, double>> err;
  const double c1 = 1e-4;
  err.emplace_back("ssim constant", std::abs(ssim(constant(16, 16, 3, 0), constant(16, 16, 3, 1)) - c1 / (1 + c1)));
  std::mt19937_64 rng(10);
  Image x(12, 12, 3);
  for (auto& v : x.data) v = uniform(rng, 0, 1);
  err.emplace_back("ssim self", std::abs(ssim(x, x) - 1.0));
  err.emplace_back("psnr", std::abs(psnr(constant(8, 8, 3, 0.25), constant(8, 8, 3, 0.75)) - 6.0206));
  Image p(2, 1, 1), g(2, 1, 1);
  p.data = {1, 2};
  g.data = {2, 2};
  err.emplace_back("absrel", std::abs(absrel(p, g) - 0.25));
  p.data = {1.0, 1.3};
  g.data = {1, 1};
  err.emplace_back("delta1", std::abs(delta1(p, g) - 0.5));
  double worst = 0;
  std::string names;
  for (const auto& [n, e] : err) {
    worst = std::max(worst, e);
    names += (names.empty() ? "" : ", ") + n;
  }
  return {worst <= 1e-6 && std::isinf(psnr(x, x)), names + "; max abs err " + fmt("%.3g", worst)};
}

int run(const std::string& cmd) {
  const std::string full = cmd + " > /dev/null 2>&1";
  return std::system(full.c_str());
}

std::string cli() { return ASPLAT_CLI_PATH; }

// 11: ablation tables through the command line.
Outcome ablation_tables() {
  const fs::path base = g_root / "ablate";
  fs::remove_all(base);
  fs::create_directories(base);
  const json tiny = {
      {"anchors", {{"cap", 64}}},
      {"lift", {{"feature_dim", 8}}},
      {"decoder", {{"width", 16}, {"blocks", 1}}},
      {"refiner", {{"width", 16}, {"error_dim", 12}, {"serial_blocks", 1}}},
      {"fit", {{"steps", 40}}},
      {"stage1", {{"steps", 20}, {"views_per_step", 2}, {"checkpoint_every", 0}}},
      {"stage2", {{"steps", 10}, {"views_per_step", 2}, {"checkpoint_every", 0}}},
      {"gen", {{"width", 48}, {"height", 32}, {"input_views", 8}}}};
  io::write_text(base / "cfg.json", tiny.dump(2));
  const std::string c = cli() + " --config " + (base / "cfg.json").string();
  if (run(c + " --out " + (base / "scene").string() + " gen-scene") != 0) return {false, "gen-scene failed"};
  if (run(c + " --out " + (base / "anchors").string() + " anchors --scene " + (base / "scene").string()) != 0)
    return {false, "anchors failed"};
  const std::size_t N = json::parse(io::read_text(base / "anchors" / "anchors.json")).at("count").get<std::size_t>();
  std::ostringstream os;
  bool ok = true;
  const std::vector<std::pair<std::string, std::size_t>> axes = {{"pooling", 3}, {"multiplicity", 5}, {"views", 3}};
  for (const auto& [axis, want] : axes) {
    const fs::path out = base / axis;
    if (run(c + " --out " + out.string() + " ablate --scene " + (base / "scene").string() + " --axis " + axis) != 0) {
      ok = false;
      os << axis << " failed  ";
      continue;
    }
    const json rows = json::parse(io::read_text(out / ("ablate_" + axis + ".json")));
    bool finite = true;
    std::set<std::size_t> gs;
    bool kn = true;
    for (const auto& r : rows) {
      const auto& m = r.at("metrics");
      for (const char* key : {"psnr", "ssim", "absrel", "delta1"})
        finite = finite && m.at(key).is_number() && std::isfinite(m.at(key).get<double>());
      gs.insert(m.at("num_gs").get<std::size_t>());
      if (axis == "multiplicity") kn = kn && m.at("num_gs").get<std::size_t>() == std::stoul(r.at("value").get<std::string>()) * N;
    }
    const bool row_ok = rows.size() == want && finite && fs::exists(out / ("ablate_" + axis + ".csv")) &&
                        (axis != "multiplicity" || kn) && (axis != "views" || gs.size() == 1);
    ok = ok && row_ok;
    os << axis << " " << rows.size() << " rows" << (row_ok ? "" : " (bad)") << "  ";
  }
  os << "N=" << N;
  return {ok, os.str()};
}

// 12: every artifact of a CLI session is identical at 1 and 4 threads.
Outcome cli_determinism() {
  const fs::path base = g_root / "determinism";
  fs::remove_all(base);
  fs::create_directories(base);
  const json cfg = {{"anchors", {{"cap", 96}}},
                    {"lift", {{"feature_dim", 8}}},
                    {"decoder", {{"width", 16}, {"blocks", 1}}},
                    {"refiner", {{"width", 16}, {"error_dim", 12}, {"serial_blocks", 1}}},
                    {"fit", {{"steps", 15}}},
                    {"stage1", {{"steps", 6}, {"views_per_step", 2}, {"checkpoint_every", 3}}},
                    {"stage2", {{"steps", 4}, {"views_per_step", 2}, {"checkpoint_every", 2}}},
                    {"gen", {{"width", 64}, {"height", 48}, {"input_views", 4}}}};
  io::write_text(base / "cfg.json", cfg.dump(2));
  for (int threads : {1, 4}) {
    const fs::path d = base / ("t" + std::to_string(threads));
    const std::string c = cli() + " --config " + (base / "cfg.json").string() + " --seed 42 --threads " +
                          std::to_string(threads);
    const std::string scene = (d / "scene").string();
    const std::vector<std::string> cmds = {
        c + " --out " + scene + " gen-scene --preset textured-planes",
        c + " --out " + (d / "anchors").string() + " anchors --scene " + scene,
        c + " --out " + (d / "fit").string() + " fit --scene " + scene,
        c + " --out " + (d / "ply").string() + " render --scene " + scene + " --ply " + (d / "fit" / "scene.ply").string(),
        c + " --out " + (d / "ckpt").string() + " train --scene " + scene,
        c + " --out " + (d / "ff").string() + " render --scene " + scene + " --checkpoint " +
            (d / "ckpt").string() + " --dump-features --dump-tiles",
        c + " --out " + (d / "eval").string() + " eval --scene " + scene + " --rendered " + (d / "ff").string()};
    for (const auto& cmd : cmds)
      if (run(cmd) != 0) return {false, "command failed: " + cmd};
  }
  // Everything except JSON reports, which carry wall-clock fields.
  int compared = 0, differing = 0;
  const fs::path a = base / "t1", b = base / "t4";
  for (const auto& e : fs::recursive_directory_iterator(a)) {
    if (!e.is_regular_file() || e.path().extension() == ".json") continue;
    const fs::path rel = fs::relative(e.path(), a);
    ++compared;
    if (!fs::exists(b / rel) || io::read_file(e.path()) != io::read_file(b / rel)) {
      ++differing;
      std::fprintf(stderr, "  differs: %s\n", rel.string().c_str());
    }
  }
  return {compared > 0 && differing == 0,
          std::to_string(compared) + " PLY/PNG/PFM/CSV/checkpoint files compared, " + std::to_string(differing) +
              " differ"};
}

}  // namespace

int main(int argc, char** argv) {
  g_root = argc > 1 ? fs::path(argv[1]) : fs::temp_directory_path() / "asplat_acceptance";
  fs::create_directories(g_root);
  set_thread_count(1);

  struct Criterion {
    int id;
    const char* name;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> all = {
      {1, "rasterizer oracle", rasterizer_oracle},
      {2, "gradient check", gradients},
      {3, "geometry round trip", geometry},
      {4, "fps exactness", fps_exact},
      {5, "NumGS invariance", numgs_invariance},
      {6, "fit quality floor", fit_quality},
      {7, "refiner gain", refiner_gain},
      {8, "freeze contract", [] { return g_freeze; }},
      {9, "offset bound", offset_bound},
      {10, "metric examples", metric_examples},
      {11, "ablation tables", ablation_tables},
      {12, "CLI determinism", cli_determinism},
  };
  int failures = 0;
  for (const auto& c : all) {
    Outcome o;
    const auto t0 = Clock::now();
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    if (!o.pass) ++failures;
    std::printf("[%s] %2d %s: %s (%.1f s)\n", o.pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str(), seconds(t0));
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(all.size()) - failures, all.size());
  return failures == 0 ? 0 : 1;
}
