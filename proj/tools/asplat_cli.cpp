// asplat command line front end. Talks to the library only through asplat.h.
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "asplat/asplat.h"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Failure {
  asplat_status status;
};

void check(asplat_status s) {
  if (s != ASPLAT_OK) throw Failure{s};
}

std::string take(char* s) {
  std::string out = s ? s : "";
  asplat_free_string(s);
  return out;
}

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  int threads = 0;
  std::string out = "asplat_out";
};

// Owns a config handle built from --config, per-command overrides and --seed.
class Config {
 public:
  explicit Config(const Globals& g, const json& overrides) {
    if (g.config.empty())
      check(asplat_config_default(&h_));
    else
      check(asplat_config_load(g.config.c_str(), &h_));
    if (!overrides.empty()) check(asplat_config_merge_json(h_, overrides.dump().c_str()));
    if (g.seed) check(asplat_config_set_seed(h_, *g.seed));
    // --threads wins, then the config's own field, then ASPLAT_THREADS.
    int n = g.threads;
    if (n <= 0) n = json::parse(take(to_json()))["threads"].get<int>();
    check(asplat_set_threads(n));
  }
  ~Config() { asplat_config_free(h_); }
  Config(const Config&) = delete;
  Config& operator=(const Config&) = delete;
  const asplat_config* get() const { return h_; }

 private:
  char* to_json() const {
    char* s = nullptr;
    check(asplat_config_to_json(h_, &s));
    return s;
  }
  asplat_config* h_ = nullptr;
};

void write_text(const fs::path& p, const std::string& text) {
  fs::create_directories(p.parent_path().empty() ? fs::path(".") : p.parent_path());
  std::ofstream f(p, std::ios::binary);
  f << text;
  if (!f) {
    std::cerr << "error: cannot write " << p << "\n";
    throw Failure{ASPLAT_E_IO};
  }
}

std::vector<const char*> c_strings(const std::vector<std::string>& v) {
  std::vector<const char*> out;
  for (const auto& s : v) out.push_back(s.c_str());
  return out;
}

std::string report_json(const asplat_report* r) {
  char* s = nullptr;
  check(asplat_report_to_json(r, &s));
  return take(s);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Anchor-aligned Gaussian splatting at desk scale"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(asplat_version()));

  Globals g;
  app.add_option("--config", g.config, "JSON config file")->check(CLI::ExistingFile);
  app.add_option("--seed", g.seed, "random seed");
  app.add_option("--threads", g.threads, "worker threads (falls back to ASPLAT_THREADS)");
  app.add_option("--out", g.out, "output directory");

  // gen-scene
  auto* gen = app.add_subcommand("gen-scene", "write a synthetic scene directory");
  std::optional<std::string> preset;
  std::optional<int> gen_inputs, gen_novel, gen_w, gen_h;
  gen->add_option("--preset", preset, "box-room | textured-planes | sphere-field");
  gen->add_option("--input-views", gen_inputs);
  gen->add_option("--novel-views", gen_novel);
  gen->add_option("--width", gen_w);
  gen->add_option("--height", gen_h);

  // anchors
  auto* anc = app.add_subcommand("anchors", "build the anchor set of a scene");
  std::string anc_scene;
  anc->add_option("--scene", anc_scene)->required();

  // fit
  auto* fitc = app.add_subcommand("fit", "optimize Gaussians directly on one scene");
  std::string fit_scene;
  int fit_views = 0;
  fitc->add_option("--scene", fit_scene)->required();
  fitc->add_option("--input-views", fit_views, "use an evenly spread subset of input views");

  // train
  auto* tr = app.add_subcommand("train", "two-stage training of decoder then refiner");
  std::vector<std::string> tr_scenes;
  bool tr_resume = false;
  int tr_stop = -1;
  std::optional<int> tr_passes;
  std::optional<std::string> tr_pool;
  tr->add_option("--scene", tr_scenes)->required();
  tr->add_flag("--resume", tr_resume, "continue from checkpoints in --out");
  tr->add_option("--stop-after", tr_stop, "stop after this many steps without a final save");
  tr->add_option("--refine-passes", tr_passes);
  tr->add_option("--pooling", tr_pool)->check(CLI::IsMember({"avg", "max", "fifo"}));

  // render
  auto* rn = app.add_subcommand("render", "render a stored PLY or run the feed-forward path");
  std::string rn_scene, rn_ply, rn_ckpt, rn_split = "novel";
  bool rn_norefine = false, rn_tiles = false, rn_feats = false;
  std::optional<int> rn_passes;
  std::optional<std::string> rn_pool;
  rn->add_option("--scene", rn_scene)->required();
  auto* ply_opt = rn->add_option("--ply", rn_ply);
  auto* ck_opt = rn->add_option("--checkpoint", rn_ckpt, "directory with stage1.ckpt / stage2.ckpt");
  ply_opt->excludes(ck_opt);
  rn->add_option("--split", rn_split)->check(CLI::IsMember({"novel", "input", "all"}));
  rn->add_flag("--no-refine", rn_norefine);
  rn->add_flag("--dump-tiles", rn_tiles);
  rn->add_flag("--dump-features", rn_feats);
  rn->add_option("--refine-passes", rn_passes);
  rn->add_option("--pooling", rn_pool)->check(CLI::IsMember({"avg", "max", "fifo"}));

  // eval
  auto* ev = app.add_subcommand("eval", "score rendered novel views against ground truth");
  std::string ev_scene, ev_rendered;
  ev->add_option("--scene", ev_scene)->required();
  ev->add_option("--rendered", ev_rendered)->required();

  // ablate
  auto* ab = app.add_subcommand("ablate", "sweep one axis and tabulate metrics");
  std::vector<std::string> ab_scenes;
  std::string ab_axis;
  ab->add_option("--scene", ab_scenes)->required();
  ab->add_option("--axis", ab_axis)->required()->check(CLI::IsMember({"pooling", "multiplicity", "views"}));

  CLI11_PARSE(app, argc, argv);

  try {
    const fs::path out = g.out;
    if (*gen) {
      json o;
      if (preset) o["gen"]["preset"] = *preset;
      if (gen_inputs) o["gen"]["input_views"] = *gen_inputs;
      if (gen_novel) o["gen"]["novel_views"] = *gen_novel;
      if (gen_w) o["gen"]["width"] = *gen_w;
      if (gen_h) o["gen"]["height"] = *gen_h;
      Config cfg(g, o);
      check(asplat_gen_scene(cfg.get(), nullptr, out.c_str()));
      std::cout << (out / "manifest.json").string() << "\n";
    } else if (*anc) {
      Config cfg(g, json::object());
      size_t n = 0;
      check(asplat_anchors(cfg.get(), anc_scene.c_str(), out.c_str(), &n));
      std::cout << json{{"anchors", n}}.dump() << "\n";
    } else if (*fitc) {
      Config cfg(g, json::object());
      asplat_report* r = nullptr;
      double base = 0.0;
      check(asplat_fit(cfg.get(), fit_scene.c_str(), fit_views, out.c_str(), &r, &base));
      json j = json::parse(report_json(r));
      asplat_report_free(r);
      j["baseline_psnr"] = base;
      std::cout << j.dump(2) << "\n";
    } else if (*tr) {
      json o;
      if (tr_passes) o["refiner"]["passes"] = *tr_passes;
      if (tr_pool) o["lift"]["pooling"] = *tr_pool;
      Config cfg(g, o);
      const auto dirs = c_strings(tr_scenes);
      asplat_train_options opt{tr_resume ? 1 : 0, tr_stop};
      int done = 0;
      check(asplat_train(cfg.get(), dirs.data(), dirs.size(), out.c_str(), &opt, &done));
      std::cout << json{{"completed", done != 0}, {"out", out.string()}}.dump() << "\n";
    } else if (*rn) {
      json o;
      if (rn_passes) o["refiner"]["passes"] = *rn_passes;
      if (rn_pool) o["lift"]["pooling"] = *rn_pool;
      Config cfg(g, o);
      if (rn_ply.empty() && rn_ckpt.empty()) {
        std::cerr << "error: render needs --ply or --checkpoint\n";
        return 2;
      }
      asplat_render_request rq{rn_scene.c_str(),
                               rn_ply.empty() ? nullptr : rn_ply.c_str(),
                               rn_ckpt.empty() ? nullptr : rn_ckpt.c_str(),
                               rn_split.c_str(),
                               rn_norefine ? 0 : 1,
                               rn_tiles ? 1 : 0,
                               rn_feats ? 1 : 0};
      size_t n = 0;
      check(asplat_render(cfg.get(), &rq, out.c_str(), &n));
      std::cout << json{{"num_gs", n}, {"out", out.string()}}.dump() << "\n";
    } else if (*ev) {
      Config cfg(g, json::object());
      asplat_report* r = nullptr;
      check(asplat_eval(ev_scene.c_str(), ev_rendered.c_str(), &r));
      const std::string text = report_json(r);
      const bool finite = asplat_report_finite(r) == 1;
      asplat_report_free(r);
      write_text(out / "metrics.json", text + "\n");
      std::cout << text << "\n";
      if (!finite) {
        std::cerr << "error: NaN metric in report\n";
        return 3;
      }
    } else if (*ab) {
      Config cfg(g, json::object());
      const auto dirs = c_strings(ab_scenes);
      char* table = nullptr;
      check(asplat_ablate(cfg.get(), ab_axis.c_str(), dirs.data(), dirs.size(), out.c_str(), &table));
      std::cout << take(table) << "\n";
    }
  } catch (const Failure& f) {
    const std::string msg = asplat_last_error();
    std::cerr << "error: " << asplat_status_string(f.status) << (msg.empty() ? "" : ": " + msg) << "\n";
    return 1;
  }
  return 0;
}
