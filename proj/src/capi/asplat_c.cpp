#include "asplat/asplat.h"

#include <cstring>
#include <string>

#include "asplat/error.hpp"
#include "asplat/io.hpp"
#include "asplat/parallel.hpp"
#include "asplat/pipeline.hpp"
#include "asplat/synthetic.hpp"

struct asplat_config {
  asplat::RunConfig value;
};

struct asplat_report {
  asplat::MetricsReport value;
};

struct asplat_scene {
  asplat::GaussianScene value;
};

namespace {

thread_local std::string g_last_error;

asplat_status to_status(asplat::ErrorCode c) { return static_cast<asplat_status>(static_cast<int>(c)); }

template <class F>
asplat_status guarded(F&& body) {
  try {
    g_last_error.clear();
    body();
    return ASPLAT_OK;
  } catch (const asplat::Error& e) {
    g_last_error = e.what();
    return to_status(e.code());
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return ASPLAT_E_INTERNAL;
  } catch (...) {
    g_last_error = "unknown failure";
    return ASPLAT_E_INTERNAL;
  }
}

void need(const void* p, const char* what) {
  asplat::require(p != nullptr, asplat::ErrorCode::kInvalidArgument, std::string(what) + " is NULL");
}

char* copy_string(const std::string& s) {
  char* out = new char[s.size() + 1];
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

std::vector<std::filesystem::path> paths(const char* const* dirs, size_t n) {
  asplat::require(dirs != nullptr && n > 0, asplat::ErrorCode::kInvalidArgument, "no scene directories");
  std::vector<std::filesystem::path> out;
  for (size_t i = 0; i < n; ++i) {
    need(dirs[i], "scene directory");
    out.emplace_back(dirs[i]);
  }
  return out;
}

}  // namespace

extern "C" {

const char* asplat_version(void) { return "0.1.0"; }

const char* asplat_status_string(asplat_status s) {
  switch (s) {
    case ASPLAT_OK: return "ok";
    case ASPLAT_E_INVALID_ARGUMENT: return "invalid argument";
    case ASPLAT_E_INVALID_DEPTH: return "invalid depth";
    case ASPLAT_E_NUMERIC: return "numeric error";
    case ASPLAT_E_EMPTY_ANCHORS: return "empty anchors";
    case ASPLAT_E_INVALID_BUDGET: return "invalid budget";
    case ASPLAT_E_PARSE: return "parse error";
    case ASPLAT_E_CONTRACT: return "contract violation";
    case ASPLAT_E_DIVERGENCE: return "divergence";
    case ASPLAT_E_UNDEFINED_METRIC: return "undefined metric";
    case ASPLAT_E_IO: return "i/o error";
    case ASPLAT_E_CONFIG: return "configuration error";
    case ASPLAT_E_MISSING_CHECKPOINT: return "missing checkpoint";
    case ASPLAT_E_PRECONDITION: return "precondition failed";
    case ASPLAT_E_INTERNAL: return "internal error";
  }
  return "unknown status";
}

const char* asplat_last_error(void) { return g_last_error.c_str(); }

void asplat_free_string(char* s) { delete[] s; }

asplat_status asplat_set_threads(int n) {
  return guarded([&] { asplat::set_thread_count(asplat::resolve_thread_count(n)); });
}

int asplat_get_threads(void) { return asplat::thread_count(); }

asplat_status asplat_config_default(asplat_config** out) {
  return guarded([&] {
    need(out, "out");
    *out = new asplat_config{};
  });
}

asplat_status asplat_config_from_json(const char* json, asplat_config** out) {
  return guarded([&] {
    need(json, "json");
    need(out, "out");
    *out = new asplat_config{asplat::RunConfig::from_json(json)};
  });
}

asplat_status asplat_config_load(const char* path, asplat_config** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    *out = new asplat_config{asplat::RunConfig::load(path)};
  });
}

asplat_status asplat_config_merge_json(asplat_config* cfg, const char* json) {
  return guarded([&] {
    need(cfg, "config");
    need(json, "json");
    cfg->value = cfg->value.merged(json);
  });
}

asplat_status asplat_config_set_seed(asplat_config* cfg, uint64_t seed) {
  return guarded([&] {
    need(cfg, "config");
    cfg->value.seed = seed;
  });
}

asplat_status asplat_config_to_json(const asplat_config* cfg, char** out) {
  return guarded([&] {
    need(cfg, "config");
    need(out, "out");
    *out = copy_string(cfg->value.to_json());
  });
}

void asplat_config_free(asplat_config* cfg) { delete cfg; }

asplat_status asplat_report_metrics(const asplat_report* r, asplat_metrics* out) {
  return guarded([&] {
    need(r, "report");
    need(out, "out");
    *out = {r->value.psnr, r->value.ssim, r->value.absrel, r->value.delta1, r->value.num_gs, r->value.recon_time_s};
  });
}

asplat_status asplat_report_to_json(const asplat_report* r, char** out) {
  return guarded([&] {
    need(r, "report");
    need(out, "out");
    *out = copy_string(r->value.to_json());
  });
}

int asplat_report_finite(const asplat_report* r) { return r != nullptr && r->value.finite() ? 1 : 0; }

void asplat_report_free(asplat_report* r) { delete r; }

asplat_status asplat_gen_scene(const asplat_config* cfg, const char* preset, const char* out_dir) {
  return guarded([&] {
    need(cfg, "config");
    need(out_dir, "out_dir");
    asplat::synth::GenConfig g = cfg->value.gen;
    g.seed = cfg->value.seed;
    if (preset) g.preset = preset;
    asplat::synth::gen_scene(out_dir, g);
  });
}

asplat_status asplat_anchors(const asplat_config* cfg, const char* scene_dir, const char* out_dir,
                             size_t* anchor_count) {
  return guarded([&] {
    need(cfg, "config");
    need(scene_dir, "scene_dir");
    need(out_dir, "out_dir");
    const auto a = asplat::anchors_cmd(scene_dir, cfg->value, out_dir);
    if (anchor_count) *anchor_count = a.positions.size();
  });
}

asplat_status asplat_fit(const asplat_config* cfg, const char* scene_dir, int input_views, const char* out_dir,
                         asplat_report** report, double* baseline_psnr) {
  return guarded([&] {
    need(cfg, "config");
    need(scene_dir, "scene_dir");
    const auto scene = asplat::load_scene(scene_dir, cfg->value, input_views);
    const auto r = asplat::fit(scene, cfg->value);
    if (out_dir) asplat::write_fit_outputs(out_dir, scene, cfg->value, r);
    if (report) *report = new asplat_report{r.report};
    if (baseline_psnr) *baseline_psnr = r.baseline_psnr;
  });
}

asplat_status asplat_train(const asplat_config* cfg, const char* const* scene_dirs, size_t scene_count,
                           const char* out_dir, const asplat_train_options* options, int* completed) {
  return guarded([&] {
    need(cfg, "config");
    need(out_dir, "out_dir");
    asplat::TrainOptions opt;
    if (options) {
      opt.resume = options->resume != 0;
      opt.stop_after = options->stop_after;
    }
    const auto r = asplat::train(paths(scene_dirs, scene_count), cfg->value, out_dir, opt);
    if (completed) *completed = r.completed ? 1 : 0;
  });
}

asplat_status asplat_render(const asplat_config* cfg, const asplat_render_request* rq, const char* out_dir,
                            size_t* num_gs) {
  return guarded([&] {
    need(cfg, "config");
    need(rq, "request");
    need(rq->scene_dir, "scene_dir");
    need(out_dir, "out_dir");
    asplat::RenderRequest r;
    r.scene_dir = rq->scene_dir;
    if (rq->ply) r.ply = rq->ply;
    if (rq->checkpoint_dir) r.checkpoint_dir = rq->checkpoint_dir;
    if (rq->split) r.split = rq->split;
    r.use_refiner = rq->use_refiner != 0;
    r.dump_tiles = rq->dump_tiles != 0;
    r.dump_features = rq->dump_features != 0;
    const auto res = asplat::render_cmd(r, cfg->value, out_dir);
    if (num_gs) *num_gs = res.num_gs;
  });
}

asplat_status asplat_eval(const char* scene_dir, const char* rendered_dir, asplat_report** report) {
  return guarded([&] {
    need(scene_dir, "scene_dir");
    need(rendered_dir, "rendered_dir");
    need(report, "report");
    *report = new asplat_report{asplat::eval_cmd(scene_dir, rendered_dir)};
  });
}

asplat_status asplat_ablate(const asplat_config* cfg, const char* axis, const char* const* scene_dirs,
                            size_t scene_count, const char* out_dir, char** table_json) {
  return guarded([&] {
    need(cfg, "config");
    need(axis, "axis");
    need(out_dir, "out_dir");
    const auto rows = asplat::ablate(paths(scene_dirs, scene_count), axis, cfg->value, out_dir);
    if (table_json) *table_json = copy_string(asplat::ablation_json(rows));
  });
}

asplat_status asplat_scene_load_ply(const char* path, asplat_scene** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    *out = new asplat_scene{asplat::read_ply(asplat::io::read_file(path))};
  });
}

asplat_status asplat_scene_counts(const asplat_scene* s, size_t* gaussians, size_t* anchors) {
  return guarded([&] {
    need(s, "scene");
    if (gaussians) *gaussians = s->value.size();
    if (anchors) *anchors = s->value.anchors.size();
  });
}

asplat_status asplat_scene_max_offset(const asplat_scene* s, double* out) {
  return guarded([&] {
    need(s, "scene");
    need(out, "out");
    *out = asplat::max_offset_deviation(s->value);
  });
}

asplat_status asplat_scene_render(const asplat_scene* s, const double intr[4], int width, int height,
                                  const double R[9], const double T[3], const double bg[3], float* rgb,
                                  float* depth) {
  return guarded([&] {
    need(s, "scene");
    need(intr, "intrinsics");
    need(R, "R");
    need(T, "T");
    asplat::Intrinsics K{intr[0], intr[1], intr[2], intr[3], width, height};
    K.validate();
    asplat::Extrinsics E;
    for (int i = 0; i < 9; ++i) E.R(i / 3, i % 3) = R[i];
    E.T = asplat::Vec3(T[0], T[1], T[2]);
    E.validate();
    const asplat::Vec3 b = bg ? asplat::Vec3(bg[0], bg[1], bg[2]) : asplat::Vec3::Zero();
    const auto out = asplat::render(s->value, K, E, b);
    if (rgb)
      for (size_t i = 0; i < out.rgb.data.size(); ++i) rgb[i] = static_cast<float>(out.rgb.data[i]);
    if (depth)
      for (size_t i = 0; i < out.depth.data.size(); ++i) depth[i] = static_cast<float>(out.depth.data[i]);
  });
}

void asplat_scene_free(asplat_scene* s) { delete s; }

}  // extern "C"
