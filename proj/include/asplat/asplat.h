/* C interface to the anchor-splat pipeline. Handles are opaque; every call
 * returns an asplat_status and leaves a message for asplat_last_error(). */
#ifndef ASPLAT_H
#define ASPLAT_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum asplat_status {
  ASPLAT_OK = 0,
  ASPLAT_E_INVALID_ARGUMENT = 1,
  ASPLAT_E_INVALID_DEPTH = 2,
  ASPLAT_E_NUMERIC = 3,
  ASPLAT_E_EMPTY_ANCHORS = 4,
  ASPLAT_E_INVALID_BUDGET = 5,
  ASPLAT_E_PARSE = 6,
  ASPLAT_E_CONTRACT = 7,
  ASPLAT_E_DIVERGENCE = 8,
  ASPLAT_E_UNDEFINED_METRIC = 9,
  ASPLAT_E_IO = 10,
  ASPLAT_E_CONFIG = 11,
  ASPLAT_E_MISSING_CHECKPOINT = 12,
  ASPLAT_E_PRECONDITION = 13,
  ASPLAT_E_INTERNAL = 99
} asplat_status;

typedef struct asplat_config asplat_config;
typedef struct asplat_report asplat_report;
typedef struct asplat_scene asplat_scene;

const char* asplat_version(void);
const char* asplat_status_string(asplat_status status);
/* Message of the most recent failure on the calling thread ("" if none). */
const char* asplat_last_error(void);
/* Strings returned through char** out-parameters. */
void asplat_free_string(char* s);

/* Worker threads for all later calls; n <= 0 falls back to ASPLAT_THREADS, then 1. */
asplat_status asplat_set_threads(int n);
int asplat_get_threads(void);

/* ---- configuration ---- */
asplat_status asplat_config_default(asplat_config** out);
asplat_status asplat_config_from_json(const char* json, asplat_config** out);
asplat_status asplat_config_load(const char* path, asplat_config** out);
/* Overlays a partial JSON document; the result is validated. */
asplat_status asplat_config_merge_json(asplat_config* cfg, const char* json);
asplat_status asplat_config_set_seed(asplat_config* cfg, uint64_t seed);
asplat_status asplat_config_to_json(const asplat_config* cfg, char** out);
void asplat_config_free(asplat_config* cfg);

/* ---- metrics reports ---- */
typedef struct asplat_metrics {
  double psnr;
  double ssim;
  double absrel;
  double delta1;
  size_t num_gs;
  double recon_time_s;
} asplat_metrics;

asplat_status asplat_report_metrics(const asplat_report* report, asplat_metrics* out);
asplat_status asplat_report_to_json(const asplat_report* report, char** out);
/* 1 when no metric is NaN. */
int asplat_report_finite(const asplat_report* report);
void asplat_report_free(asplat_report* report);

/* ---- pipeline commands ---- */
/* Uses the config's gen section and seed; `preset` overrides gen.preset when non-NULL. */
asplat_status asplat_gen_scene(const asplat_config* cfg, const char* preset, const char* out_dir);
asplat_status asplat_anchors(const asplat_config* cfg, const char* scene_dir, const char* out_dir,
                             size_t* anchor_count);
/* input_views > 0 fits on an evenly spread subset of the input split.
 * `report` and `baseline_psnr` may be NULL. */
asplat_status asplat_fit(const asplat_config* cfg, const char* scene_dir, int input_views,
                         const char* out_dir, asplat_report** report, double* baseline_psnr);

typedef struct asplat_train_options {
  int resume;
  int stop_after; /* negative: run to completion */
} asplat_train_options;

asplat_status asplat_train(const asplat_config* cfg, const char* const* scene_dirs, size_t scene_count,
                           const char* out_dir, const asplat_train_options* options, int* completed);

typedef struct asplat_render_request {
  const char* scene_dir;
  const char* ply;            /* render a stored scene when non-NULL */
  const char* checkpoint_dir; /* otherwise run the feed-forward path */
  const char* split;          /* "novel" (default), "input" or "all" */
  int use_refiner;
  int dump_tiles;
  int dump_features;
} asplat_render_request;

asplat_status asplat_render(const asplat_config* cfg, const asplat_render_request* request,
                            const char* out_dir, size_t* num_gs);
asplat_status asplat_eval(const char* scene_dir, const char* rendered_dir, asplat_report** report);
/* axis: "pooling", "multiplicity" or "views". `table_json` may be NULL. */
asplat_status asplat_ablate(const asplat_config* cfg, const char* axis, const char* const* scene_dirs,
                            size_t scene_count, const char* out_dir, char** table_json);

/* ---- Gaussian scenes ---- */
asplat_status asplat_scene_load_ply(const char* path, asplat_scene** out);
asplat_status asplat_scene_counts(const asplat_scene* scene, size_t* gaussians, size_t* anchors);
/* Largest |mu - anchor| over all Gaussians and axes, in normalized units. */
asplat_status asplat_scene_max_offset(const asplat_scene* scene, double* out);
/* intrinsics: fx, fy, cx, cy. R is camera-to-world, row-major. rgb holds h*w*3
 * floats and depth h*w floats; either may be NULL. */
asplat_status asplat_scene_render(const asplat_scene* scene, const double intrinsics[4], int width,
                                  int height, const double R[9], const double T[3],
                                  const double background[3], float* rgb, float* depth);
void asplat_scene_free(asplat_scene* scene);

#ifdef __cplusplus
}
#endif

#endif /* ASPLAT_H */
