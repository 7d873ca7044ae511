#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "asplat/config.hpp"
#include "asplat/nn.hpp"

namespace asplat {

namespace fs = std::filesystem;

struct SceneData {
  std::string name;
  fs::path dir;
  std::string depth_provenance;
  std::vector<CameraView> inputs;
  std::vector<CameraView> novel;
  AnchorSet anchors;
};

// Indices of `count` views spread evenly over `total` orbit positions.
std::vector<int> view_subset(int total, int count);

// `input_views` > 0 keeps an evenly spread subset of the input split.
SceneData load_scene(const fs::path& dir, const RunConfig& cfg, int input_views = 0);

// PSNR of the per-channel mean input color, measured on the novel split.
double mean_color_baseline(const SceneData& scene);

struct TraceRow {
  int step = 0;
  int scene = 0;
  LossBreakdown terms;
};

std::string trace_csv(const std::vector<TraceRow>& rows);

// Raw parameters for direct fitting: unit rotation, log-scale from anchor
// spacing, seeded jitter on offsets so co-located Gaussians separate.
GaussianScene init_fit_scene(const AnchorSet& anchors, int gaussians_per_anchor, std::uint64_t seed);

struct FitResult {
  GaussianScene scene;
  MetricsReport report;
  std::vector<TraceRow> trace;
  double baseline_psnr = 0.0;
};

FitResult fit(const SceneData& scene, const RunConfig& cfg);
void write_fit_outputs(const fs::path& out, const SceneData& scene, const RunConfig& cfg,
                       const FitResult& result);

// Encoder, decoder and refiner weights.
struct Model {
  nn::ParamSet encoder;
  nn::ParamSet decoder;
  nn::ParamSet refiner;
};

void init_model(Model& model, const RunConfig& cfg);

struct TrainOptions {
  bool resume = false;
  // Stops after this many optimizer steps in total (both stages); simulates an
  // interruption. Negative runs to completion.
  int stop_after = -1;
};

struct TrainResult {
  std::vector<TraceRow> stage1;
  std::vector<TraceRow> stage2;
  bool completed = false;
};

// Writes stage1.ckpt, stage2.ckpt, stage{1,2}_trace.csv and repro.json into `out`.
TrainResult train(const std::vector<fs::path>& scene_dirs, const RunConfig& cfg, const fs::path& out,
                  const TrainOptions& options = {});

// Loads trained weights; stage 2 is optional. Returns false when stage2.ckpt is absent.
bool load_model(const fs::path& checkpoint_dir, const RunConfig& cfg, Model& model);

struct StageTimes {
  double anchoring = 0.0;
  double decoding = 0.0;
  double refining = 0.0;
  double rendering = 0.0;
  std::string to_json() const;
};

struct FeedForward {
  GaussianScene decoded;
  GaussianScene refined;  // equals decoded when no refiner ran
  bool refined_applied = false;
  std::vector<double> features;  // N×C aggregated anchor features
  StageTimes times;
};

// anchors → features → decode → refine (when `use_refiner`).
FeedForward feed_forward(const SceneData& scene, const RunConfig& cfg, Model& model, bool use_refiner);

struct RenderRequest {
  fs::path scene_dir;
  fs::path ply;             // render a stored scene when set
  fs::path checkpoint_dir;  // otherwise run the feed-forward path
  std::string split = "novel";
  bool use_refiner = true;
  bool dump_tiles = false;
  bool dump_features = false;
};

struct RenderResult {
  std::size_t num_gs = 0;
  StageTimes times;
  std::vector<std::string> views;
};

// Writes <view>.png, <view>.pfm, scene.ply (feed-forward) and render.json.
RenderResult render_cmd(const RenderRequest& request, const RunConfig& cfg, const fs::path& out);

// Compares <rendered_dir>/<view>.png and .pfm with the novel split.
MetricsReport eval_cmd(const fs::path& scene_dir, const fs::path& rendered_dir);

struct AblationRow {
  std::string axis;
  std::string value;
  MetricsReport report;
};

// axis: pooling | multiplicity | views. Writes ablate_<axis>.json and .csv.
std::vector<AblationRow> ablate(const std::vector<fs::path>& scene_dirs, const std::string& axis,
                                const RunConfig& cfg, const fs::path& out);

std::string ablation_csv(const std::vector<AblationRow>& rows);
std::string ablation_json(const std::vector<AblationRow>& rows);

// anchors.ply (world positions) and anchors.json.
AnchorSet anchors_cmd(const fs::path& scene_dir, const RunConfig& cfg, const fs::path& out);

}  // namespace asplat
