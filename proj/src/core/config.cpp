#include "asplat/config.hpp"

#include <json.hpp>

#include "asplat/error.hpp"
#include "asplat/io.hpp"

namespace asplat {

using nlohmann::json;

namespace {

json optim_json(const OptimConfig& o) {
  return {{"lr", o.lr}, {"steps", o.steps}, {"views_per_step", o.views_per_step},
          {"checkpoint_every", o.checkpoint_every}};
}

OptimConfig optim_from(const json& j) {
  return {j.at("lr").get<double>(), j.at("steps").get<int>(), j.at("views_per_step").get<int>(),
          j.at("checkpoint_every").get<int>()};
}

bool same_kind(const json& a, const json& b) {
  if (a.is_number() && b.is_number()) {
    // Integers may not silently take fractional values.
    return !(a.is_number_integer() && b.is_number_float());
  }
  return a.type() == b.type();
}

void overlay(json& base, const json& user, const std::string& path) {
  require(user.is_object(), ErrorCode::kConfig, "config: " + (path.empty() ? "root" : path) + " must be an object");
  for (const auto& [key, value] : user.items()) {
    const std::string where = path.empty() ? key : path + "." + key;
    require(base.contains(key), ErrorCode::kConfig, "config: unknown key '" + where + "'");
    json& slot = base[key];
    if (slot.is_object()) {
      overlay(slot, value, where);
    } else {
      require(same_kind(slot, value), ErrorCode::kConfig, "config: '" + where + "' has the wrong type");
      slot = value;
    }
  }
}

}  // namespace

std::string RunConfig::to_json(int indent) const {
  json j;
  j["seed"] = seed;
  j["threads"] = threads;
  j["anchors"] = {{"stride", anchors.stride}, {"lo_pct", anchors.lo_pct}, {"hi_pct", anchors.hi_pct},
                  {"margin", anchors.margin}, {"voxel_size", anchors.voxel_size}, {"cap", anchors.cap},
                  {"seed_index", anchors.seed_index}};
  j["lift"] = {{"feature_dim", lift.feature_dim}, {"pooling", to_string(lift.pooling)}, {"tau", lift.tau},
               {"mask", {{"rgb", lift.mask.rgb}, {"depth", lift.mask.depth}, {"ray", lift.mask.ray}}}};
  j["decoder"] = {{"width", decoder.width}, {"blocks", decoder.blocks}, {"ffn_mult", decoder.ffn_mult},
                  {"gaussians_per_anchor", decoder.gaussians_per_anchor}, {"max_tokens", decoder.max_tokens},
                  {"init_scale", decoder.init_scale}, {"head_init_gain", decoder.head_init_gain}};
  j["refiner"] = {{"error_dim", refiner.error_dim}, {"width", refiner.width},
                  {"error_blocks", refiner.error_blocks}, {"serial_blocks", refiner.serial_blocks},
                  {"ffn_mult", refiner.ffn_mult}, {"window", refiner.window}, {"passes", refiner.passes},
                  {"tau", refiner.tau}};
  j["loss"] = {{"render", loss.render}, {"ssim", loss.ssim}, {"lpips", loss.lpips}, {"depth", loss.depth},
               {"opacity", loss.opacity}, {"scale", loss.scale}};
  j["fit"] = optim_json(fit);
  j["stage1"] = optim_json(stage1);
  j["stage2"] = optim_json(stage2);
  j["render"] = {{"tile_size", render.tile_size}, {"background", {background.x(), background.y(), background.z()}}};
  j["gen"] = {{"preset", gen.preset}, {"width", gen.width}, {"height", gen.height},
              {"input_views", gen.input_views}, {"novel_views", gen.novel_views}, {"hfov_deg", gen.hfov_deg}};
  return j.dump(indent);
}

RunConfig RunConfig::from_json(const std::string& text) { return RunConfig{}.merged(text); }

RunConfig RunConfig::merged(const std::string& text) const {
  json user;
  try {
    user = json::parse(text);
  } catch (const json::exception& e) {
    fail(ErrorCode::kConfig, std::string("config: ") + e.what());
  }
  json j = json::parse(to_json());
  overlay(j, user, "");
  RunConfig c;
  try {
    c.seed = j.at("seed").get<std::uint64_t>();
    c.threads = j.at("threads").get<int>();
    const auto& a = j.at("anchors");
    c.anchors.stride = a.at("stride").get<int>();
    c.anchors.lo_pct = a.at("lo_pct").get<double>();
    c.anchors.hi_pct = a.at("hi_pct").get<double>();
    c.anchors.margin = a.at("margin").get<double>();
    c.anchors.voxel_size = a.at("voxel_size").get<double>();
    c.anchors.cap = a.at("cap").get<int>();
    c.anchors.seed_index = a.at("seed_index").get<long long>();
    const auto& l = j.at("lift");
    c.lift.feature_dim = l.at("feature_dim").get<int>();
    c.lift.pooling = parse_pooling(l.at("pooling").get<std::string>());
    c.lift.tau = l.at("tau").get<double>();
    c.lift.mask = {l.at("mask").at("rgb").get<bool>(), l.at("mask").at("depth").get<bool>(),
                   l.at("mask").at("ray").get<bool>()};
    const auto& d = j.at("decoder");
    c.decoder.width = d.at("width").get<int>();
    c.decoder.blocks = d.at("blocks").get<int>();
    c.decoder.ffn_mult = d.at("ffn_mult").get<int>();
    c.decoder.gaussians_per_anchor = d.at("gaussians_per_anchor").get<int>();
    c.decoder.max_tokens = d.at("max_tokens").get<int>();
    c.decoder.init_scale = d.at("init_scale").get<double>();
    c.decoder.head_init_gain = d.at("head_init_gain").get<double>();
    const auto& r = j.at("refiner");
    c.refiner.error_dim = r.at("error_dim").get<int>();
    c.refiner.width = r.at("width").get<int>();
    c.refiner.error_blocks = r.at("error_blocks").get<int>();
    c.refiner.serial_blocks = r.at("serial_blocks").get<int>();
    c.refiner.ffn_mult = r.at("ffn_mult").get<int>();
    c.refiner.window = r.at("window").get<int>();
    c.refiner.passes = r.at("passes").get<int>();
    c.refiner.tau = r.at("tau").get<double>();
    const auto& w = j.at("loss");
    c.loss = {w.at("render").get<double>(), w.at("ssim").get<double>(), w.at("lpips").get<double>(),
              w.at("depth").get<double>(), w.at("opacity").get<double>(), w.at("scale").get<double>()};
    c.fit = optim_from(j.at("fit"));
    c.stage1 = optim_from(j.at("stage1"));
    c.stage2 = optim_from(j.at("stage2"));
    c.render.tile_size = j.at("render").at("tile_size").get<int>();
    const auto bg = j.at("render").at("background").get<std::vector<double>>();
    require(bg.size() == 3, ErrorCode::kConfig, "config: render.background needs 3 values");
    c.background = Vec3(bg[0], bg[1], bg[2]);
    const auto& g = j.at("gen");
    c.gen.preset = g.at("preset").get<std::string>();
    c.gen.width = g.at("width").get<int>();
    c.gen.height = g.at("height").get<int>();
    c.gen.input_views = g.at("input_views").get<int>();
    c.gen.novel_views = g.at("novel_views").get<int>();
    c.gen.hfov_deg = g.at("hfov_deg").get<double>();
  } catch (const json::exception& e) {
    fail(ErrorCode::kConfig, std::string("config: ") + e.what());
  }
  c = c.resolved();
  c.validate();
  return c;
}

RunConfig RunConfig::resolved() const {
  RunConfig c = *this;
  c.decoder.feature_dim = c.lift.feature_dim;
  c.refiner.decoder_width = c.decoder.width;
  return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  require(std::filesystem::exists(path), ErrorCode::kConfig, "config file not found: " + path.string());
  return from_json(io::read_text(path));
}

void RunConfig::validate() const {
  auto check = [](bool ok, const std::string& what) { require(ok, ErrorCode::kConfig, "config: " + what); };
  check(threads >= 0, "threads must be >= 0");
  check(anchors.stride >= 1, "anchors.stride must be >= 1");
  check(0 <= anchors.lo_pct && anchors.lo_pct < anchors.hi_pct && anchors.hi_pct <= 1,
        "anchors percentiles must satisfy 0 <= lo < hi <= 1");
  check(anchors.margin >= 0, "anchors.margin must be >= 0");
  check(anchors.voxel_size >= 0, "anchors.voxel_size must be >= 0");
  check(anchors.cap >= 1, "anchors.cap must be >= 1");
  check(lift.feature_dim >= 1 && lift.tau > 0, "lift.feature_dim >= 1 and lift.tau > 0 required");
  check(decoder.width >= 1 && decoder.blocks >= 0 && decoder.ffn_mult >= 1, "decoder shape invalid");
  check(decoder.gaussians_per_anchor >= 1, "decoder.gaussians_per_anchor must be >= 1");
  check(decoder.max_tokens >= 1, "decoder.max_tokens must be >= 1");
  check(decoder.init_scale > 0, "decoder.init_scale must be > 0");
  check(refiner.error_dim >= kErrorBaseChannels, "refiner.error_dim must be >= 9");
  check(refiner.width >= 1 && refiner.window >= 1 && refiner.passes >= 1, "refiner shape invalid");
  check(refiner.tau > 0, "refiner.tau must be > 0");
  loss.validate();
  for (const auto* o : {&fit, &stage1, &stage2})
    check(o->lr > 0 && o->steps >= 0 && o->views_per_step >= 0 && o->checkpoint_every >= 0,
          "optimizer settings must be non-negative with lr > 0");
  check(render.tile_size >= 1, "render.tile_size must be >= 1");
  check(gen.width >= 8 && gen.height >= 8 && gen.input_views >= 1 && gen.novel_views >= 0,
        "gen view settings invalid");
}

}  // namespace asplat
