#include "asplat/objectives.hpp"

#include <cmath>

#include <json.hpp>

#include "asplat/error.hpp"
#include "asplat/render_op.hpp"

namespace asplat {

namespace {

void require_same(const Image& x, const Image& y, const char* what) {
  require(x.same_shape(y), ErrorCode::kContract, std::string(what) + ": shape mismatch");
}

std::vector<unsigned char> valid_depth(const Image& gt, const std::vector<unsigned char>& mask) {
  if (!mask.empty()) {
    require(mask.size() == gt.data.size(), ErrorCode::kContract, "depth metric: mask size mismatch");
    return mask;
  }
  std::vector<unsigned char> m(gt.data.size());
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = gt.data[i] > 0 && std::isfinite(gt.data[i]);
  return m;
}

nlohmann::json number(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (std::isnan(v)) return "nan";
  return v;
}

double number(const nlohmann::json& j) {
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    return std::numeric_limits<double>::quiet_NaN();
  }
  return j.get<double>();
}

}  // namespace

void LossWeights::validate() const {
  for (double v : {render, ssim, lpips, depth, opacity, scale})
    require(v >= 0 && std::isfinite(v), ErrorCode::kConfig, "loss weights must be non-negative");
}

double ssim(const Image& x, const Image& y) {
  require_same(x, y, "ssim");
  return ad::ssim_value(to_tensor(x), to_tensor(y));
}

double l1(const Image& x, const Image& y) {
  require_same(x, y, "l1");
  double s = 0;
  for (std::size_t i = 0; i < x.data.size(); ++i) s += std::abs(x.data[i] - y.data[i]);
  return x.data.empty() ? 0.0 : s / static_cast<double>(x.data.size());
}

double render_loss(const Image& rendered, const Image& gt, const LossWeights& w) {
  return l1(rendered, gt) + w.ssim * (1.0 - ssim(rendered, gt));
}

double opacity_reg(const std::vector<double>& alpha) {
  if (alpha.empty()) return 0.0;
  double s = 0;
  for (double a : alpha) s += 1.0 - a;
  return s / static_cast<double>(alpha.size());
}

double scale_reg(const std::vector<Vec3>& scales) {
  if (scales.empty()) return 0.0;
  double s = 0;
  for (const auto& v : scales) s += v.prod();
  return s / static_cast<double>(scales.size());
}

double psnr(const Image& x, const Image& y) {
  require_same(x, y, "psnr");
  double mse = 0;
  for (std::size_t i = 0; i < x.data.size(); ++i) {
    const double d = x.data[i] - y.data[i];
    mse += d * d;
  }
  mse /= static_cast<double>(std::max<std::size_t>(1, x.data.size()));
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / mse);
}

double absrel(const Image& pred, const Image& gt, const std::vector<unsigned char>& mask) {
  require_same(pred, gt, "absrel");
  const auto m = valid_depth(gt, mask);
  double s = 0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (!m[i]) continue;
    s += std::abs(pred.data[i] - gt.data[i]) / gt.data[i];
    ++n;
  }
  require(n > 0, ErrorCode::kUndefinedMetric, "absrel: empty mask");
  return s / static_cast<double>(n);
}

double delta1(const Image& pred, const Image& gt, const std::vector<unsigned char>& mask) {
  require_same(pred, gt, "delta1");
  const auto m = valid_depth(gt, mask);
  std::size_t hit = 0, n = 0;
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (!m[i]) continue;
    const double p = pred.data[i], g = gt.data[i];
    const double ratio = (p > 0) ? std::max(p / g, g / p) : std::numeric_limits<double>::infinity();
    hit += ratio < 1.25;
    ++n;
  }
  require(n > 0, ErrorCode::kUndefinedMetric, "delta1: empty mask");
  return static_cast<double>(hit) / static_cast<double>(n);
}

ad::Var render_loss(ad::Var rgb, const ad::Tensor& gt, const LossWeights& w) {
  ad::Var l = ad::l1_loss(rgb, gt);
  ad::Var s = ad::ssim(rgb, gt);
  return ad::add(l, ad::add_scalar(ad::scale(s, -w.ssim), w.ssim));
}

ad::Var opacity_reg(ad::Var raw) {
  ad::Var a = ad::sigmoid(ad::slice_cols(raw, raw::kOpacity, 1));
  return ad::add_scalar(ad::scale(ad::mean(a), -1.0), 1.0);
}

ad::Var scale_reg(ad::Var raw, const ScaleLimits& limits) {
  ad::Var s = ad::clamp(ad::exp(ad::slice_cols(raw, raw::kScale, 3)), limits.min, limits.max);
  return ad::mean(ad::row_prod(s));
}

std::vector<unsigned char> depth_mask(const Image& gt_depth, const ad::Tensor& alpha) {
  require(gt_depth.data.size() == alpha.data.size(), ErrorCode::kContract, "depth_mask: size mismatch");
  std::vector<unsigned char> m(alpha.data.size());
  for (std::size_t i = 0; i < m.size(); ++i)
    m[i] = gt_depth.data[i] > 0 && std::isfinite(gt_depth.data[i]) && alpha.data[i] > 0.5;
  return m;
}

namespace {

TotalLoss assemble(ad::Var raw, const GaussianScene& layout, const std::vector<CameraView>& views,
                   const LossWeights& w, const Vec3& bg, const RenderOptions& options,
                   bool full) {
  require(!views.empty(), ErrorCode::kPrecondition, "total_loss: no views");
  std::vector<ad::Var> terms;
  std::vector<double> weights;
  TotalLoss out;
  for (const auto& view : views) {
    const Intrinsics& K = view.intrinsics;
    const RenderVars r =
        split_render(render_var(raw, layout, K, view.extrinsics, bg, options), K.height, K.width);
    ad::Var li = render_loss(r.rgb, to_tensor(view.image), w);
    out.terms.render += w.render * li.item();
    terms.push_back(li);
    weights.push_back(w.render);
    if (!full) continue;
    const auto mask = depth_mask(view.depth, r.alpha);
    ad::Var ld = ad::l1_loss(r.depth, to_tensor(view.depth), mask);
    out.terms.depth += w.depth * ld.item();
    terms.push_back(ld);
    weights.push_back(w.depth);
  }
  if (full) {
    ad::Var la = opacity_reg(raw);
    ad::Var ls = scale_reg(raw, layout.scale_limits);
    out.terms.opacity = w.opacity * la.item();
    out.terms.scale = w.scale * ls.item();
    terms.push_back(la);
    weights.push_back(w.opacity);
    terms.push_back(ls);
    weights.push_back(w.scale);
  }
  out.value = ad::weighted_sum(terms, weights);
  out.terms.total = out.value.item();
  require(std::isfinite(out.terms.total), ErrorCode::kDivergence, "loss is not finite");
  return out;
}

}  // namespace

TotalLoss total_loss(ad::Var raw, const GaussianScene& layout, const std::vector<CameraView>& views,
                     const LossWeights& w, const Vec3& background, const RenderOptions& options) {
  return assemble(raw, layout, views, w, background, options, true);
}

TotalLoss rendering_loss(ad::Var raw, const GaussianScene& layout,
                         const std::vector<CameraView>& views, const LossWeights& w,
                         const Vec3& background, const RenderOptions& options) {
  return assemble(raw, layout, views, w, background, options, false);
}

bool MetricsReport::finite() const {
  auto ok = [](double v) { return !std::isnan(v); };
  if (!ok(psnr) || !ok(ssim) || !ok(absrel) || !ok(delta1)) return false;
  for (const auto& v : views)
    if (!ok(v.psnr) || !ok(v.ssim) || !ok(v.absrel) || !ok(v.delta1)) return false;
  return true;
}

std::string MetricsReport::to_json(int indent) const {
  nlohmann::json j;
  j["psnr"] = number(psnr);
  j["ssim"] = number(ssim);
  j["absrel"] = number(absrel);
  j["delta1"] = number(delta1);
  j["num_gs"] = num_gs;
  j["recon_time_s"] = number(recon_time_s);
  j["views"] = nlohmann::json::array();
  for (const auto& v : views)
    j["views"].push_back({{"name", v.name}, {"psnr", number(v.psnr)}, {"ssim", number(v.ssim)},
                          {"absrel", number(v.absrel)}, {"delta1", number(v.delta1)}});
  return j.dump(indent);
}

MetricsReport MetricsReport::from_json(const std::string& text) {
  MetricsReport r;
  try {
    const auto j = nlohmann::json::parse(text);
    r.psnr = number(j.at("psnr"));
    r.ssim = number(j.at("ssim"));
    r.absrel = number(j.at("absrel"));
    r.delta1 = number(j.at("delta1"));
    r.num_gs = j.at("num_gs").get<std::size_t>();
    r.recon_time_s = number(j.at("recon_time_s"));
    for (const auto& v : j.at("views"))
      r.views.push_back({v.at("name").get<std::string>(), number(v.at("psnr")), number(v.at("ssim")),
                         number(v.at("absrel")), number(v.at("delta1"))});
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kParse, std::string("metrics report: ") + e.what());
  }
  return r;
}

ViewMetrics evaluate_view(const RenderOutput& rendered, const CameraView& gt) {
  ViewMetrics m;
  m.name = gt.name;
  m.psnr = psnr(rendered.rgb, gt.image);
  m.ssim = ssim(rendered.rgb, gt.image);
  m.absrel = absrel(rendered.depth, gt.depth);
  m.delta1 = delta1(rendered.depth, gt.depth);
  return m;
}

MetricsReport summarize(std::vector<ViewMetrics> views, std::size_t num_gs, double recon_time_s) {
  require(!views.empty(), ErrorCode::kPrecondition, "metrics: no views to summarize");
  MetricsReport r;
  for (const auto& v : views) {
    r.psnr += v.psnr;
    r.ssim += v.ssim;
    r.absrel += v.absrel;
    r.delta1 += v.delta1;
  }
  const double n = static_cast<double>(views.size());
  r.psnr /= n;
  r.ssim /= n;
  r.absrel /= n;
  r.delta1 /= n;
  r.num_gs = num_gs;
  r.recon_time_s = recon_time_s;
  r.views = std::move(views);
  return r;
}

}  // namespace asplat
