#include "asplat/rasterizer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/LU>

#include "asplat/error.hpp"
#include "asplat/parallel.hpp"

namespace asplat {
namespace {

using Mat23 = Eigen::Matrix<double, 2, 3>;

constexpr double kMaxMahalanobis2 = 9.0;  // 3σ footprint
constexpr double kMinAlphaForDepth = 1e-8;

struct Tiling {
  int tiles_x = 0;
  int tiles_y = 0;
  std::vector<Splat2D> splats;                // non-culled only
  std::vector<std::vector<int>> tile_lists;   // indices into splats, depth-sorted
};

void check_finite(const SplatInput& in, std::size_t i) {
  const bool ok = in.means[i].allFinite() && in.scales[i].allFinite() &&
                  in.rotations[i].allFinite() && in.colors[i].allFinite() &&
                  std::isfinite(in.opacities[i]);
  require(ok, ErrorCode::kNumeric, "render: non-finite attribute on gaussian " + std::to_string(i));
}

Tiling build_tiling(const SplatInput& in, const Intrinsics& K, const Extrinsics& E,
                    const RenderOptions& opt) {
  require(opt.tile_size >= 1, ErrorCode::kInvalidArgument, "render: tile size must be >= 1");
  Tiling t;
  t.tiles_x = (K.width + opt.tile_size - 1) / opt.tile_size;
  t.tiles_y = (K.height + opt.tile_size - 1) / opt.tile_size;
  t.tile_lists.resize(static_cast<std::size_t>(t.tiles_x) * t.tiles_y);

  std::vector<std::optional<Splat2D>> projected(in.size());
  parallel_for(in.size(), [&](std::size_t i) {
    check_finite(in, i);
    projected[i] = project_gaussian(in.means[i], in.scales[i], in.rotations[i], in.colors[i],
                                    in.opacities[i], K, E, opt);
    if (projected[i]) projected[i]->gaussian_id = i;
  });
  for (auto& p : projected)
    if (p) t.splats.push_back(*p);

  for (std::size_t s = 0; s < t.splats.size(); ++s) {
    const Splat2D& sp = t.splats[s];
    const int x0 = std::max(0, static_cast<int>(std::floor(sp.mean2d.x() - sp.radius)));
    const int x1 = std::min(K.width - 1, static_cast<int>(std::ceil(sp.mean2d.x() + sp.radius)));
    const int y0 = std::max(0, static_cast<int>(std::floor(sp.mean2d.y() - sp.radius)));
    const int y1 = std::min(K.height - 1, static_cast<int>(std::ceil(sp.mean2d.y() + sp.radius)));
    for (int ty = y0 / opt.tile_size; ty <= y1 / opt.tile_size; ++ty)
      for (int tx = x0 / opt.tile_size; tx <= x1 / opt.tile_size; ++tx)
        t.tile_lists[static_cast<std::size_t>(ty) * t.tiles_x + tx].push_back(static_cast<int>(s));
  }
  parallel_for(t.tile_lists.size(), [&](std::size_t tile) {
    auto& list = t.tile_lists[tile];
    std::sort(list.begin(), list.end(), [&](int a, int b) {
      const Splat2D& sa = t.splats[a];
      const Splat2D& sb = t.splats[b];
      if (sa.depth != sb.depth) return sa.depth < sb.depth;
      return sa.gaussian_id < sb.gaussian_id;
    });
  });
  return t;
}

struct Contribution {
  int pos = 0;  // position in the tile list
  double weight = 0.0;
  double transmittance = 0.0;  // before this splat
  double gauss = 0.0;
  double dx = 0.0;
  double dy = 0.0;
  bool clamped = false;
};

// Fields read per pixel, copied contiguously in tile order.
struct Packed {
  double mx, my, a, b, c, opacity, depth;
  Vec3 color;
};

std::vector<Packed> pack_tile(const Tiling& t, const std::vector<int>& list) {
  std::vector<Packed> ps;
  ps.reserve(list.size());
  for (int i : list) {
    const Splat2D& sp = t.splats[i];
    ps.push_back({sp.mean2d.x(), sp.mean2d.y(), sp.conic(0, 0), sp.conic(0, 1), sp.conic(1, 1),
                  sp.opacity, sp.depth, sp.color});
  }
  return ps;
}

// Front-to-back compositing of one pixel; fills `contribs` when non-null.
// Returns the transmittance left after the last contribution.
double composite_pixel(const std::vector<Packed>& ps, double px, double py,
                       const RenderOptions& opt, Vec3* color, double* depth_sum,
                       std::vector<Contribution>* contribs) {
  double T = 1.0;
  Vec3 c = Vec3::Zero();
  double dz = 0.0;
  for (std::size_t pos = 0; pos < ps.size(); ++pos) {
    if (T < opt.min_transmittance) break;
    const Packed& sp = ps[pos];
    const double dx = px - sp.mx;
    const double dy = py - sp.my;
    const double m2 = sp.a * dx * dx + 2.0 * sp.b * dx * dy + sp.c * dy * dy;
    if (m2 > kMaxMahalanobis2) continue;
    const double g = std::exp(-0.5 * m2);
    const double raw_w = sp.opacity * g;
    const bool clamped = raw_w > opt.alpha_clamp;
    const double w = clamped ? opt.alpha_clamp : raw_w;
    if (contribs) contribs->push_back({static_cast<int>(pos), w, T, g, dx, dy, clamped});
    c += sp.color * (w * T);
    dz += sp.depth * (w * T);
    T *= (1.0 - w);
  }
  if (color) *color = c;
  if (depth_sum) *depth_sum = dz;
  return T;
}

struct Splat2DGrad {
  Vec2 mean2d = Vec2::Zero();
  double conic_a = 0.0, conic_b = 0.0, conic_c = 0.0;
  Vec3 color = Vec3::Zero();
  double opacity = 0.0;
  double depth = 0.0;
};

// Jacobian evaluation point pulled into a band around the frustum, so
// splats grazing the image plane far off-axis cannot blow up.
Vec3 guard_band(const Intrinsics& K, const Vec3& t, const RenderOptions& opt, bool* cx, bool* cy) {
  const double tz = t.z();
  const double lo_x = -opt.guard_band * K.cx / K.fx, hi_x = opt.guard_band * (K.width - K.cx) / K.fx;
  const double lo_y = -opt.guard_band * K.cy / K.fy, hi_y = opt.guard_band * (K.height - K.cy) / K.fy;
  const double rx = t.x() / tz, ry = t.y() / tz;
  const double qx = std::clamp(rx, lo_x, hi_x), qy = std::clamp(ry, lo_y, hi_y);
  if (cx) *cx = qx != rx;
  if (cy) *cy = qy != ry;
  return Vec3(qx != rx ? qx * tz : t.x(), qy != ry ? qy * tz : t.y(), tz);
}

Mat23 ewa_jacobian(const Intrinsics& K, const Vec3& t, const RenderOptions& opt) {
  const Vec3 c = guard_band(K, t, opt, nullptr, nullptr);
  const double tz = c.z();
  Mat23 J;
  J << K.fx / tz, 0.0, -K.fx * c.x() / (tz * tz),
       0.0, K.fy / tz, -K.fy * c.y() / (tz * tz);
  return J;
}

}  // namespace

std::optional<Splat2D> project_gaussian(const Vec3& mean, const Vec3& scale, const Vec4& rotation,
                                        const Vec3& color, double opacity, const Intrinsics& K,
                                        const Extrinsics& E, const RenderOptions& opt) {
  const Mat3 W = E.R.transpose();
  const Vec3 t = W * (mean - E.T);
  if (t.z() <= opt.z_near) return std::nullopt;
  const double tz = t.z();
  const Mat23 T = ewa_jacobian(K, t, opt) * W;
  const Mat3 sigma = covariance(scale, rotation);
  Splat2D s;
  s.cov2d = T * sigma * T.transpose();
  s.cov2d(0, 0) += opt.dilation;
  s.cov2d(1, 1) += opt.dilation;
  const double det = s.cov2d.determinant();
  if (!(det > 0)) return std::nullopt;
  s.conic << s.cov2d(1, 1) / det, -s.cov2d(0, 1) / det, -s.cov2d(1, 0) / det, s.cov2d(0, 0) / det;
  s.mean2d = Vec2(K.fx * t.x() / tz + K.cx, K.fy * t.y() / tz + K.cy);
  const double mid = 0.5 * (s.cov2d(0, 0) + s.cov2d(1, 1));
  const double lambda_max = mid + std::sqrt(std::max(0.1, mid * mid - det));
  s.radius = static_cast<int>(std::ceil(3.0 * std::sqrt(lambda_max)));
  if (s.mean2d.x() + s.radius < 0 || s.mean2d.x() - s.radius > K.width - 1 ||
      s.mean2d.y() + s.radius < 0 || s.mean2d.y() - s.radius > K.height - 1)
    return std::nullopt;
  s.depth = tz;
  s.color = color;
  s.opacity = opacity;
  return s;
}

RenderOutput rasterize(const SplatInput& in, const Intrinsics& K, const Extrinsics& E,
                       const Vec3& background, const RenderOptions& opt, TileStats* stats) {
  K.validate();
  const Tiling t = build_tiling(in, K, E, opt);
  RenderOutput out{Image(K.width, K.height, 3), Image(K.width, K.height, 1),
                   Image(K.width, K.height, 1)};
  parallel_for(t.tile_lists.size(), [&](std::size_t tile) {
    const int tx = static_cast<int>(tile % t.tiles_x);
    const int ty = static_cast<int>(tile / t.tiles_x);
    const std::vector<Packed> ps = pack_tile(t, t.tile_lists[tile]);
    for (int y = ty * opt.tile_size; y < std::min(K.height, (ty + 1) * opt.tile_size); ++y) {
      for (int x = tx * opt.tile_size; x < std::min(K.width, (tx + 1) * opt.tile_size); ++x) {
        Vec3 c;
        double dz = 0.0;
        const double T = composite_pixel(ps, x, y, opt, &c, &dz, nullptr);
        const double alpha = 1.0 - T;
        for (int ch = 0; ch < 3; ++ch) out.rgb.at(x, y, ch) = c[ch] + T * background[ch];
        out.alpha.at(x, y) = alpha;
        out.depth.at(x, y) = dz / std::max(alpha, kMinAlphaForDepth);
      }
    }
  });
  if (stats) {
    stats->tiles_x = t.tiles_x;
    stats->tiles_y = t.tiles_y;
    stats->splat_counts.clear();
    for (const auto& l : t.tile_lists) stats->splat_counts.push_back(static_cast<int>(l.size()));
  }
  return out;
}

SplatGrads rasterize_backward(const SplatInput& in, const Intrinsics& K, const Extrinsics& E,
                              const Vec3& background, const Image& grad_rgb,
                              const Image& grad_depth, const RenderOptions& opt) {
  K.validate();
  const bool has_rgb = !grad_rgb.data.empty();
  const bool has_depth = !grad_depth.data.empty();
  require(!has_rgb || (grad_rgb.width == K.width && grad_rgb.height == K.height &&
                       grad_rgb.channels == 3),
          ErrorCode::kContract, "render_backward: rgb gradient shape mismatch");
  require(!has_depth || (grad_depth.width == K.width && grad_depth.height == K.height &&
                         grad_depth.channels == 1),
          ErrorCode::kContract, "render_backward: depth gradient shape mismatch");

  const std::size_t n = in.size();
  SplatGrads out;
  out.means.assign(n, Vec3::Zero());
  out.scales.assign(n, Vec3::Zero());
  out.rotations.assign(n, Vec4::Zero());
  out.colors.assign(n, Vec3::Zero());
  out.opacities.assign(n, 0.0);
  if (!has_rgb && !has_depth) return out;

  const Tiling t = build_tiling(in, K, E, opt);
  std::vector<std::vector<Splat2DGrad>> tile_grads(t.tile_lists.size());

  parallel_for(t.tile_lists.size(), [&](std::size_t tile) {
    const auto& list = t.tile_lists[tile];
    auto& grads = tile_grads[tile];
    grads.assign(list.size(), Splat2DGrad{});
    if (list.empty()) return;
    const int tx = static_cast<int>(tile % t.tiles_x);
    const int ty = static_cast<int>(tile / t.tiles_x);
    std::vector<Contribution> contribs;
    const std::vector<Packed> ps = pack_tile(t, list);
    for (int y = ty * opt.tile_size; y < std::min(K.height, (ty + 1) * opt.tile_size); ++y) {
      for (int x = tx * opt.tile_size; x < std::min(K.width, (tx + 1) * opt.tile_size); ++x) {
        const Vec3 gc = has_rgb ? Vec3(grad_rgb.at(x, y, 0), grad_rgb.at(x, y, 1),
                                       grad_rgb.at(x, y, 2))
                                : Vec3::Zero();
        const double gd = has_depth ? grad_depth.at(x, y) : 0.0;
        if (gc.isZero() && gd == 0.0) continue;
        contribs.clear();
        Vec3 c;
        double depth_sum = 0.0;
        const double T_final = composite_pixel(ps, x, y, opt, &c, &depth_sum, &contribs);
        const double alpha = 1.0 - T_final;
        const double denom = std::max(alpha, kMinAlphaForDepth);
        const double g_sz = gd / denom;
        const double g_a = alpha > kMinAlphaForDepth ? -gd * depth_sum / (alpha * alpha) : 0.0;

        Vec3 suffix_c = T_final * background;
        double suffix_z = 0.0;
        for (std::size_t k = contribs.size(); k-- > 0;) {
          const Contribution& ct = contribs[k];
          const Packed& sp = ps[ct.pos];
          Splat2DGrad& g = grads[ct.pos];
          const double wt = ct.weight * ct.transmittance;
          g.color += gc * wt;
          g.depth += g_sz * wt;
          const double inv = 1.0 / (1.0 - ct.weight);
          const double dC = gc.dot(sp.color * ct.transmittance - suffix_c * inv);
          const double dZ = g_sz * (sp.depth * ct.transmittance - suffix_z * inv);
          const double dA = g_a * T_final * inv;
          const double gw = dC + dZ + dA;
          suffix_c += sp.color * wt;
          suffix_z += sp.depth * wt;
          if (ct.clamped) continue;
          g.opacity += gw * ct.gauss;
          const double gg = gw * sp.opacity * ct.gauss;  // dL/d(power)
          const double a = sp.a, b = sp.b, cc = sp.c;
          g.conic_a += -0.5 * ct.dx * ct.dx * gg;
          g.conic_b += -ct.dx * ct.dy * gg;
          g.conic_c += -0.5 * ct.dy * ct.dy * gg;
          g.mean2d.x() += gg * (a * ct.dx + b * ct.dy);
          g.mean2d.y() += gg * (b * ct.dx + cc * ct.dy);
        }
      }
    }
  });

  std::vector<Splat2DGrad> splat_grads(t.splats.size());
  for (std::size_t tile = 0; tile < t.tile_lists.size(); ++tile) {
    const auto& list = t.tile_lists[tile];
    for (std::size_t i = 0; i < list.size(); ++i) {
      Splat2DGrad& dst = splat_grads[list[i]];
      const Splat2DGrad& src = tile_grads[tile][i];
      dst.mean2d += src.mean2d;
      dst.conic_a += src.conic_a;
      dst.conic_b += src.conic_b;
      dst.conic_c += src.conic_c;
      dst.color += src.color;
      dst.opacity += src.opacity;
      dst.depth += src.depth;
    }
  }

  const Mat3 W = E.R.transpose();
  parallel_for(t.splats.size(), [&](std::size_t s) {
    const Splat2D& sp = t.splats[s];
    const Splat2DGrad& g = splat_grads[s];
    const std::size_t id = sp.gaussian_id;
    out.colors[id] = g.color;
    out.opacities[id] = g.opacity;

    // conic -> cov2d
    Mat2 g_conic;
    g_conic << g.conic_a, 0.5 * g.conic_b, 0.5 * g.conic_b, g.conic_c;
    const Mat2 g_cov = -sp.conic * g_conic * sp.conic;

    const Vec3 t3 = W * (in.means[id] - E.T);
    bool clamped_x = false, clamped_y = false;
    const Vec3 tj = guard_band(K, t3, opt, &clamped_x, &clamped_y);
    const double tx = tj.x(), ty = tj.y(), tz = t3.z();
    const Mat23 T = ewa_jacobian(K, t3, opt) * W;
    const Mat3 sigma = covariance(in.scales[id], in.rotations[id]);

    const Mat3 g_sigma = T.transpose() * g_cov * T;
    const Mat23 g_T = 2.0 * g_cov * T * sigma;
    const Mat23 g_J = g_T * W.transpose();

    Vec3 g_t = Vec3::Zero();
    const double tz2 = tz * tz, tz3 = tz2 * tz;
    // A clamped coordinate is tz·limit, so its share flows into tz instead.
    if (clamped_x) {
      g_t.z() += g_J(0, 2) * (-K.fx / tz2) * (tx / tz);
    } else {
      g_t.x() += g_J(0, 2) * (-K.fx / tz2);
    }
    if (clamped_y) {
      g_t.z() += g_J(1, 2) * (-K.fy / tz2) * (ty / tz);
    } else {
      g_t.y() += g_J(1, 2) * (-K.fy / tz2);
    }
    g_t.z() += g_J(0, 0) * (-K.fx / tz2) + g_J(0, 2) * (2.0 * K.fx * tx / tz3) +
               g_J(1, 1) * (-K.fy / tz2) + g_J(1, 2) * (2.0 * K.fy * ty / tz3);
    // The projected mean itself is never clamped.
    g_t.x() += g.mean2d.x() * K.fx / tz;
    g_t.z() += g.mean2d.x() * (-K.fx * t3.x() / tz2);
    g_t.y() += g.mean2d.y() * K.fy / tz;
    g_t.z() += g.mean2d.y() * (-K.fy * t3.y() / tz2);
    g_t.z() += g.depth;
    out.means[id] = W.transpose() * g_t;

    // sigma = M Mᵀ, M = R(q) diag(s)
    const Vec4& q = in.rotations[id];
    const Vec3& sc = in.scales[id];
    const Mat3 R = quat_to_rotation(q);
    const Mat3 M = R * sc.asDiagonal();
    const Mat3 g_M = 2.0 * g_sigma * M;
    Vec3 g_s;
    for (int j = 0; j < 3; ++j) g_s[j] = g_M.col(j).dot(R.col(j));
    out.scales[id] = g_s;
    const Mat3 g_R = g_M * sc.asDiagonal();
    const double w = q[0], x = q[1], y = q[2], z = q[3];
    Mat3 dw, dx, dy, dz;
    dw << 0, -2 * z, 2 * y, 2 * z, 0, -2 * x, -2 * y, 2 * x, 0;
    dx << 0, 2 * y, 2 * z, 2 * y, -4 * x, -2 * w, 2 * z, 2 * w, -4 * x;
    dy << -4 * y, 2 * x, 2 * w, 2 * x, 0, 2 * z, -2 * w, 2 * z, -4 * y;
    dz << -4 * z, -2 * w, 2 * x, 2 * w, -4 * z, 2 * y, 2 * x, 2 * y, 0;
    out.rotations[id] = Vec4(g_R.cwiseProduct(dw).sum(), g_R.cwiseProduct(dx).sum(),
                             g_R.cwiseProduct(dy).sum(), g_R.cwiseProduct(dz).sum());
  });
  return out;
}

SplatInput scene_splats(const GaussianScene& scene) {
  SplatInput in;
  const std::size_t n = scene.size();
  in.means.resize(n);
  in.scales.resize(n);
  in.rotations.resize(n);
  in.colors.resize(n);
  in.opacities.resize(n);
  const double h = scene.normalization.half_extent;
  for (std::size_t j = 0; j < n; ++j) {
    const ActivatedGaussian g = scene.activated(j);
    const Vec3 mu = compose_center(scene.anchors[scene.anchor_of(j)], g.offset, scene.offset_bound);
    in.means[j] = scene.normalization.denormalize(mu);
    in.scales[j] = g.scale * h;
    in.rotations[j] = g.rotation;
    in.colors[j] = sh_to_rgb(g.sh);
    in.opacities[j] = g.opacity;
  }
  return in;
}

RenderOutput render(const GaussianScene& scene, const Intrinsics& K, const Extrinsics& E,
                    const Vec3& background, const RenderOptions& options, TileStats* stats) {
  require(scene.size() > 0, ErrorCode::kPrecondition, "render: empty scene");
  return rasterize(scene_splats(scene), K, E, background, options, stats);
}

std::vector<double> splat_grads_to_raw(const GaussianScene& scene, const SplatGrads& g) {
  const std::size_t n = scene.size();
  std::vector<double> out(n * raw::kCount, 0.0);
  const double h = scene.normalization.half_extent;
  const double b = scene.offset_bound;
  parallel_for(n, [&](std::size_t j) {
    const double* r = scene.raw_of(j);
    double* o = out.data() + j * raw::kCount;
    for (int i = 0; i < 3; ++i) {
      const double th = std::tanh(r[raw::kOffset + i]);
      o[raw::kOffset + i] = g.means[j][i] * h * b * (1.0 - th * th);
    }
    const double alpha = 1.0 / (1.0 + std::exp(-r[raw::kOpacity]));
    o[raw::kOpacity] = g.opacities[j] * alpha * (1.0 - alpha);
    for (int i = 0; i < 3; ++i) {
      const double e = std::exp(r[raw::kScale + i]);
      const bool inside = e > scene.scale_limits.min && e < scene.scale_limits.max;
      o[raw::kScale + i] = inside ? g.scales[j][i] * h * e : 0.0;
    }
    const Vec4 q(r[raw::kRot], r[raw::kRot + 1], r[raw::kRot + 2], r[raw::kRot + 3]);
    const double qn = q.norm();
    if (qn >= 1e-12) {
      const Vec4 u = q / qn;
      const Vec4 gq = (g.rotations[j] - u * u.dot(g.rotations[j])) / qn;
      for (int i = 0; i < 4; ++i) o[raw::kRot + i] = gq[i];
    }
    for (int i = 0; i < 3; ++i) {
      const double v = 0.5 + kShC0 * r[raw::kSh + i];
      o[raw::kSh + i] = (v > 0.0 && v < 1.0) ? g.colors[j][i] * kShC0 : 0.0;
    }
  });
  return out;
}

std::vector<double> render_backward(const GaussianScene& scene, const Intrinsics& K,
                                    const Extrinsics& E, const Vec3& background,
                                    const Image& grad_rgb, const Image& grad_depth,
                                    const RenderOptions& options) {
  require(scene.size() > 0, ErrorCode::kPrecondition, "render_backward: empty scene");
  const SplatInput in = scene_splats(scene);
  const SplatGrads g = rasterize_backward(in, K, E, background, grad_rgb, grad_depth, options);
  return splat_grads_to_raw(scene, g);
}

}  // namespace asplat
