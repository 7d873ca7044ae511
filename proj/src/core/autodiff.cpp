#include "asplat/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/Core>

#include "asplat/error.hpp"
#include "asplat/parallel.hpp"

namespace asplat::ad {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapC = Eigen::Map<const RowMat>;
using MapM = Eigen::Map<RowMat>;

void check_same_shape(const Var& a, const Var& b, const char* op) {
  require(a.shape() == b.shape(), ErrorCode::kContract, std::string(op) + ": shape mismatch");
}

// Elementwise unary op with derivative computed from input and output.
template <typename F, typename D>
Var unary(Var a, F f, D dfdx) {
  const Tensor& x = a.value();
  Tensor out(x.shape);
  for (std::size_t i = 0; i < x.numel(); ++i) out.data[i] = f(x.data[i]);
  const int ia = a.id;
  return a.tape->record(std::move(out), {ia}, [ia, dfdx](Tape& t, int self) {
    const auto& g = t.grad(self);
    const auto& x = t.value(ia).data;
    const auto& y = t.value(self).data;
    auto& gx = t.grad(ia);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * dfdx(x[i], y[i]);
  });
}

int sym_index(int i, int n) {
  const int period = 2 * n;
  int m = i % period;
  if (m < 0) m += period;
  return m < n ? m : period - 1 - m;
}

const std::vector<double>& ssim_window() {
  static const std::vector<double> w = [] {
    std::vector<double> g(11);
    double s = 0;
    for (int k = -5; k <= 5; ++k) {
      g[k + 5] = std::exp(-(k * k) / (2.0 * 1.5 * 1.5));
      s += g[k + 5];
    }
    for (auto& v : g) v /= s;
    return g;
  }();
  return w;
}

// Separable Gaussian filter on an H×W plane with symmetric extension.
std::vector<double> gauss_filter(const std::vector<double>& x, int h, int w) {
  const auto& g = ssim_window();
  std::vector<double> tmp(x.size(), 0.0), out(x.size(), 0.0);
  for (int y = 0; y < h; ++y)
    for (int c = 0; c < w; ++c) {
      double s = 0;
      for (int k = -5; k <= 5; ++k) s += g[k + 5] * x[y * w + sym_index(c + k, w)];
      tmp[y * w + c] = s;
    }
  for (int y = 0; y < h; ++y)
    for (int c = 0; c < w; ++c) {
      double s = 0;
      for (int k = -5; k <= 5; ++k) s += g[k + 5] * tmp[sym_index(y + k, h) * w + c];
      out[y * w + c] = s;
    }
  return out;
}

// Adjoint of gauss_filter.
std::vector<double> gauss_filter_t(const std::vector<double>& gy, int h, int w) {
  const auto& g = ssim_window();
  std::vector<double> tmp(gy.size(), 0.0), out(gy.size(), 0.0);
  for (int y = 0; y < h; ++y)
    for (int c = 0; c < w; ++c)
      for (int k = -5; k <= 5; ++k) tmp[sym_index(y + k, h) * w + c] += g[k + 5] * gy[y * w + c];
  for (int y = 0; y < h; ++y)
    for (int c = 0; c < w; ++c)
      for (int k = -5; k <= 5; ++k) out[y * w + sym_index(c + k, w)] += g[k + 5] * tmp[y * w + c];
  return out;
}

constexpr double kSsimC1 = 0.01 * 0.01;
constexpr double kSsimC2 = 0.03 * 0.03;

struct SsimPlane {
  std::vector<double> mu_x, mu_y, s;  // s: per-pixel SSIM
  std::vector<double> A1, A2, B1, B2;
};

SsimPlane ssim_plane(const std::vector<double>& x, const std::vector<double>& y, int h, int w) {
  const std::size_t n = x.size();
  std::vector<double> xx(n), yy(n), xy(n);
  for (std::size_t i = 0; i < n; ++i) {
    xx[i] = x[i] * x[i];
    yy[i] = y[i] * y[i];
    xy[i] = x[i] * y[i];
  }
  SsimPlane p;
  p.mu_x = gauss_filter(x, h, w);
  p.mu_y = gauss_filter(y, h, w);
  const auto exx = gauss_filter(xx, h, w);
  const auto eyy = gauss_filter(yy, h, w);
  const auto exy = gauss_filter(xy, h, w);
  p.s.resize(n);
  p.A1.resize(n);
  p.A2.resize(n);
  p.B1.resize(n);
  p.B2.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double mx = p.mu_x[i], my = p.mu_y[i];
    p.A1[i] = 2 * mx * my + kSsimC1;
    p.A2[i] = 2 * (exy[i] - mx * my) + kSsimC2;
    p.B1[i] = mx * mx + my * my + kSsimC1;
    p.B2[i] = (exx[i] - mx * mx) + (eyy[i] - my * my) + kSsimC2;
    p.s[i] = p.A1[i] * p.A2[i] / (p.B1[i] * p.B2[i]);
  }
  return p;
}

std::vector<double> channel_plane(const Tensor& t, int c) {
  const int channels = t.shape[2];
  const std::size_t n = static_cast<std::size_t>(t.shape[0]) * t.shape[1];
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = t.data[i * channels + c];
  return out;
}

void check_image(const Tensor& t, const char* op) {
  require(t.shape.size() == 3, ErrorCode::kContract, std::string(op) + ": expected H×W×C tensor");
}

}  // namespace

std::size_t numel_of(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int d : shape) n *= static_cast<std::size_t>(d);
  return n;
}

Tensor::Tensor(std::vector<int> s, double fill) : shape(std::move(s)) {
  data.assign(numel_of(shape), fill);
}

Tensor::Tensor(std::vector<int> s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
  require(data.size() == numel_of(shape), ErrorCode::kContract, "tensor: data size mismatch");
}

int Tensor::cols() const {
  int c = 1;
  for (std::size_t i = 1; i < shape.size(); ++i) c *= shape[i];
  return c;
}

const Tensor& Var::value() const { return tape->value(id); }

double Var::item() const {
  require(numel() == 1, ErrorCode::kContract, "item: tensor is not a scalar");
  return value().data[0];
}

Var Tape::constant(Tensor value) {
  auto n = std::make_unique<Node>();
  n->value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<int>(nodes_.size() - 1)};
}

Var Tape::param(Parameter& p) {
  auto n = std::make_unique<Node>();
  n->value = Tensor(p.shape, p.value);
  n->requires_grad = p.trainable;
  n->param = &p;
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<int>(nodes_.size() - 1)};
}

Var Tape::record(Tensor value, std::vector<int> inputs, Backward backward) {
  auto n = std::make_unique<Node>();
  n->value = std::move(value);
  for (int i : inputs) n->requires_grad = n->requires_grad || nodes_[i]->requires_grad;
  if (n->requires_grad) n->backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<int>(nodes_.size() - 1)};
}

std::vector<double>& Tape::grad(int id) {
  Node& n = *nodes_[id];
  if (n.grad.size() != n.value.numel()) n.grad.assign(n.value.numel(), 0.0);
  return n.grad;
}

const std::vector<double>* Tape::grad_if_any(int id) const {
  const Node& n = *nodes_[id];
  return n.grad.empty() ? nullptr : &n.grad;
}

void Tape::backward(const Var& scalar) {
  require(scalar.tape == this && scalar.numel() == 1, ErrorCode::kContract,
          "backward: expected a scalar on this tape");
  if (!nodes_[scalar.id]->requires_grad) return;
  grad(scalar.id)[0] += 1.0;
  for (int id = scalar.id; id >= 0; --id) {
    Node& n = *nodes_[id];
    if (!n.requires_grad || n.grad.empty()) continue;
    if (n.backward) n.backward(*this, id);
    if (n.param) {
      auto& pg = n.param->grad;
      if (pg.size() != n.grad.size()) pg.assign(n.grad.size(), 0.0);
      for (std::size_t i = 0; i < pg.size(); ++i) pg[i] += n.grad[i];
    }
  }
}

Var add(Var a, Var b) {
  check_same_shape(a, b, "add");
  Tensor out = a.value();
  const auto& bd = b.value().data;
  for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] += bd[i];
  const int ia = a.id, ib = b.id;
  return a.tape->record(std::move(out), {ia, ib}, [ia, ib](Tape& t, int self) {
    const auto& g = t.grad(self);
    for (int in : {ia, ib}) {
      if (!t.requires_grad(in)) continue;
      auto& gi = t.grad(in);
      for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i];
    }
  });
}

Var sub(Var a, Var b) { return add(a, scale(b, -1.0)); }

Var mul(Var a, Var b) {
  check_same_shape(a, b, "mul");
  Tensor out = a.value();
  const auto& bd = b.value().data;
  for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] *= bd[i];
  const int ia = a.id, ib = b.id;
  return a.tape->record(std::move(out), {ia, ib}, [ia, ib](Tape& t, int self) {
    const auto& g = t.grad(self);
    if (t.requires_grad(ia)) {
      auto& ga = t.grad(ia);
      const auto& bv = t.value(ib).data;
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
    }
    if (t.requires_grad(ib)) {
      auto& gb = t.grad(ib);
      const auto& av = t.value(ia).data;
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
    }
  });
}

Var scale(Var a, double s) {
  return unary(a, [s](double x) { return s * x; }, [s](double, double) { return s; });
}

Var add_scalar(Var a, double s) {
  return unary(a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Var add_rowvec(Var a, Var b) {
  const int n = a.rows(), m = a.cols();
  require(static_cast<int>(b.numel()) == m, ErrorCode::kContract, "add_rowvec: width mismatch");
  Tensor out = a.value();
  const auto& bd = b.value().data;
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < m; ++c) out.data[static_cast<std::size_t>(r) * m + c] += bd[c];
  const int ia = a.id, ib = b.id;
  return a.tape->record(std::move(out), {ia, ib}, [ia, ib, n, m](Tape& t, int self) {
    const auto& g = t.grad(self);
    if (t.requires_grad(ia)) {
      auto& ga = t.grad(ia);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (t.requires_grad(ib)) {
      auto& gb = t.grad(ib);
      for (int r = 0; r < n; ++r)
        for (int c = 0; c < m; ++c) gb[c] += g[static_cast<std::size_t>(r) * m + c];
    }
  });
}

Var tanh(Var a) {
  return unary(a, [](double x) { return std::tanh(x); },
               [](double, double y) { return 1.0 - y * y; });
}

Var gelu(Var a) {
  constexpr double kInvSqrt2 = 0.70710678118654752440;
  constexpr double kInvSqrt2Pi = 0.39894228040143267794;
  return unary(a, [](double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); },
               [](double x, double) {
                 return 0.5 * (1.0 + std::erf(x * kInvSqrt2)) + x * kInvSqrt2Pi * std::exp(-0.5 * x * x);
               });
}

Var sigmoid(Var a) {
  return unary(a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
               [](double, double y) { return y * (1.0 - y); });
}

Var exp(Var a) {
  return unary(a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var clamp(Var a, double lo, double hi) {
  return unary(a, [lo, hi](double x) { return std::clamp(x, lo, hi); },
               [lo, hi](double x, double) { return (x > lo && x < hi) ? 1.0 : 0.0; });
}

Var reshape(Var a, std::vector<int> shape) {
  require(numel_of(shape) == a.numel(), ErrorCode::kContract, "reshape: element count mismatch");
  Tensor out(std::move(shape), a.value().data);
  const int ia = a.id;
  return a.tape->record(std::move(out), {ia}, [ia](Tape& t, int self) {
    const auto& g = t.grad(self);
    auto& ga = t.grad(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
  });
}

Var concat_cols(const std::vector<Var>& parts) {
  require(!parts.empty(), ErrorCode::kContract, "concat_cols: no inputs");
  const int n = parts.front().rows();
  int width = 0;
  std::vector<int> widths, ids;
  for (const auto& p : parts) {
    require(p.rows() == n, ErrorCode::kContract, "concat_cols: row count mismatch");
    widths.push_back(p.cols());
    ids.push_back(p.id);
    width += p.cols();
  }
  Tensor out({n, width});
  int off = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto& d = parts[k].value().data;
    for (int r = 0; r < n; ++r)
      std::copy_n(d.begin() + static_cast<std::size_t>(r) * widths[k], widths[k],
                  out.data.begin() + static_cast<std::size_t>(r) * width + off);
    off += widths[k];
  }
  return parts.front().tape->record(std::move(out), ids, [ids, widths, n, width](Tape& t, int self) {
    const auto& g = t.grad(self);
    int off = 0;
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (t.requires_grad(ids[k])) {
        auto& gi = t.grad(ids[k]);
        for (int r = 0; r < n; ++r)
          for (int c = 0; c < widths[k]; ++c)
            gi[static_cast<std::size_t>(r) * widths[k] + c] +=
                g[static_cast<std::size_t>(r) * width + off + c];
      }
      off += widths[k];
    }
  });
}

Var slice_cols(Var a, int start, int count) {
  const int n = a.rows(), m = a.cols();
  require(start >= 0 && count >= 0 && start + count <= m, ErrorCode::kContract,
          "slice_cols: range out of bounds");
  Tensor out({n, count});
  const auto& d = a.value().data;
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < count; ++c)
      out.data[static_cast<std::size_t>(r) * count + c] = d[static_cast<std::size_t>(r) * m + start + c];
  const int ia = a.id;
  return a.tape->record(std::move(out), {ia}, [ia, n, m, start, count](Tape& t, int self) {
    const auto& g = t.grad(self);
    auto& ga = t.grad(ia);
    for (int r = 0; r < n; ++r)
      for (int c = 0; c < count; ++c)
        ga[static_cast<std::size_t>(r) * m + start + c] += g[static_cast<std::size_t>(r) * count + c];
  });
}

Var gather_rows(Var a, const std::vector<int>& index) {
  const int n = a.rows(), m = a.cols();
  Tensor out({static_cast<int>(index.size()), m});
  const auto& d = a.value().data;
  for (std::size_t i = 0; i < index.size(); ++i) {
    require(index[i] >= 0 && index[i] < n, ErrorCode::kContract, "gather_rows: index out of range");
    std::copy_n(d.begin() + static_cast<std::size_t>(index[i]) * m, m,
                out.data.begin() + i * m);
  }
  const int ia = a.id;
  return a.tape->record(std::move(out), {ia}, [ia, index, m](Tape& t, int self) {
    const auto& g = t.grad(self);
    auto& ga = t.grad(ia);
    for (std::size_t i = 0; i < index.size(); ++i)
      for (int c = 0; c < m; ++c)
        ga[static_cast<std::size_t>(index[i]) * m + c] += g[i * m + c];
  });
}

Var row_prod(Var a) {
  const int n = a.rows(), m = a.cols();
  Tensor out({n, 1});
  const auto& d = a.value().data;
  for (int r = 0; r < n; ++r) {
    double p = 1.0;
    for (int c = 0; c < m; ++c) p *= d[static_cast<std::size_t>(r) * m + c];
    out.data[r] = p;
  }
  const int ia = a.id;
  return a.tape->record(std::move(out), {ia}, [ia, n, m](Tape& t, int self) {
    const auto& g = t.grad(self);
    const auto& d = t.value(ia).data;
    auto& ga = t.grad(ia);
    for (int r = 0; r < n; ++r)
      for (int c = 0; c < m; ++c) {
        double p = 1.0;
        for (int k = 0; k < m; ++k)
          if (k != c) p *= d[static_cast<std::size_t>(r) * m + k];
        ga[static_cast<std::size_t>(r) * m + c] += g[r] * p;
      }
  });
}

Var sum(Var a) {
  double s = 0;
  for (double v : a.value().data) s += v;
  const int ia = a.id;
  return a.tape->record(Tensor({1}, {s}), {ia}, [ia](Tape& t, int self) {
    const double g = t.grad(self)[0];
    auto& ga = t.grad(ia);
    for (auto& v : ga) v += g;
  });
}

Var mean(Var a) {
  require(a.numel() > 0, ErrorCode::kContract, "mean: empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(a.numel()));
}

Var weighted_sum(const std::vector<Var>& scalars, const std::vector<double>& weights) {
  require(!scalars.empty() && scalars.size() == weights.size(), ErrorCode::kContract,
          "weighted_sum: size mismatch");
  double s = 0;
  std::vector<int> ids;
  for (std::size_t i = 0; i < scalars.size(); ++i) {
    s += weights[i] * scalars[i].item();
    ids.push_back(scalars[i].id);
  }
  return scalars.front().tape->record(Tensor({1}, {s}), ids, [ids, weights](Tape& t, int self) {
    const double g = t.grad(self)[0];
    for (std::size_t i = 0; i < ids.size(); ++i)
      if (t.requires_grad(ids[i])) t.grad(ids[i])[0] += g * weights[i];
  });
}

Var matmul(Var a, Var b) {
  const int n = a.rows(), k = a.cols(), m = b.cols();
  require(b.rows() == k, ErrorCode::kContract, "matmul: inner dimension mismatch");
  Tensor out({n, m});
  MapM(out.data.data(), n, m).noalias() =
      MapC(a.value().data.data(), n, k) * MapC(b.value().data.data(), k, m);
  const int ia = a.id, ib = b.id;
  return a.tape->record(std::move(out), {ia, ib}, [ia, ib, n, k, m](Tape& t, int self) {
    MapC g(t.grad(self).data(), n, m);
    if (t.requires_grad(ia))
      MapM(t.grad(ia).data(), n, k).noalias() += g * MapC(t.value(ib).data.data(), k, m).transpose();
    if (t.requires_grad(ib))
      MapM(t.grad(ib).data(), k, m).noalias() += MapC(t.value(ia).data.data(), n, k).transpose() * g;
  });
}

Var layer_norm(Var x, Var gain, Var bias, double eps) {
  const int n = x.rows(), d = x.cols();
  require(static_cast<int>(gain.numel()) == d && static_cast<int>(bias.numel()) == d,
          ErrorCode::kContract, "layer_norm: parameter width mismatch");
  const auto& xv = x.value().data;
  const auto& gv = gain.value().data;
  const auto& bv = bias.value().data;
  Tensor out(x.shape());
  std::vector<double> xhat(xv.size()), inv_std(n);
  for (int r = 0; r < n; ++r) {
    const double* row = xv.data() + static_cast<std::size_t>(r) * d;
    double mu = 0;
    for (int c = 0; c < d; ++c) mu += row[c];
    mu /= d;
    double var = 0;
    for (int c = 0; c < d; ++c) var += (row[c] - mu) * (row[c] - mu);
    var /= d;
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (int c = 0; c < d; ++c) {
      const std::size_t i = static_cast<std::size_t>(r) * d + c;
      xhat[i] = (row[c] - mu) * inv_std[r];
      out.data[i] = xhat[i] * gv[c] + bv[c];
    }
  }
  const int ix = x.id, ig = gain.id, ib = bias.id;
  return x.tape->record(std::move(out), {ix, ig, ib},
                        [ix, ig, ib, n, d, xhat = std::move(xhat), inv_std = std::move(inv_std)](
                            Tape& t, int self) {
    const auto& g = t.grad(self);
    const auto& gv = t.value(ig).data;
    if (t.requires_grad(ig) || t.requires_grad(ib)) {
      std::vector<double> gg(d, 0.0), gb(d, 0.0);
      for (int r = 0; r < n; ++r)
        for (int c = 0; c < d; ++c) {
          const std::size_t i = static_cast<std::size_t>(r) * d + c;
          gg[c] += g[i] * xhat[i];
          gb[c] += g[i];
        }
      if (t.requires_grad(ig)) {
        auto& dst = t.grad(ig);
        for (int c = 0; c < d; ++c) dst[c] += gg[c];
      }
      if (t.requires_grad(ib)) {
        auto& dst = t.grad(ib);
        for (int c = 0; c < d; ++c) dst[c] += gb[c];
      }
    }
    if (t.requires_grad(ix)) {
      auto& gx = t.grad(ix);
      for (int r = 0; r < n; ++r) {
        double m1 = 0, m2 = 0;
        for (int c = 0; c < d; ++c) {
          const std::size_t i = static_cast<std::size_t>(r) * d + c;
          const double gh = g[i] * gv[c];
          m1 += gh;
          m2 += gh * xhat[i];
        }
        m1 /= d;
        m2 /= d;
        for (int c = 0; c < d; ++c) {
          const std::size_t i = static_cast<std::size_t>(r) * d + c;
          gx[i] += inv_std[r] * (g[i] * gv[c] - m1 - xhat[i] * m2);
        }
      }
    }
  });
}

Var attention(Var q, Var k, Var v, const Windows& windows_in) {
  const int n = q.rows(), d = q.cols(), dv = v.cols();
  require(k.rows() == n && v.rows() == n && k.cols() == d, ErrorCode::kContract,
          "attention: shape mismatch");
  Windows windows = windows_in.empty() ? Windows{{0, n}} : windows_in;
  int covered = 0;
  for (const auto& [s, len] : windows) {
    require(s == covered && len > 0, ErrorCode::kContract,
            "attention: windows must tile the rows in order");
    covered += len;
  }
  require(covered == n, ErrorCode::kContract, "attention: windows must cover every row");
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));

  auto probs = std::make_shared<std::vector<RowMat>>(windows.size());
  Tensor out({n, dv});
  const auto& qd = q.value().data;
  const auto& kd = k.value().data;
  const auto& vd = v.value().data;
  parallel_for(windows.size(), [&](std::size_t w) {
    const auto [s, len] = windows[w];
    MapC Q(qd.data() + static_cast<std::size_t>(s) * d, len, d);
    MapC K(kd.data() + static_cast<std::size_t>(s) * d, len, d);
    MapC V(vd.data() + static_cast<std::size_t>(s) * dv, len, dv);
    RowMat S = (Q * K.transpose()) * inv_sqrt_d;
    for (int r = 0; r < len; ++r) {
      const double mx = S.row(r).maxCoeff();
      S.row(r) = (S.row(r).array() - mx).exp();
      S.row(r) /= S.row(r).sum();
    }
    MapM(out.data.data() + static_cast<std::size_t>(s) * dv, len, dv).noalias() = S * V;
    (*probs)[w] = std::move(S);
  });
  const int iq = q.id, ik = k.id, iv = v.id;
  return q.tape->record(std::move(out), {iq, ik, iv},
                        [iq, ik, iv, d, dv, windows, probs, inv_sqrt_d](Tape& t, int self) {
    const auto& g = t.grad(self);
    const bool gq = t.requires_grad(iq), gk = t.requires_grad(ik), gv = t.requires_grad(iv);
    std::vector<double>* dq = gq ? &t.grad(iq) : nullptr;
    std::vector<double>* dk = gk ? &t.grad(ik) : nullptr;
    std::vector<double>* dvv = gv ? &t.grad(iv) : nullptr;
    const auto& qd = t.value(iq).data;
    const auto& kd = t.value(ik).data;
    const auto& vd = t.value(iv).data;
    parallel_for(windows.size(), [&](std::size_t w) {
      const auto [s, len] = windows[w];
      const RowMat& P = (*probs)[w];
      MapC G(g.data() + static_cast<std::size_t>(s) * dv, len, dv);
      MapC Q(qd.data() + static_cast<std::size_t>(s) * d, len, d);
      MapC K(kd.data() + static_cast<std::size_t>(s) * d, len, d);
      MapC V(vd.data() + static_cast<std::size_t>(s) * dv, len, dv);
      if (dvv) MapM(dvv->data() + static_cast<std::size_t>(s) * dv, len, dv).noalias() += P.transpose() * G;
      if (!dq && !dk) return;
      RowMat dP = G * V.transpose();
      RowMat dS(len, len);
      for (int r = 0; r < len; ++r) {
        const double dot = P.row(r).dot(dP.row(r));
        dS.row(r) = P.row(r).array() * (dP.row(r).array() - dot);
      }
      dS *= inv_sqrt_d;
      if (dq) MapM(dq->data() + static_cast<std::size_t>(s) * d, len, d).noalias() += dS * K;
      if (dk) MapM(dk->data() + static_cast<std::size_t>(s) * d, len, d).noalias() += dS.transpose() * Q;
    });
  });
}

Var conv3x3(Var x, Var w, Var b, int stride) {
  const Tensor& xv = x.value();
  check_image(xv, "conv3x3");
  const int H = xv.shape[0], W = xv.shape[1], Ci = xv.shape[2];
  const Tensor& wv = w.value();
  require(wv.shape.size() == 4 && wv.shape[1] == 3 && wv.shape[2] == 3 && wv.shape[3] == Ci,
          ErrorCode::kContract, "conv3x3: weight shape mismatch");
  const int Co = wv.shape[0];
  require(static_cast<int>(b.numel()) == Co, ErrorCode::kContract, "conv3x3: bias shape mismatch");
  require(stride >= 1, ErrorCode::kContract, "conv3x3: stride must be >= 1");
  const int Ho = (H - 1) / stride + 1, Wo = (W - 1) / stride + 1;
  Tensor out({Ho, Wo, Co});
  const auto& xd = xv.data;
  const auto& wd = wv.data;
  const auto& bd = b.value().data;
  parallel_for(Ho, [&](std::size_t oy) {
    for (int ox = 0; ox < Wo; ++ox) {
      double* o = out.data.data() + (oy * Wo + ox) * Co;
      for (int co = 0; co < Co; ++co) o[co] = bd[co];
      for (int ky = 0; ky < 3; ++ky) {
        const int iy = static_cast<int>(oy) * stride + ky - 1;
        if (iy < 0 || iy >= H) continue;
        for (int kx = 0; kx < 3; ++kx) {
          const int ix = ox * stride + kx - 1;
          if (ix < 0 || ix >= W) continue;
          const double* xi = xd.data() + (static_cast<std::size_t>(iy) * W + ix) * Ci;
          for (int co = 0; co < Co; ++co) {
            const double* wk = wd.data() + ((static_cast<std::size_t>(co) * 3 + ky) * 3 + kx) * Ci;
            double s = 0;
            for (int ci = 0; ci < Ci; ++ci) s += wk[ci] * xi[ci];
            o[co] += s;
          }
        }
      }
    }
  });
  const int ix_ = x.id, iw = w.id, ib = b.id;
  return x.tape->record(std::move(out), {ix_, iw, ib},
                        [ix_, iw, ib, H, W, Ci, Co, Ho, Wo, stride](Tape& t, int self) {
    const auto& g = t.grad(self);
    const auto& xd = t.value(ix_).data;
    const auto& wd = t.value(iw).data;
    if (t.requires_grad(ib)) {
      auto& gb = t.grad(ib);
      for (std::size_t p = 0; p < static_cast<std::size_t>(Ho) * Wo; ++p)
        for (int co = 0; co < Co; ++co) gb[co] += g[p * Co + co];
    }
    if (t.requires_grad(iw)) {
      auto& gw = t.grad(iw);
      parallel_for(Co, [&](std::size_t co) {
        for (int oy = 0; oy < Ho; ++oy)
          for (int ox = 0; ox < Wo; ++ox) {
            const double go = g[(static_cast<std::size_t>(oy) * Wo + ox) * Co + co];
            if (go == 0.0) continue;
            for (int ky = 0; ky < 3; ++ky) {
              const int iy = oy * stride + ky - 1;
              if (iy < 0 || iy >= H) continue;
              for (int kx = 0; kx < 3; ++kx) {
                const int ix = ox * stride + kx - 1;
                if (ix < 0 || ix >= W) continue;
                const double* xi = xd.data() + (static_cast<std::size_t>(iy) * W + ix) * Ci;
                double* wk = gw.data() + ((co * 3 + ky) * 3 + kx) * Ci;
                for (int ci = 0; ci < Ci; ++ci) wk[ci] += go * xi[ci];
              }
            }
          }
      });
    }
    if (t.requires_grad(ix_)) {
      auto& gx = t.grad(ix_);
      parallel_for(H, [&](std::size_t iy) {
        for (int ix = 0; ix < W; ++ix) {
          double* gxi = gx.data() + (iy * W + ix) * Ci;
          for (int ky = 0; ky < 3; ++ky) {
            const int ny = static_cast<int>(iy) + 1 - ky;
            if (ny < 0 || ny % stride != 0) continue;
            const int oy = ny / stride;
            if (oy >= Ho) continue;
            for (int kx = 0; kx < 3; ++kx) {
              const int nx = ix + 1 - kx;
              if (nx < 0 || nx % stride != 0) continue;
              const int ox = nx / stride;
              if (ox >= Wo) continue;
              const double* go = g.data() + (static_cast<std::size_t>(oy) * Wo + ox) * Co;
              for (int co = 0; co < Co; ++co) {
                const double* wk = wd.data() + ((static_cast<std::size_t>(co) * 3 + ky) * 3 + kx) * Ci;
                for (int ci = 0; ci < Ci; ++ci) gxi[ci] += go[co] * wk[ci];
              }
            }
          }
        }
      });
    }
  });
}

Var avg_pool(Var x, int f) {
  const Tensor& xv = x.value();
  check_image(xv, "avg_pool");
  require(f >= 1, ErrorCode::kContract, "avg_pool: factor must be >= 1");
  const int H = xv.shape[0], W = xv.shape[1], C = xv.shape[2];
  const int Ho = H / f, Wo = W / f;
  require(Ho >= 1 && Wo >= 1, ErrorCode::kContract, "avg_pool: image smaller than factor");
  Tensor out({Ho, Wo, C});
  const double inv = 1.0 / (f * f);
  for (int oy = 0; oy < Ho; ++oy)
    for (int ox = 0; ox < Wo; ++ox)
      for (int c = 0; c < C; ++c) {
        double s = 0;
        for (int dy = 0; dy < f; ++dy)
          for (int dx = 0; dx < f; ++dx)
            s += xv.data[(static_cast<std::size_t>(oy * f + dy) * W + ox * f + dx) * C + c];
        out.data[(static_cast<std::size_t>(oy) * Wo + ox) * C + c] = s * inv;
      }
  const int ix = x.id;
  return x.tape->record(std::move(out), {ix}, [ix, f, W, C, Ho, Wo, inv](Tape& t, int self) {
    const auto& g = t.grad(self);
    auto& gx = t.grad(ix);
    for (int oy = 0; oy < Ho; ++oy)
      for (int ox = 0; ox < Wo; ++ox)
        for (int c = 0; c < C; ++c) {
          const double go = g[(static_cast<std::size_t>(oy) * Wo + ox) * C + c] * inv;
          for (int dy = 0; dy < f; ++dy)
            for (int dx = 0; dx < f; ++dx)
              gx[(static_cast<std::size_t>(oy * f + dy) * W + ox * f + dx) * C + c] += go;
        }
  });
}

namespace {

struct Taps {
  int i0, i1;
  double w0, w1;
};

std::vector<Taps> resize_taps(int in, int out) {
  std::vector<Taps> taps(out);
  const double ratio = static_cast<double>(in) / out;
  for (int o = 0; o < out; ++o) {
    double src = (o + 0.5) * ratio - 0.5;
    src = std::clamp(src, 0.0, static_cast<double>(in - 1));
    const int i0 = static_cast<int>(std::floor(src));
    const int i1 = std::min(i0 + 1, in - 1);
    const double f = src - i0;
    taps[o] = {i0, i1, 1.0 - f, f};
  }
  return taps;
}

}  // namespace

Var resize_bilinear(Var x, int out_h, int out_w) {
  const Tensor& xv = x.value();
  check_image(xv, "resize_bilinear");
  const int H = xv.shape[0], W = xv.shape[1], C = xv.shape[2];
  require(out_h >= 1 && out_w >= 1, ErrorCode::kContract, "resize_bilinear: bad output size");
  const auto ty = resize_taps(H, out_h);
  const auto tx = resize_taps(W, out_w);
  Tensor out({out_h, out_w, C});
  auto at = [&](int y, int xx, int c) { return xv.data[(static_cast<std::size_t>(y) * W + xx) * C + c]; };
  for (int oy = 0; oy < out_h; ++oy)
    for (int ox = 0; ox < out_w; ++ox)
      for (int c = 0; c < C; ++c) {
        const Taps& a = ty[oy];
        const Taps& b = tx[ox];
        out.data[(static_cast<std::size_t>(oy) * out_w + ox) * C + c] =
            a.w0 * (b.w0 * at(a.i0, b.i0, c) + b.w1 * at(a.i0, b.i1, c)) +
            a.w1 * (b.w0 * at(a.i1, b.i0, c) + b.w1 * at(a.i1, b.i1, c));
      }
  const int ix = x.id;
  return x.tape->record(std::move(out), {ix}, [ix, ty, tx, W, C, out_h, out_w](Tape& t, int self) {
    const auto& g = t.grad(self);
    auto& gx = t.grad(ix);
    auto acc = [&](int y, int xx, int c, double v) { gx[(static_cast<std::size_t>(y) * W + xx) * C + c] += v; };
    for (int oy = 0; oy < out_h; ++oy)
      for (int ox = 0; ox < out_w; ++ox)
        for (int c = 0; c < C; ++c) {
          const double go = g[(static_cast<std::size_t>(oy) * out_w + ox) * C + c];
          const Taps& a = ty[oy];
          const Taps& b = tx[ox];
          acc(a.i0, b.i0, c, go * a.w0 * b.w0);
          acc(a.i0, b.i1, c, go * a.w0 * b.w1);
          acc(a.i1, b.i0, c, go * a.w1 * b.w0);
          acc(a.i1, b.i1, c, go * a.w1 * b.w1);
        }
  });
}

Var l1_loss(Var a, const Tensor& target, const std::vector<unsigned char>& mask) {
  require(a.numel() == target.numel(), ErrorCode::kContract, "l1_loss: shape mismatch");
  require(mask.empty() || mask.size() == a.numel(), ErrorCode::kContract, "l1_loss: mask size mismatch");
  const auto& av = a.value().data;
  double s = 0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < av.size(); ++i) {
    if (!mask.empty() && !mask[i]) continue;
    s += std::abs(av[i] - target.data[i]);
    ++count;
  }
  const double inv = count ? 1.0 / static_cast<double>(count) : 0.0;
  const int ia = a.id;
  return a.tape->record(Tensor({1}, {s * inv}), {ia}, [ia, target, mask, inv](Tape& t, int self) {
    const double g = t.grad(self)[0] * inv;
    const auto& av = t.value(ia).data;
    auto& ga = t.grad(ia);
    for (std::size_t i = 0; i < av.size(); ++i) {
      if (!mask.empty() && !mask[i]) continue;
      const double d = av[i] - target.data[i];
      ga[i] += d > 0 ? g : (d < 0 ? -g : 0.0);
    }
  });
}

double ssim_value(const Tensor& a, const Tensor& b) {
  check_image(a, "ssim");
  require(a.shape == b.shape, ErrorCode::kContract, "ssim: shape mismatch");
  const int H = a.shape[0], W = a.shape[1], C = a.shape[2];
  double total = 0;
  for (int c = 0; c < C; ++c) {
    const SsimPlane p = ssim_plane(channel_plane(a, c), channel_plane(b, c), H, W);
    for (double v : p.s) total += v;
  }
  return total / (static_cast<double>(H) * W * C);
}

Var ssim(Var a, const Tensor& b) {
  const Tensor& av = a.value();
  check_image(av, "ssim");
  require(av.shape == b.shape, ErrorCode::kContract, "ssim: shape mismatch");
  const double value = ssim_value(av, b);
  const int ia = a.id;
  return a.tape->record(Tensor({1}, {value}), {ia}, [ia, b](Tape& t, int self) {
    const Tensor& av = t.value(ia);
    const int H = av.shape[0], W = av.shape[1], C = av.shape[2];
    const std::size_t n = static_cast<std::size_t>(H) * W;
    const double g = t.grad(self)[0] / (static_cast<double>(n) * C);
    auto& ga = t.grad(ia);
    for (int c = 0; c < C; ++c) {
      const auto x = channel_plane(av, c);
      const auto y = channel_plane(b, c);
      const SsimPlane p = ssim_plane(x, y, H, W);
      std::vector<double> g_mu(n), g_exx(n), g_exy(n);
      for (std::size_t i = 0; i < n; ++i) {
        const double denom = p.B1[i] * p.B2[i];
        const double dA1 = p.A2[i] / denom, dA2 = p.A1[i] / denom;
        const double dB1 = -p.s[i] / p.B1[i], dB2 = -p.s[i] / p.B2[i];
        const double mx = p.mu_x[i], my = p.mu_y[i];
        g_mu[i] = g * (dA1 * 2 * my - dA2 * 2 * my + dB1 * 2 * mx - dB2 * 2 * mx);
        g_exx[i] = g * dB2;
        g_exy[i] = g * 2 * dA2;
      }
      const auto f_mu = gauss_filter_t(g_mu, H, W);
      const auto f_xx = gauss_filter_t(g_exx, H, W);
      const auto f_xy = gauss_filter_t(g_exy, H, W);
      for (std::size_t i = 0; i < n; ++i)
        ga[i * C + c] += f_mu[i] + 2 * x[i] * f_xx[i] + y[i] * f_xy[i];
    }
  });
}

}  // namespace asplat::ad
