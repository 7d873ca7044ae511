#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

namespace asplat::ad {

struct Tensor {
  std::vector<int> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<int> s, double fill = 0.0);
  Tensor(std::vector<int> s, std::vector<double> d);

  std::size_t numel() const { return data.size(); }
  int rows() const { return shape.empty() ? 1 : shape.front(); }
  // Product of all dimensions after the first.
  int cols() const;
};

std::size_t numel_of(const std::vector<int>& shape);

struct Parameter {
  std::string name;
  std::vector<int> shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool trainable = true;
};

class Tape;

// Handle to a node on a tape.
struct Var {
  Tape* tape = nullptr;
  int id = -1;

  const Tensor& value() const;
  const std::vector<int>& shape() const { return value().shape; }
  int rows() const { return value().rows(); }
  int cols() const { return value().cols(); }
  std::size_t numel() const { return value().numel(); }
  double item() const;
};

// Records operations in creation order; backward() walks them in reverse,
// so gradient accumulation order is fixed by construction.
class Tape {
 public:
  using Backward = std::function<void(Tape&, int self)>;

  Var constant(Tensor value);
  // Leaf bound to a parameter; backward() adds into p.grad.
  Var param(Parameter& p);
  Var record(Tensor value, std::vector<int> inputs, Backward backward);

  void backward(const Var& scalar);

  const Tensor& value(int id) const { return nodes_[id]->value; }
  bool requires_grad(int id) const { return nodes_[id]->requires_grad; }
  // Zero-initialized on first access.
  std::vector<double>& grad(int id);
  const std::vector<double>* grad_if_any(int id) const;
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    std::vector<double> grad;
    Backward backward;
    bool requires_grad = false;
    Parameter* param = nullptr;
  };
  std::vector<std::unique_ptr<Node>> nodes_;
};

// Elementwise and shape operations.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
Var add_scalar(Var a, double s);
Var add_rowvec(Var a, Var b);   // a: n×m, b: m
Var tanh(Var a);
Var gelu(Var a);
Var sigmoid(Var a);
Var exp(Var a);
Var clamp(Var a, double lo, double hi);
Var reshape(Var a, std::vector<int> shape);
Var concat_cols(const std::vector<Var>& parts);
Var slice_cols(Var a, int start, int count);
Var gather_rows(Var a, const std::vector<int>& index);
Var row_prod(Var a);   // n×m -> n×1
Var sum(Var a);
Var mean(Var a);
Var weighted_sum(const std::vector<Var>& scalars, const std::vector<double>& weights);

Var matmul(Var a, Var b);  // (n×k)(k×m), a and b viewed as 2-D
Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-5);

// Softmax attention restricted to contiguous row windows [start, start+len).
// An empty window list means one window over all rows.
using Windows = std::vector<std::pair<int, int>>;
Var attention(Var q, Var k, Var v, const Windows& windows = {});

// x: H×W×Cin, w: Cout×3×3×Cin, b: Cout. Zero padding of 1.
Var conv3x3(Var x, Var w, Var b, int stride);

// Area average over non-overlapping factor×factor blocks; x: H×W×C.
Var avg_pool(Var x, int factor);
// Half-pixel-centered bilinear resize; x: H×W×C.
Var resize_bilinear(Var x, int out_h, int out_w);

// Mean |a - target| over entries where mask != 0 (all entries if mask empty).
Var l1_loss(Var a, const Tensor& target, const std::vector<unsigned char>& mask = {});

// Mean single-scale SSIM over H×W×C images: 11×11 Gaussian window, σ = 1.5,
// symmetric border extension, per channel then averaged.
Var ssim(Var a, const Tensor& b);
double ssim_value(const Tensor& a, const Tensor& b);

}  // namespace asplat::ad
