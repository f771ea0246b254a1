#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace cadpu {

// Dense row-major tensor of doubles.
struct Tensor {
  std::vector<std::int64_t> shape;
  std::vector<double> data;

  Tensor() = default;
  Tensor(std::vector<std::int64_t> s, std::vector<double> d)
      : shape(std::move(s)), data(std::move(d)) {}

  static Tensor zeros(std::vector<std::int64_t> shape);
  static Tensor scalar(double v) { return Tensor{{1}, {v}}; }

  std::int64_t numel() const {
    std::int64_t n = 1;
    for (auto d : shape) n *= d;
    return n;
  }
  std::int64_t dim(std::size_t i) const { return shape.at(i); }
  std::size_t ndim() const { return shape.size(); }
  double& at(std::int64_t i) { return data[static_cast<std::size_t>(i)]; }
  double at(std::int64_t i) const { return data[static_cast<std::size_t>(i)]; }
};

// Handle into a tape.
struct Var {
  std::int32_t id = -1;
  bool valid() const { return id >= 0; }
};

// Reverse-mode tape. One tape per training step: after backward() the tape is
// consumed and refuses further recording (the freshness contract). Forward
// results are checked finite; a NaN/Inf raises NumericalError.
class Tape {
 public:
  Tape();

  Var input(Tensor value, bool requires_grad);
  Var constant(Tensor value) { return input(std::move(value), false); }

  // --- forward ops ---
  Var matmul(Var a, Var b);                   // [m,k] x [k,n]
  Var add(Var a, Var b);                      // same shape, or b a suffix shape
  Var mul(Var a, Var b);                      // elementwise, same shape
  Var relu(Var a);
  Var leaky_relu(Var a, double slope);
  Var concat(std::span<const Var> parts, int axis);
  struct MaxResult {
    Var values;
    std::vector<std::int64_t> argmax;  // flat indices into the input
  };
  MaxResult max_over_axis(Var a, int axis);   // ties -> lowest index
  Var gather_rows(Var a, std::vector<std::int64_t> rows);
  Var mean(Var a);                            // scalar
  Var sum(Var a);                             // scalar
  Var square(Var a);
  Var l2norm_rows(Var a);                     // [n,c] -> [n]
  Var scale(Var a, double s);
  Var add_scalar(Var a, double s);
  Var reshape(Var a, std::vector<std::int64_t> shape);

  // Scalar node carrying an externally computed loss whose gradient with
  // respect to `input` is the fixed tensor `grad` (times upstream).
  Var inject_loss(Var input, double value, Tensor grad);

  const Tensor& value(Var v) const;
  const Tensor& grad(Var v) const;

  // Reverse pass from a scalar loss; may be called exactly once.
  void backward(Var loss);

  std::uint64_t freshness() const { return freshness_; }
  bool consumed() const { return consumed_; }
  std::size_t num_nodes() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    std::function<void(Tape&)> back;  // empty for leaves
  };

  Var emit(Tensor value, bool requires_grad, std::function<void(Tape&)> back);
  Node& node(Var v);
  const Node& node(Var v) const;
  void check_live() const;

  std::vector<Node> nodes_;
  bool consumed_ = false;
  std::uint64_t freshness_ = 0;
};

// --- Adam -------------------------------------------------------------------

using ParamSet = std::map<std::string, Tensor>;
using GradSet = std::map<std::string, Tensor>;

struct AdamState {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double decay = 0.7;               // multiplicative step decay
  std::int64_t decay_interval = 0;  // steps between decays; 0 disables
  std::int64_t step = 0;            // completed steps
  std::map<std::string, Tensor> m;
  std::map<std::string, Tensor> v;

  double effective_lr() const;  // lr * decay^(completed intervals)
};

// Standard Adam with bias correction and step decay. Parameters missing a
// gradient entry are left untouched.
void adam_step(ParamSet& params, const GradSet& grads, AdamState& state);

// --- checkpoints -------------------------------------------------------------
// Layout (all little-endian): magic "CADPUCKP" (8 bytes), u32 version,
// u32 record count, then per record: u32 name length, name bytes, u32 ndim,
// u64 dims, f64 data.
void save_checkpoint(const std::string& path, const ParamSet& records,
                     std::uint32_t version = 1);
ParamSet load_checkpoint(const std::string& path);

}  // namespace cadpu
