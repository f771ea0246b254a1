#include "cadpu/autodiff.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "cadpu/errors.hpp"

namespace cadpu {

namespace {

std::atomic<std::uint64_t> g_tape_counter{0};

std::string shape_str(const std::vector<std::int64_t>& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

void check_finite(const Tensor& t, const char* op) {
  for (double v : t.data)
    if (!std::isfinite(v))
      throw NumericalError(std::string("non-finite value in forward op ") + op);
}

}  // namespace

Tensor Tensor::zeros(std::vector<std::int64_t> shape) {
  Tensor t;
  t.shape = std::move(shape);
  t.data.assign(static_cast<std::size_t>(t.numel()), 0.0);
  return t;
}

Tape::Tape() : freshness_(++g_tape_counter) {}

void Tape::check_live() const {
  if (consumed_)
    throw std::logic_error(
        "Tape: reuse after backward is forbidden; build a fresh tape per step");
}

Var Tape::emit(Tensor value, bool requires_grad, std::function<void(Tape&)> back) {
  check_live();
  Node n;
  n.grad = Tensor::zeros(value.shape);
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return Var{static_cast<std::int32_t>(nodes_.size() - 1)};
}

Tape::Node& Tape::node(Var v) {
  if (!v.valid() || static_cast<std::size_t>(v.id) >= nodes_.size())
    throw std::logic_error("Tape: invalid Var");
  return nodes_[static_cast<std::size_t>(v.id)];
}

const Tape::Node& Tape::node(Var v) const {
  if (!v.valid() || static_cast<std::size_t>(v.id) >= nodes_.size())
    throw std::logic_error("Tape: invalid Var");
  return nodes_[static_cast<std::size_t>(v.id)];
}

Var Tape::input(Tensor value, bool requires_grad) {
  check_finite(value, "input");
  return emit(std::move(value), requires_grad, nullptr);
}

const Tensor& Tape::value(Var v) const { return node(v).value; }
const Tensor& Tape::grad(Var v) const { return node(v).grad; }

// ---------------------------------------------------------------------------
// ops

Var Tape::matmul(Var a, Var b) {
  const Tensor& ta = node(a).value;
  const Tensor& tb = node(b).value;
  if (ta.ndim() != 2 || tb.ndim() != 2 || ta.dim(1) != tb.dim(0))
    throw std::invalid_argument("matmul: shape mismatch " + shape_str(ta.shape) +
                                " x " + shape_str(tb.shape));
  const std::int64_t m = ta.dim(0), k = ta.dim(1), n = tb.dim(1);
  Tensor out = Tensor::zeros({m, n});
  // ikj ordering for cache-friendly access.
  for (std::int64_t i = 0; i < m; ++i) {
    const double* arow = ta.data.data() + i * k;
    double* orow = out.data.data() + i * n;
    for (std::int64_t kk = 0; kk < k; ++kk) {
      const double av = arow[kk];
      if (av == 0.0) continue;
      const double* brow = tb.data.data() + kk * n;
      for (std::int64_t j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
  check_finite(out, "matmul");
  const bool rg = node(a).requires_grad || node(b).requires_grad;
  Var res = emit(std::move(out), rg, nullptr);
  node(res).back = [a, b, res, m, k, n](Tape& t) {
    const Tensor& g = t.node(res).grad;
    const Tensor& ta2 = t.node(a).value;
    const Tensor& tb2 = t.node(b).value;
    if (t.node(a).requires_grad) {
      Tensor& ga = t.node(a).grad;  // g . b^T
      for (std::int64_t i = 0; i < m; ++i)
        for (std::int64_t j = 0; j < n; ++j) {
          const double gv = g.data[static_cast<std::size_t>(i * n + j)];
          if (gv == 0.0) continue;
          const double* brow = tb2.data.data() + j;  // column j of b
          double* garow = ga.data.data() + i * k;
          for (std::int64_t kk = 0; kk < k; ++kk)
            garow[kk] += gv * brow[kk * n];
        }
    }
    if (t.node(b).requires_grad) {
      Tensor& gb = t.node(b).grad;  // a^T . g
      for (std::int64_t kk = 0; kk < k; ++kk)
        for (std::int64_t i = 0; i < m; ++i) {
          const double av = ta2.data[static_cast<std::size_t>(i * k + kk)];
          if (av == 0.0) continue;
          const double* grow = g.data.data() + i * n;
          double* gbrow = gb.data.data() + kk * n;
          for (std::int64_t j = 0; j < n; ++j) gbrow[j] += av * grow[j];
        }
    }
  };
  return res;
}

Var Tape::add(Var a, Var b) {
  const Tensor& ta = node(a).value;
  const Tensor& tb = node(b).value;
  const bool same = ta.shape == tb.shape;
  // b may broadcast over the leading axes of a (suffix shapes equal).
  bool suffix = false;
  if (!same && tb.ndim() <= ta.ndim()) {
    suffix = true;
    for (std::size_t i = 0; i < tb.ndim(); ++i)
      if (tb.shape[tb.ndim() - 1 - i] != ta.shape[ta.ndim() - 1 - i]) suffix = false;
  }
  if (!same && !suffix)
    throw std::invalid_argument("add: shape mismatch " + shape_str(ta.shape) +
                                " + " + shape_str(tb.shape));
  const std::int64_t nb = tb.numel();
  Tensor out = ta;
  for (std::int64_t i = 0; i < ta.numel(); ++i)
    out.data[static_cast<std::size_t>(i)] += tb.data[static_cast<std::size_t>(i % nb)];
  check_finite(out, "add");
  const bool rg = node(a).requires_grad || node(b).requires_grad;
  Var res = emit(std::move(out), rg, nullptr);
  node(res).back = [a, b, res, nb](Tape& t) {
    const Tensor& g = t.node(res).grad;
    if (t.node(a).requires_grad) {
      Tensor& ga = t.node(a).grad;
      for (std::size_t i = 0; i < g.data.size(); ++i) ga.data[i] += g.data[i];
    }
    if (t.node(b).requires_grad) {
      Tensor& gb = t.node(b).grad;
      for (std::int64_t i = 0; i < static_cast<std::int64_t>(g.data.size()); ++i)
        gb.data[static_cast<std::size_t>(i % nb)] += g.data[static_cast<std::size_t>(i)];
    }
  };
  return res;
}

Var Tape::mul(Var a, Var b) {
  const Tensor& ta = node(a).value;
  const Tensor& tb = node(b).value;
  if (ta.shape != tb.shape)
    throw std::invalid_argument("mul: shape mismatch " + shape_str(ta.shape) +
                                " * " + shape_str(tb.shape));
  Tensor out = ta;
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] *= tb.data[i];
  check_finite(out, "mul");
  const bool rg = node(a).requires_grad || node(b).requires_grad;
  Var res = emit(std::move(out), rg, nullptr);
  node(res).back = [a, b, res](Tape& t) {
    const Tensor& g = t.node(res).grad;
    if (t.node(a).requires_grad) {
      Tensor& ga = t.node(a).grad;
      const Tensor& vb = t.node(b).value;
      for (std::size_t i = 0; i < g.data.size(); ++i)
        ga.data[i] += g.data[i] * vb.data[i];
    }
    if (t.node(b).requires_grad) {
      Tensor& gb = t.node(b).grad;
      const Tensor& va = t.node(a).value;
      for (std::size_t i = 0; i < g.data.size(); ++i)
        gb.data[i] += g.data[i] * va.data[i];
    }
  };
  return res;
}

Var Tape::relu(Var a) {
  Tensor out = node(a).value;
  for (double& v : out.data) v = v > 0.0 ? v : 0.0;
  Var res = emit(std::move(out), node(a).requires_grad, nullptr);
  node(res).back = [a, res](Tape& t) {
    if (!t.node(a).requires_grad) return;
    const Tensor& g = t.node(res).grad;
    const Tensor& va = t.node(a).value;
    Tensor& ga = t.node(a).grad;
    // Subgradient 0 at the origin.
    for (std::size_t i = 0; i < g.data.size(); ++i)
      if (va.data[i] > 0.0) ga.data[i] += g.data[i];
  };
  return res;
}

Var Tape::leaky_relu(Var a, double slope) {
  Tensor out = node(a).value;
  for (double& v : out.data) v = v > 0.0 ? v : slope * v;
  Var res = emit(std::move(out), node(a).requires_grad, nullptr);
  node(res).back = [a, res, slope](Tape& t) {
    if (!t.node(a).requires_grad) return;
    const Tensor& g = t.node(res).grad;
    const Tensor& va = t.node(a).value;
    Tensor& ga = t.node(a).grad;
    for (std::size_t i = 0; i < g.data.size(); ++i)
      ga.data[i] += g.data[i] * (va.data[i] > 0.0 ? 1.0 : slope);
  };
  return res;
}

Var Tape::concat(std::span<const Var> parts, int axis) {
  if (parts.empty()) throw std::invalid_argument("concat: no inputs");
  const Tensor& first = node(parts[0]).value;
  const std::size_t nd = first.ndim();
  if (axis < 0 || static_cast<std::size_t>(axis) >= nd)
    throw std::invalid_argument("concat: bad axis");
  std::vector<std::int64_t> shape = first.shape;
  std::int64_t axis_total = 0;
  bool rg = false;
  for (Var v : parts) {
    const Tensor& tv = node(v).value;
    if (tv.ndim() != nd)
      throw std::invalid_argument("concat: rank mismatch");
    for (std::size_t d = 0; d < nd; ++d)
      if (d != static_cast<std::size_t>(axis) && tv.shape[d] != shape[d])
        throw std::invalid_argument("concat: shape mismatch " +
                                    shape_str(tv.shape) + " vs " +
                                    shape_str(shape));
    axis_total += tv.dim(static_cast<std::size_t>(axis));
    rg = rg || node(v).requires_grad;
  }
  shape[static_cast<std::size_t>(axis)] = axis_total;

  // outer = product of dims before axis, inner = product after.
  std::int64_t outer = 1, inner = 1;
  for (int d = 0; d < axis; ++d) outer *= first.shape[static_cast<std::size_t>(d)];
  for (std::size_t d = static_cast<std::size_t>(axis) + 1; d < nd; ++d)
    inner *= first.shape[d];

  Tensor out = Tensor::zeros(shape);
  std::int64_t offset = 0;  // in axis units
  std::vector<std::int64_t> offsets;
  for (Var v : parts) {
    const Tensor& tv = node(v).value;
    const std::int64_t av = tv.dim(static_cast<std::size_t>(axis));
    offsets.push_back(offset);
    for (std::int64_t o = 0; o < outer; ++o)
      std::memcpy(out.data.data() + (o * axis_total + offset) * inner,
                  tv.data.data() + o * av * inner,
                  static_cast<std::size_t>(av * inner) * sizeof(double));
    offset += av;
  }
  std::vector<Var> parts_copy(parts.begin(), parts.end());
  Var res = emit(std::move(out), rg, nullptr);
  node(res).back = [parts_copy, offsets, res, outer, inner, axis_total, axis](Tape& t) {
    const Tensor& g = t.node(res).grad;
    for (std::size_t pi = 0; pi < parts_copy.size(); ++pi) {
      Var v = parts_copy[pi];
      if (!t.node(v).requires_grad) continue;
      Tensor& gv = t.node(v).grad;
      const std::int64_t av = t.node(v).value.dim(static_cast<std::size_t>(axis));
      for (std::int64_t o = 0; o < outer; ++o) {
        const double* src = g.data.data() + (o * axis_total + offsets[pi]) * inner;
        double* dst = gv.data.data() + o * av * inner;
        for (std::int64_t i = 0; i < av * inner; ++i) dst[i] += src[i];
      }
    }
  };
  return res;
}

Tape::MaxResult Tape::max_over_axis(Var a, int axis) {
  const Tensor& ta = node(a).value;
  const std::size_t nd = ta.ndim();
  if (axis < 0 || static_cast<std::size_t>(axis) >= nd)
    throw std::invalid_argument("max_over_axis: bad axis");
  std::int64_t outer = 1, inner = 1;
  for (int d = 0; d < axis; ++d) outer *= ta.shape[static_cast<std::size_t>(d)];
  const std::int64_t reduce = ta.shape[static_cast<std::size_t>(axis)];
  for (std::size_t d = static_cast<std::size_t>(axis) + 1; d < nd; ++d)
    inner *= ta.shape[d];
  if (reduce <= 0) throw std::invalid_argument("max_over_axis: empty axis");

  std::vector<std::int64_t> shape;
  for (std::size_t d = 0; d < nd; ++d)
    if (d != static_cast<std::size_t>(axis)) shape.push_back(ta.shape[d]);
  if (shape.empty()) shape.push_back(1);

  Tensor out = Tensor::zeros(shape);
  std::vector<std::int64_t> argmax(static_cast<std::size_t>(outer * inner));
  for (std::int64_t o = 0; o < outer; ++o) {
    for (std::int64_t i = 0; i < inner; ++i) {
      double best = -std::numeric_limits<double>::infinity();
      std::int64_t best_flat = -1;
      for (std::int64_t r = 0; r < reduce; ++r) {
        const std::int64_t flat = (o * reduce + r) * inner + i;
        const double v = ta.data[static_cast<std::size_t>(flat)];
        if (v > best) {  // strict: ties keep the lowest index
          best = v;
          best_flat = flat;
        }
      }
      out.data[static_cast<std::size_t>(o * inner + i)] = best;
      argmax[static_cast<std::size_t>(o * inner + i)] = best_flat;
    }
  }
  Var res = emit(std::move(out), node(a).requires_grad, nullptr);
  auto arg_copy = argmax;
  node(res).back = [a, res, arg_copy](Tape& t) {
    if (!t.node(a).requires_grad) return;
    const Tensor& g = t.node(res).grad;
    Tensor& ga = t.node(a).grad;
    for (std::size_t i = 0; i < arg_copy.size(); ++i)
      ga.data[static_cast<std::size_t>(arg_copy[i])] += g.data[i];
  };
  return MaxResult{res, std::move(argmax)};
}

Var Tape::gather_rows(Var a, std::vector<std::int64_t> rows) {
  const Tensor& ta = node(a).value;
  if (ta.ndim() < 1) throw std::invalid_argument("gather_rows: scalar input");
  const std::int64_t n = ta.dim(0);
  std::int64_t inner = 1;
  for (std::size_t d = 1; d < ta.ndim(); ++d) inner *= ta.shape[d];
  for (std::int64_t r : rows)
    if (r < 0 || r >= n) throw std::invalid_argument("gather_rows: index out of range");

  std::vector<std::int64_t> shape = ta.shape;
  shape[0] = static_cast<std::int64_t>(rows.size());
  Tensor out = Tensor::zeros(shape);
  for (std::size_t i = 0; i < rows.size(); ++i)
    std::memcpy(out.data.data() + static_cast<std::int64_t>(i) * inner,
                ta.data.data() + rows[i] * inner,
                static_cast<std::size_t>(inner) * sizeof(double));
  Var res = emit(std::move(out), node(a).requires_grad, nullptr);
  node(res).back = [a, res, rows = std::move(rows), inner](Tape& t) {
    if (!t.node(a).requires_grad) return;
    const Tensor& g = t.node(res).grad;
    Tensor& ga = t.node(a).grad;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const double* src = g.data.data() + static_cast<std::int64_t>(i) * inner;
      double* dst = ga.data.data() + rows[i] * inner;
      for (std::int64_t j = 0; j < inner; ++j) dst[j] += src[j];
    }
  };
  return res;
}

Var Tape::mean(Var a) {
  const Tensor& ta = node(a).value;
  const double n = static_cast<double>(ta.numel());
  double s = 0.0;
  for (double v : ta.data) s += v;
  Var res = emit(Tensor::scalar(s / n), node(a).requires_grad, nullptr);
  node(res).back = [a, res, n](Tape& t) {
    if (!t.node(a).requires_grad) return;
    const double g = t.node(res).grad.data[0] / n;
    for (double& v : t.node(a).grad.data) v += g;
  };
  return res;
}

Var Tape::sum(Var a) {
  const Tensor& ta = node(a).value;
  double s = 0.0;
  for (double v : ta.data) s += v;
  Var res = emit(Tensor::scalar(s), node(a).requires_grad, nullptr);
  node(res).back = [a, res](Tape& t) {
    if (!t.node(a).requires_grad) return;
    const double g = t.node(res).grad.data[0];
    for (double& v : t.node(a).grad.data) v += g;
  };
  return res;
}

Var Tape::square(Var a) {
  Tensor out = node(a).value;
  for (double& v : out.data) v *= v;
  check_finite(out, "square");
  Var res = emit(std::move(out), node(a).requires_grad, nullptr);
  node(res).back = [a, res](Tape& t) {
    if (!t.node(a).requires_grad) return;
    const Tensor& g = t.node(res).grad;
    const Tensor& va = t.node(a).value;
    Tensor& ga = t.node(a).grad;
    for (std::size_t i = 0; i < g.data.size(); ++i)
      ga.data[i] += 2.0 * va.data[i] * g.data[i];
  };
  return res;
}

Var Tape::l2norm_rows(Var a) {
  const Tensor& ta = node(a).value;
  if (ta.ndim() != 2) throw std::invalid_argument("l2norm_rows: expects 2-D input");
  const std::int64_t n = ta.dim(0), c = ta.dim(1);
  Tensor out = Tensor::zeros({n});
  for (std::int64_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::int64_t j = 0; j < c; ++j) {
      const double v = ta.data[static_cast<std::size_t>(i * c + j)];
      s += v * v;
    }
    out.data[static_cast<std::size_t>(i)] = std::sqrt(s);
  }
  Var res = emit(std::move(out), node(a).requires_grad, nullptr);
  node(res).back = [a, res, n, c](Tape& t) {
    if (!t.node(a).requires_grad) return;
    const Tensor& g = t.node(res).grad;
    const Tensor& va = t.node(a).value;
    const Tensor& norms = t.node(res).value;
    Tensor& ga = t.node(a).grad;
    for (std::int64_t i = 0; i < n; ++i) {
      const double nv = norms.data[static_cast<std::size_t>(i)];
      if (nv < 1e-12) continue;  // subgradient 0 at the origin
      const double gi = g.data[static_cast<std::size_t>(i)] / nv;
      for (std::int64_t j = 0; j < c; ++j)
        ga.data[static_cast<std::size_t>(i * c + j)] +=
            gi * va.data[static_cast<std::size_t>(i * c + j)];
    }
  };
  return res;
}

Var Tape::scale(Var a, double s) {
  Tensor out = node(a).value;
  for (double& v : out.data) v *= s;
  check_finite(out, "scale");
  Var res = emit(std::move(out), node(a).requires_grad, nullptr);
  node(res).back = [a, res, s](Tape& t) {
    if (!t.node(a).requires_grad) return;
    const Tensor& g = t.node(res).grad;
    Tensor& ga = t.node(a).grad;
    for (std::size_t i = 0; i < g.data.size(); ++i) ga.data[i] += s * g.data[i];
  };
  return res;
}

Var Tape::add_scalar(Var a, double s) {
  Tensor out = node(a).value;
  for (double& v : out.data) v += s;
  check_finite(out, "add_scalar");
  Var res = emit(std::move(out), node(a).requires_grad, nullptr);
  node(res).back = [a, res](Tape& t) {
    if (!t.node(a).requires_grad) return;
    const Tensor& g = t.node(res).grad;
    Tensor& ga = t.node(a).grad;
    for (std::size_t i = 0; i < g.data.size(); ++i) ga.data[i] += g.data[i];
  };
  return res;
}

Var Tape::reshape(Var a, std::vector<std::int64_t> shape) {
  const Tensor& ta = node(a).value;
  std::int64_t n = 1;
  for (auto d : shape) n *= d;
  if (n != ta.numel())
    throw std::invalid_argument("reshape: element count mismatch " +
                                shape_str(ta.shape) + " -> " + shape_str(shape));
  Tensor out;
  out.shape = std::move(shape);
  out.data = ta.data;
  Var res = emit(std::move(out), node(a).requires_grad, nullptr);
  node(res).back = [a, res](Tape& t) {
    if (!t.node(a).requires_grad) return;
    const Tensor& g = t.node(res).grad;
    Tensor& ga = t.node(a).grad;
    for (std::size_t i = 0; i < g.data.size(); ++i) ga.data[i] += g.data[i];
  };
  return res;
}

Var Tape::inject_loss(Var input, double value, Tensor grad) {
  const Tensor& ti = node(input).value;
  if (grad.shape != ti.shape)
    throw std::invalid_argument("inject_loss: gradient shape mismatch");
  if (!std::isfinite(value)) throw NumericalError("inject_loss: non-finite value");
  check_finite(grad, "inject_loss");
  Var res = emit(Tensor::scalar(value), node(input).requires_grad, nullptr);
  node(res).back = [input, res, grad = std::move(grad)](Tape& t) {
    if (!t.node(input).requires_grad) return;
    const double g = t.node(res).grad.data[0];
    Tensor& gi = t.node(input).grad;
    for (std::size_t i = 0; i < grad.data.size(); ++i)
      gi.data[i] += g * grad.data[i];
  };
  return res;
}

void Tape::backward(Var loss) {
  check_live();
  const Node& ln = node(loss);
  if (ln.value.numel() != 1)
    throw std::invalid_argument("backward: loss must be scalar");
  consumed_ = true;  // double-backward and further recording are errors
  nodes_[static_cast<std::size_t>(loss.id)].grad.data[0] = 1.0;
  for (std::size_t i = nodes_.size(); i-- > 0;) {
    Node& n = nodes_[i];
    if (n.back && n.requires_grad) n.back(*this);
  }
}

// ---------------------------------------------------------------------------
// Adam

double AdamState::effective_lr() const {
  if (decay_interval <= 0) return lr;
  const std::int64_t completed = step / decay_interval;
  return lr * std::pow(decay, static_cast<double>(completed));
}

void adam_step(ParamSet& params, const GradSet& grads, AdamState& state) {
  const double rate = state.effective_lr();
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(state.beta1, t);
  const double bc2 = 1.0 - std::pow(state.beta2, t);
  for (auto& [name, p] : params) {
    auto git = grads.find(name);
    if (git == grads.end()) continue;
    const Tensor& g = git->second;
    if (g.shape != p.shape)
      throw std::invalid_argument("adam_step: gradient shape mismatch for " + name);
    Tensor& m = state.m.try_emplace(name, Tensor::zeros(p.shape)).first->second;
    Tensor& v = state.v.try_emplace(name, Tensor::zeros(p.shape)).first->second;
    for (std::size_t i = 0; i < p.data.size(); ++i) {
      m.data[i] = state.beta1 * m.data[i] + (1.0 - state.beta1) * g.data[i];
      v.data[i] = state.beta2 * v.data[i] + (1.0 - state.beta2) * g.data[i] * g.data[i];
      const double mhat = m.data[i] / bc1;
      const double vhat = v.data[i] / bc2;
      p.data[i] -= rate * mhat / (std::sqrt(vhat) + state.eps);
    }
  }
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

template <typename T>
void write_le(std::string& out, T v) {
  unsigned char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  // Host is little-endian on every supported target; keep the explicit copy
  // so the layout stays byte-defined.
  out.append(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <typename T>
T read_le(std::istream& in) {
  unsigned char buf[sizeof(T)];
  in.read(reinterpret_cast<char*>(buf), sizeof(T));
  if (!in) throw DataError("checkpoint: truncated file");
  T v;
  std::memcpy(&v, buf, sizeof(T));
  return v;
}

constexpr char kMagic[8] = {'C', 'A', 'D', 'P', 'U', 'C', 'K', 'P'};

}  // namespace

void save_checkpoint(const std::string& path, const ParamSet& records,
                     std::uint32_t version) {
  std::string out;
  out.append(kMagic, sizeof(kMagic));
  write_le<std::uint32_t>(out, version);
  write_le<std::uint32_t>(out, static_cast<std::uint32_t>(records.size()));
  for (const auto& [name, t] : records) {
    write_le<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    write_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.ndim()));
    for (auto d : t.shape) write_le<std::uint64_t>(out, static_cast<std::uint64_t>(d));
    for (double v : t.data) write_le<double>(out, v);
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write " + path);
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
}

ParamSet load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open " + path);
  char magic[8];
  f.read(magic, 8);
  if (!f || std::memcmp(magic, kMagic, 8) != 0)
    throw DataError(path + ": not a checkpoint file");
  const auto version = read_le<std::uint32_t>(f);
  if (version != 1) throw DataError(path + ": unsupported checkpoint version");
  const auto count = read_le<std::uint32_t>(f);
  ParamSet out;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = read_le<std::uint32_t>(f);
    std::string name(name_len, '\0');
    f.read(name.data(), name_len);
    if (!f) throw DataError(path + ": truncated record name");
    const auto ndim = read_le<std::uint32_t>(f);
    Tensor t;
    std::int64_t numel = 1;
    for (std::uint32_t d = 0; d < ndim; ++d) {
      const auto dim = static_cast<std::int64_t>(read_le<std::uint64_t>(f));
      t.shape.push_back(dim);
      numel *= dim;
    }
    t.data.resize(static_cast<std::size_t>(numel));
    for (auto& v : t.data) v = read_le<double>(f);
    out.emplace(std::move(name), std::move(t));
  }
  return out;
}

}  // namespace cadpu
