#include "stpgn/tape.hpp"

#include <algorithm>
#include <cmath>

#include "stpgn/kernels.hpp"

namespace stpgn {

// ---------------------------------------------------------------- Gradients

Tensor& Gradients::slot(const Parameter& p) {
  auto it = grads_.find(&p);
  if (it == grads_.end()) it = grads_.emplace(&p, Tensor(p.value.shape())).first;
  return it->second;
}

const Tensor* Gradients::find(const Parameter& p) const {
  auto it = grads_.find(&p);
  return it == grads_.end() ? nullptr : &it->second;
}

const Tensor& Gradients::at(const Parameter& p) const {
  const Tensor* t = find(p);
  if (!t) throw std::out_of_range("no gradient recorded for parameter '" + p.name + "'");
  return *t;
}

void Gradients::merge(const Gradients& other) {
  for (const auto& [p, g] : other.grads_) {
    Tensor& dst = slot(*p);
    for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
  }
}

void Gradients::scale(double factor) {
  for (auto& [p, g] : grads_)
    for (auto& v : g.values()) v *= factor;
}

// ---------------------------------------------------------------- Var / ctx

const Tensor& Var::value() const { return tape_->value(id_); }
bool Var::requires_grad() const { return tape_->requires_grad(id_); }

const Tensor& BackwardContext::input(std::size_t i) const { return tape_->value((*inputs_)[i]); }

Tensor* BackwardContext::grad(std::size_t i) {
  const int id = (*inputs_)[i];
  if (!tape_->requires_grad(id)) return nullptr;
  Tensor& g = (*grads_)[static_cast<std::size_t>(id)];
  if (g.size() == 0 && g.shape().empty()) g = Tensor(tape_->value(id).shape());
  return &g;
}

// ---------------------------------------------------------------- Tape

Tape::Tape() {
#ifndef NDEBUG
  check_finite_ = true;
#endif
}

Var Tape::constant(Tensor value) {
  Node n;
  n.value = std::move(value);
  n.op = "constant";
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size() - 1));
}

Var Tape::parameter(const Parameter& p) {
  Node n;
  n.external = &p.value;
  n.param = &p;
  n.requires_grad = grad_enabled_;
  n.op = "parameter";
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size() - 1));
}

Var Tape::record(Tensor value, std::vector<Var> inputs, BackwardFn fn, const char* op) {
  if (check_finite_ && !value.all_finite()) throw NonFiniteError(std::string("non-finite value produced by ") + op);
  Node n;
  n.value = std::move(value);
  n.op = op;
  n.inputs.reserve(inputs.size());
  for (const auto& v : inputs) {
    if (v.tape() != this) throw std::invalid_argument(std::string(op) + ": input recorded on a different tape");
    n.inputs.push_back(v.id());
    n.requires_grad = n.requires_grad || nodes_[static_cast<std::size_t>(v.id())].requires_grad;
  }
  if (n.requires_grad) n.backward = std::move(fn);
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size() - 1));
}

const Tensor& Tape::value(int id) const {
  const Node& n = nodes_[static_cast<std::size_t>(id)];
  return n.external ? *n.external : n.value;
}

Gradients Tape::backward(Var loss) const {
  Gradients g;
  backward(loss, g);
  return g;
}

void Tape::backward(Var loss, Gradients& accumulate) const {
  if (loss.tape() != this) throw std::invalid_argument("backward: loss belongs to a different tape");
  const Tensor& lv = value(loss.id());
  if (lv.size() != 1) throw ShapeError("backward: loss must be scalar, got shape " + shape_string(lv.shape()));

  std::vector<Tensor> grads(nodes_.size());
  grads[static_cast<std::size_t>(loss.id())] = Tensor(lv.shape(), 1.0);

  BackwardContext ctx;
  ctx.tape_ = this;
  ctx.grads_ = &grads;
  for (int id = loss.id(); id >= 0; --id) {
    const Node& n = nodes_[static_cast<std::size_t>(id)];
    Tensor& g = grads[static_cast<std::size_t>(id)];
    if (g.size() == 0 || !n.requires_grad) continue;
    if (n.param) {
      Tensor& dst = accumulate.slot(*n.param);
      for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
      continue;
    }
    if (!n.backward) continue;
    ctx.inputs_ = &n.inputs;
    ctx.grad_out_ = &g;
    ctx.output_ = &value(id);
    n.backward(ctx);
    // Interior gradients are dead once propagated.
    g = Tensor();
  }
}

// ---------------------------------------------------------------- ops

namespace ops {

namespace {

Tape& same_tape(Var a, Var b, const char* op) {
  if (!a.valid() || !b.valid()) throw std::invalid_argument(std::string(op) + ": invalid variable");
  if (a.tape() != b.tape()) throw std::invalid_argument(std::string(op) + ": operands on different tapes");
  return *a.tape();
}

void require_matrix(const Tensor& t, const char* op) {
  if (t.rank() > 2) throw ShapeError(std::string(op) + ": expected a matrix, got " + shape_string(t.shape()));
}

Shape matrix_shape(std::size_t r, std::size_t c) { return {r, c}; }

template <typename F, typename D>
Var unary(Var x, const char* op, F f, D df_from_out_and_in) {
  const Tensor& xv = x.value();
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = f(xv[i]);
  return x.tape()->record(std::move(out), {x}, [df_from_out_and_in](BackwardContext& c) {
    Tensor* gx = c.grad(0);
    if (!gx) return;
    const Tensor& go = c.grad_out();
    const Tensor& y = c.output();
    const Tensor& xin = c.input(0);
    for (std::size_t i = 0; i < go.size(); ++i) (*gx)[i] += go[i] * df_from_out_and_in(y[i], xin[i]);
  }, op);
}

}  // namespace

Var matmul(Var a, Var b) {
  Tape& tape = same_tape(a, b, "matmul");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_matrix(av, "matmul");
  require_matrix(bv, "matmul");
  const std::size_t m = av.rows(), k = av.cols(), n = bv.cols();
  if (bv.rows() != k)
    throw ShapeError("matmul: shape mismatch " + shape_string(av.shape()) + " x " + shape_string(bv.shape()));
  Tensor out = Tensor::matrix(m, n);
  kernels::gemm(av.data(), bv.data(), out.data(), m, k, n);
  return tape.record(std::move(out), {a, b}, [m, k, n](BackwardContext& c) {
    const Tensor& g = c.grad_out();
    if (Tensor* ga = c.grad(0)) kernels::gemm_nt(g.data(), c.input(1).data(), ga->data(), m, n, k);
    if (Tensor* gb = c.grad(1)) kernels::gemm_tn(c.input(0).data(), g.data(), gb->data(), m, k, n);
  }, "matmul");
}

namespace {
template <typename F>
Var binary_elementwise(Var a, Var b, const char* op, F f, double da_sign, double db_sign, bool product) {
  Tape& tape = same_tape(a, b, op);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_same_shape(av, bv, op);
  Tensor out(av.shape());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = f(av[i], bv[i]);
  return tape.record(std::move(out), {a, b}, [da_sign, db_sign, product](BackwardContext& c) {
    const Tensor& g = c.grad_out();
    if (product) {
      const Tensor& x = c.input(0);
      const Tensor& y = c.input(1);
      if (Tensor* ga = c.grad(0))
        for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * y[i];
      if (Tensor* gb = c.grad(1))
        for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i] += g[i] * x[i];
      return;
    }
    if (Tensor* ga = c.grad(0))
      for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += da_sign * g[i];
    if (Tensor* gb = c.grad(1))
      for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i] += db_sign * g[i];
  }, op);
}
}  // namespace

Var add(Var a, Var b) {
  return binary_elementwise(a, b, "add", [](double x, double y) { return x + y; }, 1.0, 1.0, false);
}

Var sub(Var a, Var b) {
  return binary_elementwise(a, b, "sub", [](double x, double y) { return x - y; }, 1.0, -1.0, false);
}

Var mul(Var a, Var b) {
  return binary_elementwise(a, b, "mul", [](double x, double y) { return x * y; }, 0.0, 0.0, true);
}

Var scale(Var a, double factor) {
  const Tensor& av = a.value();
  Tensor out(av.shape());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] * factor;
  return a.tape()->record(std::move(out), {a}, [factor](BackwardContext& c) {
    Tensor* ga = c.grad(0);
    if (!ga) return;
    const Tensor& g = c.grad_out();
    for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += factor * g[i];
  }, "scale");
}

Var add_row(Var x, Var row) {
  Tape& tape = same_tape(x, row, "add_row");
  const Tensor& xv = x.value();
  const Tensor& rv = row.value();
  require_matrix(xv, "add_row");
  const std::size_t r = xv.rows(), cols = xv.cols();
  if (rv.size() != cols)
    throw ShapeError("add_row: shape mismatch " + shape_string(xv.shape()) + " + " + shape_string(rv.shape()));
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < cols; ++j) out[i * cols + j] = xv[i * cols + j] + rv[j];
  return tape.record(std::move(out), {x, row}, [r, cols](BackwardContext& c) {
    const Tensor& g = c.grad_out();
    if (Tensor* gx = c.grad(0))
      for (std::size_t i = 0; i < g.size(); ++i) (*gx)[i] += g[i];
    if (Tensor* gr = c.grad(1))
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < cols; ++j) (*gr)[j] += g[i * cols + j];
  }, "add_row");
}

Var relu(Var x) {
  return unary(x, "relu", [](double v) { return v > 0.0 ? v : 0.0; },
               [](double, double in) { return in > 0.0 ? 1.0 : 0.0; });
}

Var sigmoid(Var x) {
  return unary(x, "sigmoid",
               [](double v) {
                 if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
                 const double e = std::exp(v);
                 return e / (1.0 + e);
               },
               [](double y, double) { return y * (1.0 - y); });
}

Var tanh(Var x) {
  return unary(x, "tanh", [](double v) { return std::tanh(v); }, [](double y, double) { return 1.0 - y * y; });
}

Var concat(const std::vector<Var>& parts, std::size_t axis) {
  if (parts.empty()) throw std::invalid_argument("concat: no inputs");
  if (axis > 1) throw ShapeError("concat: axis must be 0 or 1");
  Tape& tape = *parts.front().tape();
  std::size_t rows = 0, cols = 0;
  std::vector<std::size_t> extents;
  for (const auto& p : parts) {
    same_tape(parts.front(), p, "concat");
    const Tensor& v = p.value();
    require_matrix(v, "concat");
    if (axis == 0) {
      if (rows == 0 && cols == 0) cols = v.cols();
      if (v.cols() != cols)
        throw ShapeError("concat: column mismatch " + shape_string(parts.front().shape()) + " vs " +
                         shape_string(v.shape()));
      rows += v.rows();
      extents.push_back(v.rows());
    } else {
      if (rows == 0 && cols == 0) rows = v.rows();
      if (v.rows() != rows)
        throw ShapeError("concat: row mismatch " + shape_string(parts.front().shape()) + " vs " +
                         shape_string(v.shape()));
      cols += v.cols();
      extents.push_back(v.cols());
    }
  }
  Tensor out = Tensor::matrix(rows, cols);
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const Tensor& v = p.value();
    for (std::size_t i = 0; i < v.rows(); ++i)
      for (std::size_t j = 0; j < v.cols(); ++j) {
        if (axis == 0) out(offset + i, j) = v(i, j);
        else out(i, offset + j) = v(i, j);
      }
    offset += axis == 0 ? v.rows() : v.cols();
  }
  return tape.record(std::move(out), parts, [axis, extents, cols](BackwardContext& c) {
    const Tensor& g = c.grad_out();
    std::size_t off = 0;
    for (std::size_t k = 0; k < extents.size(); ++k) {
      if (Tensor* gk = c.grad(k)) {
        const std::size_t pr = gk->rows(), pc = gk->cols();
        for (std::size_t i = 0; i < pr; ++i)
          for (std::size_t j = 0; j < pc; ++j)
            (*gk)[i * pc + j] += axis == 0 ? g[(off + i) * cols + j] : g[i * cols + off + j];
      }
      off += extents[k];
    }
  }, "concat");
}

Var slice(Var x, std::size_t axis, std::size_t begin, std::size_t end) {
  const Tensor& xv = x.value();
  require_matrix(xv, "slice");
  if (axis > 1) throw ShapeError("slice: axis must be 0 or 1");
  const std::size_t r = xv.rows(), cols = xv.cols();
  const std::size_t extent = axis == 0 ? r : cols;
  if (begin > end || end > extent)
    throw ShapeError("slice: range [" + std::to_string(begin) + ", " + std::to_string(end) + ") out of bounds for " +
                     shape_string(xv.shape()));
  const std::size_t orows = axis == 0 ? end - begin : r;
  const std::size_t ocols = axis == 0 ? cols : end - begin;
  Tensor out = Tensor::matrix(orows, ocols);
  if (axis == 0) {
    std::copy(xv.data() + begin * cols, xv.data() + end * cols, out.data());
  } else {
    for (std::size_t i = 0; i < r; ++i)
      std::copy(xv.data() + i * cols + begin, xv.data() + i * cols + end, out.data() + i * ocols);
  }
  return x.tape()->record(std::move(out), {x}, [axis, begin, cols, orows, ocols](BackwardContext& c) {
    Tensor* gx = c.grad(0);
    if (!gx) return;
    const Tensor& g = c.grad_out();
    for (std::size_t i = 0; i < orows; ++i)
      for (std::size_t j = 0; j < ocols; ++j) {
        const std::size_t src = axis == 0 ? (begin + i) * cols + j : i * cols + begin + j;
        (*gx)[src] += g[i * ocols + j];
      }
  }, "slice");
}

Var mean_over_axis(Var x, std::size_t axis) {
  const Tensor& xv = x.value();
  require_matrix(xv, "mean_over_axis");
  if (axis > 1) throw ShapeError("mean_over_axis: axis must be 0 or 1");
  const std::size_t r = xv.rows(), cols = xv.cols();
  Tensor out = axis == 0 ? Tensor::matrix(1, cols) : Tensor::matrix(r, 1);
  const double inv = 1.0 / static_cast<double>(axis == 0 ? r : cols);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < cols; ++j) out[axis == 0 ? j : i] += xv[i * cols + j];
  for (auto& v : out.values()) v *= inv;
  return x.tape()->record(std::move(out), {x}, [axis, r, cols, inv](BackwardContext& c) {
    Tensor* gx = c.grad(0);
    if (!gx) return;
    const Tensor& g = c.grad_out();
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < cols; ++j) (*gx)[i * cols + j] += inv * g[axis == 0 ? j : i];
  }, "mean_over_axis");
}

Var broadcast(Var x, std::size_t rows, std::size_t cols) {
  const Tensor& xv = x.value();
  require_matrix(xv, "broadcast");
  const std::size_t xr = xv.rows(), xc = xv.cols();
  const bool row_ok = xr == 1 || xr == rows;
  const bool col_ok = xc == 1 || xc == cols;
  if (!row_ok || !col_ok)
    throw ShapeError("broadcast: cannot expand " + shape_string(xv.shape()) + " to " +
                     shape_string(matrix_shape(rows, cols)));
  Tensor out = Tensor::matrix(rows, cols);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) out(i, j) = xv[(xr == 1 ? 0 : i) * xc + (xc == 1 ? 0 : j)];
  return x.tape()->record(std::move(out), {x}, [rows, cols, xr, xc](BackwardContext& c) {
    Tensor* gx = c.grad(0);
    if (!gx) return;
    const Tensor& g = c.grad_out();
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < cols; ++j) (*gx)[(xr == 1 ? 0 : i) * xc + (xc == 1 ? 0 : j)] += g[i * cols + j];
  }, "broadcast");
}

Var sum(Var x) {
  const Tensor& xv = x.value();
  double s = 0.0;
  for (double v : xv.values()) s += v;
  return x.tape()->record(Tensor({1, 1}, s), {x}, [](BackwardContext& c) {
    Tensor* gx = c.grad(0);
    if (!gx) return;
    const double g = c.grad_out()[0];
    for (auto& v : gx->values()) v += g;
  }, "sum");
}

Var reshape(Var x, Shape shape) {
  Tensor out = x.value().reshaped(std::move(shape));
  return x.tape()->record(std::move(out), {x}, [](BackwardContext& c) {
    Tensor* gx = c.grad(0);
    if (!gx) return;
    const Tensor& g = c.grad_out();
    for (std::size_t i = 0; i < g.size(); ++i) (*gx)[i] += g[i];
  }, "reshape");
}

Var node_mix(Var mix, Var x, std::size_t frames) {
  Tape& tape = same_tape(mix, x, "node_mix");
  const Tensor& mv = mix.value();
  const Tensor& xv = x.value();
  require_matrix(mv, "node_mix");
  require_matrix(xv, "node_mix");
  const std::size_t out_nodes = mv.rows(), in_nodes = mv.cols(), channels = xv.cols();
  if (frames == 0 || xv.rows() != frames * in_nodes)
    throw ShapeError("node_mix: operator " + shape_string(mv.shape()) + " incompatible with features " +
                     shape_string(xv.shape()) + " over " + std::to_string(frames) + " frames");
  Tensor out = Tensor::matrix(frames * out_nodes, channels);
  kernels::node_mix(mv.data(), xv.data(), out.data(), out_nodes, in_nodes, frames, channels);
  return tape.record(std::move(out), {mix, x}, [out_nodes, in_nodes, frames, channels](BackwardContext& c) {
    const Tensor& g = c.grad_out();
    if (Tensor* gm = c.grad(0))
      kernels::node_mix_weight_grad(g.data(), c.input(1).data(), gm->data(), out_nodes, in_nodes, frames, channels);
    if (Tensor* gx = c.grad(1))
      kernels::node_mix_input_grad(c.input(0).data(), g.data(), gx->data(), out_nodes, in_nodes, frames, channels);
  }, "node_mix");
}

Var group_mean(Var x, const Tensor& membership, std::size_t frames) {
  const Tensor& xv = x.value();
  require_matrix(xv, "group_mean");
  require_matrix(membership, "group_mean");
  const std::size_t groups = membership.rows(), in_nodes = membership.cols(), channels = xv.cols();
  if (frames == 0 || xv.rows() != frames * in_nodes)
    throw ShapeError("group_mean: membership " + shape_string(membership.shape()) + " incompatible with features " +
                     shape_string(xv.shape()) + " over " + std::to_string(frames) + " frames");
  std::vector<std::vector<std::size_t>> members(groups);
  for (std::size_t g = 0; g < groups; ++g) {
    for (std::size_t j = 0; j < in_nodes; ++j)
      if (membership(g, j) != 0.0) members[g].push_back(j);
    if (members[g].empty()) throw ShapeError("group_mean: group " + std::to_string(g) + " has no members");
  }
  Tensor out = Tensor::matrix(frames * groups, channels);
  for (std::size_t t = 0; t < frames; ++t)
    for (std::size_t g = 0; g < groups; ++g) {
      const auto& m = members[g];
      const double inv = 1.0 / static_cast<double>(m.size());
      const double* first = xv.data() + (t * in_nodes + m[0]) * channels;
      double* o = out.data() + (t * groups + g) * channels;
      for (std::size_t c = 0; c < channels; ++c) {
        double d = 0.0;
        for (std::size_t i = 1; i < m.size(); ++i) d += xv.data()[(t * in_nodes + m[i]) * channels + c] - first[c];
        o[c] = first[c] + d * inv;
      }
    }
  return x.tape()->record(std::move(out), {x}, [members, in_nodes, frames, channels](BackwardContext& c) {
    Tensor* gx = c.grad(0);
    if (!gx) return;
    const Tensor& g = c.grad_out();
    const std::size_t groups = members.size();
    for (std::size_t t = 0; t < frames; ++t)
      for (std::size_t k = 0; k < groups; ++k) {
        const double inv = 1.0 / static_cast<double>(members[k].size());
        const double* go = g.data() + (t * groups + k) * channels;
        for (std::size_t j : members[k]) {
          double* dst = gx->data() + (t * in_nodes + j) * channels;
          for (std::size_t ch = 0; ch < channels; ++ch) dst[ch] += go[ch] * inv;
        }
      }
  }, "group_mean");
}

namespace {
// d^-1/2 with the zero-degree convention.
double inv_sqrt_degree(double d) { return d > 0.0 ? 1.0 / std::sqrt(d) : 0.0; }
}  // namespace

Var normalize_adjacency(Var a) {
  const Tensor& av = a.value();
  if (av.rank() != 2 || av.rows() != av.cols())
    throw ShapeError("normalize_adjacency: expected a square matrix, got " + shape_string(av.shape()));
  const std::size_t n = av.rows();
  std::vector<double> rdeg(n, 0.0), cdeg(n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      rdeg[i] += av(i, j);
      cdeg[j] += av(i, j);
    }
  std::vector<double> rs(n), cs(n);
  for (std::size_t i = 0; i < n; ++i) {
    rs[i] = inv_sqrt_degree(rdeg[i]);
    cs[i] = inv_sqrt_degree(cdeg[i]);
  }
  Tensor out = Tensor::matrix(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) out(i, j) = rs[i] * av(i, j) * cs[j];
  return a.tape()->record(std::move(out), {a}, [n, rdeg, cdeg, rs, cs](BackwardContext& c) {
    Tensor* ga = c.grad(0);
    if (!ga) return;
    const Tensor& g = c.grad_out();
    const Tensor& av = c.input(0);
    // d rs_i / d r_i = -1/2 r_i^-3/2 (zero where the degree is clamped).
    std::vector<double> row_acc(n, 0.0), col_acc(n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        const double gij = g(i, j) * av(i, j);
        row_acc[i] += gij * cs[j];
        col_acc[j] += gij * rs[i];
      }
    std::vector<double> drs(n), dcs(n);
    for (std::size_t i = 0; i < n; ++i) {
      drs[i] = rdeg[i] > 0.0 ? -0.5 * rs[i] / rdeg[i] : 0.0;
      dcs[i] = cdeg[i] > 0.0 ? -0.5 * cs[i] / cdeg[i] : 0.0;
    }
    for (std::size_t k = 0; k < n; ++k)
      for (std::size_t l = 0; l < n; ++l)
        (*ga)(k, l) += g(k, l) * rs[k] * cs[l] + row_acc[k] * drs[k] + col_acc[l] * dcs[l];
  }, "normalize_adjacency");
}

namespace {

void check_targets(const Tensor& v, const std::vector<int>& targets, const std::vector<double>& weights,
                   const char* op) {
  require_matrix(v, op);
  if (v.cols() < 2) throw ShapeError(std::string(op) + ": need at least 2 classes");
  if (targets.size() != v.rows() || weights.size() != v.rows())
    throw ShapeError(std::string(op) + ": " + std::to_string(v.rows()) + " rows but " +
                     std::to_string(targets.size()) + " targets / " + std::to_string(weights.size()) + " weights");
  for (int t : targets)
    if (t < 0 || static_cast<std::size_t>(t) >= v.cols())
      throw std::out_of_range(std::string(op) + ": target " + std::to_string(t) + " outside [0, " +
                              std::to_string(v.cols()) + ")");
}

Tensor softmax_of(const Tensor& logits) {
  const std::size_t r = logits.rows(), k = logits.cols();
  Tensor p(logits.shape());
  for (std::size_t i = 0; i < r; ++i) {
    const double* row = logits.data() + i * k;
    const double mx = *std::max_element(row, row + k);
    double z = 0.0;
    for (std::size_t j = 0; j < k; ++j) z += (p[i * k + j] = std::exp(row[j] - mx));
    for (std::size_t j = 0; j < k; ++j) p[i * k + j] /= z;
  }
  return p;
}

}  // namespace

Var softmax_rows(Var logits) {
  const Tensor& lv = logits.value();
  require_matrix(lv, "softmax_rows");
  const std::size_t r = lv.rows(), k = lv.cols();
  return logits.tape()->record(softmax_of(lv), {logits}, [r, k](BackwardContext& c) {
    Tensor* gl = c.grad(0);
    if (!gl) return;
    const Tensor& g = c.grad_out();
    const Tensor& p = c.output();
    for (std::size_t i = 0; i < r; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < k; ++j) dot += g[i * k + j] * p[i * k + j];
      for (std::size_t j = 0; j < k; ++j) (*gl)[i * k + j] += p[i * k + j] * (g[i * k + j] - dot);
    }
  }, "softmax_rows");
}

Var softmax_cross_entropy(Var logits, const std::vector<int>& targets, const std::vector<double>& weights) {
  const Tensor& lv = logits.value();
  check_targets(lv, targets, weights, "softmax_cross_entropy");
  const std::size_t r = lv.rows(), k = lv.cols();
  Tensor p = softmax_of(lv);
  double loss = 0.0;
  for (std::size_t i = 0; i < r; ++i) {
    if (weights[i] == 0.0) continue;
    const double* row = lv.data() + i * k;
    const double mx = *std::max_element(row, row + k);
    double z = 0.0;
    for (std::size_t j = 0; j < k; ++j) z += std::exp(row[j] - mx);
    loss += weights[i] * (std::log(z) + mx - row[targets[i]]);
  }
  return logits.tape()->record(Tensor({1, 1}, loss), {logits},
                               [r, k, p = std::move(p), targets, weights](BackwardContext& c) {
    Tensor* gl = c.grad(0);
    if (!gl) return;
    const double g = c.grad_out()[0];
    for (std::size_t i = 0; i < r; ++i) {
      if (weights[i] == 0.0) continue;
      const double w = g * weights[i];
      for (std::size_t j = 0; j < k; ++j) (*gl)[i * k + j] += w * p[i * k + j];
      (*gl)[i * k + static_cast<std::size_t>(targets[i])] -= w;
    }
  }, "softmax_cross_entropy");
}

Var nll_from_probs(Var probs, const std::vector<int>& targets, const std::vector<double>& weights) {
  const Tensor& pv = probs.value();
  check_targets(pv, targets, weights, "nll_from_probs");
  const std::size_t r = pv.rows(), k = pv.cols();
  double loss = 0.0;
  for (std::size_t i = 0; i < r; ++i)
    if (weights[i] != 0.0) loss -= weights[i] * std::log(pv[i * k + static_cast<std::size_t>(targets[i])]);
  return probs.tape()->record(Tensor({1, 1}, loss), {probs}, [r, k, targets, weights](BackwardContext& c) {
    Tensor* gp = c.grad(0);
    if (!gp) return;
    const double g = c.grad_out()[0];
    const Tensor& pv = c.input(0);
    for (std::size_t i = 0; i < r; ++i) {
      if (weights[i] == 0.0) continue;
      const std::size_t idx = i * k + static_cast<std::size_t>(targets[i]);
      (*gp)[idx] -= g * weights[i] / pv[idx];
    }
  }, "nll_from_probs");
}

}  // namespace ops

}  // namespace stpgn
