#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "stpgn/tensor.hpp"

namespace stpgn {

struct NonFiniteError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A named, learnable tensor. Owned by a ParameterStore; tapes only borrow it.
struct Parameter {
  std::string name;
  Tensor value;
  bool trainable = true;
};

// Parameter gradients produced by a backward pass, keyed by parameter identity.
class Gradients {
 public:
  Tensor& slot(const Parameter& p);
  const Tensor* find(const Parameter& p) const;
  const Tensor& at(const Parameter& p) const;
  bool empty() const { return grads_.empty(); }
  std::size_t size() const { return grads_.size(); }

  // this += other, entry-wise.
  void merge(const Gradients& other);
  void scale(double factor);
  void clear() { grads_.clear(); }

  auto begin() const { return grads_.begin(); }
  auto end() const { return grads_.end(); }

 private:
  std::map<const Parameter*, Tensor> grads_;
};

class Tape;

// Handle to a value recorded on a tape.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  bool requires_grad() const;
  bool valid() const { return tape_ != nullptr; }
  Tape* tape() const { return tape_; }
  int id() const { return id_; }

 private:
  Tape* tape_ = nullptr;
  int id_ = -1;
};

// Gives a gradient rule access to its node's output gradient and the
// value/gradient slots of its inputs.
class BackwardContext {
 public:
  const Tensor& grad_out() const { return *grad_out_; }
  const Tensor& output() const { return *output_; }
  const Tensor& input(std::size_t i) const;
  // Null when input i does not require a gradient.
  Tensor* grad(std::size_t i);

 private:
  friend class Tape;
  const Tape* tape_ = nullptr;
  const std::vector<int>* inputs_ = nullptr;
  std::vector<Tensor>* grads_ = nullptr;
  const Tensor* grad_out_ = nullptr;
  const Tensor* output_ = nullptr;
};

using BackwardFn = std::function<void(BackwardContext&)>;

// Ordered record of executed operations. One tape per forward/backward pass;
// a tape must not be shared between threads.
class Tape {
 public:
  Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  // Leaf that references p.value without copying it; p must outlive the tape.
  Var parameter(const Parameter& p);
  // Registers an operation. `fn` is kept only if some input requires a gradient.
  Var record(Tensor value, std::vector<Var> inputs, BackwardFn fn, const char* op);

  const Tensor& value(int id) const;
  bool requires_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].requires_grad; }
  std::size_t size() const { return nodes_.size(); }
  const char* op_name(int id) const { return nodes_[static_cast<std::size_t>(id)].op; }

  // Reverse-mode sweep from a scalar. Parameters are left untouched, and the
  // tape can be swept any number of times.
  Gradients backward(Var loss) const;
  void backward(Var loss, Gradients& accumulate) const;

  // Raise NonFiniteError when an op produces NaN/Inf. On by default in debug builds.
  void set_check_finite(bool on) { check_finite_ = on; }
  // With gradients disabled, parameters enter as constants and no rules are kept.
  void set_grad_enabled(bool on) { grad_enabled_ = on; }

 private:
  struct Node {
    Tensor value;
    const Tensor* external = nullptr;
    const Parameter* param = nullptr;
    std::vector<int> inputs;
    BackwardFn backward;
    bool requires_grad = false;
    const char* op = "";
  };

  std::vector<Node> nodes_;
  bool check_finite_ = false;
  bool grad_enabled_ = true;
};

// Differentiable primitives. Matrices are rank-2 [rows x cols]; a rank-1
// value is treated as one row.
namespace ops {

Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double factor);
// x[r, c] + row[0, c]
Var add_row(Var x, Var row);
Var relu(Var x);
Var sigmoid(Var x);
Var tanh(Var x);
Var concat(const std::vector<Var>& parts, std::size_t axis);
Var slice(Var x, std::size_t axis, std::size_t begin, std::size_t end);
// axis 0 -> [1 x cols], axis 1 -> [rows x 1]
Var mean_over_axis(Var x, std::size_t axis);
// [1 x c] or [r x 1] expanded to [rows x cols]
Var broadcast(Var x, std::size_t rows, std::size_t cols);
Var sum(Var x);
Var reshape(Var x, Shape shape);

// out[t, i, :] = sum_j mix[i, j] x[t, j, :] where x has frames*in_nodes rows.
Var node_mix(Var mix, Var x, std::size_t frames);
// out[t, g, :] = mean of x[t, j, :] over the members j of group g, with
// `membership` a binary groups x in_nodes matrix. Evaluated as
// x_first + sum(x_j - x_first) / k, so constant groups pool exactly.
Var group_mean(Var x, const Tensor& membership, std::size_t frames);
// diag(r)^-1/2 A diag(c)^-1/2 with r/c the row/column sums of A; a zero or
// negative degree contributes a factor of 0.
Var normalize_adjacency(Var a);

Var softmax_rows(Var logits);
// sum_t weight[t] * -log softmax(logits[t])[target[t]]
Var softmax_cross_entropy(Var logits, const std::vector<int>& targets, const std::vector<double>& weights);
// sum_t weight[t] * -log probs[t, target[t]]
Var nll_from_probs(Var probs, const std::vector<int>& targets, const std::vector<double>& weights);

}  // namespace ops

}  // namespace stpgn
