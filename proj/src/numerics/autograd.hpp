#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "numerics/tensor.hpp"

namespace diar {

// A named trainable tensor. Gradients accumulate into `grad`, which always
// has the shape of `value`.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;

  Parameter() = default;
  Parameter(std::string n, Tensor v)
      : name(std::move(n)), value(std::move(v)), grad(value.shape()) {}

  void zero_grad() { grad.fill(0.0); }
};

namespace ad {

// Handle to a node on a tape. Only valid for the tape that produced it.
struct Var {
  static constexpr std::uint32_t kInvalid = 0xffffffff;
  std::uint32_t id = kInvalid;
  bool valid() const { return id != kInvalid; }
};

// Wengert-list reverse-mode tape. Ops run their forward pass eagerly and,
// when the tape was constructed recording, store a backprop closure.
// backward() walks the list in exact reverse execution order. A tape is
// single-owner: one training step, one tape.
//
// Every op checks its output for NaN/Inf and throws NumericError rather than
// letting a poisoned value propagate silently.
class Tape {
 public:
  explicit Tape(bool recording = true) : recording_(recording) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return recording_; }

  // Leaf with no gradient (inputs, labels, masks).
  Var constant(Tensor v);
  // Leaf whose gradient is accumulated into p.grad by backward(). Repeated
  // calls for the same Parameter return the same node.
  Var leaf(Parameter& p);

  Var matmul(Var a, Var b);
  Var transpose(Var a);
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var scale(Var a, double s);
  Var add_scalar(Var a, double s);
  Var add_row(Var a, Var row);
  Var sigmoid(Var a);
  Var tanh_(Var a);
  Var relu(Var a);
  Var softmax_rows(Var a);
  Var log_(Var a);
  Var clamp(Var a, double lo, double hi);
  Var slice_rows(Var a, std::size_t r0, std::size_t n);
  Var slice_cols(Var a, std::size_t c0, std::size_t n);
  Var concat_rows(const std::vector<Var>& parts);
  Var concat_cols(const std::vector<Var>& parts);
  // Per-row layer normalization with learned gain/bias (1xN each).
  Var layer_norm_rows(Var x, Var gain, Var bias, double eps = 1e-5);
  Var sum_all(Var a);  // 1x1

  const Tensor& value(Var v) const { return nodes_[v.id].value; }

  // Seeds d(loss)/d(loss) = 1 and accumulates into every Parameter leaf's
  // grad. loss must be a 1x1 node on this tape.
  void backward(Var loss);

  // Gradient w.r.t. an arbitrary node from the last backward() call.
  const Tensor& grad(Var v) const { return nodes_[v.id].grad; }

  std::size_t num_nodes() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    std::function<void(Tape&)> backprop;  // null for leaves / non-recording
    Parameter* param = nullptr;
  };

  Var push(Tensor value, std::function<void(Tape&)> backprop, const char* op);
  Tensor& grad_buf(std::uint32_t id);

  // deque keeps references from value()/grad() stable while ops keep pushing
  std::deque<Node> nodes_;
  std::unordered_map<Parameter*, std::uint32_t> leaf_cache_;
  bool recording_;
};

// Standard LSTM cell built from tape primitives, so gradients come for free.
// Weights are stored input-major (D x 4D) so the cell is two matmuls and an
// add. Gate layout along the 4D axis is [input, forget, candidate, output].
struct LstmParams {
  Parameter w_x;  // D x 4D
  Parameter w_h;  // D x 4D
  Parameter b;    // 1 x 4D

  std::size_t hidden() const { return w_h.value.rows(); }
};

struct LstmState {
  Var h;  // 1 x D
  Var c;  // 1 x D
};

LstmState lstm_cell(Tape& tape, Var h_prev, Var c_prev, Var x, LstmParams& p);

}  // namespace ad

// Max over all parameter scalars of
// |analytic - central difference| / max(1, |central difference|),
// where the analytic gradient comes from one recorded backward() pass of f
// and the differences use step h. f must rebuild the same scalar loss on the
// tape it is handed.
double grad_check(const std::function<ad::Var(ad::Tape&)>& f,
                  const std::vector<Parameter*>& params, double h);

}  // namespace diar
