#include "numerics/autograd.hpp"

#include <cmath>
#include <unordered_map>

#include "common/error.hpp"

namespace diar::ad {

namespace {

void accumulate(Tensor& dst, const Tensor& src, const std::vector<std::size_t>& shape) {
  if (dst.size() == 0) dst = Tensor(shape);
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] += src[i];
}

}  // namespace

Var Tape::push(Tensor value, std::function<void(Tape&)> backprop, const char* op) {
  if (!value.all_finite()) {
    throw NumericError(std::string(op) + ": non-finite output " + value.shape_str());
  }
  Node n;
  n.value = std::move(value);
  if (recording_) n.backprop = std::move(backprop);
  nodes_.push_back(std::move(n));
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Tensor& Tape::grad_buf(std::uint32_t id) {
  Node& n = nodes_[id];
  if (n.grad.size() == 0) n.grad = Tensor(n.value.shape());
  return n.grad;
}

Var Tape::constant(Tensor v) { return push(std::move(v), nullptr, "constant"); }

Var Tape::leaf(Parameter& p) {
  auto it = leaf_cache_.find(&p);
  if (it != leaf_cache_.end()) return Var{it->second};
  Node n;
  n.value = p.value;
  n.param = &p;
  nodes_.push_back(std::move(n));
  const auto id = static_cast<std::uint32_t>(nodes_.size() - 1);
  leaf_cache_.emplace(&p, id);
  return Var{id};
}

Var Tape::matmul(Var a, Var b) {
  Tensor out = diar::matmul(value(a), value(b));
  const std::uint32_t aid = a.id, bid = b.id;
  Var v = push(std::move(out), nullptr, "matmul");
  const std::uint32_t oid = v.id;
  if (recording_) {
    nodes_[oid].backprop = [aid, bid, oid](Tape& t) {
      const Tensor& og = t.nodes_[oid].grad;
      if (og.size() == 0) return;
      const Tensor& av = t.nodes_[aid].value;
      const Tensor& bv = t.nodes_[bid].value;
      accumulate(t.grad_buf(aid), diar::matmul(og, diar::transpose(bv)), av.shape());
      accumulate(t.grad_buf(bid), diar::matmul(diar::transpose(av), og), bv.shape());
    };
  }
  return v;
}

Var Tape::transpose(Var a) {
  const std::uint32_t aid = a.id;
  Var v = push(diar::transpose(value(a)), nullptr, "transpose");
  const std::uint32_t oid = v.id;
  if (recording_) {
    nodes_[oid].backprop = [aid, oid](Tape& t) {
      const Tensor& og = t.nodes_[oid].grad;
      if (og.size() == 0) return;
      accumulate(t.grad_buf(aid), diar::transpose(og), t.nodes_[aid].value.shape());
    };
  }
  return v;
}

Var Tape::add(Var a, Var b) {
  const std::uint32_t aid = a.id, bid = b.id;
  Var v = push(diar::add(value(a), value(b)), nullptr, "add");
  const std::uint32_t oid = v.id;
  if (recording_) {
    nodes_[oid].backprop = [aid, bid, oid](Tape& t) {
      const Tensor& og = t.nodes_[oid].grad;
      if (og.size() == 0) return;
      accumulate(t.grad_buf(aid), og, t.nodes_[aid].value.shape());
      accumulate(t.grad_buf(bid), og, t.nodes_[bid].value.shape());
    };
  }
  return v;
}

Var Tape::sub(Var a, Var b) {
  const std::uint32_t aid = a.id, bid = b.id;
  Var v = push(diar::sub(value(a), value(b)), nullptr, "sub");
  const std::uint32_t oid = v.id;
  if (recording_) {
    nodes_[oid].backprop = [aid, bid, oid](Tape& t) {
      const Tensor& og = t.nodes_[oid].grad;
      if (og.size() == 0) return;
      accumulate(t.grad_buf(aid), og, t.nodes_[aid].value.shape());
      accumulate(t.grad_buf(bid), diar::scale(og, -1.0), t.nodes_[bid].value.shape());
    };
  }
  return v;
}

Var Tape::mul(Var a, Var b) {
  const std::uint32_t aid = a.id, bid = b.id;
  Var v = push(diar::mul(value(a), value(b)), nullptr, "mul");
  const std::uint32_t oid = v.id;
  if (recording_) {
    nodes_[oid].backprop = [aid, bid, oid](Tape& t) {
      const Tensor& og = t.nodes_[oid].grad;
      if (og.size() == 0) return;
      accumulate(t.grad_buf(aid), diar::mul(og, t.nodes_[bid].value), t.nodes_[aid].value.shape());
      accumulate(t.grad_buf(bid), diar::mul(og, t.nodes_[aid].value), t.nodes_[bid].value.shape());
    };
  }
  return v;
}

Var Tape::scale(Var a, double s) {
  const std::uint32_t aid = a.id;
  Var v = push(diar::scale(value(a), s), nullptr, "scale");
  const std::uint32_t oid = v.id;
  if (recording_) {
    nodes_[oid].backprop = [aid, oid, s](Tape& t) {
      const Tensor& og = t.nodes_[oid].grad;
      if (og.size() == 0) return;
      accumulate(t.grad_buf(aid), diar::scale(og, s), t.nodes_[aid].value.shape());
    };
  }
  return v;
}

Var Tape::add_scalar(Var a, double s) {
  const std::uint32_t aid = a.id;
  Var v = push(diar::add_scalar(value(a), s), nullptr, "add_scalar");
  const std::uint32_t oid = v.id;
  if (recording_) {
    nodes_[oid].backprop = [aid, oid](Tape& t) {
      const Tensor& og = t.nodes_[oid].grad;
      if (og.size() == 0) return;
      accumulate(t.grad_buf(aid), og, t.nodes_[aid].value.shape());
    };
  }
  return v;
}

Var Tape::add_row(Var a, Var row) {
  const std::uint32_t aid = a.id, rid = row.id;
  Var v = push(diar::add_row(value(a), value(row)), nullptr, "add_row");
  const std::uint32_t oid = v.id;
  if (recording_) {
    nodes_[oid].backprop = [aid, rid, oid](Tape& t) {
      const Tensor& og = t.nodes_[oid].grad;
      if (og.size() == 0) return;
      accumulate(t.grad_buf(aid), og, t.nodes_[aid].value.shape());
      Tensor rg(1, og.cols());
      for (std::size_t i = 0; i < og.rows(); ++i)
        for (std::size_t j = 0; j < og.cols(); ++j) rg[j] += og.at(i, j);
      accumulate(t.grad_buf(rid), rg, t.nodes_[rid].value.shape());
    };
  }
  return v;
}

Var Tape::sigmoid(Var a) {
  const std::uint32_t aid = a.id;
  Var v = push(diar::sigmoid(value(a)), nullptr, "sigmoid");
  const std::uint32_t oid = v.id;
  if (recording_) {
    nodes_[oid].backprop = [aid, oid](Tape& t) {
      const Tensor& og = t.nodes_[oid].grad;
      if (og.size() == 0) return;
      const Tensor& y = t.nodes_[oid].value;
      Tensor d = og;
      for (std::size_t i = 0; i < d.size(); ++i) d[i] *= y[i] * (1.0 - y[i]);
      accumulate(t.grad_buf(aid), d, t.nodes_[aid].value.shape());
    };
  }
  return v;
}

Var Tape::tanh_(Var a) {
  const std::uint32_t aid = a.id;
  Var v = push(diar::tanh_t(value(a)), nullptr, "tanh");
  const std::uint32_t oid = v.id;
  if (recording_) {
    nodes_[oid].backprop = [aid, oid](Tape& t) {
      const Tensor& og = t.nodes_[oid].grad;
      if (og.size() == 0) return;
      const Tensor& y = t.nodes_[oid].value;
      Tensor d = og;
      for (std::size_t i = 0; i < d.size(); ++i) d[i] *= 1.0 - y[i] * y[i];
      accumulate(t.grad_buf(aid), d, t.nodes_[aid].value.shape());
    };
  }
  return v;
}

Var Tape::relu(Var a) {
  const std::uint32_t aid = a.id;
  Var v = push(diar::relu(value(a)), nullptr, "relu");
  const std::uint32_t oid = v.id;
  if (recording_) {
    nodes_[oid].backprop = [aid, oid](Tape& t) {
      const Tensor& og = t.nodes_[oid].grad;
      if (og.size() == 0) return;
      const Tensor& x = t.nodes_[aid].value;
      Tensor d = og;
      for (std::size_t i = 0; i < d.size(); ++i) d[i] = x[i] > 0.0 ? d[i] : 0.0;
      accumulate(t.grad_buf(aid), d, t.nodes_[aid].value.shape());
    };
  }
  return v;
}

Var Tape::softmax_rows(Var a) {
  const std::uint32_t aid = a.id;
  Var v = push(diar::softmax_rows(value(a)), nullptr, "softmax_rows");
  const std::uint32_t oid = v.id;
  if (recording_) {
    nodes_[oid].backprop = [aid, oid](Tape& t) {
      const Tensor& og = t.nodes_[oid].grad;
      if (og.size() == 0) return;
      const Tensor& y = t.nodes_[oid].value;
      Tensor d(y.rows(), y.cols());
      for (std::size_t i = 0; i < y.rows(); ++i) {
        double dot = 0.0;
        for (std::size_t j = 0; j < y.cols(); ++j) dot += og.at(i, j) * y.at(i, j);
        for (std::size_t j = 0; j < y.cols(); ++j)
          d.at(i, j) = y.at(i, j) * (og.at(i, j) - dot);
      }
      accumulate(t.grad_buf(aid), d, t.nodes_[aid].value.shape());
    };
  }
  return v;
}

Var Tape::log_(Var a) {
  const std::uint32_t aid = a.id;
  Var v = push(diar::log_t(value(a)), nullptr, "log");
  const std::uint32_t oid = v.id;
  if (recording_) {
    nodes_[oid].backprop = [aid, oid](Tape& t) {
      const Tensor& og = t.nodes_[oid].grad;
      if (og.size() == 0) return;
      const Tensor& x = t.nodes_[aid].value;
      Tensor d = og;
      for (std::size_t i = 0; i < d.size(); ++i) d[i] /= x[i];
      accumulate(t.grad_buf(aid), d, t.nodes_[aid].value.shape());
    };
  }
  return v;
}

Var Tape::clamp(Var a, double lo, double hi) {
  const std::uint32_t aid = a.id;
  Var v = push(diar::clamp(value(a), lo, hi), nullptr, "clamp");
  const std::uint32_t oid = v.id;
  if (recording_) {
    nodes_[oid].backprop = [aid, oid, lo, hi](Tape& t) {
      const Tensor& og = t.nodes_[oid].grad;
      if (og.size() == 0) return;
      const Tensor& x = t.nodes_[aid].value;
      Tensor d = og;
      for (std::size_t i = 0; i < d.size(); ++i)
        d[i] = (x[i] > lo && x[i] < hi) ? d[i] : 0.0;
      accumulate(t.grad_buf(aid), d, t.nodes_[aid].value.shape());
    };
  }
  return v;
}

Var Tape::slice_rows(Var a, std::size_t r0, std::size_t n) {
  const std::uint32_t aid = a.id;
  Var v = push(diar::slice_rows(value(a), r0, n), nullptr, "slice_rows");
  const std::uint32_t oid = v.id;
  if (recording_) {
    nodes_[oid].backprop = [aid, oid, r0](Tape& t) {
      const Tensor& og = t.nodes_[oid].grad;
      if (og.size() == 0) return;
      Tensor& ag = t.grad_buf(aid);
      if (ag.size() == 0) ag = Tensor(t.nodes_[aid].value.shape());
      for (std::size_t i = 0; i < og.rows(); ++i)
        for (std::size_t j = 0; j < og.cols(); ++j) ag.at(r0 + i, j) += og.at(i, j);
    };
  }
  return v;
}

Var Tape::slice_cols(Var a, std::size_t c0, std::size_t n) {
  const std::uint32_t aid = a.id;
  Var v = push(diar::slice_cols(value(a), c0, n), nullptr, "slice_cols");
  const std::uint32_t oid = v.id;
  if (recording_) {
    nodes_[oid].backprop = [aid, oid, c0](Tape& t) {
      const Tensor& og = t.nodes_[oid].grad;
      if (og.size() == 0) return;
      Tensor& ag = t.grad_buf(aid);
      if (ag.size() == 0) ag = Tensor(t.nodes_[aid].value.shape());
      for (std::size_t i = 0; i < og.rows(); ++i)
        for (std::size_t j = 0; j < og.cols(); ++j) ag.at(i, c0 + j) += og.at(i, j);
    };
  }
  return v;
}

Var Tape::concat_rows(const std::vector<Var>& parts) {
  std::vector<Tensor> values;
  std::vector<std::uint32_t> ids;
  values.reserve(parts.size());
  for (Var p : parts) {
    values.push_back(value(p));
    ids.push_back(p.id);
  }
  Var v = push(diar::concat_rows(values), nullptr, "concat_rows");
  const std::uint32_t oid = v.id;
  if (recording_) {
    nodes_[oid].backprop = [ids, oid](Tape& t) {
      const Tensor& og = t.nodes_[oid].grad;
      if (og.size() == 0) return;
      std::size_t r = 0;
      for (std::uint32_t id : ids) {
        const Tensor& pv = t.nodes_[id].value;
        accumulate(t.grad_buf(id), diar::slice_rows(og, r, pv.rows()), pv.shape());
        r += pv.rows();
      }
    };
  }
  return v;
}

Var Tape::concat_cols(const std::vector<Var>& parts) {
  std::vector<Tensor> values;
  std::vector<std::uint32_t> ids;
  values.reserve(parts.size());
  for (Var p : parts) {
    values.push_back(value(p));
    ids.push_back(p.id);
  }
  Var v = push(diar::concat_cols(values), nullptr, "concat_cols");
  const std::uint32_t oid = v.id;
  if (recording_) {
    nodes_[oid].backprop = [ids, oid](Tape& t) {
      const Tensor& og = t.nodes_[oid].grad;
      if (og.size() == 0) return;
      std::size_t c = 0;
      for (std::uint32_t id : ids) {
        const Tensor& pv = t.nodes_[id].value;
        accumulate(t.grad_buf(id), diar::slice_cols(og, c, pv.cols()), pv.shape());
        c += pv.cols();
      }
    };
  }
  return v;
}

Var Tape::layer_norm_rows(Var x, Var gain, Var bias, double eps) {
  const Tensor& xv = value(x);
  if (xv.rank() != 2) throw DimensionError("layer_norm_rows: rank-2 input required");
  const std::size_t rows = xv.rows(), n = xv.cols();
  const Tensor& g = value(gain);
  const Tensor& b = value(bias);
  if (g.rows() != 1 || g.cols() != n || b.rows() != 1 || b.cols() != n) {
    throw DimensionError("layer_norm_rows: gain/bias must be 1x" + std::to_string(n));
  }

  Tensor xhat(rows, n);
  std::vector<double> inv_std(rows);
  Tensor out(rows, n);
  for (std::size_t i = 0; i < rows; ++i) {
    const double* xr = xv.row(i);
    double mean = 0.0;
    for (std::size_t j = 0; j < n; ++j) mean += xr[j];
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double d = xr[j] - mean;
      var += d * d;
    }
    var /= static_cast<double>(n);
    const double istd = 1.0 / std::sqrt(var + eps);
    inv_std[i] = istd;
    for (std::size_t j = 0; j < n; ++j) {
      xhat.at(i, j) = (xr[j] - mean) * istd;
      out.at(i, j) = xhat.at(i, j) * g[j] + b[j];
    }
  }

  const std::uint32_t xid = x.id, gid = gain.id, bid = bias.id;
  Var v = push(std::move(out), nullptr, "layer_norm_rows");
  const std::uint32_t oid = v.id;
  if (recording_) {
    nodes_[oid].backprop = [xid, gid, bid, oid, xhat, inv_std](Tape& t) {
      const Tensor& og = t.nodes_[oid].grad;
      if (og.size() == 0) return;
      const Tensor& g = t.nodes_[gid].value;
      const std::size_t rows = og.rows(), n = og.cols();
      Tensor dx(rows, n);
      Tensor dg(1, n);
      Tensor db(1, n);
      for (std::size_t i = 0; i < rows; ++i) {
        double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
          const double dyj = og.at(i, j);
          dg[j] += dyj * xhat.at(i, j);
          db[j] += dyj;
          const double dxhat = dyj * g[j];
          mean_dxhat += dxhat;
          mean_dxhat_xhat += dxhat * xhat.at(i, j);
        }
        mean_dxhat /= static_cast<double>(n);
        mean_dxhat_xhat /= static_cast<double>(n);
        for (std::size_t j = 0; j < n; ++j) {
          const double dxhat = og.at(i, j) * g[j];
          dx.at(i, j) = inv_std[i] * (dxhat - mean_dxhat - xhat.at(i, j) * mean_dxhat_xhat);
        }
      }
      accumulate(t.grad_buf(xid), dx, t.nodes_[xid].value.shape());
      accumulate(t.grad_buf(gid), dg, t.nodes_[gid].value.shape());
      accumulate(t.grad_buf(bid), db, t.nodes_[bid].value.shape());
    };
  }
  return v;
}

Var Tape::sum_all(Var a) {
  const std::uint32_t aid = a.id;
  Var v = push(Tensor::scalar(diar::sum_all(value(a))), nullptr, "sum_all");
  const std::uint32_t oid = v.id;
  if (recording_) {
    nodes_[oid].backprop = [aid, oid](Tape& t) {
      const Tensor& og = t.nodes_[oid].grad;
      if (og.size() == 0) return;
      const Tensor& av = t.nodes_[aid].value;
      accumulate(t.grad_buf(aid), Tensor::full(av.rows(), av.cols(), og[0]), av.shape());
    };
  }
  return v;
}

void Tape::backward(Var loss) {
  if (!recording_) throw Error("backward() on a non-recording tape");
  if (!loss.valid() || loss.id >= nodes_.size()) throw Error("backward(): invalid loss node");
  if (nodes_[loss.id].value.size() != 1) {
    throw DimensionError("backward(): loss must be scalar, got " + nodes_[loss.id].value.shape_str());
  }
  grad_buf(loss.id)[0] = 1.0;
  for (std::uint32_t i = loss.id + 1; i-- > 0;) {
    if (nodes_[i].backprop) nodes_[i].backprop(*this);
  }
  for (Node& n : nodes_) {
    if (n.param != nullptr && n.grad.size() != 0) {
      for (std::size_t i = 0; i < n.grad.size(); ++i) n.param->grad[i] += n.grad[i];
    }
  }
}

LstmState lstm_cell(Tape& tape, Var h_prev, Var c_prev, Var x, LstmParams& p) {
  const std::size_t d = p.hidden();
  if (tape.value(x).cols() != p.w_x.value.rows()) {
    throw DimensionError("lstm_cell: input dim mismatch");
  }
  Var wx = tape.leaf(p.w_x);
  Var wh = tape.leaf(p.w_h);
  Var b = tape.leaf(p.b);
  Var gates = tape.add(tape.add(tape.matmul(x, wx), tape.matmul(h_prev, wh)), b);
  Var i = tape.sigmoid(tape.slice_cols(gates, 0, d));
  Var f = tape.sigmoid(tape.slice_cols(gates, d, d));
  Var g = tape.tanh_(tape.slice_cols(gates, 2 * d, d));
  Var o = tape.sigmoid(tape.slice_cols(gates, 3 * d, d));
  Var c = tape.add(tape.mul(f, c_prev), tape.mul(i, g));
  Var h = tape.mul(o, tape.tanh_(c));
  return LstmState{h, c};
}

}  // namespace diar::ad

namespace diar {

double grad_check(const std::function<ad::Var(ad::Tape&)>& f,
                  const std::vector<Parameter*>& params, double h) {
  if (h <= 0.0) throw Error("grad_check: step must be positive");
  for (Parameter* p : params) p->zero_grad();
  {
    ad::Tape tape(true);
    ad::Var loss = f(tape);
    if (!tape.value(loss).all_finite()) throw NumericError("grad_check: non-finite loss");
    tape.backward(loss);
  }
  std::vector<Tensor> analytic;
  analytic.reserve(params.size());
  for (Parameter* p : params) analytic.push_back(p->grad);

  auto eval = [&f]() {
    ad::Tape tape(false);
    ad::Var loss = f(tape);
    const Tensor& v = tape.value(loss);
    if (v.size() != 1) throw DimensionError("grad_check: loss must be scalar");
    return v[0];
  };

  double max_rel = 0.0;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Parameter& p = *params[pi];
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double orig = p.value[i];
      p.value[i] = orig + h;
      const double fp = eval();
      p.value[i] = orig - h;
      const double fm = eval();
      p.value[i] = orig;
      if (!std::isfinite(fp) || !std::isfinite(fm)) {
        throw NumericError("grad_check: non-finite loss at perturbed " + p.name);
      }
      const double numeric = (fp - fm) / (2.0 * h);
      const double rel = std::abs(analytic[pi][i] - numeric) / std::max(1.0, std::abs(numeric));
      if (rel > max_rel) max_rel = rel;
    }
  }
  return max_rel;
}

}  // namespace diar
