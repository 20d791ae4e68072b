#include "losses/losses.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "common/error.hpp"

namespace diar {

namespace {

constexpr double kClamp = 1e-7;

double clamp_pred(double p) { return std::min(std::max(p, kClamp), 1.0 - kClamp); }

void check_perm_size(std::size_t c) {
  if (c > 8) throw DataError("exhaustive permutation search capped at 8 channels");
}

// summed BCE between one reference row and one prediction row, plain doubles
double row_cost(const Tensor& y_true, std::size_t r, const Tensor& y_pred, std::size_t c) {
  double acc = 0.0;
  for (std::size_t t = 0; t < y_pred.cols(); ++t) acc += bce(y_true.at(r, t), y_pred.at(c, t));
  return acc;
}

std::pair<double, std::vector<std::size_t>> best_reference_perm(const Tensor& y_true,
                                                                const Tensor& y_pred) {
  const std::size_t C = y_pred.rows();
  check_perm_size(C);
  std::vector<std::size_t> phi(C), best(C);
  std::iota(phi.begin(), phi.end(), 0);
  double best_cost = 1e300;
  do {
    double cost = 0.0;
    for (std::size_t c = 0; c < C; ++c) cost += row_cost(y_true, phi[c], y_pred, c);
    if (cost < best_cost) {
      best_cost = cost;
      best = phi;
    }
  } while (std::next_permutation(phi.begin(), phi.end()));
  return {best_cost, best};
}

}  // namespace

double bce(double y_true, double y_pred) {
  const double p = clamp_pred(y_pred);
  return -(y_true * std::log(p) + (1.0 - y_true) * std::log(1.0 - p));
}

ad::Var bce_sum(ad::Tape& tape, const Tensor& targets, ad::Var preds) {
  if (!targets.same_shape(tape.value(preds))) {
    throw DimensionError("bce targets " + targets.shape_str() + " vs predictions " +
                         tape.value(preds).shape_str());
  }
  Tensor inverted(targets.shape());
  for (std::size_t i = 0; i < targets.size(); ++i) inverted[i] = 1.0 - targets[i];
  Tensor ones(targets.shape());
  ones.fill(1.0);

  const ad::Var p = tape.clamp(preds, kClamp, 1.0 - kClamp);
  const ad::Var hit = tape.mul(tape.constant(targets), tape.log_(p));
  const ad::Var miss =
      tape.mul(tape.constant(inverted), tape.log_(tape.sub(tape.constant(ones), p)));
  return tape.scale(tape.sum_all(tape.add(hit, miss)), -1.0);
}

std::pair<double, std::vector<std::size_t>> pit_diar_loss_value(const Tensor& y_true,
                                                                const Tensor& y_pred) {
  // route through the tape so both entry points agree bit for bit
  ad::Tape tape(false);
  auto [var, phi] = pit_diar_loss(tape, y_true, tape.constant(y_pred));
  return {tape.value(var).at(0, 0), phi};
}

std::pair<ad::Var, std::vector<std::size_t>> pit_diar_loss(ad::Tape& tape, const Tensor& y_true,
                                                           ad::Var y_pred) {
  const Tensor pred_values = tape.value(y_pred);
  if (!y_true.same_shape(pred_values)) {
    throw DimensionError("pit shapes differ: " + y_true.shape_str() + " vs " +
                         pred_values.shape_str());
  }
  auto [cost, phi] = best_reference_perm(y_true, pred_values);
  (void)cost;

  Tensor permuted(y_true.shape());
  for (std::size_t c = 0; c < y_true.rows(); ++c) {
    for (std::size_t t = 0; t < y_true.cols(); ++t) permuted.at(c, t) = y_true.at(phi[c], t);
  }
  const double norm = static_cast<double>(y_true.rows()) * static_cast<double>(y_true.cols());
  return {tape.scale(bce_sum(tape, permuted, y_pred), 1.0 / norm), phi};
}

Tensor target_mask(const Tensor& y_row) {
  if (y_row.rank() != 2 || y_row.rows() != 1) {
    throw DimensionError("target_mask expects a 1 x T row, got " + y_row.shape_str());
  }
  const std::size_t T = y_row.cols();
  Tensor m(T, T);
  for (std::size_t i = 0; i < T; ++i) {
    const double yi = y_row.at(0, i);
    if (yi != 0.0 && yi != 1.0) throw DataError("target_mask input must be binary");
    for (std::size_t j = 0; j < T; ++j) m.at(i, j) = yi * y_row.at(0, j);
  }
  return m;
}

std::vector<std::pair<std::size_t, double>> select_heads_by_trace(const std::vector<Tensor>& heads,
                                                                  std::size_t k) {
  if (k > heads.size()) {
    throw ConfigError("cannot select " + std::to_string(k) + " of " +
                      std::to_string(heads.size()) + " heads");
  }
  std::vector<std::pair<std::size_t, double>> ranked;
  ranked.reserve(heads.size());
  for (std::size_t h = 0; h < heads.size(); ++h) ranked.emplace_back(h, trace(heads[h]));
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  ranked.resize(k);
  return ranked;
}

ad::Var vad_aux_loss(ad::Tape& tape, const std::vector<Tensor>& masks,
                     const std::vector<ad::Var>& heads) {
  if (masks.size() != heads.size() || masks.empty()) {
    throw DimensionError("vad_aux_loss needs matching nonempty mask and head counts");
  }
  const std::size_t C = masks.size();
  check_perm_size(C);
  const std::size_t T = masks[0].rows();
  for (std::size_t c = 0; c < C; ++c) {
    if (masks[c].rows() != T || masks[c].cols() != T ||
        !tape.value(heads[c]).same_shape(masks[c])) {
      throw DimensionError("mask and attention shapes must all be T x T");
    }
  }

  // pick the mask-to-head assignment from values
  std::vector<std::vector<double>> cost(C, std::vector<double>(C, 0.0));
  for (std::size_t m = 0; m < C; ++m) {
    for (std::size_t h = 0; h < C; ++h) {
      const Tensor& w = tape.value(heads[h]);
      double acc = 0.0;
      for (std::size_t i = 0; i < masks[m].size(); ++i) acc += bce(masks[m][i], w[i]);
      cost[m][h] = acc;
    }
  }
  std::vector<std::size_t> pi(C), best(C);
  std::iota(pi.begin(), pi.end(), 0);
  double best_cost = 1e300;
  do {
    double acc = 0.0;
    for (std::size_t h = 0; h < C; ++h) acc += cost[pi[h]][h];
    if (acc < best_cost) {
      best_cost = acc;
      best = pi;
    }
  } while (std::next_permutation(pi.begin(), pi.end()));

  const double norm = 1.0 / (static_cast<double>(T) * static_cast<double>(T));
  ad::Var total;
  for (std::size_t h = 0; h < C; ++h) {
    const ad::Var pair_loss = tape.scale(bce_sum(tape, masks[best[h]], heads[h]), norm);
    total = h == 0 ? pair_loss : tape.add(total, pair_loss);
  }
  return total;
}

ad::Var existence_loss(ad::Tape& tape, ad::Var logits, std::size_t n_speakers) {
  const Tensor& l = tape.value(logits);
  if (l.rows() != n_speakers + 1 || l.cols() != 1) {
    throw DimensionError("existence logits must be (C+1) x 1, got " + l.shape_str());
  }
  Tensor labels = Tensor::zeros(n_speakers + 1, 1);
  for (std::size_t c = 0; c < n_speakers; ++c) labels.at(c, 0) = 1.0;
  return tape.scale(bce_sum(tape, labels, tape.sigmoid(logits)),
                    1.0 / static_cast<double>(n_speakers + 1));
}

LossBreakdown total_loss(double diar, double vad, double exist, double alpha, double beta) {
  if (alpha < 0.0 || beta < 0.0) throw ConfigError("loss weights must be >= 0");
  LossBreakdown b;
  b.diar = diar;
  b.vad = vad;
  b.exist = exist;
  b.total = (diar + alpha * vad) + beta * exist;
  return b;
}

ChunkLoss chunk_loss(ad::Tape& tape, Model& model, const Tensor& features, const Tensor& labels,
                     const LossConfig& cfg) {
  if (cfg.alpha < 0.0 || cfg.beta < 0.0) throw ConfigError("loss weights must be >= 0");
  const std::size_t C = model.cfg.n_speakers;
  if (labels.rows() != C || labels.cols() != features.rows()) {
    throw DimensionError("labels must be C x T matching the feature frames, got " +
                         labels.shape_str());
  }

  const bool use_vad = cfg.alpha > 0.0;
  ForwardOut fw = forward(tape, model, features, use_vad);

  ChunkLoss out;
  auto [diar_var, phi] = pit_diar_loss(tape, labels, fw.posteriors);
  out.breakdown.best_perm = phi;
  const ad::Var exist_var = existence_loss(tape, fw.attractors.exist_logits, C);

  ad::Var total = diar_var;
  if (use_vad) {
    const std::size_t layer = cfg.vad_layer == 0 ? model.cfg.n_layers : cfg.vad_layer;
    if (layer < 1 || layer > model.cfg.n_layers) {
      throw ConfigError("vad_layer out of range: " + std::to_string(layer));
    }
    const std::vector<ad::Var>& layer_heads = fw.encoder.attention[layer - 1];
    std::vector<Tensor> head_values;
    head_values.reserve(layer_heads.size());
    for (const ad::Var& w : layer_heads) head_values.push_back(tape.value(w));
    const std::size_t k = cfg.heads_per_set == 0 ? C : cfg.heads_per_set;
    if (k != C) throw ConfigError("heads_per_set must equal n_speakers, one mask per head");
    out.breakdown.selected_heads = select_heads_by_trace(head_values, k);

    std::vector<Tensor> masks;
    std::vector<ad::Var> selected;
    for (std::size_t c = 0; c < C; ++c) {
      masks.push_back(target_mask(slice_rows(labels, phi[c], 1)));
      selected.push_back(layer_heads[out.breakdown.selected_heads[c].first]);
    }
    const ad::Var vad_var = vad_aux_loss(tape, masks, selected);
    out.breakdown.vad = tape.value(vad_var).at(0, 0);
    total = tape.add(total, tape.scale(vad_var, cfg.alpha));
  }
  total = tape.add(total, tape.scale(exist_var, cfg.beta));

  out.total = total;
  out.breakdown.diar = tape.value(diar_var).at(0, 0);
  out.breakdown.exist = tape.value(exist_var).at(0, 0);
  out.breakdown.total = tape.value(total).at(0, 0);
  return out;
}

}  // namespace diar
