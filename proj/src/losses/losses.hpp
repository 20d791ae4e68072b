#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "model/model.hpp"
#include "numerics/autograd.hpp"
#include "numerics/tensor.hpp"

namespace diar {

struct LossConfig {
  double alpha = 0.0;  // attention auxiliary weight; 0 skips that path entirely
  double beta = 1.0;   // existence weight
  std::size_t vad_layer = 0;      // 1-based encoder layer; 0 means the topmost
  std::size_t heads_per_set = 0;  // selected head count k; 0 means n_speakers
};

struct LossBreakdown {
  double diar = 0.0;
  double vad = 0.0;
  double exist = 0.0;
  double total = 0.0;  // (diar + alpha*vad) + beta*exist, this association
  std::vector<std::size_t> best_perm;  // best_perm[c] = reference row for channel c
  std::vector<std::pair<std::size_t, double>> selected_heads;  // (head index, trace)
};

// Pointwise binary cross entropy with the prediction clamped to
// [1e-7, 1 - 1e-7] before the logs.
double bce(double y_true, double y_pred);

// Sum over all entries of bce(targets[i], preds[i]) as a tape node; targets
// are constants, gradient flows into preds only.
ad::Var bce_sum(ad::Tape& tape, const Tensor& targets, ad::Var preds);

// Permutation-invariant diarization loss: (1/CT) * min over reference row
// permutations of the summed BCE. The permutation is chosen from forward
// values, ties broken by the lexicographically smallest permutation, and only
// the chosen branch is recorded on the tape.
std::pair<ad::Var, std::vector<std::size_t>> pit_diar_loss(ad::Tape& tape, const Tensor& y_true,
                                                           ad::Var y_pred);
std::pair<double, std::vector<std::size_t>> pit_diar_loss_value(const Tensor& y_true,
                                                                const Tensor& y_pred);

// Outer product of a binary row with itself, T x T.
Tensor target_mask(const Tensor& y_row);

// Traces of each T x T attention matrix, sorted descending, ties to the lower
// head index; returns the top k as (head index, trace).
std::vector<std::pair<std::size_t, double>> select_heads_by_trace(const std::vector<Tensor>& heads,
                                                                  std::size_t k);

// Sum over speakers of the per-entry BCE between a target mask and a selected
// head's attention, each pair averaged by 1/T^2; minimized over the C!
// mask-to-head assignments (chosen from values, chosen branch recorded).
ad::Var vad_aux_loss(ad::Tape& tape, const std::vector<Tensor>& masks,
                     const std::vector<ad::Var>& heads);

// Mean BCE of sigmoid(logits) against [1, ..., 1, 0].
ad::Var existence_loss(ad::Tape& tape, ad::Var logits, std::size_t n_speakers);

// Pure arithmetic combine, no permutation or head bookkeeping.
LossBreakdown total_loss(double diar, double vad, double exist, double alpha, double beta);

struct ChunkLoss {
  ad::Var total;  // node to run backward() on
  LossBreakdown breakdown;
};

// Full training objective for one chunk: forward pass, PIT diarization loss,
// existence loss, and (when alpha > 0) the attention auxiliary loss on the k
// highest-trace heads of the configured layer using masks permuted by this
// chunk's PIT permutation. With alpha == 0 the attention is not even
// recorded, so baseline gradients are reproduced bit for bit.
ChunkLoss chunk_loss(ad::Tape& tape, Model& model, const Tensor& features, const Tensor& labels,
                     const LossConfig& cfg);

}  // namespace diar
