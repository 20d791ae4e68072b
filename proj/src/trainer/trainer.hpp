#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "losses/losses.hpp"
#include "model/model.hpp"
#include "numerics/tensor.hpp"

namespace diar {

// lr = d_model^(-1/2) * min(step^(-1/2), step * warmup^(-3/2))
double noam_lr(std::size_t step, std::size_t d_model, std::size_t warmup);

struct AdamState {
  std::size_t t = 0;  // applied updates, drives bias correction
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;

  static AdamState init(const std::vector<Parameter*>& params);
};

// standard Adam, beta1 0.9, beta2 0.999, eps 1e-8, bias corrected
void adam_step(const std::vector<Parameter*>& params, AdamState& state, double lr);

// scales all gradients so their joint l2 norm is at most max_norm,
// returns the norm seen before clipping
double clip_global_norm(const std::vector<Parameter*>& params, double max_norm);

struct TrainConfig {
  std::size_t batch_size = 8;
  std::size_t epochs_phase1 = 1;
  std::size_t epochs_phase2 = 0;
  // optional step caps per phase, 0 means the epoch count alone decides
  std::size_t steps_phase1 = 0;
  std::size_t steps_phase2 = 0;
  std::size_t warmup_steps = 200;
  double alpha = 0.008;  // phase 2 only, phase 1 always runs the plain objective
  double beta = 1.0;
  std::uint64_t seed = 1;
  double fixed_lr = 0.0;       // > 0 replaces the schedule
  std::size_t save_every = 0;  // steps between resumable snapshots, 0 disables
  std::size_t vad_layer = 0;   // 0 picks the topmost encoder layer

  void validate() const;
};

struct TrainChunk {
  Tensor features;  // n x input_dim
  Tensor labels;    // n_speakers x n
};

// wav + rttm pairs from a manifest, featurised and cut into chunk_len windows
std::vector<TrainChunk> load_training_chunks(const std::string& manifest_path,
                                             const ModelConfig& mcfg);

struct TrainState {
  std::size_t step = 0;
  std::size_t epoch = 0;  // global epoch index, phase 2 continues the count
  std::size_t pos = 0;    // batches consumed inside the current epoch
  std::size_t skipped = 0;
  std::size_t phase2_start = 0;  // global step when phase 2 began, 0 before that
  double max_lr = 0.0;
  AdamState adam;
};

// writes path plus a sibling .ckpt holding the weights
void save_state(const std::string& path, Model& model, const TrainState& st);
// replaces model from the referenced checkpoint, call before train()
TrainState load_state(const std::string& path, Model& model);

struct TrainResult {
  std::string final_checkpoint;
  std::string phase1_checkpoint;  // empty when phase 1 did not run in this call
  std::string log_path;
  std::size_t steps = 0;
  std::size_t skipped = 0;
  double max_lr = 0.0;
  double first_diar = 0.0;  // mean diar loss of the first logged step
  double last_diar = 0.0;
};

// runs phase 1 (alpha forced to zero) then phase 2 in one continuous loop;
// writes train.log plus checkpoints under out_dir; pass a state from
// load_state to resume mid run
TrainResult train(Model& model, const std::vector<TrainChunk>& chunks, const TrainConfig& cfg,
                  const std::string& out_dir, const TrainState* resume = nullptr);

// convenience: fresh model from mcfg, chunks from the manifest
TrainResult train_manifest(const std::string& manifest_path, const ModelConfig& mcfg,
                           const TrainConfig& cfg, const std::string& out_dir);

}  // namespace diar
