#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "numerics/autograd.hpp"
#include "numerics/init.hpp"
#include "numerics/tensor.hpp"

namespace diar {

struct ModelConfig {
  std::size_t n_layers = 4;
  std::size_t d_model = 256;
  std::size_t n_heads = 4;
  std::size_t input_dim = 345;
  std::size_t n_speakers = 2;  // attractor decoder emits n_speakers + 1
  std::size_t chunk_len = 500;
  bool positional_encoding = false;  // sinusoidal, off by default

  void validate() const;
};

// Transformer encoder over T x d_model activations (rows are frames), LSTM
// encoder-decoder attractor head, shared existence projection. The feed
// forward hidden width is fixed at 4 * d_model.
struct Model {
  ModelConfig cfg;
  std::uint64_t init_seed = 0;
  std::string init_scheme = "xavier_uniform";

  Parameter in_w, in_b, in_ln_g, in_ln_b;

  struct Layer {
    Parameter wq, bq, wk, bk, wv, bv, wo, bo;
    Parameter ln1_g, ln1_b;
    Parameter ff1_w, ff1_b, ff2_w, ff2_b;
    Parameter ln2_g, ln2_b;
  };
  std::vector<Layer> layers;

  ad::LstmParams enc_lstm, dec_lstm;
  Parameter exist_w, exist_b;

  // Stable traversal order; checkpoints and the optimizer both rely on it.
  std::vector<Parameter*> parameters();
  std::size_t num_scalars();

  static Model init(const ModelConfig& cfg, std::uint64_t seed);
};

struct EncoderOut {
  std::vector<ad::Var> layer_outputs;               // E_1 .. E_N, each T x D
  std::vector<std::vector<ad::Var>> attention;      // [layer][head] T x T, empty unless recorded
  ad::Var e_n;                                       // alias of the last layer output
};

struct AttractorOut {
  ad::Var attractors;    // (C+1) x D, decoder outputs in emission order
  ad::Var exist_logits;  // (C+1) x 1
};

struct ForwardOut {
  EncoderOut encoder;
  AttractorOut attractors;
  ad::Var posteriors;  // C x T
};

// One encoder layer's attention sublayer. Returns the projected output and
// the per-head row-stochastic weight matrices.
std::pair<ad::Var, std::vector<ad::Var>> mhsa(ad::Tape& tape, Model::Layer& layer, ad::Var e,
                                              std::size_t n_heads);

EncoderOut encoder_forward(ad::Tape& tape, Model& model, const Tensor& x, bool record_attention);
AttractorOut eda(ad::Tape& tape, Model& model, ad::Var e_n, std::size_t n_speakers);
ad::Var posteriors(ad::Tape& tape, ad::Var attractors, ad::Var e_n, std::size_t n_speakers);
ForwardOut forward(ad::Tape& tape, Model& model, const Tensor& x, bool record_attention);

// Duplicates the first n_speakers attractor rows as plain values.
Tensor attractor_values(const ad::Tape& tape, const AttractorOut& out, std::size_t n_speakers);

// Channel permutation aligning cur rows to prev rows by greedy cosine
// similarity; perm[i] is the cur row to place at channel i.
std::vector<std::size_t> align_channels(const Tensor& prev, const Tensor& cur);

// Inference over a full recording: consecutive chunk_len windows, channels
// aligned chunk to chunk via align_channels. Returns C x T posteriors.
Tensor chunk_and_stitch(Model& model, const Tensor& features);

// Attention snapshot of one chunk (values, not tape nodes): [layer][head].
std::vector<std::vector<Tensor>> attention_snapshot(Model& model, const Tensor& features);

void save_model(const std::string& path, Model& model);
Model load_model(const std::string& path);

}  // namespace diar
