#include "model/model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include "common/error.hpp"

namespace diar {

void ModelConfig::validate() const {
  if (n_layers < 1) throw ConfigError("n_layers must be >= 1");
  if (d_model < 1 || n_heads < 1) throw ConfigError("d_model and n_heads must be >= 1");
  if (d_model % n_heads != 0) throw ConfigError("d_model must be divisible by n_heads");
  if (input_dim < 1) throw ConfigError("input_dim must be >= 1");
  if (n_speakers < 1) throw ConfigError("n_speakers must be >= 1");
  if (chunk_len < 1) throw ConfigError("chunk_len must be >= 1");
}

std::vector<Parameter*> Model::parameters() {
  std::vector<Parameter*> out = {&in_w, &in_b, &in_ln_g, &in_ln_b};
  for (Layer& l : layers) {
    for (Parameter* p : {&l.wq, &l.bq, &l.wk, &l.bk, &l.wv, &l.bv, &l.wo, &l.bo, &l.ln1_g,
                         &l.ln1_b, &l.ff1_w, &l.ff1_b, &l.ff2_w, &l.ff2_b, &l.ln2_g, &l.ln2_b}) {
      out.push_back(p);
    }
  }
  for (ad::LstmParams* p : {&enc_lstm, &dec_lstm}) {
    out.push_back(&p->w_x);
    out.push_back(&p->w_h);
    out.push_back(&p->b);
  }
  out.push_back(&exist_w);
  out.push_back(&exist_b);
  return out;
}

std::size_t Model::num_scalars() {
  std::size_t n = 0;
  for (Parameter* p : parameters()) n += p->value.size();
  return n;
}

Model Model::init(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Model m;
  m.cfg = cfg;
  m.init_seed = seed;
  std::mt19937_64 rng(seed);
  const std::size_t D = cfg.d_model;
  const std::size_t F = 4 * D;

  m.in_w = Parameter("in.w", xavier_uniform(cfg.input_dim, D, rng));
  m.in_b = Parameter("in.b", Tensor::zeros(1, D));
  m.in_ln_g = Parameter("in.ln.g", Tensor::ones(1, D));
  m.in_ln_b = Parameter("in.ln.b", Tensor::zeros(1, D));

  m.layers.resize(cfg.n_layers);
  for (std::size_t i = 0; i < cfg.n_layers; ++i) {
    const std::string p = "layer" + std::to_string(i) + ".";
    Layer& l = m.layers[i];
    l.wq = Parameter(p + "wq", xavier_uniform(D, D, rng));
    l.bq = Parameter(p + "bq", Tensor::zeros(1, D));
    l.wk = Parameter(p + "wk", xavier_uniform(D, D, rng));
    l.bk = Parameter(p + "bk", Tensor::zeros(1, D));
    l.wv = Parameter(p + "wv", xavier_uniform(D, D, rng));
    l.bv = Parameter(p + "bv", Tensor::zeros(1, D));
    l.wo = Parameter(p + "wo", xavier_uniform(D, D, rng));
    l.bo = Parameter(p + "bo", Tensor::zeros(1, D));
    l.ln1_g = Parameter(p + "ln1.g", Tensor::ones(1, D));
    l.ln1_b = Parameter(p + "ln1.b", Tensor::zeros(1, D));
    l.ff1_w = Parameter(p + "ff1.w", xavier_uniform(D, F, rng));
    l.ff1_b = Parameter(p + "ff1.b", Tensor::zeros(1, F));
    l.ff2_w = Parameter(p + "ff2.w", xavier_uniform(F, D, rng));
    l.ff2_b = Parameter(p + "ff2.b", Tensor::zeros(1, D));
    l.ln2_g = Parameter(p + "ln2.g", Tensor::ones(1, D));
    l.ln2_b = Parameter(p + "ln2.b", Tensor::zeros(1, D));
  }

  m.enc_lstm = make_lstm_params("enc", D, D, rng);
  m.dec_lstm = make_lstm_params("dec", D, D, rng);
  m.exist_w = Parameter("exist.w", xavier_uniform(D, 1, rng));
  m.exist_b = Parameter("exist.b", Tensor::zeros(1, 1));
  return m;
}

namespace {

Tensor sinusoidal_encoding(std::size_t T, std::size_t D) {
  Tensor pe(T, D);
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t i = 0; i < D; ++i) {
      const double rate = std::pow(10000.0, static_cast<double>(i / 2 * 2) / static_cast<double>(D));
      const double x = static_cast<double>(t) / rate;
      pe.at(t, i) = i % 2 == 0 ? std::sin(x) : std::cos(x);
    }
  }
  return pe;
}

ad::Var linear(ad::Tape& tape, ad::Var x, Parameter& w, Parameter& b) {
  return tape.add_row(tape.matmul(x, tape.leaf(w)), tape.leaf(b));
}

}  // namespace

std::pair<ad::Var, std::vector<ad::Var>> mhsa(ad::Tape& tape, Model::Layer& layer, ad::Var e,
                                              std::size_t n_heads) {
  const std::size_t D = tape.value(e).cols();
  if (D % n_heads != 0) throw DimensionError("d_model not divisible by n_heads");
  const std::size_t d = D / n_heads;

  const ad::Var q = linear(tape, e, layer.wq, layer.bq);
  const ad::Var k = linear(tape, e, layer.wk, layer.bk);
  const ad::Var v = linear(tape, e, layer.wv, layer.bv);

  std::vector<ad::Var> weights, outs;
  weights.reserve(n_heads);
  for (std::size_t h = 0; h < n_heads; ++h) {
    const ad::Var qh = tape.slice_cols(q, h * d, d);
    const ad::Var kh = tape.slice_cols(k, h * d, d);
    const ad::Var vh = tape.slice_cols(v, h * d, d);
    const ad::Var logits =
        tape.scale(tape.matmul(qh, tape.transpose(kh)), 1.0 / std::sqrt(static_cast<double>(d)));
    const ad::Var w = tape.softmax_rows(logits);
    weights.push_back(w);
    outs.push_back(tape.matmul(w, vh));
  }
  const ad::Var concat = n_heads == 1 ? outs[0] : tape.concat_cols(outs);
  return {linear(tape, concat, layer.wo, layer.bo), std::move(weights)};
}

EncoderOut encoder_forward(ad::Tape& tape, Model& model, const Tensor& x, bool record_attention) {
  model.cfg.validate();
  if (x.rank() != 2 || x.cols() != model.cfg.input_dim) {
    throw DimensionError("encoder input must be T x " + std::to_string(model.cfg.input_dim) +
                         ", got " + x.shape_str());
  }
  if (x.rows() < 1) throw DimensionError("encoder input must have at least one frame");

  EncoderOut out;
  ad::Var e;
  try {
    e = tape.layer_norm_rows(linear(tape, tape.constant(x), model.in_w, model.in_b),
                             tape.leaf(model.in_ln_g), tape.leaf(model.in_ln_b));
    if (model.cfg.positional_encoding) {
      e = tape.add(e, tape.constant(sinusoidal_encoding(x.rows(), model.cfg.d_model)));
    }
  } catch (const NumericError& err) {
    throw NumericError("input projection: " + std::string(err.what()));
  }

  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    Model::Layer& l = model.layers[i];
    try {
      auto [attn, weights] = mhsa(tape, l, e, model.cfg.n_heads);
      const ad::Var e1 =
          tape.layer_norm_rows(tape.add(e, attn), tape.leaf(l.ln1_g), tape.leaf(l.ln1_b));
      const ad::Var hidden = tape.relu(linear(tape, e1, l.ff1_w, l.ff1_b));
      const ad::Var ffn = linear(tape, hidden, l.ff2_w, l.ff2_b);
      e = tape.layer_norm_rows(tape.add(e1, ffn), tape.leaf(l.ln2_g), tape.leaf(l.ln2_b));
      out.layer_outputs.push_back(e);
      if (record_attention) out.attention.push_back(std::move(weights));
    } catch (const NumericError& err) {
      throw NumericError("encoder layer " + std::to_string(i) + ": " + std::string(err.what()));
    }
  }
  out.e_n = e;
  return out;
}

AttractorOut eda(ad::Tape& tape, Model& model, ad::Var e_n, std::size_t n_speakers) {
  const std::size_t T = tape.value(e_n).rows();
  const std::size_t D = tape.value(e_n).cols();
  if (T < 1) throw DimensionError("eda needs at least one frame");

  ad::LstmState st{tape.constant(Tensor::zeros(1, D)), tape.constant(Tensor::zeros(1, D))};
  for (std::size_t t = 0; t < T; ++t) {
    st = ad::lstm_cell(tape, st.h, st.c, tape.slice_rows(e_n, t, 1), model.enc_lstm);
  }

  const ad::Var zero_in = tape.constant(Tensor::zeros(1, D));
  std::vector<ad::Var> rows;
  for (std::size_t c = 0; c < n_speakers + 1; ++c) {
    st = ad::lstm_cell(tape, st.h, st.c, zero_in, model.dec_lstm);
    rows.push_back(st.h);
  }

  AttractorOut out;
  out.attractors = tape.concat_rows(rows);
  out.exist_logits = linear(tape, out.attractors, model.exist_w, model.exist_b);
  return out;
}

ad::Var posteriors(ad::Tape& tape, ad::Var attractors, ad::Var e_n, std::size_t n_speakers) {
  if (tape.value(attractors).rows() < n_speakers) {
    throw DimensionError("attractor set smaller than n_speakers");
  }
  const ad::Var used = tape.slice_rows(attractors, 0, n_speakers);
  return tape.sigmoid(tape.matmul(used, tape.transpose(e_n)));
}

ForwardOut forward(ad::Tape& tape, Model& model, const Tensor& x, bool record_attention) {
  ForwardOut out;
  out.encoder = encoder_forward(tape, model, x, record_attention);
  out.attractors = eda(tape, model, out.encoder.e_n, model.cfg.n_speakers);
  out.posteriors = posteriors(tape, out.attractors.attractors, out.encoder.e_n,
                              model.cfg.n_speakers);
  return out;
}

Tensor attractor_values(const ad::Tape& tape, const AttractorOut& out, std::size_t n_speakers) {
  const Tensor& a = tape.value(out.attractors);
  Tensor used(n_speakers, a.cols());
  for (std::size_t c = 0; c < n_speakers; ++c) {
    for (std::size_t j = 0; j < a.cols(); ++j) used.at(c, j) = a.at(c, j);
  }
  return used;
}

std::vector<std::size_t> align_channels(const Tensor& prev, const Tensor& cur) {
  if (!prev.same_shape(cur)) throw DimensionError("attractor sets differ in shape");
  const std::size_t C = prev.rows();
  auto cosine = [&](std::size_t i, std::size_t j) {
    double dot = 0.0, ni = 0.0, nj = 0.0;
    for (std::size_t k = 0; k < prev.cols(); ++k) {
      dot += prev.at(i, k) * cur.at(j, k);
      ni += prev.at(i, k) * prev.at(i, k);
      nj += cur.at(j, k) * cur.at(j, k);
    }
    const double denom = std::sqrt(ni) * std::sqrt(nj);
    return denom == 0.0 ? 0.0 : dot / denom;
  };
  std::vector<std::size_t> perm(C, C);
  std::vector<bool> used(C, false);
  for (std::size_t round = 0; round < C; ++round) {
    double best = -2.0;
    std::size_t bi = C, bj = C;
    for (std::size_t i = 0; i < C; ++i) {
      if (perm[i] != C) continue;
      for (std::size_t j = 0; j < C; ++j) {
        if (used[j]) continue;
        const double s = cosine(i, j);
        if (s > best) {
          best = s;
          bi = i;
          bj = j;
        }
      }
    }
    perm[bi] = bj;
    used[bj] = true;
  }
  return perm;
}

Tensor chunk_and_stitch(Model& model, const Tensor& features) {
  if (features.rank() != 2 || features.rows() < 1) throw DataError("no frames to infer on");
  const std::size_t T = features.rows();
  const std::size_t C = model.cfg.n_speakers;
  Tensor out(C, T);
  Tensor prev_attr;
  for (std::size_t a = 0; a < T; a += model.cfg.chunk_len) {
    const std::size_t len = std::min(model.cfg.chunk_len, T - a);
    ad::Tape tape(false);
    ForwardOut fw = forward(tape, model, slice_rows(features, a, len), false);
    const Tensor& y = tape.value(fw.posteriors);
    Tensor attr = attractor_values(tape, fw.attractors, C);

    std::vector<std::size_t> perm(C);
    for (std::size_t c = 0; c < C; ++c) perm[c] = c;
    if (a > 0) perm = align_channels(prev_attr, attr);

    Tensor aligned_attr(C, attr.cols());
    for (std::size_t c = 0; c < C; ++c) {
      for (std::size_t t = 0; t < len; ++t) out.at(c, a + t) = y.at(perm[c], t);
      for (std::size_t j = 0; j < attr.cols(); ++j) aligned_attr.at(c, j) = attr.at(perm[c], j);
    }
    prev_attr = std::move(aligned_attr);
  }
  return out;
}

std::vector<std::vector<Tensor>> attention_snapshot(Model& model, const Tensor& features) {
  ad::Tape tape(false);
  EncoderOut enc = encoder_forward(tape, model, features, true);
  std::vector<std::vector<Tensor>> out;
  for (const auto& layer : enc.attention) {
    std::vector<Tensor> heads;
    for (const ad::Var& w : layer) heads.push_back(tape.value(w));
    out.push_back(std::move(heads));
  }
  return out;
}

void save_model(const std::string& path, Model& model) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open checkpoint for writing: " + path);
  const auto params = model.parameters();
  out << "DIARCKPT 1\n";
  out << "init_scheme " << model.init_scheme << "\n";
  out << "init_seed " << model.init_seed << "\n";
  out << "n_layers " << model.cfg.n_layers << "\n";
  out << "d_model " << model.cfg.d_model << "\n";
  out << "n_heads " << model.cfg.n_heads << "\n";
  out << "input_dim " << model.cfg.input_dim << "\n";
  out << "n_speakers " << model.cfg.n_speakers << "\n";
  out << "chunk_len " << model.cfg.chunk_len << "\n";
  out << "positional_encoding " << (model.cfg.positional_encoding ? 1 : 0) << "\n";
  out << "params " << params.size() << "\n";
  for (const Parameter* p : params) {
    out << "param " << p->name << ' ' << p->value.rows() << ' ' << p->value.cols() << "\n";
  }
  out << "data\n";
  for (const Parameter* p : params) {
    out.write(reinterpret_cast<const char*>(p->value.data()),
              static_cast<std::streamsize>(p->value.size() * sizeof(double)));
  }
  if (!out) throw DataError("failed writing checkpoint: " + path);
}

Model load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint: " + path);
  std::string line;
  if (!std::getline(in, line) || line != "DIARCKPT 1") {
    throw DataError(path + ": not a DIARCKPT 1 file");
  }

  ModelConfig cfg;
  std::string scheme = "xavier_uniform";
  std::uint64_t seed = 0;
  std::size_t n_params = 0;
  while (std::getline(in, line)) {
    if (line == "data") throw DataError(path + ": missing params header");
    std::istringstream ss(line);
    std::string key;
    ss >> key;
    if (key == "init_scheme") {
      ss >> scheme;
    } else if (key == "init_seed") {
      ss >> seed;
    } else if (key == "n_layers") {
      ss >> cfg.n_layers;
    } else if (key == "d_model") {
      ss >> cfg.d_model;
    } else if (key == "n_heads") {
      ss >> cfg.n_heads;
    } else if (key == "input_dim") {
      ss >> cfg.input_dim;
    } else if (key == "n_speakers") {
      ss >> cfg.n_speakers;
    } else if (key == "chunk_len") {
      ss >> cfg.chunk_len;
    } else if (key == "positional_encoding") {
      int v = 0;
      ss >> v;
      cfg.positional_encoding = v != 0;
    } else if (key == "params") {
      ss >> n_params;
      break;
    } else {
      throw DataError(path + ": unknown checkpoint key '" + key + "'");
    }
    if (ss.fail()) throw DataError(path + ": bad value in line '" + line + "'");
  }

  Model model = Model::init(cfg, seed);
  model.init_scheme = scheme;
  const auto params = model.parameters();
  if (params.size() != n_params) {
    throw DataError(path + ": expected " + std::to_string(params.size()) + " params, header says " +
                    std::to_string(n_params));
  }
  for (Parameter* p : params) {
    if (!std::getline(in, line)) throw DataError(path + ": truncated param list");
    std::istringstream ss(line);
    std::string tag, name;
    std::size_t rows = 0, cols = 0;
    ss >> tag >> name >> rows >> cols;
    if (ss.fail() || tag != "param" || name != p->name || rows != p->value.rows() ||
        cols != p->value.cols()) {
      throw DataError(path + ": param mismatch at '" + line + "', expected " + p->name);
    }
  }
  if (!std::getline(in, line) || line != "data") throw DataError(path + ": missing data marker");
  for (Parameter* p : params) {
    in.read(reinterpret_cast<char*>(p->value.data()),
            static_cast<std::streamsize>(p->value.size() * sizeof(double)));
    if (in.gcount() != static_cast<std::streamsize>(p->value.size() * sizeof(double))) {
      throw DataError(path + ": truncated data for " + p->name);
    }
    if (!p->value.all_finite()) throw DataError(path + ": non-finite values in " + p->name);
  }
  return model;
}

}  // namespace diar
