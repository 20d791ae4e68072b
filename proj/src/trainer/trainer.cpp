#include "trainer/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>

#include "common/error.hpp"
#include "frontend/features.hpp"
#include "frontend/wav.hpp"
#include "numerics/autograd.hpp"
#include "scoring/scoring.hpp"
#include "simulate/simulate.hpp"

namespace diar {

namespace {

constexpr double kBeta1 = 0.9;
constexpr double kBeta2 = 0.999;
constexpr double kAdamEps = 1e-8;
constexpr double kClipNorm = 5.0;
constexpr std::uint64_t kEpochMix = 0x9E3779B97F4A7C15ULL;

std::string fmt_g(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// explicit Fisher-Yates so the order does not depend on the standard
// library's std::shuffle implementation
std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::size_t epoch) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::mt19937_64 rng(seed * kEpochMix ^ static_cast<std::uint64_t>(epoch));
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(order[i - 1], order[j]);
  }
  return order;
}

bool grads_finite(const std::vector<Parameter*>& params) {
  for (const Parameter* p : params) {
    if (!p->grad.all_finite()) return false;
  }
  return true;
}

}  // namespace

double noam_lr(std::size_t step, std::size_t d_model, std::size_t warmup) {
  if (step == 0) throw ConfigError("noam schedule starts at step 1");
  if (d_model == 0 || warmup == 0) {
    throw ConfigError("noam schedule needs d_model >= 1 and warmup >= 1");
  }
  const double s = static_cast<double>(step);
  const double w = static_cast<double>(warmup);
  const double ramp = s / (w * std::sqrt(w));
  const double decay = 1.0 / std::sqrt(s);
  return std::min(decay, ramp) / std::sqrt(static_cast<double>(d_model));
}

AdamState AdamState::init(const std::vector<Parameter*>& params) {
  AdamState st;
  st.m.reserve(params.size());
  st.v.reserve(params.size());
  for (const Parameter* p : params) {
    st.m.emplace_back(p->value.size(), 0.0);
    st.v.emplace_back(p->value.size(), 0.0);
  }
  return st;
}

void adam_step(const std::vector<Parameter*>& params, AdamState& state, double lr) {
  if (state.m.size() != params.size() || state.v.size() != params.size()) {
    throw DimensionError("adam state covers " + std::to_string(state.m.size()) +
                         " parameters, model has " + std::to_string(params.size()));
  }
  if (!std::isfinite(lr) || lr < 0.0) throw NumericError("adam_step: bad learning rate");
  state.t += 1;
  const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter& p = *params[i];
    if (state.m[i].size() != p.value.size()) {
      throw DimensionError("adam state size mismatch for " + p.name);
    }
    if (!p.grad.all_finite()) throw NumericError("adam_step: non-finite gradient in " + p.name);
    for (std::size_t j = 0; j < p.value.size(); ++j) {
      const double g = p.grad[j];
      state.m[i][j] = kBeta1 * state.m[i][j] + (1.0 - kBeta1) * g;
      state.v[i][j] = kBeta2 * state.v[i][j] + (1.0 - kBeta2) * g * g;
      const double mhat = state.m[i][j] / c1;
      const double vhat = state.v[i][j] / c2;
      p.value[j] -= lr * mhat / (std::sqrt(vhat) + kAdamEps);
    }
  }
}

double clip_global_norm(const std::vector<Parameter*>& params, double max_norm) {
  if (max_norm <= 0.0) throw ConfigError("clip norm must be positive");
  double sq = 0.0;
  for (const Parameter* p : params) {
    for (std::size_t j = 0; j < p->grad.size(); ++j) sq += p->grad[j] * p->grad[j];
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const double s = max_norm / norm;
    for (Parameter* p : params) {
      for (std::size_t j = 0; j < p->grad.size(); ++j) p->grad[j] *= s;
    }
  }
  return norm;
}

void TrainConfig::validate() const {
  if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
  if (warmup_steps == 0) throw ConfigError("warmup_steps must be >= 1");
  if (epochs_phase1 + epochs_phase2 == 0) {
    throw ConfigError("at least one phase needs an epoch to run");
  }
  if (alpha < 0.0 || beta < 0.0) throw ConfigError("loss weights must be >= 0");
  if (fixed_lr < 0.0) throw ConfigError("fixed_lr must be >= 0");
}

std::vector<TrainChunk> load_training_chunks(const std::string& manifest_path,
                                             const ModelConfig& mcfg) {
  const std::vector<ManifestEntry> entries = read_manifest(manifest_path);
  if (entries.empty()) throw DataError(manifest_path + ": manifest is empty");
  std::vector<TrainChunk> chunks;
  for (const ManifestEntry& e : entries) {
    const Waveform wav = read_wav(resolve_manifest_path(manifest_path, e.wav_path));
    const FeatureSequence fs = extract_features(wav);
    const SegmentList segs = rttm_read(resolve_manifest_path(manifest_path, e.rttm_path));
    const std::size_t T = fs.length();
    const Tensor labels = segments_to_activity(segs, mcfg.n_speakers, T);
    for (std::size_t t0 = 0; t0 < T; t0 += mcfg.chunk_len) {
      const std::size_t n = std::min(mcfg.chunk_len, T - t0);
      chunks.push_back({slice_rows(fs.frames, t0, n), slice_cols(labels, t0, n)});
    }
  }
  return chunks;
}

void save_state(const std::string& path, Model& model, const TrainState& st) {
  std::string ckpt = path;
  const std::string suffix = ".state";
  if (ckpt.size() > suffix.size() && ckpt.ends_with(suffix)) {
    ckpt.resize(ckpt.size() - suffix.size());
  }
  ckpt += ".ckpt";
  save_model(ckpt, model);

  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open state for writing: " + path);
  out << "DIARSTATE 1\n";
  out << "model " << std::filesystem::path(ckpt).filename().string() << "\n";
  out << "step " << st.step << "\n";
  out << "epoch " << st.epoch << "\n";
  out << "pos " << st.pos << "\n";
  out << "skipped " << st.skipped << "\n";
  out << "phase2_start " << st.phase2_start << "\n";
  out << "max_lr " << fmt_g(st.max_lr) << "\n";
  out << "adam_t " << st.adam.t << "\n";
  out << "moments " << st.adam.m.size() << "\n";
  for (std::size_t i = 0; i < st.adam.m.size(); ++i) {
    out << "moment " << i << ' ' << st.adam.m[i].size() << "\n";
  }
  out << "data\n";
  for (std::size_t i = 0; i < st.adam.m.size(); ++i) {
    out.write(reinterpret_cast<const char*>(st.adam.m[i].data()),
              static_cast<std::streamsize>(st.adam.m[i].size() * sizeof(double)));
    out.write(reinterpret_cast<const char*>(st.adam.v[i].data()),
              static_cast<std::streamsize>(st.adam.v[i].size() * sizeof(double)));
  }
  if (!out) throw DataError("failed writing state: " + path);
}

TrainState load_state(const std::string& path, Model& model) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open state: " + path);
  std::string line;
  if (!std::getline(in, line) || line != "DIARSTATE 1") {
    throw DataError(path + ": not a DIARSTATE 1 file");
  }
  TrainState st;
  std::string ckpt_name;
  std::size_t n_moments = 0;
  while (std::getline(in, line)) {
    if (line == "data") throw DataError(path + ": missing moments header");
    std::istringstream ss(line);
    std::string key;
    ss >> key;
    if (key == "model") {
      ss >> ckpt_name;
    } else if (key == "step") {
      ss >> st.step;
    } else if (key == "epoch") {
      ss >> st.epoch;
    } else if (key == "pos") {
      ss >> st.pos;
    } else if (key == "skipped") {
      ss >> st.skipped;
    } else if (key == "phase2_start") {
      ss >> st.phase2_start;
    } else if (key == "max_lr") {
      ss >> st.max_lr;
    } else if (key == "adam_t") {
      ss >> st.adam.t;
    } else if (key == "moments") {
      ss >> n_moments;
      break;
    } else {
      throw DataError(path + ": unknown state key '" + key + "'");
    }
    if (ss.fail()) throw DataError(path + ": bad value in line '" + line + "'");
  }
  if (ckpt_name.empty()) throw DataError(path + ": state names no model checkpoint");

  const std::string ckpt =
      (std::filesystem::path(path).parent_path() / ckpt_name).string();
  model = load_model(ckpt);
  const auto params = model.parameters();
  if (n_moments != params.size()) {
    throw DataError(path + ": " + std::to_string(n_moments) + " moment blocks for " +
                    std::to_string(params.size()) + " parameters");
  }
  st.adam.m.resize(n_moments);
  st.adam.v.resize(n_moments);
  for (std::size_t i = 0; i < n_moments; ++i) {
    if (!std::getline(in, line)) throw DataError(path + ": truncated moment list");
    std::istringstream ss(line);
    std::string tag;
    std::size_t idx = 0, count = 0;
    ss >> tag >> idx >> count;
    if (ss.fail() || tag != "moment" || idx != i || count != params[i]->value.size()) {
      throw DataError(path + ": moment mismatch at '" + line + "'");
    }
    st.adam.m[i].resize(count);
    st.adam.v[i].resize(count);
  }
  if (!std::getline(in, line) || line != "data") throw DataError(path + ": missing data marker");
  for (std::size_t i = 0; i < n_moments; ++i) {
    for (std::vector<double>* block : {&st.adam.m[i], &st.adam.v[i]}) {
      in.read(reinterpret_cast<char*>(block->data()),
              static_cast<std::streamsize>(block->size() * sizeof(double)));
      if (in.gcount() != static_cast<std::streamsize>(block->size() * sizeof(double))) {
        throw DataError(path + ": truncated moment data");
      }
    }
  }
  return st;
}

namespace {

struct BatchLog {
  LossBreakdown mean;
  std::string heads = "-";
  std::string seltrace = "-";
  bool applied = false;
};

void log_line(std::ostream& log, std::size_t step, double lr, int phase, const BatchLog& b) {
  log << "step " << step << " lr " << fmt_g(lr) << " diar " << fmt_g(b.mean.diar) << " vad "
      << fmt_g(b.mean.vad) << " exist " << fmt_g(b.mean.exist) << " total " << fmt_g(b.mean.total)
      << " heads " << b.heads << " phase " << phase << " seltrace " << b.seltrace << " applied "
      << (b.applied ? 1 : 0) << "\n";
}

}  // namespace

TrainResult train(Model& model, const std::vector<TrainChunk>& chunks, const TrainConfig& cfg,
                  const std::string& out_dir, const TrainState* resume) {
  cfg.validate();
  if (chunks.empty()) throw DataError("no training chunks");
  for (const TrainChunk& c : chunks) {
    if (c.features.rows() == 0 || c.features.cols() != model.cfg.input_dim) {
      throw DimensionError("chunk features must be n x " + std::to_string(model.cfg.input_dim));
    }
    if (c.labels.rows() != model.cfg.n_speakers || c.labels.cols() != c.features.rows()) {
      throw DimensionError("chunk labels must be " + std::to_string(model.cfg.n_speakers) +
                           " x chunk length");
    }
  }
  std::filesystem::create_directories(out_dir);
  const auto params = model.parameters();

  TrainState st;
  if (resume != nullptr) {
    st = *resume;
    if (st.adam.m.size() != params.size()) {
      throw DataError("resume state does not match the model");
    }
  } else {
    st.adam = AdamState::init(params);
  }
  // a snapshot taken after phase 1 finished must not clobber phase1.ckpt
  const bool past_phase1 = resume != nullptr && resume->epoch >= cfg.epochs_phase1;

  TrainResult res;
  res.log_path = out_dir + "/train.log";
  std::ofstream log(res.log_path, std::ios::binary);
  if (!log) throw DataError("cannot open log for writing: " + res.log_path);
  log << "# columns: step lr diar vad exist total heads phase seltrace applied\n";

  const std::size_t n_batches =
      (chunks.size() + cfg.batch_size - 1) / cfg.batch_size;
  bool first_logged = resume != nullptr;  // first_diar tracks this run's first line

  for (int phase = 1; phase <= 2; ++phase) {
    const std::size_t epochs = phase == 1 ? cfg.epochs_phase1 : cfg.epochs_phase2;
    const std::size_t cap = phase == 1 ? cfg.steps_phase1 : cfg.steps_phase2;
    const std::size_t base = phase == 1 ? 0 : cfg.epochs_phase1;
    const double alpha_eff = phase == 1 ? 0.0 : cfg.alpha;
    if (phase == 2 && epochs > 0 && st.phase2_start == 0) st.phase2_start = st.step;
    const std::size_t phase_start = phase == 1 ? 0 : st.phase2_start;
    bool phase_done = false;

    for (std::size_t ep = 0; ep < epochs && !phase_done; ++ep) {
      const std::size_t gep = base + ep;
      if (gep < st.epoch) continue;
      const std::vector<std::size_t> order = epoch_order(chunks.size(), cfg.seed, gep);
      bool epoch_applied = false;
      bool epoch_ran = false;

      for (std::size_t b = 0; b < n_batches; ++b) {
        if (gep == st.epoch && b < st.pos) continue;
        if (cap > 0 && st.step >= phase_start + cap) {
          phase_done = true;
          break;
        }
        epoch_ran = true;
        st.step += 1;
        const double lr = cfg.fixed_lr > 0.0
                              ? cfg.fixed_lr
                              : noam_lr(st.step, model.cfg.d_model, cfg.warmup_steps);

        for (Parameter* p : params) p->zero_grad();
        BatchLog bl;
        const std::size_t lo = b * cfg.batch_size;
        const std::size_t hi = std::min(chunks.size(), lo + cfg.batch_size);
        const double inv = 1.0 / static_cast<double>(hi - lo);
        double trace_sum = 0.0;
        bool failed = false;
        try {
          for (std::size_t k = lo; k < hi; ++k) {
            const TrainChunk& chunk = chunks[order[k]];
            LossConfig lc;
            lc.alpha = alpha_eff;
            lc.beta = cfg.beta;
            lc.vad_layer = cfg.vad_layer;
            ad::Tape tape;
            ChunkLoss cl = chunk_loss(tape, model, chunk.features, chunk.labels, lc);
            tape.backward(cl.total);
            bl.mean.diar += cl.breakdown.diar;
            bl.mean.vad += cl.breakdown.vad;
            bl.mean.exist += cl.breakdown.exist;
            bl.mean.total += cl.breakdown.total;
            if (alpha_eff > 0.0) {
              std::string heads;
              double tr = 0.0;
              for (const auto& [h, t] : cl.breakdown.selected_heads) {
                if (!heads.empty()) heads += ',';
                heads += std::to_string(h);
                tr += t;
              }
              bl.heads = heads;
              trace_sum += tr / static_cast<double>(cl.breakdown.selected_heads.size());
            }
          }
        } catch (const NumericError&) {
          failed = true;
        }
        if (!failed) {
          bl.mean.diar *= inv;
          bl.mean.vad *= inv;
          bl.mean.exist *= inv;
          bl.mean.total *= inv;
          if (alpha_eff > 0.0) bl.seltrace = fmt_g(trace_sum * inv);
          for (Parameter* p : params) {
            for (std::size_t j = 0; j < p->grad.size(); ++j) p->grad[j] *= inv;
          }
          if (grads_finite(params)) {
            clip_global_norm(params, kClipNorm);
            adam_step(params, st.adam, lr);
            st.max_lr = std::max(st.max_lr, lr);
            bl.applied = true;
            epoch_applied = true;
          }
        } else {
          const double bad = std::numeric_limits<double>::quiet_NaN();
          bl.mean = LossBreakdown{};
          bl.mean.diar = bl.mean.vad = bl.mean.exist = bl.mean.total = bad;
          bl.heads = "-";
          bl.seltrace = "-";
        }
        if (!bl.applied) st.skipped += 1;
        if (!first_logged) {
          res.first_diar = bl.mean.diar;
          first_logged = true;
        }
        res.last_diar = bl.mean.diar;
        log_line(log, st.step, lr, phase, bl);

        st.epoch = gep;
        st.pos = b + 1;
        if (cfg.save_every > 0 && st.step % cfg.save_every == 0) {
          char name[32];
          std::snprintf(name, sizeof(name), "state_%06zu.state", st.step);
          save_state(out_dir + "/" + name, model, st);
        }
      }
      if (epoch_ran && !epoch_applied) {
        log << "# abort: epoch " << gep << " produced no finite update\n";
        log.flush();
        throw NumericError("epoch " + std::to_string(gep) +
                           " produced no finite update, training aborted");
      }
      if (!phase_done) {
        st.epoch = gep;
        st.pos = n_batches;
      }
    }

    if (phase == 1 && cfg.epochs_phase1 > 0 && !past_phase1) {
      res.phase1_checkpoint = out_dir + "/phase1.ckpt";
      save_model(res.phase1_checkpoint, model);
      // phase 2 continues from the saved artifact; copy values back in
      // place so the captured parameter pointers stay valid
      Model reloaded = load_model(res.phase1_checkpoint);
      const auto src = reloaded.parameters();
      for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = src[i]->value;
    }
  }

  res.final_checkpoint = out_dir + "/final.ckpt";
  save_model(res.final_checkpoint, model);
  res.steps = st.step;
  res.skipped = st.skipped;
  res.max_lr = st.max_lr;
  log << "# steps " << st.step << "\n";
  log << "# skipped " << st.skipped << "\n";
  log << "# max_lr " << fmt_g(st.max_lr) << "\n";
  if (!log) throw DataError("failed writing log: " + res.log_path);
  return res;
}

TrainResult train_manifest(const std::string& manifest_path, const ModelConfig& mcfg,
                           const TrainConfig& cfg, const std::string& out_dir) {
  Model model = Model::init(mcfg, cfg.seed);
  const std::vector<TrainChunk> chunks = load_training_chunks(manifest_path, mcfg);
  return train(model, chunks, cfg, out_dir);
}

}  // namespace diar
