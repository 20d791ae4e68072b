#include "diarkit/diarkit.h"

#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "common/config.hpp"
#include "common/container.hpp"
#include "common/error.hpp"
#include "frontend/features.hpp"
#include "frontend/wav.hpp"
#include "losses/losses.hpp"
#include "model/model.hpp"
#include "scoring/scoring.hpp"
#include "simulate/simulate.hpp"
#include "trainer/trainer.hpp"

using namespace diar;

struct diar_model {
  Model m;
};

namespace {

thread_local std::string g_last_error;

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out != nullptr) std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

template <typename F>
int wrap(F&& f) noexcept {
  try {
    f();
    g_last_error.clear();
    return DIAR_OK;
  } catch (const ConfigError& e) {
    g_last_error = e.what();
    return DIAR_ERR_CONFIG;
  } catch (const NumericError& e) {
    g_last_error = e.what();
    return DIAR_ERR_NUMERIC;
  } catch (const DataError& e) {
    g_last_error = e.what();
    return DIAR_ERR_DATA;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return DIAR_ERR_DATA;
  } catch (...) {
    g_last_error = "unknown failure";
    return DIAR_ERR_DATA;
  }
}

ExperimentConfig load_config(const char* config_path, const char* const* overrides,
                             size_t n_overrides) {
  ExperimentConfig cfg;
  if (config_path != nullptr && config_path[0] != '\0') {
    cfg = parse_config_file(config_path);
  }
  for (size_t i = 0; i < n_overrides; ++i) {
    if (overrides == nullptr || overrides[i] == nullptr) {
      throw ConfigError("override " + std::to_string(i) + " is null");
    }
    apply_override(cfg, overrides[i]);
  }
  cfg.validate();
  return cfg;
}

std::string require(const char* v, const char* what) {
  if (v == nullptr || v[0] == '\0') throw ConfigError(std::string(what) + " is required");
  return v;
}

// RIFF wavs go through the frontend, DIARBIN files are taken as features
Tensor load_input_features(const std::string& path, const Model& model) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open input: " + path);
  char magic[4] = {0, 0, 0, 0};
  in.read(magic, 4);
  if (in.gcount() != 4) throw DataError(path + ": shorter than any known input format");
  in.close();

  Tensor feats;
  if (std::memcmp(magic, "RIFF", 4) == 0) {
    feats = extract_features(read_wav(path)).frames;
  } else if (std::memcmp(magic, "DIAR", 4) == 0) {
    feats = read_features(path).frames;
  } else {
    throw DataError(path + ": neither a RIFF wav nor a DIARBIN feature file");
  }
  if (feats.cols() != model.cfg.input_dim) {
    throw DimensionError(path + ": " + std::to_string(feats.cols()) +
                         " feature dims, model expects " + std::to_string(model.cfg.input_dim));
  }
  return feats;
}

std::string fmt_g(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void emit(char** out, const std::string& s) {
  if (out != nullptr) *out = dup_string(s);
}

}  // namespace

extern "C" {

const char* diar_last_error(void) { return g_last_error.c_str(); }

void diar_free_string(char* s) { std::free(s); }

int diar_config_get(const char* config_path, const char* const* overrides, size_t n_overrides,
                    const char* key, char** value_out) {
  return wrap([&] {
    const std::string k = require(key, "key");
    const ExperimentConfig cfg = load_config(config_path, overrides, n_overrides);
    std::istringstream lines(format_config(cfg));
    std::string line;
    const std::string prefix = k + " = ";
    while (std::getline(lines, line)) {
      if (line.rfind(prefix, 0) == 0) {
        emit(value_out, line.substr(prefix.size()));
        return;
      }
    }
    throw ConfigError("unknown key '" + k + "'");
  });
}

int diar_config_dump(const char* config_path, const char* const* overrides, size_t n_overrides,
                     char** text_out) {
  return wrap([&] {
    const ExperimentConfig cfg = load_config(config_path, overrides, n_overrides);
    emit(text_out, format_config(cfg));
  });
}

int diar_simulate(const char* config_path, const char* const* overrides, size_t n_overrides,
                  const char* out_dir, char** manifest_out, char** stats_out) {
  return wrap([&] {
    const std::string dir = require(out_dir, "out_dir");
    const ExperimentConfig cfg = load_config(config_path, overrides, n_overrides);
    const std::string manifest =
        generate_dataset(cfg.sim, static_cast<int>(cfg.sim_num_files), dir);
    emit(manifest_out, manifest);
    emit(stats_out, format_dataset_stats(dataset_stats(manifest)));
  });
}

int diar_train(const char* config_path, const char* const* overrides, size_t n_overrides,
               const char* manifest_path, const char* out_dir, const char* resume_state,
               char** report_out) {
  return wrap([&] {
    const std::string manifest = require(manifest_path, "manifest path");
    const std::string dir = require(out_dir, "out_dir");
    const ExperimentConfig cfg = load_config(config_path, overrides, n_overrides);

    const std::vector<TrainChunk> chunks = load_training_chunks(manifest, cfg.model);
    Model model = Model::init(cfg.model, cfg.train.seed);
    TrainResult res;
    if (resume_state != nullptr && resume_state[0] != '\0') {
      TrainState st = load_state(resume_state, model);
      if (model.cfg.input_dim != cfg.model.input_dim ||
          model.cfg.n_speakers != cfg.model.n_speakers) {
        throw ConfigError("resume checkpoint does not match the configured model");
      }
      res = train(model, chunks, cfg.train, dir, &st);
    } else {
      res = train(model, chunks, cfg.train, dir);
    }

    std::ostringstream report;
    report << "final_checkpoint " << res.final_checkpoint << "\n";
    if (!res.phase1_checkpoint.empty()) {
      report << "phase1_checkpoint " << res.phase1_checkpoint << "\n";
    }
    report << "log " << res.log_path << "\n";
    report << "steps " << res.steps << "\n";
    report << "skipped " << res.skipped << "\n";
    report << "max_lr " << fmt_g(res.max_lr) << "\n";
    emit(report_out, report.str());
  });
}

int diar_model_open(const char* checkpoint_path, diar_model** out) {
  return wrap([&] {
    const std::string path = require(checkpoint_path, "checkpoint path");
    if (out == nullptr) throw ConfigError("output handle is required");
    auto* handle = new diar_model{load_model(path)};
    *out = handle;
  });
}

void diar_model_close(diar_model* m) { delete m; }

int diar_model_info(diar_model* m, char** info_out) {
  return wrap([&] {
    if (m == nullptr) throw ConfigError("model handle is null");
    std::ostringstream ss;
    ss << "n_layers " << m->m.cfg.n_layers << "\n";
    ss << "d_model " << m->m.cfg.d_model << "\n";
    ss << "n_heads " << m->m.cfg.n_heads << "\n";
    ss << "input_dim " << m->m.cfg.input_dim << "\n";
    ss << "n_speakers " << m->m.cfg.n_speakers << "\n";
    ss << "chunk_len " << m->m.cfg.chunk_len << "\n";
    ss << "positional_encoding " << (m->m.cfg.positional_encoding ? 1 : 0) << "\n";
    ss << "init_seed " << m->m.init_seed << "\n";
    ss << "scalars " << m->m.num_scalars() << "\n";
    emit(info_out, ss.str());
  });
}

int diar_infer(diar_model* m, const char* input_path, const char* recording, double threshold,
               size_t median_window, const char* rttm_out, char** report_out) {
  return wrap([&] {
    if (m == nullptr) throw ConfigError("model handle is null");
    const std::string input = require(input_path, "input path");
    const std::string out = require(rttm_out, "rttm output path");
    if (!(threshold > 0.0 && threshold < 1.0)) {
      throw ConfigError("threshold must be inside (0, 1)");
    }
    const std::string rec = (recording != nullptr && recording[0] != '\0') ? recording : "rec";

    const Tensor feats = load_input_features(input, m->m);
    const Tensor post = chunk_and_stitch(m->m, feats);
    const SegmentList segs = decode(post, threshold, median_window, rec);
    rttm_write(segs, out);

    std::ostringstream report;
    report << "recording " << rec << "\n";
    report << "frames " << feats.rows() << "\n";
    report << "segments " << segs.size() << "\n";
    report << "rttm " << out << "\n";
    emit(report_out, report.str());
  });
}

int diar_score(const char* ref_rttm, const char* hyp_rttm, double collar, char** report_out) {
  return wrap([&] {
    const std::string ref = require(ref_rttm, "reference rttm");
    const std::string hyp = require(hyp_rttm, "hypothesis rttm");
    if (collar < 0.0) throw ConfigError("collar must be >= 0");
    const DerReport report = score_segments(rttm_read(ref), rttm_read(hyp), collar);
    emit(report_out, format_report(report));
  });
}

int diar_inspect_attention(diar_model* m, const char* input_path, size_t layer,
                           const char* dump_prefix, char** report_out) {
  return wrap([&] {
    if (m == nullptr) throw ConfigError("model handle is null");
    const std::string input = require(input_path, "input path");
    const std::size_t n_layers = m->m.cfg.n_layers;
    const std::size_t l = layer == 0 ? n_layers : layer;
    if (l < 1 || l > n_layers) {
      throw ConfigError("layer " + std::to_string(layer) + " outside 1.." +
                        std::to_string(n_layers));
    }

    Tensor feats = load_input_features(input, m->m);
    if (feats.rows() > m->m.cfg.chunk_len) {
      feats = slice_rows(feats, 0, m->m.cfg.chunk_len);
    }
    const auto attention = attention_snapshot(m->m, feats);
    const std::vector<Tensor>& heads = attention.at(l - 1);

    std::ostringstream report;
    report << "layer " << l << "\n";
    report << "frames " << feats.rows() << "\n";
    for (std::size_t h = 0; h < heads.size(); ++h) {
      report << "head " << h << " trace " << fmt_g(trace(heads[h])) << "\n";
    }
    const auto selected = select_heads_by_trace(heads, m->m.cfg.n_speakers);
    report << "selected ";
    for (std::size_t i = 0; i < selected.size(); ++i) {
      if (i > 0) report << ',';
      report << selected[i].first;
    }
    report << "\n";

    if (dump_prefix != nullptr && dump_prefix[0] != '\0') {
      for (std::size_t h = 0; h < heads.size(); ++h) {
        std::ostringstream path;
        path << dump_prefix << "_l" << l << "_h" << h << ".bin";
        write_matrix_file(path.str(), heads[h], "matrix");
        report << "dump " << path.str() << "\n";
      }
    }
    emit(report_out, report.str());
  });
}

}  // extern "C"
