#include "common/config.hpp"

#include <cctype>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "common/error.hpp"

namespace diar {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

double parse_double(const std::string& where, const std::string& v) {
  char* end = nullptr;
  const double x = std::strtod(v.c_str(), &end);
  if (end != v.c_str() + v.size() || v.empty()) {
    throw ConfigError(where + ": '" + v + "' is not a number");
  }
  return x;
}

std::uint64_t parse_count(const std::string& where, const std::string& v) {
  if (v.empty() || v[0] == '-') throw ConfigError(where + ": '" + v + "' is not a count");
  char* end = nullptr;
  const unsigned long long x = std::strtoull(v.c_str(), &end, 10);
  if (end != v.c_str() + v.size()) throw ConfigError(where + ": '" + v + "' is not a count");
  return static_cast<std::uint64_t>(x);
}

bool parse_bool(const std::string& where, const std::string& v) {
  if (v == "1" || v == "true") return true;
  if (v == "0" || v == "false") return false;
  throw ConfigError(where + ": '" + v + "' is not a boolean (use 0/1/true/false)");
}

void apply_key(ExperimentConfig& c, const std::string& where, const std::string& key,
               const std::string& val) {
  if (key == "seed") {
    c.seed = parse_count(where, val);
    c.sim.seed = c.seed;
    c.train.seed = c.seed;
  } else if (key == "sim.num_speakers") {
    c.sim.num_speakers = static_cast<int>(parse_count(where, val));
  } else if (key == "sim.duration_s") {
    c.sim.duration_s = parse_double(where, val);
  } else if (key == "sim.target_overlap") {
    c.sim.target_overlap = parse_double(where, val);
  } else if (key == "sim.utterance_mean_s") {
    c.sim.utterance_mean_s = parse_double(where, val);
  } else if (key == "sim.utterance_sigma_s") {
    c.sim.utterance_sigma_s = parse_double(where, val);
  } else if (key == "sim.gap_mean_s") {
    c.sim.gap_mean_s = parse_double(where, val);
  } else if (key == "sim.gap_sigma_s") {
    c.sim.gap_sigma_s = parse_double(where, val);
  } else if (key == "sim.noise_snr_db") {
    c.sim.noise_snr_db = parse_double(where, val);
  } else if (key == "sim.num_files") {
    c.sim_num_files = parse_count(where, val);
  } else if (key == "model.n_layers") {
    c.model.n_layers = parse_count(where, val);
  } else if (key == "model.d_model") {
    c.model.d_model = parse_count(where, val);
  } else if (key == "model.n_heads") {
    c.model.n_heads = parse_count(where, val);
  } else if (key == "model.input_dim") {
    c.model.input_dim = parse_count(where, val);
  } else if (key == "model.n_speakers") {
    c.model.n_speakers = parse_count(where, val);
  } else if (key == "model.chunk_len") {
    c.model.chunk_len = parse_count(where, val);
  } else if (key == "model.positional_encoding") {
    c.model.positional_encoding = parse_bool(where, val);
  } else if (key == "train.batch_size") {
    c.train.batch_size = parse_count(where, val);
  } else if (key == "train.epochs_phase1") {
    c.train.epochs_phase1 = parse_count(where, val);
  } else if (key == "train.epochs_phase2") {
    c.train.epochs_phase2 = parse_count(where, val);
  } else if (key == "train.steps_phase1") {
    c.train.steps_phase1 = parse_count(where, val);
  } else if (key == "train.steps_phase2") {
    c.train.steps_phase2 = parse_count(where, val);
  } else if (key == "train.warmup_steps") {
    c.train.warmup_steps = parse_count(where, val);
  } else if (key == "train.alpha") {
    c.train.alpha = parse_double(where, val);
  } else if (key == "train.beta") {
    c.train.beta = parse_double(where, val);
  } else if (key == "train.fixed_lr") {
    c.train.fixed_lr = parse_double(where, val);
  } else if (key == "train.save_every") {
    c.train.save_every = parse_count(where, val);
  } else if (key == "train.vad_layer") {
    c.train.vad_layer = parse_count(where, val);
  } else if (key == "score.collar") {
    c.score_collar = parse_double(where, val);
  } else if (key == "score.threshold") {
    c.score_threshold = parse_double(where, val);
  } else if (key == "score.median") {
    c.score_median = parse_count(where, val);
  } else {
    throw ConfigError(where + ": unknown key '" + key + "'");
  }
}

std::string fmt_g(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

void ExperimentConfig::validate() const {
  model.validate();
  train.validate();
  if (score_collar < 0.0) throw ConfigError("score.collar must be >= 0");
  if (score_threshold <= 0.0 || score_threshold >= 1.0) {
    throw ConfigError("score.threshold must be inside (0, 1)");
  }
  if (score_median != 0 && score_median % 2 == 0) {
    throw ConfigError("score.median must be odd or 0");
  }
  if (sim_num_files == 0) throw ConfigError("sim.num_files must be >= 1");
}

ExperimentConfig parse_config_text(const std::string& text, const std::string& source) {
  ExperimentConfig cfg;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = source + " line " + std::to_string(lineno);
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(where + ": expected key=value, got '" + line + "'");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError(where + ": empty key");
    apply_key(cfg, where, key, val);
  }
  return cfg;
}

ExperimentConfig parse_config_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str(), path);
}

void apply_override(ExperimentConfig& cfg, const std::string& assignment) {
  const std::size_t eq = assignment.find('=');
  if (eq == std::string::npos) {
    throw ConfigError("override '" + assignment + "' must look like key=value");
  }
  const std::string key = trim(assignment.substr(0, eq));
  const std::string val = trim(assignment.substr(eq + 1));
  if (key.empty()) throw ConfigError("override '" + assignment + "' has an empty key");
  apply_key(cfg, "override '" + assignment + "'", key, val);
}

std::string format_config(const ExperimentConfig& c) {
  std::ostringstream out;
  out << "seed = " << c.seed << "\n";
  out << "sim.num_speakers = " << c.sim.num_speakers << "\n";
  out << "sim.duration_s = " << fmt_g(c.sim.duration_s) << "\n";
  out << "sim.target_overlap = " << fmt_g(c.sim.target_overlap) << "\n";
  out << "sim.utterance_mean_s = " << fmt_g(c.sim.utterance_mean_s) << "\n";
  out << "sim.utterance_sigma_s = " << fmt_g(c.sim.utterance_sigma_s) << "\n";
  out << "sim.gap_mean_s = " << fmt_g(c.sim.gap_mean_s) << "\n";
  out << "sim.gap_sigma_s = " << fmt_g(c.sim.gap_sigma_s) << "\n";
  out << "sim.noise_snr_db = " << fmt_g(c.sim.noise_snr_db) << "\n";
  out << "sim.num_files = " << c.sim_num_files << "\n";
  out << "model.n_layers = " << c.model.n_layers << "\n";
  out << "model.d_model = " << c.model.d_model << "\n";
  out << "model.n_heads = " << c.model.n_heads << "\n";
  out << "model.input_dim = " << c.model.input_dim << "\n";
  out << "model.n_speakers = " << c.model.n_speakers << "\n";
  out << "model.chunk_len = " << c.model.chunk_len << "\n";
  out << "model.positional_encoding = " << (c.model.positional_encoding ? 1 : 0) << "\n";
  out << "train.batch_size = " << c.train.batch_size << "\n";
  out << "train.epochs_phase1 = " << c.train.epochs_phase1 << "\n";
  out << "train.epochs_phase2 = " << c.train.epochs_phase2 << "\n";
  out << "train.steps_phase1 = " << c.train.steps_phase1 << "\n";
  out << "train.steps_phase2 = " << c.train.steps_phase2 << "\n";
  out << "train.warmup_steps = " << c.train.warmup_steps << "\n";
  out << "train.alpha = " << fmt_g(c.train.alpha) << "\n";
  out << "train.beta = " << fmt_g(c.train.beta) << "\n";
  out << "train.fixed_lr = " << fmt_g(c.train.fixed_lr) << "\n";
  out << "train.save_every = " << c.train.save_every << "\n";
  out << "train.vad_layer = " << c.train.vad_layer << "\n";
  out << "score.collar = " << fmt_g(c.score_collar) << "\n";
  out << "score.threshold = " << fmt_g(c.score_threshold) << "\n";
  out << "score.median = " << c.score_median << "\n";
  return out.str();
}

}  // namespace diar
