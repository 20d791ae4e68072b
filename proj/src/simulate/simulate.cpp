#include "simulate/simulate.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>
#include <random>
#include <sstream>

#include "common/error.hpp"

namespace diar {

namespace {

constexpr double kFps = 10.0;  // label grid, 100 ms frames
constexpr double kMinUtteranceS = 0.2;
constexpr double kMinGapS = 0.05;

double trunc_normal(std::mt19937_64& rng, double mean, double sigma, double lo) {
  std::normal_distribution<double> d(mean, sigma);
  for (int i = 0; i < 100; ++i) {
    const double v = d(rng);
    if (v >= lo) return v;
  }
  return lo;
}

// All randomness is drawn once up front so the gap-scale search below is a
// deterministic function of the scale.
struct DrawBank {
  std::array<std::vector<std::pair<double, double>>, 2> pairs;  // (utterance_s, gap_s)
  std::array<double, 2> lead = {0.0, 0.0};
};

DrawBank draw_bank(const DialogueConfig& cfg, std::mt19937_64& rng) {
  DrawBank bank;
  const std::size_t count =
      static_cast<std::size_t>(std::ceil(cfg.duration_s / kMinUtteranceS)) + 8;
  for (int c = 0; c < 2; ++c) {
    if (c == 1) bank.lead[1] = trunc_normal(rng, cfg.gap_mean_s, cfg.gap_sigma_s, kMinGapS);
    bank.pairs[c].reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
      const double u = trunc_normal(rng, cfg.utterance_mean_s, cfg.utterance_sigma_s,
                                    kMinUtteranceS);
      const double g = trunc_normal(rng, cfg.gap_mean_s, cfg.gap_sigma_s, kMinGapS);
      bank.pairs[c].emplace_back(u, g);
    }
  }
  return bank;
}

void paint(Tensor& act, int c, long f0, long f1) {
  const long T = static_cast<long>(act.cols());
  for (long f = std::max(0L, f0); f < std::min(T, f1); ++f) act.at(c, f) = 1.0;
}

Tensor schedule(const DrawBank& bank, long T, double gap_scale) {
  Tensor act = Tensor::zeros(2, static_cast<std::size_t>(T));
  for (int c = 0; c < 2; ++c) {
    double pos = bank.lead[c] * gap_scale;
    for (const auto& [u, g] : bank.pairs[c]) {
      const long f0 = std::lround(pos * kFps);
      if (f0 >= T) break;
      paint(act, c, f0, f0 + std::max(1L, std::lround(u * kFps)));
      pos += u + g * gap_scale;
    }
  }
  return act;
}

Tensor schedule_disjoint(const DrawBank& bank, long T) {
  Tensor act = Tensor::zeros(2, static_cast<std::size_t>(T));
  long cur = 0;
  std::array<std::size_t, 2> idx = {0, 0};
  int c = 0;
  while (cur < T && idx[c] < bank.pairs[c].size()) {
    const auto& [u, g] = bank.pairs[c][idx[c]++];
    const long uf = std::max(1L, std::lround(u * kFps));
    paint(act, c, cur, cur + uf);
    cur += uf + std::max(1L, std::lround(g * kFps));
    c ^= 1;
  }
  return act;
}

Tensor schedule_for_target(const DialogueConfig& cfg, const DrawBank& bank, long T) {
  if (cfg.target_overlap <= 0.0) return schedule_disjoint(bank, T);
  if (cfg.target_overlap >= 1.0) {
    Tensor act(2, static_cast<std::size_t>(T));
    act.fill(1.0);
    return act;
  }
  const double tol = 0.05;
  double s_dense = 0.05, s_sparse = 20.0;
  double best_s = 1.0, best_err = 1e300;
  auto eval = [&](double s) {
    const double a = overlap_ratio(schedule(bank, T, s));
    if (std::abs(a - cfg.target_overlap) < best_err) {
      best_err = std::abs(a - cfg.target_overlap);
      best_s = s;
    }
    return a;
  };
  const double hi = eval(s_dense);
  const double lo = eval(s_sparse);
  for (int i = 0; i < 48 && best_err > 1e-4; ++i) {
    const double m = std::sqrt(s_dense * s_sparse);
    if (eval(m) > cfg.target_overlap) {
      s_dense = m;
    } else {
      s_sparse = m;
    }
  }
  if (best_err > tol) {
    char buf[160];
    std::snprintf(buf, sizeof(buf),
                  "overlap target %.3f unreachable with these statistics, achieved range is "
                  "about [%.3f, %.3f]",
                  cfg.target_overlap, lo, hi);
    throw ConfigError(buf);
  }
  return schedule(bank, T, best_s);
}

void validate(const DialogueConfig& cfg) {
  if (cfg.num_speakers != 2) throw ConfigError("only num_speakers=2 is supported");
  if (!(cfg.duration_s > 0.0)) throw ConfigError("duration_s must be > 0");
  if (!(cfg.target_overlap >= 0.0 && cfg.target_overlap <= 1.0)) {
    throw ConfigError("target_overlap must be in [0, 1]");
  }
  if (!(cfg.utterance_mean_s > 0.0) || !(cfg.gap_mean_s > 0.0)) {
    throw ConfigError("utterance and gap means must be > 0");
  }
  if (cfg.utterance_sigma_s < 0.0 || cfg.gap_sigma_s < 0.0) {
    throw ConfigError("sigmas must be >= 0");
  }
  if (std::isnan(cfg.noise_snr_db)) throw ConfigError("noise_snr_db must be a number");
}

}  // namespace

double overlap_ratio(const Tensor& activity) {
  long speech = 0, overlap = 0;
  for (std::size_t t = 0; t < activity.cols(); ++t) {
    int n = 0;
    for (std::size_t c = 0; c < activity.rows(); ++c) n += activity.at(c, t) != 0.0 ? 1 : 0;
    speech += n >= 1 ? 1 : 0;
    overlap += n >= 2 ? 1 : 0;
  }
  return speech == 0 ? 0.0 : static_cast<double>(overlap) / static_cast<double>(speech);
}

SegmentList activity_to_segments(const Tensor& activity, const std::string& recording) {
  SegmentList out;
  for (std::size_t c = 0; c < activity.rows(); ++c) {
    std::size_t t = 0;
    while (t < activity.cols()) {
      if (activity.at(c, t) == 0.0) {
        ++t;
        continue;
      }
      std::size_t end = t;
      while (end < activity.cols() && activity.at(c, end) != 0.0) ++end;
      out.push_back(Segment{recording, static_cast<double>(t) / kFps,
                            static_cast<double>(end - t) / kFps, "spk" + std::to_string(c)});
      t = end;
    }
  }
  return out;
}

Tensor segments_to_activity(const SegmentList& segments, std::size_t n_speakers,
                            std::size_t n_frames) {
  std::map<std::string, std::size_t> ids;
  for (const Segment& s : segments) ids.emplace(s.speaker, ids.size());
  if (ids.size() > n_speakers) {
    throw DataError("segments name " + std::to_string(ids.size()) + " speakers, expected at most " +
                    std::to_string(n_speakers));
  }
  std::size_t k = 0;
  for (auto& [name, id] : ids) id = k++;
  Tensor act = Tensor::zeros(n_speakers, n_frames);
  constexpr double kEps = 1e-7;
  for (const Segment& s : segments) {
    const long lo = std::max(0L, static_cast<long>(std::ceil(kFps * s.onset - 0.5 - kEps)));
    const long hi = std::min(static_cast<long>(n_frames),
                             static_cast<long>(std::ceil(kFps * (s.onset + s.duration) - 0.5 - kEps)));
    for (long f = lo; f < hi; ++f) act.at(ids.at(s.speaker), f) = 1.0;
  }
  return act;
}

std::pair<Waveform, GroundTruth> simulate(const DialogueConfig& cfg) {
  validate(cfg);
  std::mt19937_64 rng(cfg.seed);
  const long T = std::max(1L, std::lround(cfg.duration_s * kFps));
  const DrawBank bank = draw_bank(cfg, rng);

  GroundTruth gt;
  gt.activity = schedule_for_target(cfg, bank, T);
  gt.segments = activity_to_segments(gt.activity, "rec");

  const std::size_t spf = 800;  // samples per 100 ms frame at 8 kHz
  const std::size_t n = static_cast<std::size_t>(T) * spf;
  std::vector<double> mix(n, 0.0);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  std::uniform_real_distribution<double> white(-1.0, 1.0);

  for (int c = 0; c < 2; ++c) {
    const double f0 = c == 0 ? 140.0 : 210.0;
    const double lp_keep = c == 0 ? 0.9 : 0.7;
    std::vector<double> phases;
    double norm = 0.0;
    for (int k = 1; k * f0 <= 3400.0; ++k) {
      phases.push_back(phase(rng));
      norm += 1.0 / k;
    }
    const double amp = 0.22 / norm;
    double lp = 0.0;
    for (const Segment& s : gt.segments) {
      if (s.speaker != "spk" + std::to_string(c)) continue;
      const std::size_t a = static_cast<std::size_t>(std::lround(s.onset * kFps)) * spf;
      const std::size_t b = a + static_cast<std::size_t>(std::lround(s.duration * kFps)) * spf;
      for (std::size_t i = a; i < b && i < n; ++i) {
        const double t = static_cast<double>(i) / 8000.0;
        double v = 0.0;
        for (std::size_t k = 0; k < phases.size(); ++k) {
          v += std::sin(2.0 * std::numbers::pi * (k + 1) * f0 * t + phases[k]) /
               static_cast<double>(k + 1);
        }
        lp = lp_keep * lp + (1.0 - lp_keep) * white(rng);
        const double fade = std::min({1.0, static_cast<double>(i - a + 1) / 80.0,
                                      static_cast<double>(b - i) / 80.0});
        mix[i] += (amp * v + 0.06 * lp) * fade;
      }
    }
  }

  if (cfg.noise_snr_db < 100.0) {
    double speech_power = 0.0;
    std::size_t active = 0;
    for (long f = 0; f < T; ++f) {
      if (gt.activity.at(0, f) == 0.0 && gt.activity.at(1, f) == 0.0) continue;
      for (std::size_t i = f * spf; i < (f + 1) * spf; ++i) {
        speech_power += mix[i] * mix[i];
        ++active;
      }
    }
    if (active > 0) {
      const double sigma =
          std::sqrt(speech_power / active / std::pow(10.0, cfg.noise_snr_db / 10.0));
      std::normal_distribution<double> noise(0.0, sigma);
      for (double& v : mix) v += noise(rng);
    }
  }

  Waveform w;
  w.sample_rate = 8000;
  w.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) w.samples[i] = std::clamp(mix[i], -0.999, 0.999);
  return {std::move(w), std::move(gt)};
}

std::pair<Tensor, GroundTruth> simulate_features(const DialogueConfig& cfg, std::size_t feat_dim) {
  validate(cfg);
  std::mt19937_64 rng(cfg.seed);
  const long T = std::max(1L, std::lround(cfg.duration_s * kFps));
  const DrawBank bank = draw_bank(cfg, rng);

  GroundTruth gt;
  gt.activity = schedule_for_target(cfg, bank, T);
  gt.segments = activity_to_segments(gt.activity, "rec");

  std::normal_distribution<double> unit(0.0, 1.0);
  Tensor sig(2, feat_dim);
  for (std::size_t i = 0; i < sig.size(); ++i) sig[i] = 0.8 * unit(rng);
  Tensor bias(1, feat_dim);
  for (std::size_t i = 0; i < feat_dim; ++i) bias[i] = 0.1 * unit(rng);

  Tensor feats(static_cast<std::size_t>(T), feat_dim);
  for (long t = 0; t < T; ++t) {
    for (std::size_t j = 0; j < feat_dim; ++j) {
      double v = bias[j] + 0.05 * unit(rng);
      for (int c = 0; c < 2; ++c) {
        if (gt.activity.at(c, t) != 0.0) v += sig.at(c, j);
      }
      feats.at(t, j) = v;
    }
  }
  return {std::move(feats), std::move(gt)};
}

std::vector<ManifestEntry> read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest: " + path);
  std::vector<ManifestEntry> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ss(line);
    ManifestEntry e;
    std::string dur;
    if (!std::getline(ss, e.wav_path, '\t') || !std::getline(ss, e.rttm_path, '\t') ||
        !std::getline(ss, dur, '\t')) {
      throw DataError(path + " line " + std::to_string(lineno) +
                      ": expected wav<TAB>rttm<TAB>duration");
    }
    char* end = nullptr;
    e.duration_s = std::strtod(dur.c_str(), &end);
    if (end == dur.c_str() || !(e.duration_s > 0.0)) {
      throw DataError(path + " line " + std::to_string(lineno) + ": bad duration '" + dur + "'");
    }
    out.push_back(std::move(e));
  }
  return out;
}

void write_manifest(const std::vector<ManifestEntry>& entries, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open manifest for writing: " + path);
  for (const ManifestEntry& e : entries) {
    out << e.wav_path << '\t' << e.rttm_path << '\t' << format_time(e.duration_s) << '\n';
  }
  if (!out) throw DataError("failed writing manifest: " + path);
}

std::string resolve_manifest_path(const std::string& manifest_path,
                                  const std::string& entry_path) {
  std::filesystem::path p(entry_path);
  if (p.is_absolute()) return entry_path;
  return (std::filesystem::path(manifest_path).parent_path() / p).string();
}

std::string generate_dataset(const DialogueConfig& base, int num_files,
                             const std::string& out_dir) {
  if (num_files < 1) throw ConfigError("num_files must be >= 1");
  std::filesystem::create_directories(out_dir);
  std::vector<ManifestEntry> entries;
  for (int i = 0; i < num_files; ++i) {
    DialogueConfig cfg = base;
    cfg.seed = base.seed + static_cast<std::uint64_t>(i);
    auto [wav, gt] = simulate(cfg);
    char name[32];
    std::snprintf(name, sizeof(name), "dlg_%04d", i);
    for (Segment& s : gt.segments) s.recording = name;
    write_wav(out_dir + "/" + name + ".wav", wav);
    rttm_write(gt.segments, out_dir + "/" + name + ".rttm");
    entries.push_back(ManifestEntry{std::string(name) + ".wav", std::string(name) + ".rttm",
                                    static_cast<double>(gt.activity.cols()) / kFps});
  }
  const std::string manifest = out_dir + "/manifest.tsv";
  write_manifest(entries, manifest);
  return manifest;
}

DatasetStats dataset_stats(const std::string& manifest_path) {
  const auto entries = read_manifest(manifest_path);
  if (entries.empty()) throw DataError("manifest is empty: " + manifest_path);
  DatasetStats stats;
  stats.num_files = entries.size();
  long speech = 0, overlap = 0;
  for (const ManifestEntry& e : entries) {
    stats.total_hours += e.duration_s / 3600.0;
    const SegmentList segs = rttm_read(resolve_manifest_path(manifest_path, e.rttm_path));
    const auto T = static_cast<std::size_t>(std::lround(e.duration_s * kFps));
    std::map<std::string, std::vector<unsigned char>> act;
    constexpr double kEps = 1e-7;
    for (const Segment& s : segs) {
      auto& row = act.emplace(s.speaker, std::vector<unsigned char>(T, 0)).first->second;
      const long lo = std::max(0L, static_cast<long>(std::ceil(kFps * s.onset - 0.5 - kEps)));
      const long hi =
          std::min(static_cast<long>(T),
                   static_cast<long>(std::ceil(kFps * (s.onset + s.duration) - 0.5 - kEps)));
      for (long f = lo; f < hi; ++f) row[f] = 1;
    }
    for (std::size_t t = 0; t < T; ++t) {
      int n = 0;
      for (const auto& [spk, row] : act) n += row[t];
      speech += n >= 1 ? 1 : 0;
      overlap += n >= 2 ? 1 : 0;
    }
  }
  stats.overlap_percent =
      speech == 0 ? 0.0 : 100.0 * static_cast<double>(overlap) / static_cast<double>(speech);
  return stats;
}

std::string format_dataset_stats(const DatasetStats& stats) {
  char buf[128];
  std::snprintf(buf, sizeof(buf), "%-8s %-10s %s\n%-8zu %-10.4f %.2f%%\n", "files", "hours",
                "overlap", stats.num_files, stats.total_hours, stats.overlap_percent);
  return buf;
}

}  // namespace diar
