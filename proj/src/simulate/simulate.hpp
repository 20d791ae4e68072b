#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "frontend/wav.hpp"
#include "numerics/tensor.hpp"
#include "scoring/scoring.hpp"

namespace diar {

struct DialogueConfig {
  int num_speakers = 2;  // only 2 is supported
  double duration_s = 60.0;
  double target_overlap = 0.3;    // fraction of speech time, hit within +-0.05
  double utterance_mean_s = 2.0;
  double utterance_sigma_s = 1.0;
  double gap_mean_s = 1.0;
  double gap_sigma_s = 0.5;
  double noise_snr_db = 30.0;     // white noise below average speech power; >= 100 disables
  std::uint64_t seed = 0;
};

struct GroundTruth {
  Tensor activity;        // speakers x frames, binary, 100 ms frames
  SegmentList segments;   // same regions as runs of active frames
};

// Alternating utterance/gap schedules per speaker, gap lengths rescaled by
// bisection until the measured overlap lands within 0.05 of the target
// (exact turn taking for target 0, both speakers always on for target 1).
// Audio is a distinct harmonic stack plus filtered noise per speaker with
// 10 ms fades inside the labelled boundaries. Same config, same bytes.
std::pair<Waveform, GroundTruth> simulate(const DialogueConfig& cfg);

// Frames with at least two active speakers over frames with at least one.
double overlap_ratio(const Tensor& activity);

// Fast stand-in for the audio path: same scheduler, but emits feature rows
// directly (a Gaussian signature vector per speaker, summed where both talk)
// so model and trainer tests skip wav synthesis and the frontend.
std::pair<Tensor, GroundTruth> simulate_features(const DialogueConfig& cfg, std::size_t feat_dim);

Tensor segments_to_activity(const SegmentList& segments, std::size_t n_speakers,
                            std::size_t n_frames);
SegmentList activity_to_segments(const Tensor& activity, const std::string& recording);

struct ManifestEntry {
  std::string wav_path;   // relative paths resolve against the manifest directory
  std::string rttm_path;
  double duration_s = 0.0;
};

std::vector<ManifestEntry> read_manifest(const std::string& path);
void write_manifest(const std::vector<ManifestEntry>& entries, const std::string& path);
// Joins relative entry paths onto the manifest's parent directory.
std::string resolve_manifest_path(const std::string& manifest_path, const std::string& entry_path);

// Writes <out_dir>/dlg_NNNN.wav + .rttm per file plus manifest.tsv, returning
// the manifest path. File i uses seed base.seed + i.
std::string generate_dataset(const DialogueConfig& base, int num_files, const std::string& out_dir);

struct DatasetStats {
  std::size_t num_files = 0;
  double total_hours = 0.0;
  double overlap_percent = 0.0;  // overlap frames / speech frames, from the rttms
};

DatasetStats dataset_stats(const std::string& manifest_path);
std::string format_dataset_stats(const DatasetStats& stats);

}  // namespace diar
