#pragma once

#include <string>

#include "frontend/wav.hpp"
#include "numerics/tensor.hpp"

namespace diar {

// Feature pipeline constants. 8 kHz audio, 25 ms windows with a 10 ms hop,
// 23 mel filters spanning 0..4000 Hz, +-7 frame splicing (15 x 23 = 345),
// then 10x subsampling to a 100 ms frame shift.
namespace feat {
inline constexpr int kSampleRate = 8000;
inline constexpr std::size_t kWindow = 200;
inline constexpr std::size_t kHop = 80;
inline constexpr std::size_t kFft = 256;
inline constexpr std::size_t kMels = 23;
inline constexpr std::size_t kContext = 7;
inline constexpr std::size_t kSubsample = 10;
inline constexpr std::size_t kDim = kMels * (2 * kContext + 1);
inline constexpr double kLogFloor = 1e-10;
inline constexpr int kFrameShiftMs = 100;
}  // namespace feat

struct FeatureSequence {
  Tensor frames;  // T x 345
  int frame_shift_ms = feat::kFrameShiftMs;

  std::size_t length() const { return frames.rows(); }
};

// Raw frame count for n samples: floor((n - 200) / 80) + 1.
std::size_t logmel_frame_count(std::size_t num_samples);
// Final frame count after the whole pipeline (ceil of raw / 10).
std::size_t feature_frame_count(std::size_t num_samples);

// Hann-windowed magnitude spectrum through the mel filterbank, floored at
// 1e-10 before the natural log. Output is T_raw x 23.
Tensor logmel(const Waveform& w);

// Each frame concatenated with its +-7 neighbours (replication padding at
// the edges). 23 -> 345 columns.
Tensor splice(const Tensor& frames);

// Keep rows 0, factor, 2*factor, ...
Tensor subsample(const Tensor& spliced, std::size_t factor = feat::kSubsample);

FeatureSequence extract_features(const Waveform& w);

void write_features(const std::string& path, const FeatureSequence& fs);
FeatureSequence read_features(const std::string& path);

}  // namespace diar
