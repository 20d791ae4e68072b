#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace diar {

struct Waveform {
  std::vector<double> samples;  // in [-1, 1]
  int sample_rate = 8000;

  double duration_s() const {
    return static_cast<double>(samples.size()) / sample_rate;
  }
};

// 16-bit PCM mono only. Anything else is a DataError.
Waveform read_wav(const std::string& path);
void write_wav(const std::string& path, const Waveform& w);

}  // namespace diar
