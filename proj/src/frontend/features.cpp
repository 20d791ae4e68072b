#include "frontend/features.hpp"

#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include "common/container.hpp"
#include "common/error.hpp"

namespace diar {

namespace {

using std::numbers::pi;

// Iterative radix-2 FFT, in place. n must be a power of two.
void fft(std::vector<std::complex<double>>& a) {
  const std::size_t n = a.size();
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = -2.0 * pi / static_cast<double>(len);
    const std::complex<double> wl(std::cos(ang), std::sin(ang));
    for (std::size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (std::size_t j = 0; j < len / 2; ++j) {
        const std::complex<double> u = a[i + j];
        const std::complex<double> v = a[i + j + len / 2] * w;
        a[i + j] = u + v;
        a[i + j + len / 2] = u - v;
        w *= wl;
      }
    }
  }
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

// 23 triangular filters with mel-spaced edges from 0 Hz to Nyquist,
// linear in Hz between edges, evaluated at the FFT bin centres.
std::vector<std::vector<double>> mel_filterbank() {
  const std::size_t bins = feat::kFft / 2 + 1;
  const double nyquist = feat::kSampleRate / 2.0;
  std::vector<double> edges(feat::kMels + 2);
  const double mel_hi = hz_to_mel(nyquist);
  for (std::size_t i = 0; i < edges.size(); ++i) {
    edges[i] = mel_to_hz(mel_hi * static_cast<double>(i) / (feat::kMels + 1));
  }
  std::vector<std::vector<double>> fb(feat::kMels, std::vector<double>(bins, 0.0));
  for (std::size_t m = 0; m < feat::kMels; ++m) {
    const double lo = edges[m], mid = edges[m + 1], hi = edges[m + 2];
    for (std::size_t k = 0; k < bins; ++k) {
      const double f = static_cast<double>(k) * feat::kSampleRate / feat::kFft;
      if (f > lo && f < mid) {
        fb[m][k] = (f - lo) / (mid - lo);
      } else if (f >= mid && f < hi) {
        fb[m][k] = (hi - f) / (hi - mid);
      }
    }
  }
  return fb;
}

}  // namespace

std::size_t logmel_frame_count(std::size_t num_samples) {
  if (num_samples < feat::kWindow) return 0;
  return (num_samples - feat::kWindow) / feat::kHop + 1;
}

std::size_t feature_frame_count(std::size_t num_samples) {
  const std::size_t raw = logmel_frame_count(num_samples);
  return (raw + feat::kSubsample - 1) / feat::kSubsample;
}

Tensor logmel(const Waveform& w) {
  if (w.sample_rate != feat::kSampleRate) {
    throw DataError("expected " + std::to_string(feat::kSampleRate) + " Hz audio, got " +
                    std::to_string(w.sample_rate));
  }
  const std::size_t t_raw = logmel_frame_count(w.samples.size());
  if (t_raw == 0) {
    throw DataError("waveform shorter than one analysis window (" +
                    std::to_string(feat::kWindow) + " samples)");
  }

  static const std::vector<std::vector<double>> fb = mel_filterbank();
  std::vector<double> window(feat::kWindow);
  for (std::size_t n = 0; n < feat::kWindow; ++n) {
    window[n] = 0.5 - 0.5 * std::cos(2.0 * pi * static_cast<double>(n) / feat::kWindow);
  }

  const std::size_t bins = feat::kFft / 2 + 1;
  Tensor out(t_raw, feat::kMels);
  std::vector<std::complex<double>> buf(feat::kFft);
  for (std::size_t t = 0; t < t_raw; ++t) {
    const double* frame = w.samples.data() + t * feat::kHop;
    for (std::size_t n = 0; n < feat::kWindow; ++n) buf[n] = frame[n] * window[n];
    for (std::size_t n = feat::kWindow; n < feat::kFft; ++n) buf[n] = 0.0;
    fft(buf);
    double mag[feat::kFft / 2 + 1];
    for (std::size_t k = 0; k < bins; ++k) mag[k] = std::abs(buf[k]);
    for (std::size_t m = 0; m < feat::kMels; ++m) {
      double e = 0.0;
      for (std::size_t k = 0; k < bins; ++k) e += fb[m][k] * mag[k];
      out.at(t, m) = std::log(std::max(e, feat::kLogFloor));
    }
  }
  return out;
}

Tensor splice(const Tensor& frames) {
  const std::size_t t_raw = frames.rows();
  const std::size_t d = frames.cols();
  if (t_raw == 0) throw DataError("splice: empty input");
  const std::size_t ctx = feat::kContext;
  Tensor out(t_raw, d * (2 * ctx + 1));
  for (std::size_t t = 0; t < t_raw; ++t) {
    for (long off = -static_cast<long>(ctx); off <= static_cast<long>(ctx); ++off) {
      long src = static_cast<long>(t) + off;
      src = std::max(0L, std::min(static_cast<long>(t_raw) - 1, src));
      const std::size_t dst = static_cast<std::size_t>(off + static_cast<long>(ctx)) * d;
      for (std::size_t j = 0; j < d; ++j) {
        out.at(t, dst + j) = frames.at(static_cast<std::size_t>(src), j);
      }
    }
  }
  return out;
}

Tensor subsample(const Tensor& spliced, std::size_t factor) {
  if (factor < 1) throw DataError("subsample: factor must be >= 1");
  const std::size_t t_raw = spliced.rows();
  const std::size_t t = (t_raw + factor - 1) / factor;
  Tensor out(t, spliced.cols());
  for (std::size_t i = 0; i < t; ++i) {
    for (std::size_t j = 0; j < spliced.cols(); ++j) out.at(i, j) = spliced.at(i * factor, j);
  }
  return out;
}

FeatureSequence extract_features(const Waveform& w) {
  FeatureSequence fs;
  fs.frames = subsample(splice(logmel(w)));
  fs.frame_shift_ms = feat::kFrameShiftMs;
  return fs;
}

void write_features(const std::string& path, const FeatureSequence& fs) {
  write_matrix_file(path, fs.frames, "features", fs.frame_shift_ms);
}

FeatureSequence read_features(const std::string& path) {
  MatrixFile mf = read_matrix_file(path);
  if (mf.kind != "features") throw DataError("not a features container: " + path);
  FeatureSequence fs;
  fs.frames = std::move(mf.m);
  fs.frame_shift_ms = mf.frame_shift_ms;
  return fs;
}

}  // namespace diar
