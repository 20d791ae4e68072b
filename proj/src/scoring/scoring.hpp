#pragma once

#include <string>
#include <utility>
#include <vector>

#include "numerics/tensor.hpp"

namespace diar {

struct Segment {
  std::string recording;
  double onset = 0.0;     // seconds
  double duration = 0.0;  // seconds, > 0
  std::string speaker;
};

using SegmentList = std::vector<Segment>;

// All fractions share the scored-reference-speech denominator, so
// der == miss + fa + conf holds exactly by construction.
struct DerBreakdown {
  double der = 0.0;
  double miss = 0.0;
  double fa = 0.0;
  double conf = 0.0;
  double t_speech = 0.0;  // scored reference speech in seconds
};

struct DerReport {
  std::vector<std::pair<std::string, DerBreakdown>> per_recording;
  DerBreakdown total;
};

// Binarize posteriors (rows are speakers, columns are 100 ms frames) at
// threshold, optionally smooth each speaker with an odd-width binary median
// filter (zeros outside the sequence), then merge consecutive active frames
// into segments. Speakers are labelled spk0, spk1, ...
SegmentList decode(const Tensor& posteriors, double threshold = 0.5,
                   std::size_t median_window = 0, const std::string& recording = "rec");

// Time-weighted diarization error with a ±collar exclusion around every
// reference segment boundary, computed on an internal 10 ms grid. Hypothesis
// speakers are matched to reference speakers by the overlap-maximizing
// one-to-one mapping per recording (exhaustive, so at most 8 speakers per
// side). Hypothesis recordings must be a subset of reference recordings;
// reference recordings with no hypothesis speech score as misses.
DerBreakdown der(const SegmentList& ref, const SegmentList& hyp, double collar = 0.25);

// Same computation, keeping the per-recording rows plus the aggregate fold.
DerReport score_segments(const SegmentList& ref, const SegmentList& hyp, double collar = 0.25);

// Aligned table with one row per recording and a final *ALL* row.
std::string format_report(const DerReport& report);
// Tab-separated lines: DER <recording> <der> <miss> <fa> <conf> <t_speech>.
std::string format_report_lines(const DerReport& report);

// RTTM speaker lines, 10 whitespace-separated fields:
//   SPEAKER <recording> 1 <onset> <duration> <NA> <NA> <speaker> <NA> <NA>
// The reader rejects anything else, naming the offending line.
SegmentList rttm_read(const std::string& path);
void rttm_write(const SegmentList& segments, const std::string& path);

// Prints with the fewest of 3, 9, or 17 decimals that parses back to the
// exact same double, so write-then-read round trips are identities.
std::string format_time(double seconds);

}  // namespace diar
