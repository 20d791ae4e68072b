#include "scoring/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "common/error.hpp"

namespace diar {

namespace {

constexpr double kTicksPerSecond = 100.0;  // 10 ms scoring grid
constexpr double kEps = 1e-7;

// Ticks whose centre (t + 0.5)/100 falls in [a, b).
void tick_range(double a, double b, long& lo, long& hi) {
  lo = static_cast<long>(std::ceil(kTicksPerSecond * a - 0.5 - kEps));
  hi = static_cast<long>(std::ceil(kTicksPerSecond * b - 0.5 - kEps));
  if (lo < 0) lo = 0;
  if (hi < lo) hi = lo;
}

struct Counts {
  long miss = 0;
  long fa = 0;
  long conf = 0;
  long speech = 0;
};

// A per-recording row with no scored reference speech reports zeros (its
// error ticks still enter the aggregate fold); only the aggregate rejects an
// empty denominator against nonzero hypothesis speech.
DerBreakdown to_breakdown(const Counts& c, bool strict) {
  DerBreakdown b;
  b.t_speech = static_cast<double>(c.speech) / kTicksPerSecond;
  if (c.speech == 0) {
    if (strict && c.fa > 0) {
      throw DataError("scored reference speech is empty but hypothesis is not");
    }
    return b;
  }
  const double st = static_cast<double>(c.speech);
  b.miss = static_cast<double>(c.miss) / st;
  b.fa = static_cast<double>(c.fa) / st;
  b.conf = static_cast<double>(c.conf) / st;
  b.der = b.miss + b.fa + b.conf;
  return b;
}

// Overlap-maximizing one-to-one matching by brute force. Returns match[j] =
// reference index paired with hypothesis j, or -1.
std::vector<int> best_matching(const std::vector<std::vector<long>>& overlap, std::size_t n_hyp) {
  const std::size_t n_ref = overlap.size();
  const std::size_t n = std::max(n_ref, n_hyp);
  if (n == 0) return {};
  if (n > 8) throw DataError("too many speakers for exhaustive matching (limit 8)");
  std::vector<int> slot(n);
  std::iota(slot.begin(), slot.end(), 0);
  std::vector<int> best(n_hyp, -1);
  long best_sum = -1;
  do {
    long sum = 0;
    for (std::size_t j = 0; j < n_hyp; ++j) {
      if (slot[j] < static_cast<int>(n_ref)) sum += overlap[slot[j]][j];
    }
    if (sum > best_sum) {
      best_sum = sum;
      for (std::size_t j = 0; j < n_hyp; ++j) {
        best[j] = slot[j] < static_cast<int>(n_ref) ? slot[j] : -1;
      }
    }
  } while (std::next_permutation(slot.begin(), slot.end()));
  return best;
}

Counts score_one(const std::vector<const Segment*>& ref, const std::vector<const Segment*>& hyp,
                 double collar) {
  double end_s = 0.0;
  for (const Segment* s : ref) end_s = std::max(end_s, s->onset + s->duration);
  for (const Segment* s : hyp) end_s = std::max(end_s, s->onset + s->duration);
  long lo = 0, len = 0;
  tick_range(0.0, end_s, lo, len);

  auto index_speakers = [](const std::vector<const Segment*>& segs) {
    std::map<std::string, std::size_t> ids;
    for (const Segment* s : segs) ids.emplace(s->speaker, ids.size());
    std::size_t k = 0;
    for (auto& [name, id] : ids) id = k++;
    return ids;
  };
  auto paint = [&](const std::vector<const Segment*>& segs,
                   const std::map<std::string, std::size_t>& ids) {
    std::vector<std::vector<unsigned char>> act(ids.size(),
                                                std::vector<unsigned char>(len, 0));
    for (const Segment* s : segs) {
      long a = 0, b = 0;
      tick_range(s->onset, s->onset + s->duration, a, b);
      b = std::min(b, len);
      for (long t = a; t < b; ++t) act[ids.at(s->speaker)][t] = 1;
    }
    return act;
  };

  const auto ref_ids = index_speakers(ref);
  const auto hyp_ids = index_speakers(hyp);
  const auto ract = paint(ref, ref_ids);
  const auto hact = paint(hyp, hyp_ids);

  std::vector<unsigned char> scored(len, 1);
  for (const Segment* s : ref) {
    for (double b : {s->onset, s->onset + s->duration}) {
      long a = 0, z = 0;
      tick_range(b - collar, b + collar, a, z);
      z = std::min(z, len);
      for (long t = a; t < z; ++t) scored[t] = 0;
    }
  }

  std::vector<std::vector<long>> overlap(ract.size(), std::vector<long>(hact.size(), 0));
  for (long t = 0; t < len; ++t) {
    if (!scored[t]) continue;
    for (std::size_t i = 0; i < ract.size(); ++i) {
      if (!ract[i][t]) continue;
      for (std::size_t j = 0; j < hact.size(); ++j) {
        if (hact[j][t]) ++overlap[i][j];
      }
    }
  }
  const std::vector<int> match = best_matching(overlap, hact.size());

  Counts c;
  for (long t = 0; t < len; ++t) {
    if (!scored[t]) continue;
    long nr = 0, nh = 0, nc = 0;
    for (const auto& row : ract) nr += row[t];
    for (const auto& row : hact) nh += row[t];
    for (std::size_t j = 0; j < hact.size(); ++j) {
      if (match[j] >= 0 && hact[j][t] && ract[match[j]][t]) ++nc;
    }
    c.speech += nr;
    c.miss += std::max(0L, nr - nh);
    c.fa += std::max(0L, nh - nr);
    c.conf += std::min(nr, nh) - nc;
  }
  return c;
}

std::vector<unsigned char> median_filter(const std::vector<unsigned char>& x, std::size_t w) {
  const long half = static_cast<long>(w / 2);
  const long n = static_cast<long>(x.size());
  std::vector<unsigned char> out(x.size());
  for (long i = 0; i < n; ++i) {
    long cnt = 0;
    for (long k = i - half; k <= i + half; ++k) {
      if (k >= 0 && k < n) cnt += x[k];
    }
    out[i] = 2 * cnt > static_cast<long>(w) ? 1 : 0;
  }
  return out;
}

}  // namespace

SegmentList decode(const Tensor& posteriors, double threshold, std::size_t median_window,
                   const std::string& recording) {
  if (posteriors.rank() != 2 || posteriors.cols() < 1) {
    throw DimensionError("decode expects a speakers x frames matrix");
  }
  if (median_window != 0 && median_window % 2 == 0) {
    throw ConfigError("median window must be odd, got " + std::to_string(median_window));
  }
  SegmentList out;
  const std::size_t T = posteriors.cols();
  for (std::size_t c = 0; c < posteriors.rows(); ++c) {
    std::vector<unsigned char> act(T);
    for (std::size_t t = 0; t < T; ++t) act[t] = posteriors.at(c, t) >= threshold ? 1 : 0;
    if (median_window > 1) act = median_filter(act, median_window);
    std::size_t t = 0;
    while (t < T) {
      if (!act[t]) {
        ++t;
        continue;
      }
      std::size_t end = t;
      while (end < T && act[end]) ++end;
      Segment s;
      s.recording = recording;
      s.onset = static_cast<double>(t) / 10.0;
      s.duration = static_cast<double>(end - t) / 10.0;
      s.speaker = "spk" + std::to_string(c);
      out.push_back(std::move(s));
      t = end;
    }
  }
  return out;
}

DerReport score_segments(const SegmentList& ref, const SegmentList& hyp, double collar) {
  if (collar < 0.0) throw ConfigError("collar must be >= 0");
  std::map<std::string, std::pair<std::vector<const Segment*>, std::vector<const Segment*>>> recs;
  for (const Segment& s : ref) {
    if (s.duration <= 0.0) throw DataError("reference segment with duration <= 0");
    recs[s.recording].first.push_back(&s);
  }
  for (const Segment& s : hyp) {
    if (s.duration <= 0.0) throw DataError("hypothesis segment with duration <= 0");
    auto it = recs.find(s.recording);
    if (it == recs.end()) {
      throw DataError("hypothesis recording '" + s.recording + "' not present in reference");
    }
    it->second.second.push_back(&s);
  }

  DerReport report;
  Counts total;
  for (const auto& [rec, lists] : recs) {
    const Counts c = score_one(lists.first, lists.second, collar);
    total.miss += c.miss;
    total.fa += c.fa;
    total.conf += c.conf;
    total.speech += c.speech;
    report.per_recording.emplace_back(rec, to_breakdown(c, false));
  }
  report.total = to_breakdown(total, true);
  return report;
}

DerBreakdown der(const SegmentList& ref, const SegmentList& hyp, double collar) {
  return score_segments(ref, hyp, collar).total;
}

namespace {

std::string table_row(const std::string& name, const DerBreakdown& b) {
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%-24s %7.2f%% %7.2f%% %7.2f%% %7.2f%% %10.2f\n", name.c_str(),
                100.0 * b.der, 100.0 * b.miss, 100.0 * b.fa, 100.0 * b.conf, b.t_speech);
  return buf;
}

std::string machine_row(const std::string& name, const DerBreakdown& b) {
  char buf[200];
  std::snprintf(buf, sizeof(buf), "DER\t%s\t%.6f\t%.6f\t%.6f\t%.6f\t%.3f\n", name.c_str(), b.der,
                b.miss, b.fa, b.conf, b.t_speech);
  return buf;
}

}  // namespace

std::string format_report(const DerReport& report) {
  std::string out;
  char head[160];
  std::snprintf(head, sizeof(head), "%-24s %8s %8s %8s %8s %10s\n", "recording", "DER", "miss",
                "fa", "conf", "speech_s");
  out += head;
  for (const auto& [rec, b] : report.per_recording) out += table_row(rec, b);
  out += table_row("*ALL*", report.total);
  return out;
}

std::string format_report_lines(const DerReport& report) {
  std::string out = "#DER\trecording\tder\tmiss\tfa\tconf\tt_speech\n";
  for (const auto& [rec, b] : report.per_recording) out += machine_row(rec, b);
  out += machine_row("*ALL*", report.total);
  return out;
}

std::string format_time(double seconds) {
  for (const char* fmt : {"%.3f", "%.9f", "%.17g"}) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), fmt, seconds);
    if (std::strtod(buf, nullptr) == seconds) return buf;
  }
  return {};  // unreachable, %.17g always round trips
}

SegmentList rttm_read(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open rttm file: " + path);
  SegmentList out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ss(line);
    std::vector<std::string> fields;
    std::string tok;
    while (ss >> tok) fields.push_back(tok);
    if (fields.empty()) continue;
    const std::string where = path + " line " + std::to_string(lineno);
    if (fields.size() != 10) {
      throw DataError(where + ": expected 10 fields, got " + std::to_string(fields.size()));
    }
    if (fields[0] != "SPEAKER") throw DataError(where + ": expected SPEAKER record");
    auto parse_time = [&](const std::string& s, const char* what) {
      char* end = nullptr;
      const double v = std::strtod(s.c_str(), &end);
      if (end == s.c_str() || *end != '\0' || !std::isfinite(v)) {
        throw DataError(where + ": bad " + what + " '" + s + "'");
      }
      return v;
    };
    Segment seg;
    seg.recording = fields[1];
    seg.onset = parse_time(fields[3], "onset");
    seg.duration = parse_time(fields[4], "duration");
    if (seg.duration <= 0.0) throw DataError(where + ": duration must be > 0");
    seg.speaker = fields[7];
    out.push_back(std::move(seg));
  }
  return out;
}

void rttm_write(const SegmentList& segments, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open rttm file for writing: " + path);
  for (const Segment& s : segments) {
    out << "SPEAKER " << s.recording << " 1 " << format_time(s.onset) << ' '
        << format_time(s.duration) << " <NA> <NA> " << s.speaker << " <NA> <NA>\n";
  }
  if (!out) throw DataError("failed writing rttm file: " + path);
}

}  // namespace diar
