#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "common/error.hpp"
#include "simulate/simulate.hpp"

using namespace diar;

namespace {

DialogueConfig base_cfg() {
  DialogueConfig cfg;
  cfg.duration_s = 60.0;
  cfg.target_overlap = 0.3;
  cfg.seed = 7;
  return cfg;
}

double frame_energy(const Waveform& w, std::size_t frame) {
  double e = 0.0;
  for (std::size_t i = frame * 800; i < (frame + 1) * 800; ++i) e += w.samples[i] * w.samples[i];
  return e / 800.0;
}

}  // namespace

TEST_CASE("overlap ratio counts speech frames with two speakers") {
  Tensor act = Tensor::of({{1, 1, 0}, {0, 1, 1}});
  CHECK(overlap_ratio(act) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));

  Tensor solo = Tensor::of({{1, 1, 1}, {0, 0, 0}});
  CHECK(overlap_ratio(solo) == 0.0);

  Tensor silent = Tensor::zeros(2, 5);
  CHECK(overlap_ratio(silent) == 0.0);
}

TEST_CASE("zero target gives exactly disjoint speech") {
  DialogueConfig cfg = base_cfg();
  cfg.target_overlap = 0.0;
  auto [wav, gt] = simulate(cfg);
  CHECK(overlap_ratio(gt.activity) == 0.0);
  double speech = 0.0;
  for (std::size_t t = 0; t < gt.activity.cols(); ++t) {
    speech += gt.activity.at(0, t) + gt.activity.at(1, t);
  }
  CHECK(speech > 0.0);
}

TEST_CASE("target one forces both speakers always on") {
  DialogueConfig cfg = base_cfg();
  cfg.target_overlap = 1.0;
  auto [wav, gt] = simulate(cfg);
  CHECK(overlap_ratio(gt.activity) == 1.0);
  for (std::size_t t = 0; t < gt.activity.cols(); ++t) {
    CHECK(gt.activity.at(0, t) == 1.0);
    CHECK(gt.activity.at(1, t) == 1.0);
  }
}

TEST_CASE("achieved overlap lands within five points of the target") {
  DialogueConfig cfg = base_cfg();
  cfg.target_overlap = 0.48;
  auto [wav, gt] = simulate(cfg);
  const double a = overlap_ratio(gt.activity);
  CHECK(a >= 0.43);
  CHECK(a <= 0.53);
}

TEST_CASE("several targets and seeds all land in tolerance") {
  for (const double target : {0.15, 0.3, 0.45, 0.6}) {
    for (const std::uint64_t seed : {1ULL, 2ULL, 3ULL}) {
      DialogueConfig cfg = base_cfg();
      cfg.target_overlap = target;
      cfg.seed = seed;
      auto [wav, gt] = simulate(cfg);
      CHECK(std::abs(overlap_ratio(gt.activity) - target) <= 0.05);
    }
  }
}

TEST_CASE("unreachable target reports the achieved range") {
  DialogueConfig cfg = base_cfg();
  cfg.utterance_mean_s = 0.5;
  cfg.utterance_sigma_s = 0.1;
  cfg.gap_mean_s = 5.0;
  cfg.gap_sigma_s = 0.5;
  cfg.target_overlap = 0.98;
  try {
    simulate(cfg);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("achieved range") != std::string::npos);
  }
}

TEST_CASE("bad configs are rejected") {
  DialogueConfig cfg = base_cfg();
  cfg.num_speakers = 3;
  CHECK_THROWS_AS(simulate(cfg), ConfigError);
  cfg = base_cfg();
  cfg.duration_s = 0.0;
  CHECK_THROWS_AS(simulate(cfg), ConfigError);
  cfg = base_cfg();
  cfg.target_overlap = 1.5;
  CHECK_THROWS_AS(simulate(cfg), ConfigError);
}

TEST_CASE("same seed gives byte identical output") {
  DialogueConfig cfg = base_cfg();
  cfg.duration_s = 10.0;
  auto [w1, g1] = simulate(cfg);
  auto [w2, g2] = simulate(cfg);
  REQUIRE(w1.samples.size() == w2.samples.size());
  CHECK(std::equal(w1.samples.begin(), w1.samples.end(), w2.samples.begin()));
  REQUIRE(g1.activity.size() == g2.activity.size());
  for (std::size_t i = 0; i < g1.activity.size(); ++i) CHECK(g1.activity[i] == g2.activity[i]);

  cfg.seed += 1;
  auto [w3, g3] = simulate(cfg);
  CHECK(!std::equal(w1.samples.begin(), w1.samples.end(), w3.samples.begin()));
}

TEST_CASE("labels and segments describe the same regions") {
  DialogueConfig cfg = base_cfg();
  cfg.duration_s = 20.0;
  auto [wav, gt] = simulate(cfg);
  Tensor back = segments_to_activity(gt.segments, 2, gt.activity.cols());
  REQUIRE(back.same_shape(gt.activity));
  for (std::size_t i = 0; i < back.size(); ++i) CHECK(back[i] == gt.activity[i]);
}

TEST_CASE("silence carries only the noise floor") {
  DialogueConfig cfg = base_cfg();
  cfg.duration_s = 30.0;
  cfg.noise_snr_db = 20.0;
  auto [wav, gt] = simulate(cfg);
  std::vector<double> silent, active;
  for (std::size_t t = 0; t < gt.activity.cols(); ++t) {
    const bool on = gt.activity.at(0, t) != 0.0 || gt.activity.at(1, t) != 0.0;
    (on ? active : silent).push_back(frame_energy(wav, t));
  }
  REQUIRE(silent.size() > 5);
  REQUIRE(active.size() > 5);
  std::sort(silent.begin(), silent.end());
  const double floor = silent[silent.size() / 2];
  // every silent frame stays within 3 dB of the median silent frame
  for (double e : silent) CHECK(e <= floor * std::pow(10.0, 0.3) + 1e-12);
  double mean_active = 0.0;
  for (double e : active) mean_active += e;
  mean_active /= static_cast<double>(active.size());
  CHECK(mean_active > floor * 10.0);
}

TEST_CASE("feature shortcut shares the scheduler with the audio path") {
  DialogueConfig cfg = base_cfg();
  cfg.duration_s = 15.0;
  auto [wav, ga] = simulate(cfg);
  auto [feats, gf] = simulate_features(cfg, 40);
  REQUIRE(ga.activity.same_shape(gf.activity));
  for (std::size_t i = 0; i < ga.activity.size(); ++i) CHECK(ga.activity[i] == gf.activity[i]);
  CHECK(feats.rows() == gf.activity.cols());
  CHECK(feats.cols() == 40);

  auto [f2, g2] = simulate_features(cfg, 40);
  for (std::size_t i = 0; i < feats.size(); ++i) CHECK(feats[i] == f2[i]);
}

TEST_CASE("dataset generation writes playable files and a manifest") {
  const std::string dir = "/tmp/diar_sim_dataset";
  std::filesystem::remove_all(dir);
  DialogueConfig cfg = base_cfg();
  cfg.duration_s = 8.0;
  const std::string manifest = generate_dataset(cfg, 3, dir);
  const auto entries = read_manifest(manifest);
  REQUIRE(entries.size() == 3);
  for (const auto& e : entries) {
    Waveform w = read_wav(resolve_manifest_path(manifest, e.wav_path));
    CHECK(w.duration_s() == doctest::Approx(e.duration_s).epsilon(1e-9));
    const SegmentList segs = rttm_read(resolve_manifest_path(manifest, e.rttm_path));
    CHECK(!segs.empty());
    CHECK(segs[0].recording == e.wav_path.substr(0, e.wav_path.size() - 4));
  }
  DatasetStats stats = dataset_stats(manifest);
  CHECK(stats.num_files == 3);
  CHECK(stats.total_hours == doctest::Approx(3 * 8.0 / 3600.0).epsilon(1e-9));
  CHECK(std::abs(stats.overlap_percent / 100.0 - cfg.target_overlap) <= 0.05);
  std::filesystem::remove_all(dir);
}

TEST_CASE("dataset stats match a hand built fixture") {
  const std::string dir = "/tmp/diar_sim_stats";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  // 60 s file, speech on 0..40, both speakers on 15..25
  SegmentList segs = {Segment{"rec", 0.0, 25.0, "spk0"}, Segment{"rec", 15.0, 25.0, "spk1"}};
  rttm_write(segs, dir + "/rec.rttm");
  std::ofstream(dir + "/manifest.tsv") << "rec.wav\trec.rttm\t60.000\n";
  DatasetStats stats = dataset_stats(dir + "/manifest.tsv");
  CHECK(stats.num_files == 1);
  CHECK(stats.total_hours == doctest::Approx(60.0 / 3600.0).epsilon(1e-9));
  CHECK(stats.overlap_percent == doctest::Approx(25.0).epsilon(1e-9));

  // doubling the manifest doubles counts and keeps the ratio
  std::ofstream(dir + "/manifest2.tsv")
      << "rec.wav\trec.rttm\t60.000\nrec.wav\trec.rttm\t60.000\n";
  DatasetStats twice = dataset_stats(dir + "/manifest2.tsv");
  CHECK(twice.num_files == 2);
  CHECK(twice.total_hours == doctest::Approx(2.0 * stats.total_hours).epsilon(1e-9));
  CHECK(twice.overlap_percent == doctest::Approx(stats.overlap_percent).epsilon(1e-9));

  const std::string table = format_dataset_stats(stats);
  CHECK(table.find("files") != std::string::npos);
  CHECK(table.find("25.00%") != std::string::npos);
  std::filesystem::remove_all(dir);
}

TEST_CASE("manifest parsing rejects bad lines and empty files") {
  const std::string dir = "/tmp/diar_sim_manifest";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  std::ofstream(dir + "/bad.tsv") << "only_two_fields\t1.0\n";
  CHECK_THROWS_AS(read_manifest(dir + "/bad.tsv"), DataError);
  std::ofstream(dir + "/empty.tsv") << "";
  CHECK_THROWS_AS(dataset_stats(dir + "/empty.tsv"), DataError);
  std::filesystem::remove_all(dir);
}
