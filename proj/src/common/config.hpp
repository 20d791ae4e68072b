#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "model/model.hpp"
#include "simulate/simulate.hpp"
#include "trainer/trainer.hpp"

namespace diar {

// Flat key=value experiment description. '#' starts a comment, blank lines
// are skipped, unknown keys are rejected. The master `seed` feeds both the
// simulator and the trainer unless those never run.
struct ExperimentConfig {
  std::uint64_t seed = 1;
  DialogueConfig sim;
  std::size_t sim_num_files = 4;
  ModelConfig model;
  TrainConfig train;
  double score_collar = 0.25;
  double score_threshold = 0.5;
  std::size_t score_median = 11;

  ExperimentConfig() {
    sim.seed = seed;
    train.seed = seed;
  }

  void validate() const;
};

ExperimentConfig parse_config_text(const std::string& text, const std::string& source);
ExperimentConfig parse_config_file(const std::string& path);

// "key=value", same key set as the file
void apply_override(ExperimentConfig& cfg, const std::string& assignment);

// round-trippable dump of every key
std::string format_config(const ExperimentConfig& cfg);

}  // namespace diar
