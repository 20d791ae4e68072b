// Command line front end. Talks to the core exclusively through the C API in
// diarkit/diarkit.h; exit codes mirror the DIAR_* status values.

#include <cstdio>
#include <cstdlib>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "diarkit/diarkit.h"

namespace {

struct Free {
  char* s = nullptr;
  ~Free() { diar_free_string(s); }
};

std::vector<const char*> as_argv(const std::vector<std::string>& v) {
  std::vector<const char*> out;
  out.reserve(v.size());
  for (const std::string& s : v) out.push_back(s.c_str());
  return out;
}

int fail(int rc) {
  std::fprintf(stderr, "error: %s\n", diar_last_error());
  return rc;
}

void print(const char* s) {
  if (s != nullptr) std::fputs(s, stdout);
}

// asks the resolved config for a default the user did not pass explicitly
std::string config_value(const char* config_path, const std::vector<std::string>& overrides,
                         const char* key) {
  const auto ov = as_argv(overrides);
  Free value;
  const int rc = diar_config_get(config_path, ov.data(), ov.size(), key, &value.s);
  if (rc != DIAR_OK) {
    std::fprintf(stderr, "error: %s\n", diar_last_error());
    std::exit(rc);
  }
  return value.s;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"desk scale speaker diarization toolkit"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::vector<std::string> overrides;
  long long seed = -1;
  app.add_option("--config", config_path, "experiment config file (key=value lines)");
  app.add_option("--seed", seed, "master seed, shorthand for --set seed=N");
  app.add_option("--set", overrides, "override one config key, e.g. --set train.alpha=0.08");

  auto* cmd_sim = app.add_subcommand("simulate", "synthesize a conversation dataset");
  std::string sim_out;
  long long sim_files = -1;
  cmd_sim->add_option("--out", sim_out, "output directory")->required();
  cmd_sim->add_option("--num-files", sim_files, "dialogue count, shorthand for sim.num_files");

  auto* cmd_train = app.add_subcommand("train", "run the two phase training loop");
  std::string train_manifest, train_out, train_resume;
  cmd_train->add_option("--manifest", train_manifest, "dataset manifest")->required();
  cmd_train->add_option("--out", train_out, "output directory")->required();
  cmd_train->add_option("--resume", train_resume, "continue from a .state snapshot");

  auto* cmd_infer = app.add_subcommand("infer", "diarize a wav or feature file");
  std::string infer_model, infer_input, infer_out, infer_rec = "rec";
  double infer_threshold = -1.0;
  long long infer_median = -1;
  cmd_infer->add_option("--model", infer_model, "checkpoint")->required();
  cmd_infer->add_option("--input", infer_input, "wav or DIARBIN feature file")->required();
  cmd_infer->add_option("--out", infer_out, "hypothesis rttm path")->required();
  cmd_infer->add_option("--recording", infer_rec, "recording id for the rttm");
  cmd_infer->add_option("--threshold", infer_threshold, "posterior threshold (default score.threshold)");
  cmd_infer->add_option("--median", infer_median, "median filter width (default score.median)");

  auto* cmd_score = app.add_subcommand("score", "diarization error rate of hyp vs ref");
  std::string score_ref, score_hyp;
  double score_collar = -1.0;
  cmd_score->add_option("--ref", score_ref, "reference rttm")->required();
  cmd_score->add_option("--hyp", score_hyp, "hypothesis rttm")->required();
  cmd_score->add_option("--collar", score_collar, "boundary collar in seconds (default score.collar)");

  auto* cmd_att = app.add_subcommand("inspect-attention", "per head attention traces");
  std::string att_model, att_input, att_dump;
  long long att_layer = 0;
  cmd_att->add_option("--model", att_model, "checkpoint")->required();
  cmd_att->add_option("--input", att_input, "wav or DIARBIN feature file")->required();
  cmd_att->add_option("--layer", att_layer, "encoder layer, 1 based, 0 = topmost");
  cmd_att->add_option("--dump", att_dump, "write each head matrix to <prefix>_lL_hH.bin");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;  // usage problems map to the config exit code
  }

  if (seed >= 0) overrides.insert(overrides.begin(), "seed=" + std::to_string(seed));
  const char* cfg = config_path.empty() ? nullptr : config_path.c_str();

  if (cmd_sim->parsed()) {
    if (sim_files >= 0) overrides.push_back("sim.num_files=" + std::to_string(sim_files));
    const auto ov = as_argv(overrides);
    Free manifest, stats;
    const int rc =
        diar_simulate(cfg, ov.data(), ov.size(), sim_out.c_str(), &manifest.s, &stats.s);
    if (rc != DIAR_OK) return fail(rc);
    print(stats.s);
    std::printf("manifest %s\n", manifest.s);
    return 0;
  }

  if (cmd_train->parsed()) {
    const auto ov = as_argv(overrides);
    Free report;
    const int rc = diar_train(cfg, ov.data(), ov.size(), train_manifest.c_str(),
                              train_out.c_str(),
                              train_resume.empty() ? nullptr : train_resume.c_str(), &report.s);
    if (rc != DIAR_OK) return fail(rc);
    print(report.s);
    return 0;
  }

  if (cmd_infer->parsed()) {
    if (infer_threshold < 0.0) {
      infer_threshold = std::strtod(config_value(cfg, overrides, "score.threshold").c_str(), nullptr);
    }
    if (infer_median < 0) {
      infer_median = std::strtoll(config_value(cfg, overrides, "score.median").c_str(), nullptr, 10);
    }
    diar_model* model = nullptr;
    int rc = diar_model_open(infer_model.c_str(), &model);
    if (rc != DIAR_OK) return fail(rc);
    Free report;
    rc = diar_infer(model, infer_input.c_str(), infer_rec.c_str(), infer_threshold,
                    static_cast<size_t>(infer_median), infer_out.c_str(), &report.s);
    diar_model_close(model);
    if (rc != DIAR_OK) return fail(rc);
    print(report.s);
    return 0;
  }

  if (cmd_score->parsed()) {
    if (score_collar < 0.0) {
      score_collar = std::strtod(config_value(cfg, overrides, "score.collar").c_str(), nullptr);
    }
    Free report;
    const int rc = diar_score(score_ref.c_str(), score_hyp.c_str(), score_collar, &report.s);
    if (rc != DIAR_OK) return fail(rc);
    print(report.s);
    return 0;
  }

  if (cmd_att->parsed()) {
    diar_model* model = nullptr;
    int rc = diar_model_open(att_model.c_str(), &model);
    if (rc != DIAR_OK) return fail(rc);
    Free report;
    rc = diar_inspect_attention(model, att_input.c_str(), static_cast<size_t>(att_layer),
                                att_dump.empty() ? nullptr : att_dump.c_str(), &report.s);
    diar_model_close(model);
    if (rc != DIAR_OK) return fail(rc);
    print(report.s);
    return 0;
  }

  return 1;
}
