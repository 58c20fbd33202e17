#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "coopdet/netsim.hpp"
#include "coopdet/pillars.hpp"
#include "coopdet/scenegen.hpp"

namespace coopdet {

// Substream tags hung off the master seed; every component that needs
// randomness forks its own stream with one of these.
inline constexpr uint64_t kSeedEncoder = 1;
inline constexpr uint64_t kSeedAttention = 2;
inline constexpr uint64_t kSeedRandPolicy = 3;
inline constexpr uint64_t kSeedDetectNoise = 4;
inline constexpr uint64_t kSeedSplits = 5;  // consumed inside split_frames

struct ExperimentConfig {
  std::string scenario = "roundabout";
  SceneConfig scene;          // layout and responder count follow the scenario
  PillarGrid grid;
  int channels = 64;          // pillar feature channels C
  int omega = 100;            // points per pillar
  int m_mu = 16;              // query size
  int m_psi = 128;            // key size
  uint64_t seed = 1;          // master seed
  LinkModel link;             // applied to every responder link
  double iou_threshold = 0.7;
  std::string eval_split = "test";  // train | val | test | all
  double learning_rate = 0.1;
  int epochs = 200;
  std::vector<std::string> policies = {"loc_vehicle", "rand_select", "comb_all",
                                       "learn2com"};
  std::string attention_state;  // file with trained matrices, for learn2com

  void validate() const;
};

// Applies a named scenario preset (layout, responder count, sensor tweaks).
void apply_scenario(ExperimentConfig& config, const std::string& name);

// Line-oriented `key = value` format with [section] headers and # comments.
// Unknown keys and malformed lines report their line number. The `scenario`
// key applies its preset immediately, so later keys can override details.
ExperimentConfig parse_config(std::istream& in, const std::string& name);
ExperimentConfig load_config(const std::string& path);

// The seeded run-time bundle the simulator needs, derived from the config.
Pipeline build_pipeline(const ExperimentConfig& config);

uint64_t derive_seed(uint64_t master, uint64_t tag);

}  // namespace coopdet
