#include <fstream>
#include <set>
#include <sstream>

#include "coopdet/config.hpp"
#include "coopdet/rng.hpp"
#include "doctest.h"
#include "test_support.hpp"

using namespace coopdet;

namespace {

ExperimentConfig parse(const std::string& text) {
  std::istringstream in(text);
  return parse_config(in, "test.ini");
}

}  // namespace

TEST_SUITE("config") {

TEST_CASE("an empty stream yields the stock experiment") {
  const ExperimentConfig cfg = parse("");
  CHECK(cfg.scenario == "roundabout");
  CHECK(cfg.scene.layout == "roundabout");
  CHECK(cfg.scene.infrastructures == 3);
  CHECK(cfg.scene.infra_max_range == 0.0);
  CHECK(cfg.channels == 64);
  CHECK(cfg.omega == 100);
  CHECK(cfg.m_mu == 16);
  CHECK(cfg.m_psi == 128);
  CHECK(cfg.seed == 1);
  CHECK(cfg.grid.rows() == 128);
  CHECK(cfg.grid.cols() == 144);
  CHECK(cfg.link.capacity_bytes_per_s == 1.25e6);
  CHECK(cfg.link.propagation_s == 0.002);
  CHECK(cfg.iou_threshold == 0.7);
  CHECK(cfg.eval_split == "test");
  CHECK(cfg.learning_rate == 0.1);
  CHECK(cfg.epochs == 200);
  REQUIRE(cfg.policies.size() == 4);
  CHECK(cfg.policies[0] == "loc_vehicle");
  CHECK(cfg.policies[3] == "learn2com");
  CHECK(cfg.attention_state.empty());
}

TEST_CASE("every section parses and the scenario preset lands first") {
  const ExperimentConfig cfg = parse(
      "# experiment\n"
      "[scene]\n"
      "scenario = occlusion_heavy\n"
      "frames = 12\n"
      "min_vehicles = 4   # inline comment\n"
      "max_vehicles = 6\n"
      "max_pedestrians = 1\n"
      "car_fraction = 0.75\n"
      "half_extent_x = 30\n"
      "half_extent_y = 28\n"
      "placement_retries = 50\n"
      "[lidar]\n"
      "rays = 450\n"
      "max_range = 80\n"
      "samples_per_meter = 1.5\n"
      "[grid]\n"
      "x_min = -22.4\n"
      "y_min = -22.4\n"
      "z_min = -3\n"
      "x_range = 44.8\n"
      "y_range = 44.8\n"
      "z_range = 4\n"
      "cell_x = 2.8\n"
      "cell_y = 2.8\n"
      "[encoder]\n"
      "channels = 8\n"
      "omega = 12\n"
      "[attention]\n"
      "m_mu = 4\n"
      "m_psi = 6\n"
      "learning_rate = 0.25\n"
      "epochs = 50\n"
      "state_file = w.bin\n"
      "[links]\n"
      "capacity_bytes_per_s = 1000\n"
      "propagation_s = 0.01\n"
      "loss = 0.1\n"
      "[detector]\n"
      "tau = 4\n"
      "noise_scale = 0.2\n"
      "[eval]\n"
      "iou_threshold = 0.5\n"
      "split = val\n"
      "[run]\n"
      "seed = 77\n"
      "policies = loc_vehicle, learn2com\n");

  CHECK(cfg.scenario == "occlusion_heavy");
  CHECK(cfg.scene.layout == "occlusion_heavy");
  CHECK(cfg.scene.infrastructures == 3);
  CHECK(cfg.scene.infra_max_range == 12.0);  // from the preset
  CHECK(cfg.scene.frames == 12);
  CHECK(cfg.scene.min_vehicles == 4);
  CHECK(cfg.scene.max_vehicles == 6);
  CHECK(cfg.scene.max_pedestrians == 1);
  CHECK(cfg.scene.car_fraction == 0.75);
  CHECK(cfg.scene.half_extent_x == 30.0);
  CHECK(cfg.scene.placement_retries == 50);
  CHECK(cfg.scene.lidar.rays == 450);
  CHECK(cfg.scene.lidar.max_range == 80.0);
  CHECK(cfg.scene.lidar.samples_per_meter == 1.5);
  CHECK(cfg.grid.rows() == 16);
  CHECK(cfg.grid.cols() == 16);
  CHECK(cfg.channels == 8);
  CHECK(cfg.omega == 12);
  CHECK(cfg.m_mu == 4);
  CHECK(cfg.m_psi == 6);
  CHECK(cfg.learning_rate == 0.25);
  CHECK(cfg.epochs == 50);
  CHECK(cfg.attention_state == "w.bin");
  CHECK(cfg.link.capacity_bytes_per_s == 1000.0);
  CHECK(cfg.link.propagation_s == 0.01);
  CHECK(cfg.link.loss == 0.1);
  CHECK(cfg.scene.detect_tau == 4);
  CHECK(cfg.scene.noise_scale == 0.2);
  CHECK(cfg.iou_threshold == 0.5);
  CHECK(cfg.eval_split == "val");
  CHECK(cfg.seed == 77);
  CHECK(cfg.policies == std::vector<std::string>{"loc_vehicle", "learn2com"});
}

TEST_CASE("keys after a scenario override its preset") {
  const ExperimentConfig late = parse(
      "[scene]\n"
      "scenario = occlusion_heavy\n"
      "infra_max_range = 20\n");
  CHECK(late.scene.infra_max_range == 20.0);

  const ExperimentConfig tee = parse(
      "[scene]\n"
      "scenario = t_junction\n"
      "infrastructures = 1\n");
  CHECK(tee.scene.infrastructures == 1);
  CHECK(tee.scene.layout == "t_junction");

  // the occlusion stage insists on its three responders at validation time
  testutil::throws_with<std::invalid_argument>(
      [] {
        parse("[scene]\nscenario = occlusion_heavy\ninfrastructures = 2\n");
      },
      "exactly 3 responders");
  testutil::throws_with<std::invalid_argument>(
      [] { parse("[scene]\nscenario = motorway\n"); }, "unknown scenario");

  // keys before any header belong to [run]
  CHECK(parse("seed = 9\n").seed == 9);
}

TEST_CASE("malformed lines report file and line number") {
  testutil::throws_with<std::runtime_error>(
      [] { parse("[scene]\nbogus = 1\n"); },
      "test.ini:2: unknown key 'bogus' in [scene]");
  testutil::throws_with<std::runtime_error>([] { parse("[nope]\nx = 1\n"); },
                                            "test.ini:2: unknown section [nope]");
  testutil::throws_with<std::runtime_error>([] { parse("[scene\n"); },
                                            "test.ini:1: unterminated section header");
  testutil::throws_with<std::runtime_error>([] { parse("[]\n"); },
                                            "empty section name");
  testutil::throws_with<std::runtime_error>([] { parse("seed 5\n"); },
                                            "test.ini:1: expected key = value");
  testutil::throws_with<std::runtime_error>([] { parse("= 5\n"); }, "empty key");
  testutil::throws_with<std::runtime_error>([] { parse("seed =\n"); },
                                            "empty value for 'seed'");
  testutil::throws_with<std::runtime_error>([] { parse("seed = # gone\n"); },
                                            "empty value for 'seed'");
  testutil::throws_with<std::runtime_error>(
      [] { parse("[grid]\ncell_x = abc\n"); }, "bad number 'abc'");
  testutil::throws_with<std::runtime_error>(
      [] { parse("[encoder]\nchannels = 3.5\n"); }, "bad integer '3.5'");
  testutil::throws_with<std::runtime_error>([] { parse("seed = x1\n"); },
                                            "bad seed 'x1'");
  testutil::throws_with<std::runtime_error>([] { parse("policies = ,\n"); },
                                            "empty list");
}

TEST_CASE("validation rejects unusable settings") {
  testutil::throws_with<std::invalid_argument>(
      [] { parse("[eval]\nsplit = dev\n"); },
      "eval split must be train, val, test or all");
  testutil::throws_with<std::invalid_argument>(
      [] { parse("[eval]\niou_threshold = 0\n"); }, "(0, 1]");
  testutil::throws_with<std::invalid_argument>(
      [] { parse("[attention]\nepochs = -1\n"); }, "negative epoch count");
  testutil::throws_with<std::invalid_argument>(
      [] { parse("[attention]\nlearning_rate = 0\n"); },
      "learning rate must be positive");
  testutil::throws_with<std::invalid_argument>(
      [] { parse("[encoder]\nchannels = 0\n"); }, "dimensions must be positive");
  testutil::throws_with<std::invalid_argument>(
      [] { parse("[run]\npolicies = teleport\n"); }, "comb_all");
  testutil::throws_with<std::invalid_argument>(
      [] { parse("[links]\ncapacity_bytes_per_s = 0\n"); },
      "link capacity must be positive");
  testutil::throws_with<std::invalid_argument>(
      [] { parse("[grid]\ncell_x = 3\n"); }, "cell");
}

TEST_CASE("seed derivation forks one stream per consumer") {
  CHECK(derive_seed(42, kSeedEncoder) == SplitMix64(42).fork(1).state());
  CHECK(derive_seed(42, kSeedEncoder) == derive_seed(42, kSeedEncoder));
  std::set<uint64_t> seen;
  for (uint64_t tag : {kSeedEncoder, kSeedAttention, kSeedRandPolicy,
                       kSeedDetectNoise, kSeedSplits}) {
    seen.insert(derive_seed(42, tag));
    seen.insert(derive_seed(43, tag));
  }
  CHECK(seen.size() == 10);
}

TEST_CASE("the pipeline bundle inherits seeded components") {
  ExperimentConfig cfg = parse(
      "[encoder]\nchannels = 8\nomega = 12\n[attention]\nm_mu = 4\nm_psi = 6\n");
  cfg.seed = 21;
  const Pipeline p = build_pipeline(cfg);
  CHECK(p.grid.rows() == 128);
  CHECK(p.omega == 12);
  CHECK(p.encode_seed == derive_seed(21, kSeedEncoder));
  CHECK(p.encoder.channels == 8);
  CHECK(p.encoder.input_dim == 9);
  const SPointNetWeights enc =
      seeded_spointnet_weights(8, 9, derive_seed(21, kSeedEncoder));
  CHECK(p.encoder.weight == enc.weight);
  CHECK(p.encoder.bias == enc.bias);
  const AttentionState att =
      seeded_attention_state(4, 6, 8, derive_seed(21, kSeedAttention));
  CHECK(p.attention.w_a.data == att.w_a.data);
  CHECK(p.attention.query_proj.data == att.query_proj.data);
  CHECK(p.attention.key_proj.data == att.key_proj.data);
}

TEST_CASE("configs load from disk and report missing files") {
  testutil::TempDir tmp("config");
  const std::string path = tmp.sub("exp.ini");
  std::ofstream(path) << "[run]\nseed = 5\n[encoder]\nchannels = 16\n";
  const ExperimentConfig cfg = load_config(path);
  CHECK(cfg.seed == 5);
  CHECK(cfg.channels == 16);
  testutil::throws_with<std::runtime_error>(
      [&] { load_config(tmp.sub("missing.ini")); }, "cannot open config");
}

}  // TEST_SUITE
