#include "coopdet/config.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "coopdet/attention.hpp"
#include "coopdet/rng.hpp"

namespace coopdet {

void ExperimentConfig::validate() const {
  scene.validate();
  grid.validate();
  if (channels < 1 || omega < 1 || m_mu < 1 || m_psi < 1)
    throw std::invalid_argument("encoder and attention dimensions must be positive");
  link.validate();
  if (!(iou_threshold > 0.0 && iou_threshold <= 1.0))
    throw std::invalid_argument("iou threshold must lie in (0, 1]");
  if (eval_split != "train" && eval_split != "val" && eval_split != "test" &&
      eval_split != "all")
    throw std::invalid_argument("eval split must be train, val, test or all");
  if (!(learning_rate > 0.0)) throw std::invalid_argument("learning rate must be positive");
  if (epochs < 0) throw std::invalid_argument("negative epoch count");
  if (policies.empty()) throw std::invalid_argument("at least one policy required");
  for (const auto& p : policies) parse_policy(p);
}

void apply_scenario(ExperimentConfig& config, const std::string& name) {
  config.scenario = name;
  config.scene.layout = name;
  if (name == "roundabout") {
    config.scene.infrastructures = 3;
    config.scene.infra_max_range = 0.0;
  } else if (name == "t_junction") {
    config.scene.infrastructures = 2;
    config.scene.infra_max_range = 0.0;
  } else if (name == "occlusion_heavy") {
    config.scene.infrastructures = 3;
    config.scene.infra_max_range = 12.0;  // each responder covers only its zone
  } else if (name == "random") {
    config.scene.infra_max_range = 0.0;
  } else {
    throw std::invalid_argument("unknown scenario: " + name);
  }
}

namespace {

std::string trim(const std::string& s) {
  size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

struct Parser {
  ExperimentConfig& cfg;
  const std::string& name;
  int line_no = 0;

  [[noreturn]] void fail(const std::string& msg) const {
    throw std::runtime_error(name + ":" + std::to_string(line_no) + ": " + msg);
  }

  double num(const std::string& v) const {
    char* end = nullptr;
    const double d = std::strtod(v.c_str(), &end);
    if (end == v.c_str() || *end != '\0') fail("bad number '" + v + "'");
    return d;
  }

  long integer(const std::string& v) const {
    char* end = nullptr;
    const long d = std::strtol(v.c_str(), &end, 10);
    if (end == v.c_str() || *end != '\0') fail("bad integer '" + v + "'");
    return d;
  }

  uint64_t unsigned64(const std::string& v) const {
    char* end = nullptr;
    const unsigned long long d = std::strtoull(v.c_str(), &end, 10);
    if (end == v.c_str() || *end != '\0') fail("bad seed '" + v + "'");
    return d;
  }

  std::vector<std::string> list(const std::string& v) const {
    std::vector<std::string> out;
    std::string item;
    std::istringstream ss(v);
    while (std::getline(ss, item, ',')) {
      item = trim(item);
      if (!item.empty()) out.push_back(item);
    }
    if (out.empty()) fail("empty list");
    return out;
  }

  void apply(const std::string& section, const std::string& key,
             const std::string& value) {
    auto& c = cfg;
    if (section == "scene") {
      if (key == "scenario") apply_scenario(c, value);
      else if (key == "frames") c.scene.frames = static_cast<int>(integer(value));
      else if (key == "infrastructures")
        c.scene.infrastructures = static_cast<int>(integer(value));
      else if (key == "min_vehicles") c.scene.min_vehicles = static_cast<int>(integer(value));
      else if (key == "max_vehicles") c.scene.max_vehicles = static_cast<int>(integer(value));
      else if (key == "max_pedestrians")
        c.scene.max_pedestrians = static_cast<int>(integer(value));
      else if (key == "car_fraction") c.scene.car_fraction = num(value);
      else if (key == "half_extent_x") c.scene.half_extent_x = num(value);
      else if (key == "half_extent_y") c.scene.half_extent_y = num(value);
      else if (key == "placement_retries")
        c.scene.placement_retries = static_cast<int>(integer(value));
      else if (key == "infra_max_range") c.scene.infra_max_range = num(value);
      else fail("unknown key '" + key + "' in [scene]");
    } else if (section == "lidar") {
      if (key == "rays") c.scene.lidar.rays = static_cast<int>(integer(value));
      else if (key == "max_range") c.scene.lidar.max_range = num(value);
      else if (key == "samples_per_meter") c.scene.lidar.samples_per_meter = num(value);
      else fail("unknown key '" + key + "' in [lidar]");
    } else if (section == "grid") {
      if (key == "x_min") c.grid.x_min = num(value);
      else if (key == "y_min") c.grid.y_min = num(value);
      else if (key == "z_min") c.grid.z_min = num(value);
      else if (key == "x_range") c.grid.x_range = num(value);
      else if (key == "y_range") c.grid.y_range = num(value);
      else if (key == "z_range") c.grid.z_range = num(value);
      else if (key == "cell_x") c.grid.cell_x = num(value);
      else if (key == "cell_y") c.grid.cell_y = num(value);
      else fail("unknown key '" + key + "' in [grid]");
    } else if (section == "encoder") {
      if (key == "channels") c.channels = static_cast<int>(integer(value));
      else if (key == "omega") c.omega = static_cast<int>(integer(value));
      else fail("unknown key '" + key + "' in [encoder]");
    } else if (section == "attention") {
      if (key == "m_mu") c.m_mu = static_cast<int>(integer(value));
      else if (key == "m_psi") c.m_psi = static_cast<int>(integer(value));
      else if (key == "state_file") c.attention_state = value;
      else if (key == "learning_rate") c.learning_rate = num(value);
      else if (key == "epochs") c.epochs = static_cast<int>(integer(value));
      else fail("unknown key '" + key + "' in [attention]");
    } else if (section == "links") {
      if (key == "capacity_bytes_per_s") c.link.capacity_bytes_per_s = num(value);
      else if (key == "propagation_s") c.link.propagation_s = num(value);
      else if (key == "loss") c.link.loss = num(value);
      else fail("unknown key '" + key + "' in [links]");
    } else if (section == "detector") {
      if (key == "tau") c.scene.detect_tau = static_cast<int>(integer(value));
      else if (key == "noise_scale") c.scene.noise_scale = num(value);
      else fail("unknown key '" + key + "' in [detector]");
    } else if (section == "eval") {
      if (key == "iou_threshold") c.iou_threshold = num(value);
      else if (key == "split") c.eval_split = value;
      else fail("unknown key '" + key + "' in [eval]");
    } else if (section == "run") {
      if (key == "seed") c.seed = unsigned64(value);
      else if (key == "policies") c.policies = list(value);
      else fail("unknown key '" + key + "' in [run]");
    } else {
      fail("unknown section [" + section + "]");
    }
  }
};

}  // namespace

ExperimentConfig parse_config(std::istream& in, const std::string& name) {
  ExperimentConfig cfg;
  apply_scenario(cfg, cfg.scenario);
  Parser parser{cfg, name};

  std::string section = "run";
  std::string line;
  while (std::getline(in, line)) {
    ++parser.line_no;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') parser.fail("unterminated section header");
      section = trim(line.substr(1, line.size() - 2));
      if (section.empty()) parser.fail("empty section name");
      continue;
    }
    const size_t eq = line.find('=');
    if (eq == std::string::npos) parser.fail("expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) parser.fail("empty key");
    if (value.empty()) parser.fail("empty value for '" + key + "'");
    parser.apply(section, key, value);
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config: " + path);
  return parse_config(in, path);
}

uint64_t derive_seed(uint64_t master, uint64_t tag) {
  return SplitMix64(master).fork(tag).state();
}

Pipeline build_pipeline(const ExperimentConfig& config) {
  Pipeline p;
  p.grid = config.grid;
  p.omega = config.omega;
  p.encode_seed = derive_seed(config.seed, kSeedEncoder);
  p.encoder =
      seeded_spointnet_weights(config.channels, 9, derive_seed(config.seed, kSeedEncoder));
  p.attention = seeded_attention_state(config.m_mu, config.m_psi, config.channels,
                                       derive_seed(config.seed, kSeedAttention));
  return p;
}

}  // namespace coopdet
