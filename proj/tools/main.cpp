#include <cctype>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "coopdet/attention.hpp"
#include "coopdet/config.hpp"
#include "coopdet/dataset.hpp"
#include "coopdet/eval.hpp"
#include "coopdet/netsim.hpp"
#include "coopdet/parallel.hpp"
#include "coopdet/rng.hpp"
#include "coopdet/scenegen.hpp"
#include "coopdet/wire.hpp"

namespace fs = std::filesystem;
using namespace coopdet;

namespace {

struct Options {
  std::string config_path;
  std::string dataset;
  std::string out;
  std::string policies;   // comma list, overrides the config
  std::string policy = "comb_all";
  std::string attention;  // trained state file, overrides the config
  uint64_t seed = 0;
  bool seed_set = false;
  int frames = -1;   // generate: frame count; compare: cap on evaluated frames
  int frame_id = -1;
};

ExperimentConfig load_or_default(const std::string& path) {
  if (path.empty()) {
    std::istringstream empty;
    return parse_config(empty, "<defaults>");
  }
  return load_config(path);
}

std::vector<std::string> split_list(const std::string& csv) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream ss(csv);
  while (std::getline(ss, item, ',')) {
    while (!item.empty() && std::isspace(static_cast<unsigned char>(item.front())))
      item.erase(item.begin());
    while (!item.empty() && std::isspace(static_cast<unsigned char>(item.back())))
      item.pop_back();
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

ExperimentConfig make_config(const Options& opt) {
  ExperimentConfig cfg = load_or_default(opt.config_path);
  if (opt.seed_set) cfg.seed = opt.seed;
  if (!opt.policies.empty()) cfg.policies = split_list(opt.policies);
  if (!opt.attention.empty()) cfg.attention_state = opt.attention;
  cfg.validate();
  return cfg;
}

AttentionState load_trained_state(const ExperimentConfig& cfg) {
  if (cfg.attention_state.empty())
    throw std::runtime_error(
        "learn2com needs a trained attention state: pass --attention or set "
        "state_file in [attention]");
  AttentionState st = load_attention_state(cfg.attention_state);
  st.validate();
  if (st.query_proj.cols != static_cast<size_t>(cfg.channels))
    throw std::runtime_error("attention state expects " +
                             std::to_string(st.query_proj.cols) +
                             " feature channels, config has " +
                             std::to_string(cfg.channels));
  if (st.w_a.rows != static_cast<size_t>(cfg.m_mu) ||
      st.w_a.cols != static_cast<size_t>(cfg.m_psi))
    throw std::runtime_error("attention state size disagrees with m_mu/m_psi");
  return st;
}

const std::vector<uint32_t>& split_ids(const Dataset& ds, const std::string& split,
                                       std::vector<uint32_t>& all_storage) {
  if (split == "train") return ds.splits.train;
  if (split == "val") return ds.splits.val;
  if (split == "test") return ds.splits.test;
  all_storage.clear();
  all_storage.reserve(ds.frames.size());
  for (const auto& f : ds.frames) all_storage.push_back(f.frame_id);
  return all_storage;
}

// Labelled (query, keys, oracle pick) triples from the given frames; frames
// without a responder label are skipped.
std::vector<AttentionSample> build_samples(const std::vector<const SceneFrame*>& frames,
                                           const Pipeline& pipe) {
  std::vector<const SceneFrame*> labelled;
  for (const auto* f : frames)
    if (f->oracle_best >= 0) labelled.push_back(f);
  std::vector<AttentionSample> samples(labelled.size());
  parallel_for(labelled.size(), [&](size_t i) {
    const SceneFrame& f = *labelled[i];
    AttentionSample s;
    s.query = encode_query(encode_agent_image(f, -1, pipe), pipe.attention.query_proj);
    s.keys.reserve(f.infra_poses.size());
    for (size_t k = 0; k < f.infra_poses.size(); ++k)
      s.keys.push_back(encode_key(encode_agent_image(f, static_cast<int>(k), pipe),
                                  pipe.attention.key_proj));
    s.label = f.oracle_best;
    samples[i] = std::move(s);
  });
  return samples;
}

std::vector<GroundTruth> truths_of(const SceneFrame& frame) {
  std::vector<GroundTruth> gts;
  for (size_t i = 0; i < frame.objects.size(); ++i) {
    if (frame.objects[i].cls == ObjectClass::Pedestrian) continue;
    gts.push_back({frame.objects[i].box, frame.objects[i].cls, frame.difficulty[i]});
  }
  return gts;
}

int cmd_generate(const Options& opt) {
  ExperimentConfig cfg = load_or_default(opt.config_path);
  if (opt.seed_set) cfg.seed = opt.seed;
  if (opt.frames >= 0) cfg.scene.frames = opt.frames;
  cfg.validate();
  const auto frames = generate_scene(cfg.scene, cfg.seed);
  write_dataset(opt.out, frames, cfg.scene, cfg.seed);
  std::cout << "wrote " << frames.size() << " " << cfg.scene.layout << " frames to "
            << opt.out << "\n";
  return 0;
}

int cmd_train_attention(const Options& opt) {
  ExperimentConfig cfg = make_config(opt);
  const Dataset ds = load_dataset(opt.dataset);
  const Pipeline pipe = build_pipeline(cfg);

  const auto train_samples = build_samples(ds.select(ds.splits.train), pipe);
  if (train_samples.empty())
    throw std::runtime_error("train split has no frames with a responder label");
  const TrainResult result =
      train_attention(train_samples, pipe.attention.w_a, cfg.learning_rate, cfg.epochs);

  AttentionState st = pipe.attention;
  st.w_a = result.w;
  save_attention_state(opt.out, st);
  {
    std::ofstream loss(opt.out + ".loss.csv");
    if (!loss) throw std::runtime_error("cannot write " + opt.out + ".loss.csv");
    loss << "epoch,loss\n";
    char buf[64];
    for (size_t e = 0; e < result.loss.size(); ++e) {
      std::snprintf(buf, sizeof(buf), "%zu,%.9g\n", e, result.loss[e]);
      loss << buf;
    }
  }

  std::printf("trained on %zu frames for %d epochs", train_samples.size(), cfg.epochs);
  if (!result.loss.empty())
    std::printf(", loss %.6f -> %.6f", result.loss.front(), result.loss.back());
  std::printf("\n");
  const auto val_samples = build_samples(ds.select(ds.splits.val), pipe);
  if (!val_samples.empty())
    std::printf("val selection accuracy: %.1f%% (%zu frames)\n",
                100.0 * selection_accuracy(val_samples, st.w_a), val_samples.size());
  else
    std::printf("val split has no labelled frames\n");
  std::cout << "saved attention state to " << opt.out << "\n";
  return 0;
}

int cmd_compare(const Options& opt) {
  ExperimentConfig cfg = make_config(opt);
  const Dataset ds = load_dataset(opt.dataset);

  std::vector<uint32_t> all_ids;
  std::vector<uint32_t> ids = split_ids(ds, cfg.eval_split, all_ids);
  if (opt.frames >= 0 && static_cast<size_t>(opt.frames) < ids.size())
    ids.resize(static_cast<size_t>(opt.frames));
  if (ids.empty()) throw std::runtime_error("no frames to evaluate in split " + cfg.eval_split);
  const auto frames = ds.select(ids);

  Pipeline pipe = build_pipeline(cfg);
  bool wants_learned = false;
  for (const auto& name : cfg.policies)
    wants_learned |= parse_policy(name) == PolicyKind::Learn2com;
  if (wants_learned) pipe.attention = load_trained_state(cfg);

  const uint64_t rand_seed = derive_seed(cfg.seed, kSeedRandPolicy);
  const uint64_t noise_root = derive_seed(cfg.seed, kSeedDetectNoise);

  struct PolicyRun {
    std::string name;
    std::vector<FrameSample> samples;
    std::vector<BandwidthLedger> ledgers;
    std::vector<double> latencies;
    uint64_t counted_total = 0;
    uint64_t gross_total = 0;
    double map_moderate = 0.0;
    bool map_defined = false;
  };

  std::vector<PolicyRun> runs;
  for (const auto& name : cfg.policies) {
    PolicyRun run;
    run.name = name;
    run.samples.resize(frames.size());
    run.ledgers.resize(frames.size());
    run.latencies.resize(frames.size());
    const Policy policy{parse_policy(name), rand_seed};
    parallel_for(frames.size(), [&](size_t i) {
      const SceneFrame& f = *frames[i];
      const std::vector<LinkModel> links(f.infra_poses.size(), cfg.link);
      FrameResult r = run_frame(f, policy, links, pipe);
      std::vector<int> participants{-1};
      participants.insert(participants.end(), r.selected.begin(), r.selected.end());
      const auto counts = union_visible_counts(f, participants);
      const uint64_t frame_seed = SplitMix64(noise_root).fork(f.frame_id).state();
      run.samples[i].detections = oracle_detect(f.objects, counts, cfg.scene.detect_tau,
                                                cfg.scene.noise_scale, frame_seed);
      run.samples[i].gts = truths_of(f);
      run.latencies[i] = r.latency_s;
      run.ledgers[i] = std::move(r.ledger);
    });
    for (const auto& ledger : run.ledgers) {
      run.counted_total += ledger.counted_total();
      run.gross_total += ledger.gross_total();
    }
    runs.push_back(std::move(run));
  }

  const std::vector<ObjectClass> classes{ObjectClass::Car, ObjectClass::Truck};
  const auto slices = standard_slices();
  std::vector<DetectionReportRow> det_rows;
  for (auto& run : runs) {
    double map_sum = 0.0;
    int map_n = 0;
    for (ObjectClass cls : classes) {
      for (const auto& slice : slices) {
        const BucketResult b =
            bucket_average_precision(run.samples, cls, slice.predicate, cfg.iou_threshold);
        det_rows.push_back({run.name, class_name(cls), slice.name, b});
        if (slice.name == "moderate" && b.defined) {
          map_sum += b.ap;
          ++map_n;
        }
      }
    }
    run.map_defined = map_n > 0;
    run.map_moderate = map_n > 0 ? 100.0 * map_sum / map_n : 0.0;
  }

  // AIB is measured against the no-exchange baseline when it was run.
  const PolicyRun* baseline = nullptr;
  for (const auto& run : runs)
    if (parse_policy(run.name) == PolicyKind::LocVehicle && run.map_defined) {
      baseline = &run;
      break;
    }
  std::vector<BandwidthReportRow> bw_rows;
  const double n_frames = static_cast<double>(frames.size());
  for (const auto& run : runs) {
    BandwidthReportRow row;
    row.policy = run.name;
    row.kb_per_frame = static_cast<double>(run.counted_total) / n_frames / 1024.0;
    row.gross_kb_per_frame = static_cast<double>(run.gross_total) / n_frames / 1024.0;
    row.map_moderate = run.map_moderate;
    row.map_defined = run.map_defined;
    const uint64_t mean_bytes = static_cast<uint64_t>(
        std::llround(static_cast<double>(run.counted_total) / n_frames));
    if (baseline != nullptr && &run != baseline && run.map_defined && mean_bytes > 0) {
      row.aib = aib(run.map_moderate, baseline->map_moderate, mean_bytes);
      row.aib_defined = true;
    }
    bw_rows.push_back(row);
  }

  fs::create_directories(opt.out);
  {
    std::ofstream out(opt.out + "/detection_report.csv");
    write_detection_report(out, det_rows);
  }
  {
    std::ofstream out(opt.out + "/bandwidth_report.csv");
    write_bandwidth_report(out, bw_rows);
  }
  {
    std::ofstream out(opt.out + "/plot_data.csv");
    write_plot_data(out, det_rows);
  }
  {
    std::ofstream out(opt.out + "/ledger.csv");
    write_ledger_csv_header(out);
    for (const auto& run : runs)
      for (const auto& ledger : run.ledgers) write_ledger_csv(out, ledger);
  }

  std::printf("%zu frames (%s split), reports in %s\n", frames.size(),
              cfg.eval_split.c_str(), opt.out.c_str());
  std::printf("%-12s %9s %12s %10s %8s\n", "policy", "mAP_mod", "KB/frame", "latency_ms",
              "AIB");
  for (size_t i = 0; i < runs.size(); ++i) {
    const auto& run = runs[i];
    double lat = 0.0;
    for (double v : run.latencies) lat += v;
    lat = 1e3 * lat / n_frames;
    char map_cell[32], aib_cell[32];
    if (run.map_defined)
      std::snprintf(map_cell, sizeof(map_cell), "%9.2f", run.map_moderate);
    else
      std::snprintf(map_cell, sizeof(map_cell), "%9s", "n/a");
    if (bw_rows[i].aib_defined)
      std::snprintf(aib_cell, sizeof(aib_cell), "%8.2f", bw_rows[i].aib);
    else
      std::snprintf(aib_cell, sizeof(aib_cell), "%8s", "n/a");
    std::printf("%-12s %s %12.2f %10.1f %s\n", run.name.c_str(), map_cell,
                bw_rows[i].kb_per_frame, lat, aib_cell);
  }
  return 0;
}

int cmd_inspect(const Options& opt) {
  ExperimentConfig cfg = make_config(opt);
  const Dataset ds = load_dataset(opt.dataset);
  const SceneFrame& frame = opt.frame_id < 0
                                ? ds.frames.front()
                                : ds.frame_by_id(static_cast<uint32_t>(opt.frame_id));

  Pipeline pipe = build_pipeline(cfg);
  const PolicyKind kind = parse_policy(opt.policy);
  if (kind == PolicyKind::Learn2com) pipe.attention = load_trained_state(cfg);

  const std::vector<LinkModel> links(frame.infra_poses.size(), cfg.link);
  const Policy policy{kind, derive_seed(cfg.seed, kSeedRandPolicy)};
  const FrameResult r = run_frame(frame, policy, links, pipe, /*record_trace=*/true);

  std::printf("frame %u, policy %s, %zu responders\n", frame.frame_id,
              opt.policy.c_str(), frame.infra_poses.size());
  for (const auto& bytes : r.trace)
    std::cout << "  " << wire::describe(wire::decode_message(bytes)) << "\n";
  std::printf("ledger (%zu entries):\n", r.ledger.entries.size());
  for (const auto& e : r.ledger.entries) {
    char link[16];
    if (e.link < 0)
      std::snprintf(link, sizeof(link), "%s", "all");
    else
      std::snprintf(link, sizeof(link), "%d", e.link);
    std::printf("  %-16s sender=%u link=%-3s counted=%llu gross=%llu\n",
                wire::kind_name(e.kind), e.sender, link,
                static_cast<unsigned long long>(e.counted_bytes),
                static_cast<unsigned long long>(e.gross_bytes));
  }
  std::printf("counted %llu bytes (%.2f KB), gross %llu bytes, latency %.6f s\n",
              static_cast<unsigned long long>(r.ledger.counted_total()),
              r.ledger.counted_kb(),
              static_cast<unsigned long long>(r.ledger.gross_total()), r.latency_s);
  if (r.selected.empty()) {
    std::printf("fused: local features only%s\n",
                r.degraded_to_local ? " (no responders reachable)" : "");
  } else {
    std::printf("fused responders:");
    for (int s : r.selected) std::printf(" %d", s);
    std::printf("\n");
  }
  if (!opt.out.empty()) {
    std::ofstream out(opt.out, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + opt.out);
    wire::write_trace(out, r.trace);
    std::cout << "wrote " << r.trace.size() << " messages to " << opt.out << "\n";
  }
  return 0;
}

std::string check_policy_list(const std::string& csv) {
  try {
    const auto names = split_list(csv);
    if (names.empty()) return "empty policy list";
    for (const auto& n : names) parse_policy(n);
  } catch (const std::exception& e) {
    return e.what();
  }
  return {};
}

std::string check_single_policy(const std::string& name) {
  try {
    parse_policy(name);
  } catch (const std::exception& e) {
    return e.what();
  }
  return {};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cooperative perception experiment runner"};
  app.require_subcommand(1);
  Options opt;

  auto add_common = [&](CLI::App* cmd, bool with_dataset) {
    cmd->add_option("--config", opt.config_path, "experiment config file")
        ->check(CLI::ExistingFile);
    auto* seed = cmd->add_option("--seed", opt.seed, "master seed override");
    cmd->parse_complete_callback([&opt, seed] { opt.seed_set = seed->count() > 0; });
    if (with_dataset)
      cmd->add_option("dataset", opt.dataset, "dataset directory")
          ->required()
          ->check(CLI::ExistingDirectory);
  };

  auto* gen = app.add_subcommand("generate", "synthesize a scene dataset");
  add_common(gen, false);
  gen->add_option("--out", opt.out, "dataset directory to create")->required();
  gen->add_option("--frames", opt.frames, "frame count override");

  auto* train = app.add_subcommand("train-attention",
                                   "fit the responder matcher on the train split");
  add_common(train, true);
  train->add_option("--out", opt.out, "file for the trained attention state")->required();

  auto* cmp = app.add_subcommand("compare", "run exchange policies and report metrics");
  add_common(cmp, true);
  cmp->add_option("--out", opt.out, "report directory")->required();
  cmp->add_option("--policies", opt.policies, "comma separated policies to run")
      ->check(CLI::Validator(check_policy_list, "POLICIES"));
  cmp->add_option("--frames", opt.frames, "evaluate at most this many frames");
  cmp->add_option("--attention", opt.attention, "trained attention state file")
      ->check(CLI::ExistingFile);

  auto* ins = app.add_subcommand("inspect", "dump one frame's messages and ledger");
  add_common(ins, true);
  ins->add_option("--frame", opt.frame_id, "frame id (default: first frame)");
  ins->add_option("--policy", opt.policy, "exchange policy to trace")
      ->check(CLI::Validator(check_single_policy, "POLICY"));
  ins->add_option("--attention", opt.attention, "trained attention state file")
      ->check(CLI::ExistingFile);
  ins->add_option("--out", opt.out, "write the message trace to this file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (gen->parsed()) return cmd_generate(opt);
    if (train->parsed()) return cmd_train_attention(opt);
    if (cmp->parsed()) return cmd_compare(opt);
    if (ins->parsed()) return cmd_inspect(opt);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
