#include <sstream>

#include "coopdet/netsim.hpp"
#include "coopdet/rng.hpp"
#include "doctest.h"
#include "test_support.hpp"

using namespace coopdet;
using testutil::tiny_frame;
using testutil::tiny_pipeline;

namespace {

std::vector<LinkModel> two_links() {
  return {LinkModel{1.25e6, 0.002, 0.0}, LinkModel{1.25e6, 0.004, 0.0}};
}

}  // namespace

TEST_SUITE("netsim") {

TEST_CASE("link models validate their parameters") {
  LinkModel link;
  link.validate();
  link.capacity_bytes_per_s = 0.0;
  testutil::throws_with<std::invalid_argument>([&] { link.validate(); },
                                               "capacity");
  link = LinkModel{};
  link.propagation_s = -0.1;
  testutil::throws_with<std::invalid_argument>([&] { link.validate(); },
                                               "propagation");
  link = LinkModel{};
  link.loss = 1.0;
  testutil::throws_with<std::invalid_argument>([&] { link.validate(); },
                                               "[0, 1)");
  link.loss = 0.99;
  link.validate();
}

TEST_CASE("ledger sums by kind and converts units") {
  BandwidthLedger ledger;
  ledger.frame_id = 3;
  ledger.policy = "learn2com";
  ledger.entries = {
      {wire::MessageKind::QueryBroadcast, 0, -1, 12, 44},
      {wire::MessageKind::ScoreReply, 1, 0, 0, 20},
      {wire::MessageKind::ScoreReply, 2, 1, 0, 20},
      {wire::MessageKind::FeaturePayload, 2, 1, 4096, 4124},
  };
  CHECK(ledger.counted_total() == 4108);
  CHECK(ledger.gross_total() == 4208);
  CHECK(ledger.counted_by_kind(wire::MessageKind::FeaturePayload) == 4096);
  CHECK(ledger.counted_by_kind(wire::MessageKind::FeatureRequest) == 0);
  CHECK(ledger.count_of_kind(wire::MessageKind::ScoreReply) == 2);
  CHECK(ledger.counted_kb() == doctest::Approx(4108.0 / 1024.0).epsilon(1e-15));
  CHECK(ledger.counted_mb() == doctest::Approx(4108.0 / 1048576.0).epsilon(1e-15));

  std::ostringstream os;
  write_ledger_csv_header(os);
  write_ledger_csv(os, ledger);
  CHECK(os.str() ==
        "frame,policy,kind,bytes,kb,gross_bytes\n"
        "3,learn2com,query_broadcast,12,0.011719,44\n"
        "3,learn2com,score_reply,0,0.000000,40\n"
        "3,learn2com,feature_payload,4096,4.000000,4124\n");
}

TEST_CASE("policy names round-trip") {
  for (PolicyKind k : {PolicyKind::LocVehicle, PolicyKind::RandSelect,
                       PolicyKind::CombAll, PolicyKind::Learn2com})
    CHECK(parse_policy(policy_name(k)) == k);
  testutil::throws_with<std::invalid_argument>(
      [] { parse_policy("telepathy"); }, "comb_all");
}

TEST_CASE("local-only policy pads the fused map with zeros") {
  const SceneFrame frame = tiny_frame();
  const Pipeline pipe = tiny_pipeline();
  const FrameResult r =
      run_frame(frame, {PolicyKind::LocVehicle, 0}, two_links(), pipe);
  const PseudoImage local = encode_agent_image(frame, -1, pipe);
  REQUIRE(r.fused.channels == 8);
  CHECK(r.fused.height == 16);
  CHECK(r.fused.width == 16);
  for (size_t i = 0; i < local.data.size(); ++i) {
    CHECK(r.fused.data[i] == local.data[i]);
    CHECK(r.fused.data[local.data.size() + i] == 0.0f);
  }
  CHECK(r.selected.empty());
  CHECK(r.ledger.entries.empty());
  CHECK(r.latency_s == 0.0);
  CHECK_FALSE(r.degraded_to_local);
  CHECK(r.trace.empty());
}

TEST_CASE("random selection follows the per-frame draw") {
  const SceneFrame frame = tiny_frame();
  const Pipeline pipe = tiny_pipeline();
  const Policy policy{PolicyKind::RandSelect, 42};
  const FrameResult r = run_frame(frame, policy, two_links(), pipe);
  const int pick = static_cast<int>(
      SplitMix64(policy.seed).fork(frame.frame_id).uniform_index(2));
  CHECK(r.selected == std::vector<int>{pick});

  REQUIRE(r.ledger.entries.size() == 1);
  const BandwidthEntry& e = r.ledger.entries[0];
  CHECK(e.kind == wire::MessageKind::FeaturePayload);
  CHECK(e.sender == pick + 1);
  CHECK(e.link == pick);
  CHECK(e.counted_bytes == 4096);  // 4 ch x 16 x 16 x 4 bytes
  CHECK(e.gross_bytes == 4124);    // header + dims ride on top

  const PseudoImage local = encode_agent_image(frame, -1, pipe);
  const PseudoImage peer = encode_agent_image(frame, pick, pipe);
  const PseudoImage want = fuse_inference(local, peer);
  CHECK(r.fused.data == want.data);
  CHECK(r.latency_s == frame_latency(r.ledger, two_links()));

  const FrameResult again = run_frame(frame, policy, two_links(), pipe);
  CHECK(again.selected == r.selected);
  CHECK(again.fused.data == r.fused.data);
}

TEST_CASE("combine-all pulls every responder with uniform weights") {
  const SceneFrame frame = tiny_frame();
  const Pipeline pipe = tiny_pipeline();
  const FrameResult r =
      run_frame(frame, {PolicyKind::CombAll, 0}, two_links(), pipe);
  CHECK(r.selected == std::vector<int>{0, 1});
  REQUIRE(r.ledger.entries.size() == 2);
  for (int k = 0; k < 2; ++k) {
    CHECK(r.ledger.entries[k].kind == wire::MessageKind::FeaturePayload);
    CHECK(r.ledger.entries[k].sender == k + 1);
    CHECK(r.ledger.entries[k].link == k);
  }
  CHECK(r.ledger.counted_total() == 8192);

  const PseudoImage local = encode_agent_image(frame, -1, pipe);
  ScoreSet uniform;
  uniform.raw = {0.0, 0.0};
  uniform.normalized = {0.5, 0.5};
  uniform.ids = {0, 1};
  const PseudoImage want = fuse_training(
      local, {encode_agent_image(frame, 0, pipe), encode_agent_image(frame, 1, pipe)},
      uniform);
  CHECK(r.fused.data == want.data);
}

TEST_CASE("learned selection runs the full handshake") {
  const SceneFrame frame = tiny_frame();
  const Pipeline pipe = tiny_pipeline();
  const FrameResult r =
      run_frame(frame, {PolicyKind::Learn2com, 0}, two_links(), pipe, true);

  // replay the handshake through the public pieces, rounding where the wire
  // rounds: the query travels as float32, and so do the score replies
  const PseudoImage local = encode_agent_image(frame, -1, pipe);
  const QueryVector query = encode_query(local, pipe.attention.query_proj);
  QueryVector wire_query(query.size());
  for (size_t i = 0; i < query.size(); ++i)
    wire_query[i] = static_cast<double>(static_cast<float>(query[i]));
  std::vector<double> raw(2);
  std::vector<PseudoImage> peers;
  for (int k = 0; k < 2; ++k) {
    peers.push_back(encode_agent_image(frame, k, pipe));
    const KeyVector key = encode_key(peers.back(), pipe.attention.key_proj);
    const double t = matching_score(wire_query, key, pipe.attention.w_a);
    raw[k] = static_cast<double>(static_cast<float>(t));
  }
  const ScoreSet scores = normalize_scores(raw);
  const int pick = select_infrastructure(scores);
  CHECK(r.selected == std::vector<int>{pick});

  REQUIRE(r.ledger.entries.size() == 5);
  const auto& e = r.ledger.entries;
  CHECK(e[0].kind == wire::MessageKind::QueryBroadcast);
  CHECK(e[0].sender == 0);
  CHECK(e[0].link == -1);
  CHECK(e[0].counted_bytes == 12);  // three query floats
  for (int k = 0; k < 2; ++k) {
    CHECK(e[1 + k].kind == wire::MessageKind::ScoreReply);
    CHECK(e[1 + k].sender == k + 1);
    CHECK(e[1 + k].link == k);
    CHECK(e[1 + k].counted_bytes == 0);
  }
  CHECK(e[3].kind == wire::MessageKind::FeatureRequest);
  CHECK(e[3].sender == 0);
  CHECK(e[3].link == pick);
  CHECK(e[4].kind == wire::MessageKind::FeaturePayload);
  CHECK(e[4].sender == pick + 1);
  CHECK(e[4].link == pick);
  CHECK(e[4].counted_bytes == 4096);

  const PseudoImage want = fuse_inference(
      local, refine_feature(peers[pick], scores.normalized[pick]));
  CHECK(r.fused.data == want.data);
  CHECK(r.latency_s == frame_latency(r.ledger, two_links()));

  // the recorded trace holds the five messages in protocol order
  REQUIRE(r.trace.size() == 5);
  const auto qmsg = wire::decode_message(r.trace[0]);
  CHECK(qmsg.kind() == wire::MessageKind::QueryBroadcast);
  const auto& qb = std::get<wire::QueryBroadcast>(qmsg.payload);
  REQUIRE(qb.query.size() == query.size());
  for (size_t i = 0; i < query.size(); ++i)
    CHECK(qb.query[i] == static_cast<float>(query[i]));
  CHECK(qb.pose[0] == 0.0f);
  CHECK(qb.pose[2] == static_cast<float>(kVehicleSensorZ));
  for (int k = 0; k < 2; ++k) {
    const auto reply = wire::decode_message(r.trace[1 + k]);
    CHECK(std::get<wire::ScoreReply>(reply.payload).score ==
          static_cast<float>(raw[k]));
  }
  const auto fp = wire::decode_message(r.trace[4]);
  CHECK(fp.frame_id == 7);
  const PseudoImage carried = wire::to_image(std::get<wire::FeaturePayload>(fp.payload));
  CHECK(carried.data == peers[pick].data);  // refinement happens after receipt

  const FrameResult quiet = run_frame(frame, {PolicyKind::Learn2com, 0},
                                      two_links(), pipe, false);
  CHECK(quiet.trace.empty());
  CHECK(quiet.fused.data == r.fused.data);
}

TEST_CASE("peer policies degrade gracefully with nobody to ask") {
  SceneFrame frame = tiny_frame();
  frame.infra_poses.clear();
  frame.infra_obs.clear();
  const Pipeline pipe = tiny_pipeline();
  for (PolicyKind kind :
       {PolicyKind::RandSelect, PolicyKind::CombAll, PolicyKind::Learn2com}) {
    const FrameResult r = run_frame(frame, {kind, 0}, {}, pipe);
    CHECK(r.degraded_to_local);
    CHECK(r.selected.empty());
    CHECK(r.ledger.entries.empty());
    CHECK(r.latency_s == 0.0);
    REQUIRE(r.fused.channels == 8);
  }
  const FrameResult local = run_frame(frame, {PolicyKind::LocVehicle, 0}, {}, pipe);
  CHECK_FALSE(local.degraded_to_local);
}

TEST_CASE("frame replay validates its inputs") {
  const SceneFrame frame = tiny_frame();
  const Pipeline pipe = tiny_pipeline();
  testutil::throws_with<std::invalid_argument>(
      [&] { run_frame(frame, {PolicyKind::CombAll, 0}, {LinkModel{}}, pipe); },
      "one link per responder");
  SceneFrame broken = frame;
  broken.infra_obs.pop_back();
  testutil::throws_with<std::invalid_argument>(
      [&] {
        run_frame(broken, {PolicyKind::CombAll, 0}, two_links(), pipe);
      },
      "missing responder observations");
}

TEST_CASE("latency adds the slowest transfer of each phase") {
  std::vector<LinkModel> links = {{1000.0, 0.01, 0.0}, {500.0, 0.02, 0.0}};
  BandwidthLedger ledger;
  ledger.entries = {
      {wire::MessageKind::QueryBroadcast, 0, -1, 64, 96},
      {wire::MessageKind::ScoreReply, 1, 0, 0, 20},
      {wire::MessageKind::ScoreReply, 2, 1, 0, 20},
      {wire::MessageKind::FeatureRequest, 0, 1, 0, 16},
      {wire::MessageKind::FeaturePayload, 2, 1, 1000, 1028},
  };
  // 0.148 broadcast + 0.02 replies + 0.02 request + 2.02 payload
  CHECK(frame_latency(ledger, links) == doctest::Approx(2.208).epsilon(1e-12));

  CHECK(frame_latency(BandwidthLedger{}, links) == 0.0);

  BandwidthLedger bad;
  bad.entries = {{wire::MessageKind::ScoreReply, 1, 7, 0, 20}};
  testutil::throws_with<std::invalid_argument>(
      [&] { frame_latency(bad, links); }, "does not exist");
}

TEST_CASE("responder clouds are encoded in the vehicle frame") {
  const SceneFrame frame = tiny_frame();
  const Pipeline pipe = tiny_pipeline();
  // responder 0 sits 10 m ahead; its two points at x ~ -2 in its own frame
  // land around (8, 0) in the vehicle frame, one grid cell: row 8, col 10
  const PseudoImage img = encode_agent_image(frame, 0, pipe);
  bool any_nonzero = false;
  for (int c = 0; c < img.channels; ++c) {
    for (int y = 0; y < img.height; ++y) {
      for (int x = 0; x < img.width; ++x) {
        if (y == 8 && x == 10) {
          any_nonzero = any_nonzero || img.at(c, y, x) != 0.0f;
        } else {
          CHECK(img.at(c, y, x) == 0.0f);
        }
      }
    }
  }
  CHECK(any_nonzero);
  testutil::throws_with<std::invalid_argument>(
      [&] { encode_agent_image(frame, 2, pipe); }, "agent index out of range");
  testutil::throws_with<std::invalid_argument>(
      [&] { encode_agent_image(frame, -2, pipe); }, "agent index out of range");
}

}  // TEST_SUITE
