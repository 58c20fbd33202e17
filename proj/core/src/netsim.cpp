#include "coopdet/netsim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <stdexcept>

#include "coopdet/rng.hpp"

namespace coopdet {

void LinkModel::validate() const {
  if (!(capacity_bytes_per_s > 0.0))
    throw std::invalid_argument("link capacity must be positive");
  if (propagation_s < 0.0)
    throw std::invalid_argument("propagation delay cannot be negative");
  if (!(loss >= 0.0 && loss < 1.0))
    throw std::invalid_argument("loss fraction must lie in [0, 1)");
}

uint64_t BandwidthLedger::counted_total() const {
  uint64_t total = 0;
  for (const auto& e : entries) total += e.counted_bytes;
  return total;
}

uint64_t BandwidthLedger::gross_total() const {
  uint64_t total = 0;
  for (const auto& e : entries) total += e.gross_bytes;
  return total;
}

uint64_t BandwidthLedger::counted_by_kind(wire::MessageKind kind) const {
  uint64_t total = 0;
  for (const auto& e : entries)
    if (e.kind == kind) total += e.counted_bytes;
  return total;
}

size_t BandwidthLedger::count_of_kind(wire::MessageKind kind) const {
  size_t n = 0;
  for (const auto& e : entries)
    if (e.kind == kind) ++n;
  return n;
}

double BandwidthLedger::counted_kb() const {
  return static_cast<double>(counted_total()) / 1024.0;
}

double BandwidthLedger::counted_mb() const {
  return static_cast<double>(counted_total()) / (1024.0 * 1024.0);
}

void write_ledger_csv_header(std::ostream& out) {
  out << "frame,policy,kind,bytes,kb,gross_bytes\n";
}

void write_ledger_csv(std::ostream& out, const BandwidthLedger& ledger) {
  constexpr wire::MessageKind kinds[] = {
      wire::MessageKind::QueryBroadcast, wire::MessageKind::ScoreReply,
      wire::MessageKind::FeatureRequest, wire::MessageKind::FeaturePayload};
  for (wire::MessageKind kind : kinds) {
    uint64_t counted = 0, gross = 0;
    bool present = false;
    for (const auto& e : ledger.entries) {
      if (e.kind != kind) continue;
      present = true;
      counted += e.counted_bytes;
      gross += e.gross_bytes;
    }
    if (!present) continue;
    char kb[64];
    std::snprintf(kb, sizeof kb, "%.6f", static_cast<double>(counted) / 1024.0);
    out << ledger.frame_id << ',' << ledger.policy << ',' << wire::kind_name(kind)
        << ',' << counted << ',' << kb << ',' << gross << "\n";
  }
}

std::string policy_name(PolicyKind kind) {
  switch (kind) {
    case PolicyKind::LocVehicle: return "loc_vehicle";
    case PolicyKind::RandSelect: return "rand_select";
    case PolicyKind::CombAll: return "comb_all";
    case PolicyKind::Learn2com: return "learn2com";
  }
  return "?";
}

PolicyKind parse_policy(const std::string& name) {
  if (name == "loc_vehicle") return PolicyKind::LocVehicle;
  if (name == "rand_select") return PolicyKind::RandSelect;
  if (name == "comb_all") return PolicyKind::CombAll;
  if (name == "learn2com") return PolicyKind::Learn2com;
  throw std::invalid_argument(
      "unknown policy '" + name +
      "' (expected loc_vehicle, rand_select, comb_all or learn2com)");
}

PseudoImage encode_agent_image(const SceneFrame& frame, int agent,
                               const Pipeline& pipeline) {
  const PointCloud* cloud = nullptr;
  PointCloud transformed;
  if (agent == -1) {
    cloud = &frame.vehicle_obs.cloud;
  } else if (agent >= 0 && agent < static_cast<int>(frame.infra_obs.size())) {
    transformed = transform_cloud_to_vehicle(
        frame.infra_obs[static_cast<size_t>(agent)].cloud,
        frame.infra_poses[static_cast<size_t>(agent)], frame.vehicle_pose);
    cloud = &transformed;
  } else {
    throw std::invalid_argument("agent index out of range: " + std::to_string(agent));
  }
  return encode_cloud(*cloud, pipeline.grid, pipeline.omega, pipeline.encode_seed,
                      pipeline.encoder);
}

namespace {

struct MessageLog {
  BandwidthLedger* ledger;
  std::vector<std::vector<uint8_t>>* trace;  // null when not recording

  void log(const wire::ProtocolMessage& msg, int link) {
    BandwidthEntry entry;
    entry.kind = msg.kind();
    entry.sender = msg.sender_id;
    entry.link = link;
    entry.counted_bytes = wire::counted_size(msg);
    entry.gross_bytes = wire::encoded_size(msg);
    ledger->entries.push_back(entry);
    if (trace) trace->push_back(wire::encode_message(msg));
  }
};

PseudoImage zero_like(const PseudoImage& img) {
  return PseudoImage(img.channels, img.height, img.width);
}

}  // namespace

FrameResult run_frame(const SceneFrame& frame, const Policy& policy,
                      const std::vector<LinkModel>& links, const Pipeline& pipeline,
                      bool record_trace) {
  const int n = static_cast<int>(frame.infra_poses.size());
  if (static_cast<int>(links.size()) != n)
    throw std::invalid_argument("one link per responder required");
  for (const auto& link : links) link.validate();
  if (static_cast<int>(frame.infra_obs.size()) != n)
    throw std::invalid_argument("frame is missing responder observations");

  FrameResult result;
  result.ledger.frame_id = frame.frame_id;
  result.ledger.policy = policy_name(policy.kind);
  MessageLog log{&result.ledger, record_trace ? &result.trace : nullptr};

  const PseudoImage local = encode_agent_image(frame, -1, pipeline);

  const bool wants_peers = policy.kind != PolicyKind::LocVehicle;
  if (!wants_peers || n == 0) {
    result.fused = fuse_inference(local, zero_like(local));
    result.degraded_to_local = wants_peers;  // asked for help, nobody there
    result.latency_s = 0.0;
    return result;
  }

  switch (policy.kind) {
    case PolicyKind::LocVehicle:
      break;  // handled above
    case PolicyKind::RandSelect: {
      const int pick = static_cast<int>(
          SplitMix64(policy.seed).fork(frame.frame_id).uniform_index(
              static_cast<uint64_t>(n)));
      const PseudoImage peer = encode_agent_image(frame, pick, pipeline);
      wire::ProtocolMessage payload;
      payload.frame_id = frame.frame_id;
      payload.sender_id = static_cast<uint16_t>(pick + 1);
      payload.payload = wire::to_payload(peer);
      log.log(payload, pick);
      result.fused = fuse_inference(local, peer);  // weight one, no refinement
      result.selected = {pick};
      break;
    }
    case PolicyKind::CombAll: {
      std::vector<PseudoImage> peers;
      peers.reserve(static_cast<size_t>(n));
      for (int k = 0; k < n; ++k) {
        peers.push_back(encode_agent_image(frame, k, pipeline));
        wire::ProtocolMessage payload;
        payload.frame_id = frame.frame_id;
        payload.sender_id = static_cast<uint16_t>(k + 1);
        payload.payload = wire::to_payload(peers.back());
        log.log(payload, k);
        result.selected.push_back(k);
      }
      ScoreSet uniform;
      uniform.raw.assign(static_cast<size_t>(n), 0.0);
      uniform.normalized.assign(static_cast<size_t>(n), 1.0 / n);
      uniform.ids.resize(static_cast<size_t>(n));
      for (int k = 0; k < n; ++k) uniform.ids[static_cast<size_t>(k)] = k;
      result.fused = fuse_training(local, peers, uniform);
      break;
    }
    case PolicyKind::Learn2com: {
      // 1. The vehicle broadcasts its query.
      const QueryVector query = encode_query(local, pipeline.attention.query_proj);
      wire::QueryBroadcast qb;
      qb.query.resize(query.size());
      for (size_t i = 0; i < query.size(); ++i)
        qb.query[i] = static_cast<float>(query[i]);
      qb.pose = {static_cast<float>(frame.vehicle_pose.position[0]),
                 static_cast<float>(frame.vehicle_pose.position[1]),
                 static_cast<float>(frame.vehicle_pose.position[2]),
                 static_cast<float>(frame.vehicle_pose.yaw)};
      wire::ProtocolMessage qmsg;
      qmsg.frame_id = frame.frame_id;
      qmsg.sender_id = 0;
      qmsg.payload = qb;
      log.log(qmsg, -1);

      // 2. Every responder scores the query against its own key and replies.
      //    Both directions run on what actually crossed the wire: responders
      //    see the float32 query, the vehicle sees float32 scores.
      QueryVector wire_query(query.size());
      for (size_t i = 0; i < query.size(); ++i)
        wire_query[i] = static_cast<double>(qb.query[i]);
      std::vector<double> raw(static_cast<size_t>(n));
      for (int k = 0; k < n; ++k) {
        const PseudoImage peer = encode_agent_image(frame, k, pipeline);
        const KeyVector key = encode_key(peer, pipeline.attention.key_proj);
        const double t = matching_score(wire_query, key, pipeline.attention.w_a);
        wire::ProtocolMessage reply;
        reply.frame_id = frame.frame_id;
        reply.sender_id = static_cast<uint16_t>(k + 1);
        reply.payload = wire::ScoreReply{static_cast<float>(t)};
        log.log(reply, k);
        raw[static_cast<size_t>(k)] = static_cast<double>(static_cast<float>(t));
      }

      // 3. Pick the best responder, request, receive, refine, fuse.
      const ScoreSet scores = normalize_scores(raw);
      const int pick = select_infrastructure(scores);
      wire::ProtocolMessage request;
      request.frame_id = frame.frame_id;
      request.sender_id = 0;
      request.payload = wire::FeatureRequest{};
      log.log(request, pick);

      const PseudoImage peer = encode_agent_image(frame, pick, pipeline);
      wire::ProtocolMessage payload;
      payload.frame_id = frame.frame_id;
      payload.sender_id = static_cast<uint16_t>(pick + 1);
      payload.payload = wire::to_payload(peer);
      log.log(payload, pick);

      const PseudoImage refined =
          refine_feature(peer, scores.normalized[static_cast<size_t>(pick)]);
      result.fused = fuse_inference(local, refined);
      result.selected = {pick};
      break;
    }
  }

  result.latency_s = frame_latency(result.ledger, links);
  return result;
}

double frame_latency(const BandwidthLedger& ledger, const std::vector<LinkModel>& links) {
  for (const auto& link : links) link.validate();
  constexpr wire::MessageKind phases[] = {
      wire::MessageKind::QueryBroadcast, wire::MessageKind::ScoreReply,
      wire::MessageKind::FeatureRequest, wire::MessageKind::FeaturePayload};

  double total = 0.0;
  for (wire::MessageKind phase : phases) {
    double slowest = -1.0;
    for (const auto& e : ledger.entries) {
      if (e.kind != phase) continue;
      if (e.link == -1) {
        // Broadcast: every link carries it at once.
        for (const auto& link : links) {
          const double t = link.propagation_s +
                           static_cast<double>(e.counted_bytes) / link.capacity_bytes_per_s;
          slowest = std::max(slowest, t);
        }
        if (links.empty()) slowest = std::max(slowest, 0.0);
      } else {
        if (e.link < 0 || e.link >= static_cast<int>(links.size()))
          throw std::invalid_argument("ledger entry names a link that does not exist");
        const LinkModel& link = links[static_cast<size_t>(e.link)];
        const double t = link.propagation_s +
                         static_cast<double>(e.counted_bytes) / link.capacity_bytes_per_s;
        slowest = std::max(slowest, t);
      }
    }
    if (slowest >= 0.0) total += slowest;
  }
  return total;
}

}  // namespace coopdet
