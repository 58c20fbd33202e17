#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "coopdet/attention.hpp"
#include "coopdet/pillars.hpp"
#include "coopdet/scenegen.hpp"
#include "coopdet/wire.hpp"

namespace coopdet {

// One point-to-point connection between the vehicle and a responder.
struct LinkModel {
  double capacity_bytes_per_s = 1.25e6;  // 10 Mbit/s
  double propagation_s = 0.002;
  double loss = 0.0;  // reserved for future experiments; validated, never applied
  void validate() const;
};

// What one message cost. `counted` charges only the exchanged content (query
// vector or feature values); `gross` includes framing, poses and dims too.
// `link` names the responder whose link carried it (-1 = all links at once,
// i.e. a broadcast).
struct BandwidthEntry {
  wire::MessageKind kind = wire::MessageKind::QueryBroadcast;
  uint16_t sender = 0;  // 0 = vehicle, k+1 = responder k
  int link = -1;
  uint64_t counted_bytes = 0;
  uint64_t gross_bytes = 0;
};

struct BandwidthLedger {
  uint32_t frame_id = 0;
  std::string policy;
  std::vector<BandwidthEntry> entries;

  uint64_t counted_total() const;
  uint64_t gross_total() const;
  uint64_t counted_by_kind(wire::MessageKind kind) const;
  size_t count_of_kind(wire::MessageKind kind) const;
  double counted_kb() const;  // counted_total / 1024
  double counted_mb() const;  // counted_total / 1024^2
};

// CSV: one row per message kind present in the ledger, counted bytes summed.
void write_ledger_csv_header(std::ostream& out);
void write_ledger_csv(std::ostream& out, const BandwidthLedger& ledger);

enum class PolicyKind { LocVehicle, RandSelect, CombAll, Learn2com };

std::string policy_name(PolicyKind kind);
// Throws std::invalid_argument listing the valid names.
PolicyKind parse_policy(const std::string& name);

struct Policy {
  PolicyKind kind = PolicyKind::LocVehicle;
  uint64_t seed = 0;  // draw stream for RandSelect
};

// Everything the agents share: the grid, the pillar encoder and the
// attention state. One instance serves all frames of a run.
struct Pipeline {
  PillarGrid grid;
  int omega = 100;
  uint64_t encode_seed = 1;  // pillar down-sampling streams
  SPointNetWeights encoder;
  AttentionState attention;
};

// Feature map of one agent in the shared frame (-1 = vehicle, else
// responder index). Responder clouds are transformed before encoding.
PseudoImage encode_agent_image(const SceneFrame& frame, int agent,
                               const Pipeline& pipeline);

struct FrameResult {
  PseudoImage fused;                 // 2C channels
  std::vector<int> selected;         // responders whose features were merged
  BandwidthLedger ledger;
  double latency_s = 0.0;
  bool degraded_to_local = false;    // policy had no responders to talk to
  std::vector<std::vector<uint8_t>> trace;  // encoded messages, if recorded
};

// Plays one frame under a policy. `links` must hold one entry per responder.
// Message sizes always reach the ledger; the encoded bytes themselves are
// only materialized when record_trace is set.
FrameResult run_frame(const SceneFrame& frame, const Policy& policy,
                      const std::vector<LinkModel>& links, const Pipeline& pipeline,
                      bool record_trace = false);

// Wall-clock of the handshake implied by a ledger: sequential phases in
// protocol order (broadcast, replies, request, payload), messages inside a
// phase ride their links in parallel, each transfer costing propagation
// plus counted bytes over capacity.
double frame_latency(const BandwidthLedger& ledger, const std::vector<LinkModel>& links);

}  // namespace coopdet
