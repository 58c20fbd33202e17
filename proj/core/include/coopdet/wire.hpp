#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "coopdet/tensor.hpp"

namespace coopdet::wire {

// Frame layout, all little-endian:
//   0  u8[4]  magic "CP3D"
//   4  u8     version (1)
//   5  u8     message kind
//   6  u32    frame id
//  10  u16    sender id
//  12  u32    payload length in bytes
//  16  ...    payload
inline constexpr std::array<uint8_t, 4> kMagic = {'C', 'P', '3', 'D'};
inline constexpr uint8_t kVersion = 1;
inline constexpr size_t kHeaderSize = 16;

enum class MessageKind : uint8_t {
  QueryBroadcast = 1,
  ScoreReply = 2,
  FeatureRequest = 3,
  FeaturePayload = 4,
};

const char* kind_name(MessageKind kind);

// Vehicle -> everyone: the compact query plus the vehicle pose (x, y, z,
// yaw) the responders need to bring their clouds into the vehicle frame.
struct QueryBroadcast {
  std::vector<float> query;
  std::array<float, 4> pose{0, 0, 0, 0};
};

// Infrastructure -> vehicle: one matching score.
struct ScoreReply {
  float score = 0.0f;
};

// Vehicle -> chosen infrastructure: body-less request.
struct FeatureRequest {};

// Infrastructure -> vehicle: dimensions then the full feature tensor.
struct FeaturePayload {
  uint32_t channels = 0, height = 0, width = 0;
  std::vector<float> values;  // channels * height * width, row-major
};

FeaturePayload to_payload(const PseudoImage& image);
PseudoImage to_image(const FeaturePayload& payload);

struct ProtocolMessage {
  uint32_t frame_id = 0;
  uint16_t sender_id = 0;
  std::variant<QueryBroadcast, ScoreReply, FeatureRequest, FeaturePayload> payload;

  MessageKind kind() const;
};

class DecodeError : public std::runtime_error {
 public:
  DecodeError(size_t offset, const std::string& what)
      : std::runtime_error("offset " + std::to_string(offset) + ": " + what),
        offset_(offset) {}
  size_t offset() const { return offset_; }

 private:
  size_t offset_;
};

std::vector<uint8_t> encode_message(const ProtocolMessage& msg);
// Strict: the buffer must hold exactly one message. Throws DecodeError.
ProtocolMessage decode_message(const uint8_t* data, size_t size);
ProtocolMessage decode_message(const std::vector<uint8_t>& data);

// Size bookkeeping without materializing bytes. encoded = header + payload;
// counted = the content bytes the bandwidth ledger charges for (query
// vector, feature values; poses, scores, requests and framing ride free).
size_t encoded_size(const ProtocolMessage& msg);
size_t counted_size(const ProtocolMessage& msg);

// Message trace file: each record is a u32 LE byte length followed by one
// encoded message.
void write_trace(std::ostream& out, const std::vector<std::vector<uint8_t>>& messages);
std::vector<std::vector<uint8_t>> read_trace(std::istream& in);

// One-line human summary used by the inspect command.
std::string describe(const ProtocolMessage& msg);

}  // namespace coopdet::wire
