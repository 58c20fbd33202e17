#include "coopdet/wire.hpp"

#include <istream>
#include <ostream>
#include <sstream>

#include "coopdet/bytes.hpp"

namespace coopdet::wire {

const char* kind_name(MessageKind kind) {
  switch (kind) {
    case MessageKind::QueryBroadcast: return "query_broadcast";
    case MessageKind::ScoreReply: return "score_reply";
    case MessageKind::FeatureRequest: return "feature_request";
    case MessageKind::FeaturePayload: return "feature_payload";
  }
  return "?";
}

FeaturePayload to_payload(const PseudoImage& image) {
  FeaturePayload p;
  p.channels = static_cast<uint32_t>(image.channels);
  p.height = static_cast<uint32_t>(image.height);
  p.width = static_cast<uint32_t>(image.width);
  p.values = image.data;
  return p;
}

PseudoImage to_image(const FeaturePayload& payload) {
  PseudoImage img(static_cast<int>(payload.channels), static_cast<int>(payload.height),
                  static_cast<int>(payload.width));
  if (payload.values.size() != img.data.size())
    throw std::invalid_argument("feature payload value count does not match dims");
  img.data = payload.values;
  return img;
}

MessageKind ProtocolMessage::kind() const {
  switch (payload.index()) {
    case 0: return MessageKind::QueryBroadcast;
    case 1: return MessageKind::ScoreReply;
    case 2: return MessageKind::FeatureRequest;
    default: return MessageKind::FeaturePayload;
  }
}

namespace {

size_t payload_size(const ProtocolMessage& msg) {
  switch (msg.kind()) {
    case MessageKind::QueryBroadcast:
      return std::get<QueryBroadcast>(msg.payload).query.size() * 4 + 16;
    case MessageKind::ScoreReply:
      return 4;
    case MessageKind::FeatureRequest:
      return 0;
    case MessageKind::FeaturePayload:
      return 12 + std::get<FeaturePayload>(msg.payload).values.size() * 4;
  }
  return 0;
}

}  // namespace

size_t encoded_size(const ProtocolMessage& msg) {
  return kHeaderSize + payload_size(msg);
}

size_t counted_size(const ProtocolMessage& msg) {
  switch (msg.kind()) {
    case MessageKind::QueryBroadcast:
      return std::get<QueryBroadcast>(msg.payload).query.size() * 4;
    case MessageKind::FeaturePayload:
      return std::get<FeaturePayload>(msg.payload).values.size() * 4;
    default:
      return 0;
  }
}

std::vector<uint8_t> encode_message(const ProtocolMessage& msg) {
  std::vector<uint8_t> out;
  out.reserve(encoded_size(msg));
  for (uint8_t m : kMagic) put_u8(out, m);
  put_u8(out, kVersion);
  put_u8(out, static_cast<uint8_t>(msg.kind()));
  put_u32(out, msg.frame_id);
  put_u16(out, msg.sender_id);
  put_u32(out, static_cast<uint32_t>(payload_size(msg)));

  switch (msg.kind()) {
    case MessageKind::QueryBroadcast: {
      const auto& q = std::get<QueryBroadcast>(msg.payload);
      for (float v : q.query) put_f32(out, v);
      for (float v : q.pose) put_f32(out, v);
      break;
    }
    case MessageKind::ScoreReply:
      put_f32(out, std::get<ScoreReply>(msg.payload).score);
      break;
    case MessageKind::FeatureRequest:
      break;
    case MessageKind::FeaturePayload: {
      const auto& f = std::get<FeaturePayload>(msg.payload);
      put_u32(out, f.channels);
      put_u32(out, f.height);
      put_u32(out, f.width);
      for (float v : f.values) put_f32(out, v);
      break;
    }
  }
  return out;
}

ProtocolMessage decode_message(const uint8_t* data, size_t size) {
  if (size < kHeaderSize)
    throw DecodeError(size, "buffer shorter than the 16-byte header");
  for (size_t i = 0; i < 4; ++i)
    if (data[i] != kMagic[i]) throw DecodeError(i, "bad magic");
  ByteReader r(data + 4, size - 4);

  const uint8_t version = r.u8();
  if (version != kVersion)
    throw DecodeError(4, "unsupported version " + std::to_string(version));
  const uint8_t kind_raw = r.u8();
  if (kind_raw < 1 || kind_raw > 4)
    throw DecodeError(5, "unknown message kind " + std::to_string(kind_raw));
  const MessageKind kind = static_cast<MessageKind>(kind_raw);

  ProtocolMessage msg;
  msg.frame_id = r.u32();
  msg.sender_id = r.u16();
  const uint32_t len = r.u32();
  if (static_cast<uint64_t>(len) != size - kHeaderSize)
    throw DecodeError(12, "payload length " + std::to_string(len) +
                              " does not match buffer (" +
                              std::to_string(size - kHeaderSize) + " bytes follow)");

  switch (kind) {
    case MessageKind::QueryBroadcast: {
      if (len < 16 || (len - 16) % 4 != 0)
        throw DecodeError(12, "query broadcast payload must be 4-byte floats plus a pose");
      QueryBroadcast q;
      q.query.resize((len - 16) / 4);
      for (float& v : q.query) v = r.f32();
      for (float& v : q.pose) v = r.f32();
      msg.payload = std::move(q);
      break;
    }
    case MessageKind::ScoreReply: {
      if (len != 4) throw DecodeError(12, "score reply payload must be 4 bytes");
      msg.payload = ScoreReply{r.f32()};
      break;
    }
    case MessageKind::FeatureRequest: {
      if (len != 0) throw DecodeError(12, "feature request carries no payload");
      msg.payload = FeatureRequest{};
      break;
    }
    case MessageKind::FeaturePayload: {
      if (len < 12) throw DecodeError(12, "feature payload shorter than its dims");
      FeaturePayload f;
      f.channels = r.u32();
      f.height = r.u32();
      f.width = r.u32();
      const uint64_t n =
          static_cast<uint64_t>(f.channels) * f.height * f.width;
      if (n * 4 != static_cast<uint64_t>(len) - 12)
        throw DecodeError(kHeaderSize, "feature dims disagree with payload length");
      f.values.resize(static_cast<size_t>(n));
      for (float& v : f.values) v = r.f32();
      msg.payload = std::move(f);
      break;
    }
  }
  return msg;
}

ProtocolMessage decode_message(const std::vector<uint8_t>& data) {
  return decode_message(data.data(), data.size());
}

void write_trace(std::ostream& out, const std::vector<std::vector<uint8_t>>& messages) {
  for (const auto& m : messages) {
    std::vector<uint8_t> len;
    put_u32(len, static_cast<uint32_t>(m.size()));
    out.write(reinterpret_cast<const char*>(len.data()), 4);
    out.write(reinterpret_cast<const char*>(m.data()),
              static_cast<std::streamsize>(m.size()));
  }
  if (!out) throw std::runtime_error("trace write failed");
}

std::vector<std::vector<uint8_t>> read_trace(std::istream& in) {
  std::vector<std::vector<uint8_t>> out;
  for (;;) {
    uint8_t lenbuf[4];
    in.read(reinterpret_cast<char*>(lenbuf), 4);
    if (in.gcount() == 0 && in.eof()) break;
    if (in.gcount() != 4) throw std::runtime_error("trace record length truncated");
    ByteReader r(lenbuf, 4);
    const uint32_t len = r.u32();
    std::vector<uint8_t> body(len);
    in.read(reinterpret_cast<char*>(body.data()), len);
    if (static_cast<uint32_t>(in.gcount()) != len)
      throw std::runtime_error("trace record body truncated");
    out.push_back(std::move(body));
  }
  return out;
}

std::string describe(const ProtocolMessage& msg) {
  std::ostringstream os;
  os << kind_name(msg.kind()) << " frame=" << msg.frame_id
     << " sender=" << msg.sender_id;
  switch (msg.kind()) {
    case MessageKind::QueryBroadcast:
      os << " query_dims=" << std::get<QueryBroadcast>(msg.payload).query.size();
      break;
    case MessageKind::ScoreReply:
      os << " score=" << std::get<ScoreReply>(msg.payload).score;
      break;
    case MessageKind::FeatureRequest:
      break;
    case MessageKind::FeaturePayload: {
      const auto& f = std::get<FeaturePayload>(msg.payload);
      os << " dims=" << f.channels << "x" << f.height << "x" << f.width;
      break;
    }
  }
  os << " bytes=" << encoded_size(msg);
  return os.str();
}

}  // namespace coopdet::wire
