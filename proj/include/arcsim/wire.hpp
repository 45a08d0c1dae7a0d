#pragma once

// Bus wire format: a 4-byte little-endian payload length followed by a UTF-8
// JSON object whose keys appear in the fixed order topic, type, seq, stamp, data.

#include <array>
#include <charconv>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "arcsim/errors.hpp"
#include "json.hpp"

namespace arcsim {

using Json = nlohmann::ordered_json;

inline constexpr std::size_t kMaxPayloadBytes = std::size_t{1} << 20;
inline constexpr std::size_t kFrameHeaderBytes = 4;
inline constexpr std::uint16_t kDefaultBusPort = 7781;

struct Message {
  std::string topic;
  std::string type;
  std::uint64_t seq = 0;
  double stamp = 0.0;
  Json data = Json::object();

  friend bool operator==(const Message&, const Message&) = default;
};

namespace detail {

inline std::vector<std::string_view> split_path(std::string_view path) {
  std::vector<std::string_view> parts;
  if (path.empty() || path.front() != '/') return parts;
  std::size_t start = 1;
  while (start <= path.size()) {
    const std::size_t slash = path.find('/', start);
    const std::size_t end = slash == std::string_view::npos ? path.size() : slash;
    parts.push_back(path.substr(start, end - start));
    if (slash == std::string_view::npos) break;
    start = slash + 1;
  }
  return parts;
}

inline bool is_decimal(std::string_view s) {
  if (s.empty() || s.size() > 9) return false;
  for (char c : s) {
    if (c < '0' || c > '9') return false;
  }
  return true;
}

inline bool is_name(std::string_view s) {
  if (s.empty()) return false;
  for (char c : s) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_' ||
                    c == '-';
    if (!ok) return false;
  }
  return true;
}

inline bool is_module_leaf(std::string_view s) { return s == "state" || s == "cmd" || s == "imu"; }

inline void put_u32_le(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

}  // namespace detail

/// "/module/<id>/{state,cmd,imu}" or "/system/<name>".
inline bool is_valid_topic(std::string_view topic) {
  const auto parts = detail::split_path(topic);
  if (parts.size() == 3 && parts[0] == "module") {
    return detail::is_decimal(parts[1]) && detail::is_module_leaf(parts[2]);
  }
  if (parts.size() == 2 && parts[0] == "system") return detail::is_name(parts[1]);
  return false;
}

/// Topic patterns may replace any non-root segment with "*".
inline bool is_valid_pattern(std::string_view pattern) {
  const auto parts = detail::split_path(pattern);
  if (parts.size() == 3 && parts[0] == "module") {
    return (parts[1] == "*" || detail::is_decimal(parts[1])) && (parts[2] == "*" || detail::is_module_leaf(parts[2]));
  }
  if (parts.size() == 2 && parts[0] == "system") return parts[1] == "*" || detail::is_name(parts[1]);
  return false;
}

inline bool topic_matches(std::string_view pattern, std::string_view topic) {
  const auto p = detail::split_path(pattern);
  const auto t = detail::split_path(topic);
  if (p.size() != t.size() || p.empty()) return false;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] != "*" && p[i] != t[i]) return false;
  }
  return true;
}

inline std::string module_topic(int id, std::string_view leaf) {
  return "/module/" + std::to_string(id) + "/" + std::string(leaf);
}

inline std::optional<int> module_id_of(std::string_view topic) {
  const auto parts = detail::split_path(topic);
  if (parts.size() != 3 || parts[0] != "module" || !detail::is_decimal(parts[1])) return std::nullopt;
  int id = 0;
  std::from_chars(parts[1].data(), parts[1].data() + parts[1].size(), id);
  return id;
}

inline std::string encode_payload(const Message& m) {
  Json j;
  j["topic"] = m.topic;
  j["type"] = m.type;
  j["seq"] = m.seq;
  j["stamp"] = m.stamp;
  j["data"] = m.data;
  return j.dump();
}

inline std::string encode_frame(const Message& m, std::size_t max_payload = kMaxPayloadBytes) {
  if (!is_valid_topic(m.topic)) throw FrameError("invalid topic: " + m.topic);
  if (!m.data.is_object()) throw FrameError("message data must be a JSON object");
  std::string payload = encode_payload(m);
  if (payload.size() > max_payload) {
    throw FrameError("payload of " + std::to_string(payload.size()) + " bytes exceeds limit of " +
                     std::to_string(max_payload));
  }
  std::string out;
  out.reserve(kFrameHeaderBytes + payload.size());
  detail::put_u32_le(out, static_cast<std::uint32_t>(payload.size()));
  out += payload;
  return out;
}

inline std::uint32_t read_frame_length(std::string_view header) {
  if (header.size() < kFrameHeaderBytes) throw FrameError("truncated frame header");
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(header[static_cast<std::size_t>(i)]);
  return v;
}

inline Message decode_payload(std::string_view payload) {
  Json j = Json::parse(payload.begin(), payload.end(), nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw FrameError("payload is not a JSON object");
  const auto require = [&](const char* key) -> const Json& {
    auto it = j.find(key);
    if (it == j.end()) throw FrameError(std::string("payload missing field '") + key + "'");
    return *it;
  };
  Message m;
  const Json& topic = require("topic");
  const Json& type = require("type");
  const Json& seq = require("seq");
  const Json& stamp = require("stamp");
  const Json& data = require("data");
  if (!topic.is_string() || !type.is_string()) throw FrameError("topic and type must be strings");
  if (!seq.is_number_unsigned()) throw FrameError("seq must be an unsigned integer");
  if (!stamp.is_number()) throw FrameError("stamp must be a number");
  if (!data.is_object()) throw FrameError("data must be an object");
  m.topic = topic.get<std::string>();
  if (!is_valid_topic(m.topic)) throw FrameError("invalid topic: " + m.topic);
  m.type = type.get<std::string>();
  m.seq = seq.get<std::uint64_t>();
  m.stamp = stamp.get<double>();
  m.data = data;
  return m;
}

/// Decodes exactly one complete frame.
inline Message decode_frame(std::string_view bytes, std::size_t max_payload = kMaxPayloadBytes) {
  const std::uint32_t len = read_frame_length(bytes);
  if (len > max_payload) throw FrameError("frame exceeds size limit");
  if (bytes.size() != kFrameHeaderBytes + len) throw FrameError("frame length does not match buffer");
  return decode_payload(bytes.substr(kFrameHeaderBytes));
}

/// Incremental splitter for a byte stream of frames.
class FrameDecoder {
 public:
  explicit FrameDecoder(std::size_t max_payload = kMaxPayloadBytes) : max_payload_(max_payload) {}

  void feed(std::string_view bytes) { buffer_.append(bytes); }

  /// Next complete frame (header included), if one is buffered.
  std::optional<std::string> next_frame() {
    if (buffer_.size() - offset_ < kFrameHeaderBytes) return std::nullopt;
    const std::uint32_t len = read_frame_length(std::string_view(buffer_).substr(offset_));
    if (len > max_payload_) throw FrameError("frame exceeds size limit");
    if (buffer_.size() - offset_ < kFrameHeaderBytes + len) return std::nullopt;
    std::string frame = buffer_.substr(offset_, kFrameHeaderBytes + len);
    offset_ += kFrameHeaderBytes + len;
    if (offset_ == buffer_.size()) {
      buffer_.clear();
      offset_ = 0;
    } else if (offset_ > 65536) {
      buffer_.erase(0, offset_);
      offset_ = 0;
    }
    return frame;
  }

 private:
  std::size_t max_payload_;
  std::string buffer_;
  std::size_t offset_ = 0;
};

}  // namespace arcsim
