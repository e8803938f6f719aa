/*
 Copyright 2026 The rwhil Authors

 Licensed under the Apache License, Version 2.0 (the "License");
 you may not use this file except in compliance with the License.
 You may obtain a copy of the License at

      https://www.apache.org/licenses/LICENSE-2.0

 Unless required by applicable law or agreed to in writing, software
 distributed under the License is distributed on an "AS IS" BASIS,
 WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 See the License for the specific language governing permissions and
 limitations under the License.
*/

#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <optional>
#include <vector>

namespace rwhil {

// Frame layout (all integers little-endian, normative):
//   header, 17 bytes: version u8 | topic u16 | seq u64 | payload_len u32
//                     | crc16 of the preceding 15 bytes
//   body: timestamp u64 (ns since run epoch) | payload | crc32 of
//         timestamp+payload
// A zero-payload frame is exactly 29 bytes.

inline constexpr std::uint8_t kProtocolVersion = 1;
inline constexpr std::size_t kHeaderSize = 17;
inline constexpr std::size_t kFrameOverhead = 29;
inline constexpr std::size_t kMaxPayload = 64 * 1024;

/// CRC-16/CCITT-FALSE: poly 0x1021, init 0xFFFF, no reflection.
inline std::uint16_t crc16_ccitt(const std::uint8_t* data, std::size_t len) {
    std::uint16_t crc = 0xFFFF;
    for (std::size_t i = 0; i < len; ++i) {
        crc ^= static_cast<std::uint16_t>(data[i]) << 8;
        for (int bit = 0; bit < 8; ++bit) {
            crc = (crc & 0x8000) ? static_cast<std::uint16_t>((crc << 1) ^ 0x1021)
                                 : static_cast<std::uint16_t>(crc << 1);
        }
    }
    return crc;
}

/// CRC-32 (IEEE 802.3, reflected), table-driven.
inline std::uint32_t crc32_ieee(const std::uint8_t* data, std::size_t len,
                                std::uint32_t seed = 0xFFFFFFFFu) {
    static const auto table = [] {
        std::array<std::uint32_t, 256> t{};
        for (std::uint32_t i = 0; i < 256; ++i) {
            std::uint32_t c = i;
            for (int k = 0; k < 8; ++k) {
                c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
            }
            t[i] = c;
        }
        return t;
    }();
    std::uint32_t crc = seed;
    for (std::size_t i = 0; i < len; ++i) {
        crc = table[(crc ^ data[i]) & 0xFF] ^ (crc >> 8);
    }
    return crc ^ 0xFFFFFFFFu;
}

namespace wire {

inline void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
    out.push_back(static_cast<std::uint8_t>(v));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
}
inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) {
        out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
}
inline void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) {
        out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
}
inline void put_f64(std::vector<std::uint8_t>& out, double v) {
    put_u64(out, std::bit_cast<std::uint64_t>(v));
}

inline std::uint16_t get_u16(const std::uint8_t* p) {
    return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}
inline std::uint32_t get_u32(const std::uint8_t* p) {
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) {
        v = (v << 8) | p[i];
    }
    return v;
}
inline std::uint64_t get_u64(const std::uint8_t* p) {
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) {
        v = (v << 8) | p[i];
    }
    return v;
}
inline double get_f64(const std::uint8_t* p) {
    return std::bit_cast<double>(get_u64(p));
}

}  // namespace wire

struct Envelope {
    std::uint8_t version = kProtocolVersion;
    std::uint16_t topic = 0;
    std::uint64_t seq = 0;
    std::uint64_t timestamp_ns = 0;  ///< publisher clock, ns since run epoch
    std::vector<std::uint8_t> payload;
};

enum class DecodeError : std::uint8_t {
    none = 0,
    truncated,
    header_crc,
    payload_crc,
    version_mismatch,
    payload_too_large,
};

inline const char* decode_error_name(DecodeError e) {
    switch (e) {
        case DecodeError::none: return "none";
        case DecodeError::truncated: return "truncated";
        case DecodeError::header_crc: return "header_crc";
        case DecodeError::payload_crc: return "payload_crc";
        case DecodeError::version_mismatch: return "version_mismatch";
        case DecodeError::payload_too_large: return "payload_too_large";
    }
    return "unknown";
}

inline std::vector<std::uint8_t> encode_frame(const Envelope& env) {
    std::vector<std::uint8_t> out;
    out.reserve(kFrameOverhead + env.payload.size());
    out.push_back(env.version);
    wire::put_u16(out, env.topic);
    wire::put_u64(out, env.seq);
    wire::put_u32(out, static_cast<std::uint32_t>(env.payload.size()));
    wire::put_u16(out, crc16_ccitt(out.data(), 15));
    wire::put_u64(out, env.timestamp_ns);
    out.insert(out.end(), env.payload.begin(), env.payload.end());
    const std::uint32_t crc = crc32_ieee(out.data() + kHeaderSize, 8 + env.payload.size());
    wire::put_u32(out, crc);
    return out;
}

/// Decode one complete frame from a buffer. On failure returns nullopt with
/// the reason in `err`.
inline std::optional<Envelope> decode_frame(const std::uint8_t* data, std::size_t len,
                                            DecodeError* err = nullptr) {
    auto fail = [&](DecodeError e) -> std::optional<Envelope> {
        if (err != nullptr) {
            *err = e;
        }
        return std::nullopt;
    };
    if (len < kFrameOverhead) {
        return fail(DecodeError::truncated);
    }
    if (crc16_ccitt(data, 15) != wire::get_u16(data + 15)) {
        return fail(DecodeError::header_crc);
    }
    Envelope env;
    env.version = data[0];
    if (env.version != kProtocolVersion) {
        return fail(DecodeError::version_mismatch);
    }
    env.topic = wire::get_u16(data + 1);
    env.seq = wire::get_u64(data + 3);
    const std::uint32_t payload_len = wire::get_u32(data + 11);
    if (payload_len > kMaxPayload) {
        return fail(DecodeError::payload_too_large);
    }
    if (len < kFrameOverhead + payload_len) {
        return fail(DecodeError::truncated);
    }
    env.timestamp_ns = wire::get_u64(data + kHeaderSize);
    if (crc32_ieee(data + kHeaderSize, 8 + payload_len) !=
        wire::get_u32(data + kHeaderSize + 8 + payload_len)) {
        return fail(DecodeError::payload_crc);
    }
    env.payload.assign(data + kHeaderSize + 8, data + kHeaderSize + 8 + payload_len);
    if (err != nullptr) {
        *err = DecodeError::none;
    }
    return env;
}

struct FrameCounters {
    std::uint64_t delivered = 0;
    std::uint64_t header_crc_errors = 0;
    std::uint64_t payload_crc_errors = 0;
    std::uint64_t version_errors = 0;
    std::uint64_t oversize_errors = 0;

    std::uint64_t crc_errors() const { return header_crc_errors + payload_crc_errors; }
};

/// Reassembles frames from a byte stream. Corrupt frames are dropped and
/// counted; a corrupt header forces a one-byte resync scan since its length
/// field cannot be trusted.
class FrameReader {
public:
    std::vector<Envelope> feed(const std::uint8_t* data, std::size_t len) {
        buffer_.insert(buffer_.end(), data, data + len);
        std::vector<Envelope> frames;
        std::size_t pos = 0;
        while (buffer_.size() - pos >= kHeaderSize) {
            const std::uint8_t* p = buffer_.data() + pos;
            if (crc16_ccitt(p, 15) != wire::get_u16(p + 15)) {
                ++counters_.header_crc_errors;
                ++pos;
                continue;
            }
            const std::uint32_t payload_len = wire::get_u32(p + 11);
            if (payload_len > kMaxPayload) {
                ++counters_.oversize_errors;
                ++pos;
                continue;
            }
            const std::size_t frame_len = kFrameOverhead + payload_len;
            if (buffer_.size() - pos < frame_len) {
                break;  // wait for the rest of the frame
            }
            DecodeError err = DecodeError::none;
            auto env = decode_frame(p, frame_len, &err);
            if (env) {
                ++counters_.delivered;
                frames.push_back(std::move(*env));
            } else if (err == DecodeError::payload_crc) {
                ++counters_.payload_crc_errors;
            } else if (err == DecodeError::version_mismatch) {
                ++counters_.version_errors;
            }
            pos += frame_len;
        }
        buffer_.erase(buffer_.begin(), buffer_.begin() + static_cast<long>(pos));
        return frames;
    }

    const FrameCounters& counters() const { return counters_; }

private:
    std::vector<std::uint8_t> buffer_;
    FrameCounters counters_;
};

}  // namespace rwhil
