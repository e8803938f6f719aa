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

#include <catch2/catch_amalgamated.hpp>

#include <fstream>
#include <map>
#include <sstream>

#include "rwhil/rng.hpp"
#include "rwhil/topics.hpp"
#include "rwhil/wire.hpp"

using namespace rwhil;

namespace {

std::vector<std::uint8_t> from_hex(const std::string& hex) {
    std::vector<std::uint8_t> out;
    for (std::size_t i = 0; i + 1 < hex.size(); i += 2) {
        out.push_back(static_cast<std::uint8_t>(
            std::stoul(hex.substr(i, 2), nullptr, 16)));
    }
    return out;
}

std::map<std::string, std::vector<std::uint8_t>> load_golden_frames() {
    std::ifstream in(std::string(RWHIL_SOURCE_DIR) + "/tests/data/golden_frames.hex");
    REQUIRE(in.good());
    std::map<std::string, std::vector<std::uint8_t>> frames;
    std::string name, hex;
    while (in >> name >> hex) {
        frames[name] = from_hex(hex);
    }
    return frames;
}

Envelope random_envelope(Rng& rng) {
    Envelope env;
    env.topic = static_cast<std::uint16_t>(rng.next_u64() % 600);
    env.seq = rng.next_u64();
    env.timestamp_ns = rng.next_u64();
    const auto len = rng.next_u64() % 256;
    env.payload.resize(len);
    for (auto& b : env.payload) {
        b = static_cast<std::uint8_t>(rng.next_u64());
    }
    return env;
}

}  // namespace

TEST_CASE("zero-payload frame is exactly 29 bytes") {
    Envelope env;
    env.topic = static_cast<std::uint16_t>(Topic::heartbeat);
    env.seq = 1;
    CHECK(encode_frame(env).size() == 29);
}

TEST_CASE("golden frames decode bit-exactly and re-encode to the same bytes") {
    const auto frames = load_golden_frames();
    REQUIRE(frames.size() == 4);

    {
        const auto& bytes = frames.at("heartbeat");
        REQUIRE(bytes.size() == 29);
        const auto env = decode_frame(bytes.data(), bytes.size());
        REQUIRE(env.has_value());
        CHECK(env->topic == static_cast<std::uint16_t>(Topic::heartbeat));
        CHECK(env->seq == 1);
        CHECK(env->timestamp_ns == 0);
        CHECK(env->payload.empty());
        CHECK(encode_frame(*env) == bytes);
    }
    {
        const auto& bytes = frames.at("opaque");
        const auto env = decode_frame(bytes.data(), bytes.size());
        REQUIRE(env.has_value());
        CHECK(env->topic == 514);
        CHECK(env->seq == (std::uint64_t(1) << 40) + 5);
        CHECK(env->timestamp_ns == 987654321123456789ULL);
        CHECK(env->payload == std::vector<std::uint8_t>({1, 2, 3, 4}));
        CHECK(encode_frame(*env) == bytes);
    }
    {
        const auto& bytes = frames.at("rw_state_n2");
        const auto env = decode_frame(bytes.data(), bytes.size());
        REQUIRE(env.has_value());
        CHECK(env->topic == static_cast<std::uint16_t>(Topic::rw_state));
        const auto msg = decode_rw_state(env->payload);
        REQUIRE(msg.has_value());
        CHECK(msg->t == 1.5);
        REQUIRE(msg->omega_meas.size() == 2);
        CHECK(msg->omega_meas[0] == 100.25);
        CHECK(msg->omega_meas[1] == -50.5);
        CHECK(msg->current_meas[0] == 0.5);
        CHECK(msg->current_meas[1] == -0.25);
        CHECK(encode_frame(*env) == bytes);
    }
    {
        const auto& bytes = frames.at("health_n4");
        const auto env = decode_frame(bytes.data(), bytes.size());
        REQUIRE(env.has_value());
        const auto msg = decode_health_tlm(env->payload);
        REQUIRE(msg.has_value());
        CHECK(msg->t == 2000.0);
        REQUIRE(msg->theta_hat.size() == 4);
        CHECK(msg->theta_hat[2] == 0.5);
        CHECK(msg->lambda == 3.5e-7);
        CHECK(encode_frame(*env) == bytes);
    }
}

TEST_CASE("encode/decode round trip over random frames") {
    Rng rng(701);
    for (int i = 0; i < 10000; ++i) {
        const Envelope env = random_envelope(rng);
        const auto bytes = encode_frame(env);
        DecodeError err = DecodeError::none;
        const auto back = decode_frame(bytes.data(), bytes.size(), &err);
        REQUIRE(back.has_value());
        REQUIRE(back->topic == env.topic);
        REQUIRE(back->seq == env.seq);
        REQUIRE(back->timestamp_ns == env.timestamp_ns);
        REQUIRE(back->payload == env.payload);
    }
}

TEST_CASE("decode errors are distinct") {
    Envelope env;
    env.topic = 2;
    env.seq = 9;
    env.payload = {10, 20, 30};
    auto bytes = encode_frame(env);
    DecodeError err = DecodeError::none;

    SECTION("truncation") {
        CHECK_FALSE(decode_frame(bytes.data(), 10, &err).has_value());
        CHECK(err == DecodeError::truncated);
        CHECK_FALSE(decode_frame(bytes.data(), bytes.size() - 1, &err).has_value());
        CHECK(err == DecodeError::truncated);
    }
    SECTION("header corruption") {
        bytes[3] ^= 0x01;
        CHECK_FALSE(decode_frame(bytes.data(), bytes.size(), &err).has_value());
        CHECK(err == DecodeError::header_crc);
    }
    SECTION("payload corruption") {
        bytes[kHeaderSize + 9] ^= 0x01;
        CHECK_FALSE(decode_frame(bytes.data(), bytes.size(), &err).has_value());
        CHECK(err == DecodeError::payload_crc);
    }
    SECTION("version mismatch") {
        Envelope v2 = env;
        v2.version = 2;
        auto other = encode_frame(v2);
        CHECK_FALSE(decode_frame(other.data(), other.size(), &err).has_value());
        CHECK(err == DecodeError::version_mismatch);
    }
}

TEST_CASE("frame reader reassembles a chunked stream") {
    Rng rng(702);
    std::vector<Envelope> sent;
    std::vector<std::uint8_t> stream;
    for (int i = 0; i < 200; ++i) {
        sent.push_back(random_envelope(rng));
        const auto bytes = encode_frame(sent.back());
        stream.insert(stream.end(), bytes.begin(), bytes.end());
    }

    FrameReader reader;
    std::vector<Envelope> received;
    std::size_t pos = 0;
    while (pos < stream.size()) {
        const std::size_t chunk = std::min<std::size_t>(
            1 + rng.next_u64() % 97, stream.size() - pos);
        auto frames = reader.feed(stream.data() + pos, chunk);
        received.insert(received.end(), frames.begin(), frames.end());
        pos += chunk;
    }
    REQUIRE(received.size() == sent.size());
    for (std::size_t i = 0; i < sent.size(); ++i) {
        REQUIRE(received[i].payload == sent[i].payload);
        REQUIRE(received[i].seq == sent[i].seq);
    }
    CHECK(reader.counters().crc_errors() == 0);
}

TEST_CASE("a flipped payload bit drops exactly that frame and counts it") {
    Envelope a;
    a.topic = 4;
    a.seq = 1;
    a.payload = {1, 2, 3, 4, 5, 6, 7, 8};
    Envelope b = a;
    b.seq = 2;

    auto bytes_a = encode_frame(a);
    bytes_a[kHeaderSize + 11] ^= 0x10;  // corrupt payload of frame a
    const auto bytes_b = encode_frame(b);

    FrameReader reader;
    std::vector<std::uint8_t> stream = bytes_a;
    stream.insert(stream.end(), bytes_b.begin(), bytes_b.end());
    const auto frames = reader.feed(stream.data(), stream.size());
    REQUIRE(frames.size() == 1);
    CHECK(frames[0].seq == 2);
    CHECK(reader.counters().payload_crc_errors == 1);
    CHECK(reader.counters().delivered == 1);
}

TEST_CASE("unknown topics are recognized as such") {
    CHECK(topic_known(static_cast<std::uint16_t>(Topic::rw_cmd)));
    CHECK(topic_known(static_cast<std::uint16_t>(Topic::tick_ack)));
    CHECK_FALSE(topic_known(999));
    CHECK_FALSE(topic_known(0));
}

TEST_CASE("topic payload codecs round trip") {
    Rng rng(703);

    EstStatePayload est;
    est.t = 12.5;
    est.sigma_hat = Vec3(0.1, -0.2, 0.3);
    est.omega_hat = Vec3(0.01, 0.02, -0.03);
    est.sigma_d = Vec3(-0.05, 0.0, 0.2);
    est.omega_d = Vec3(0, -0.0011, 0);
    est.omega_dot_d = Vec3(1e-6, 0, -1e-6);
    const auto est_back = decode_est_state(encode_est_state(est));
    REQUIRE(est_back.has_value());
    CHECK(est_back->sigma_hat == est.sigma_hat);
    CHECK(est_back->omega_dot_d == est.omega_dot_d);

    RwCmdPayload cmd;
    cmd.t = 3.0;
    cmd.mode = CommandMode::current;
    cmd.value = VecX::Zero(4);
    cmd.value << 0.5, -0.3, 0.0, 1.0;
    cmd.fault_mask = 0b0100;
    const auto cmd_back = decode_rw_cmd(encode_rw_cmd(cmd));
    REQUIRE(cmd_back.has_value());
    CHECK(cmd_back->mode == CommandMode::current);
    CHECK(cmd_back->value == cmd.value);
    CHECK(cmd_back->fault_mask == cmd.fault_mask);

    for (int n : {3, 4, 6}) {
        RwStatePayload st;
        st.t = rng.uniform() * 100;
        st.omega_meas = VecX::Random(n) * 300;
        st.current_meas = VecX::Random(n);
        const auto back = decode_rw_state(encode_rw_state(st));
        REQUIRE(back.has_value());
        REQUIRE(back->omega_meas == st.omega_meas);
        REQUIRE(back->current_meas == st.current_meas);
    }

    TickPayload tick{42, 2.1};
    const auto tick_back = decode_tick(encode_tick(tick));
    REQUIRE(tick_back.has_value());
    CHECK(tick_back->index == 42);
    CHECK(tick_back->t == 2.1);

    const auto role_back = decode_role(encode_role(NodeRole::rw));
    REQUIRE(role_back.has_value());
    CHECK(*role_back == NodeRole::rw);

    const std::vector<std::uint16_t> topics{2, 4, 5};
    const auto sub_back = decode_subscribe(encode_subscribe(topics));
    REQUIRE(sub_back.has_value());
    CHECK(*sub_back == topics);
}

TEST_CASE("malformed payloads are rejected") {
    CHECK_FALSE(decode_est_state({1, 2, 3}).has_value());
    CHECK_FALSE(decode_rw_cmd({}).has_value());
    CHECK_FALSE(decode_rw_state(std::vector<std::uint8_t>(20, 0)).has_value());
    CHECK_FALSE(decode_health_tlm(std::vector<std::uint8_t>(15, 0)).has_value());
    CHECK_FALSE(decode_tick(std::vector<std::uint8_t>(8, 0)).has_value());
    std::vector<std::uint8_t> bad_mode(13 + 8, 0);
    bad_mode[8] = 7;
    CHECK_FALSE(decode_rw_cmd(bad_mode).has_value());
}
