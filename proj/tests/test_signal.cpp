#include <catch2/catch_amalgamated.hpp>

#include <cstring>

#include <fedh2l/signal.hpp>

using namespace fedh2l;

namespace {

TeachingSignal sample_signal() {
    TeachingSignal s;
    s.sender = 2;
    s.round = 17;
    s.classes = 3;
    s.acc = 0.8125f;
    s.ids = {(2ULL << 32) | 5, (2ULL << 32) | 9};
    s.soft = {0.5f, 0.25f, 0.25f, 0.125f, 0.125f, 0.75f};
    return s;
}

}  // namespace

TEST_CASE("payload and header byte counts") {
    REQUIRE(signal_header_bytes() == 16);
    REQUIRE(signal_payload_bytes(32, 10) == 4 + 32 * 8 + 32 * 10 * 4);
    REQUIRE(signal_payload_bytes(32, 10) == 1540);
    const TeachingSignal s = sample_signal();
    REQUIRE(signal_payload_bytes(s) == 4 + 2 * 8 + 2 * 3 * 4);
    REQUIRE(encode_signal(s).size() == signal_header_bytes() + signal_payload_bytes(s));
}

TEST_CASE("wire roundtrip preserves every field exactly") {
    const TeachingSignal s = sample_signal();
    const TeachingSignal d = decode_signal(encode_signal(s));
    REQUIRE(d.sender == s.sender);
    REQUIRE(d.round == s.round);
    REQUIRE(d.classes == s.classes);
    REQUIRE(d.acc == s.acc);
    REQUIRE(d.ids == s.ids);
    REQUIRE(d.soft == s.soft);
}

TEST_CASE("wire layout is little-endian with the documented field order") {
    TeachingSignal s;
    s.sender = 0x01020304u;
    s.round = 5;
    s.classes = 2;
    s.acc = 1.0f;
    s.ids = {0x1122334455667788ULL};
    s.soft = {0.25f, 0.75f};
    const auto bytes = encode_signal(s);
    REQUIRE(bytes.size() == 16 + 4 + 8 + 8);
    // sender
    REQUIRE(bytes[0] == 0x04);
    REQUIRE(bytes[1] == 0x03);
    REQUIRE(bytes[2] == 0x02);
    REQUIRE(bytes[3] == 0x01);
    // round
    REQUIRE(bytes[4] == 5);
    REQUIRE(bytes[7] == 0);
    // batch, classes
    REQUIRE(bytes[8] == 1);
    REQUIRE(bytes[12] == 2);
    // acc = 1.0f -> 0x3f800000 little-endian
    REQUIRE(bytes[16] == 0x00);
    REQUIRE(bytes[17] == 0x00);
    REQUIRE(bytes[18] == 0x80);
    REQUIRE(bytes[19] == 0x3f);
    // id, low byte first
    REQUIRE(bytes[20] == 0x88);
    REQUIRE(bytes[27] == 0x11);
    // soft[0] = 0.25f -> 0x3e800000
    REQUIRE(bytes[28] == 0x00);
    REQUIRE(bytes[31] == 0x3e);
}

TEST_CASE("rows narrowed from doubles still decode") {
    TeachingSignal s;
    s.sender = 0;
    s.round = 1;
    s.classes = 3;
    s.acc = 0.5f;
    s.ids = {1, 2, 3};
    // Thirds do not have exact f32 representations; the decoder's 1e-3
    // budget must absorb the rounding.
    for (int i = 0; i < 3; ++i)
        for (int c = 0; c < 3; ++c) s.soft.push_back(static_cast<float>(1.0 / 3.0));
    const TeachingSignal d = decode_signal(encode_signal(s));
    REQUIRE(d.soft.size() == 9);
}

TEST_CASE("decoder rejects malformed messages") {
    const TeachingSignal good = sample_signal();

    auto bytes = encode_signal(good);
    bytes.pop_back();
    REQUIRE_THROWS_AS(decode_signal(bytes), std::runtime_error);

    bytes = encode_signal(good);
    bytes.push_back(0);
    REQUIRE_THROWS_AS(decode_signal(bytes), std::runtime_error);

    TeachingSignal bad_rows = good;
    bad_rows.soft[0] = 0.9f;  // row 0 now sums to 1.4
    REQUIRE_THROWS_AS(decode_signal(encode_signal(bad_rows)), std::runtime_error);

    TeachingSignal bad_acc = good;
    bad_acc.acc = 1.5f;
    REQUIRE_THROWS_AS(decode_signal(encode_signal(bad_acc)), std::runtime_error);

    TeachingSignal neg = good;
    neg.soft[0] = -0.1f;
    neg.soft[1] = 0.85f;
    neg.soft[2] = 0.25f;
    REQUIRE_THROWS_AS(decode_signal(encode_signal(neg)), std::runtime_error);

    REQUIRE_THROWS_AS(decode_signal({}), std::runtime_error);
}

TEST_CASE("encoder rejects inconsistent shapes") {
    TeachingSignal s = sample_signal();
    s.soft.pop_back();
    REQUIRE_THROWS_AS(encode_signal(s), std::invalid_argument);
    TeachingSignal empty;
    empty.classes = 3;
    REQUIRE_THROWS_AS(encode_signal(empty), std::invalid_argument);
}

TEST_CASE("signal_probs widens to doubles in row-major order") {
    const TeachingSignal s = sample_signal();
    const Matrix p = signal_probs(s);
    REQUIRE(p.rows == 2);
    REQUIRE(p.cols == 3);
    REQUIRE(p(0, 0) == 0.5);
    REQUIRE(p(1, 2) == 0.75);
}
