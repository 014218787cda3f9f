#include "doctest.h"

#include <cmath>
#include <thread>
#include <vector>

#include "lsnn/wire.hpp"

using namespace lsnn;
using namespace lsnn::wire;

namespace {

di::Deployment make_deployment(std::uint64_t seed, std::size_t split_width,
                               bool quantized) {
    nn::Network f_pre = nn::make_mlp({6, split_width, 4});
    SplitMix64 r(seed);
    nn::init_weights(f_pre, r);
    auto [fi, fo] = nn::split(f_pre, 2);
    di::Deployment dep;
    dep.f_in = fi;
    dep.f_out = fo;
    if (quantized) {
        SplitMix64 cr(seed ^ 0x77);
        Mat src(64, 6);
        for (Eigen::Index i = 0; i < src.rows(); ++i)
            for (Eigen::Index j = 0; j < src.cols(); ++j) src(i, j) = cr.gaussian();
        Mat acts = nn::forward(dep.f_in, src, nn::Mode::Eval).output();
        dep.codec = codec::CodecSpec{codec::calibrate_quantizer(acts, 8)};
    }
    return dep;
}

Vec encode_sample(const di::Deployment& dep, std::uint64_t seed) {
    SplitMix64 r(seed);
    Vec x(6);
    for (int j = 0; j < 6; ++j) x[j] = r.gaussian();
    return di::device_encode(x, dep);
}

}  // namespace

TEST_CASE("header round trips through its wire form") {
    DatagramHeader h;
    h.flags = DatagramHeader::kFlagQuantized;
    h.message_id = 0xDEADBEEF;
    h.packet_index = 3;
    h.total_packets = 9;
    h.permutation_seed = 0xCAFE1234;
    auto bytes = encode_header(h);
    REQUIRE(bytes.size() == DatagramHeader::kSize);
    CHECK(bytes[0] == DatagramHeader::kMagic0);
    CHECK(bytes[1] == DatagramHeader::kMagic1);
    CHECK(bytes[2] == DatagramHeader::kVersion);

    auto back = decode_header(bytes.data(), bytes.size());
    REQUIRE(back.has_value());
    CHECK(back->flags == h.flags);
    CHECK(back->message_id == h.message_id);
    CHECK(back->packet_index == h.packet_index);
    CHECK(back->total_packets == h.total_packets);
    CHECK(back->permutation_seed == h.permutation_seed);
}

TEST_CASE("malformed headers are rejected") {
    DatagramHeader h;
    h.total_packets = 2;
    auto bytes = encode_header(h);

    CHECK_FALSE(decode_header(bytes.data(), 7).has_value());  // truncated

    auto bad = bytes;
    bad[0] = 0x00;
    CHECK_FALSE(decode_header(bad.data(), bad.size()).has_value());

    bad = bytes;
    bad[2] = 99;  // unknown version
    CHECK_FALSE(decode_header(bad.data(), bad.size()).has_value());

    bad = bytes;
    bad[8] = 0;  // packet_index beyond total_packets
    bad[9] = 5;
    CHECK_FALSE(decode_header(bad.data(), bad.size()).has_value());
}

TEST_CASE("datagrams round trip raw f32 payloads") {
    di::Deployment dep = make_deployment(51, 30, false);
    dep.channel.packet_payload = 40;  // 10 f32 elements per packet
    Vec a = encode_sample(dep, 1);
    auto grams = encode_datagrams(a, dep, 7, 99);
    CHECK(grams.size() == 3);

    Reassembler reasm(30, 1.0);
    for (const auto& g : grams) reasm.accept(g.data(), g.size(), 4, 0.0);
    auto done = reasm.drain_ready(0.0);
    REQUIRE(done.size() == 1);
    CHECK(done[0].complete);
    CHECK(done[0].message_id == 7);
    CHECK(done[0].packets_received == 3);
    // f32 quantization on the wire: compare at f32 precision.
    for (int j = 0; j < 30; ++j) {
        CHECK(done[0].mask[j] == 1);
        CHECK(done[0].values[j] == doctest::Approx(a[j]).epsilon(1e-6));
    }
}

TEST_CASE("datagrams round trip quantized codes exactly") {
    di::Deployment dep = make_deployment(52, 25, true);
    dep.channel.packet_payload = 10;  // 10 one-byte codes per packet
    Vec codes = encode_sample(dep, 2);
    auto grams = encode_datagrams(codes, dep, 3, 5);
    CHECK(grams.size() == 3);
    auto hdr = decode_header(grams[0].data(), grams[0].size());
    REQUIRE(hdr.has_value());
    CHECK((hdr->flags & DatagramHeader::kFlagQuantized) != 0);

    Reassembler reasm(25, 1.0);
    for (const auto& g : grams) reasm.accept(g.data(), g.size(), 1, 0.0);
    auto done = reasm.drain_ready(0.0);
    REQUIRE(done.size() == 1);
    for (int j = 0; j < 25; ++j) CHECK(done[0].values[j] == codes[j]);
}

TEST_CASE("a dropped packet leaves zeros exactly at its permuted positions") {
    di::Deployment dep = make_deployment(53, 24, false);
    dep.channel.packet_payload = 32;  // 8 elements per packet -> 3 packets
    Vec a = encode_sample(dep, 3);
    auto grams = encode_datagrams(a, dep, 1, 77);

    Reassembler reasm(24, 0.05);
    reasm.accept(grams[0].data(), grams[0].size(), 4, 0.0);
    reasm.accept(grams[2].data(), grams[2].size(), 4, 0.0);
    CHECK(reasm.drain_ready(0.01).empty());  // incomplete, deadline not passed
    auto done = reasm.drain_ready(0.2);      // deadline expired
    REQUIRE(done.size() == 1);
    CHECK_FALSE(done[0].complete);
    CHECK(done[0].packets_received == 2);

    auto perm = random_permutation(24, 77);
    for (std::size_t k = 0; k < 24; ++k) {
        bool in_dropped = (k / 8 == 1);  // packet index 1 carried slots 8..15
        CHECK(done[0].mask[perm[k]] == (in_dropped ? 0 : 1));
        if (in_dropped) CHECK(done[0].values[perm[k]] == 0.0);
    }
}

TEST_CASE("duplicate packets are last-writer-wins") {
    di::Deployment dep = make_deployment(54, 8, false);
    dep.channel.packet_payload = 32;  // one packet
    Vec a = encode_sample(dep, 4);
    auto grams = encode_datagrams(a, dep, 2, 9);
    REQUIRE(grams.size() == 1);

    auto forged = grams[0];
    // Overwrite the first element's f32 payload with zeros.
    for (std::size_t i = DatagramHeader::kSize; i < DatagramHeader::kSize + 4; ++i)
        forged[i] = 0;

    Reassembler reasm(8, 1.0);
    reasm.accept(grams[0].data(), grams[0].size(), 4, 0.0);
    reasm.accept(forged.data(), forged.size(), 4, 0.0);
    auto done = reasm.drain_ready(0.0);
    REQUIRE(done.size() == 1);
    auto perm = random_permutation(8, 9);
    CHECK(done[0].values[perm[0]] == 0.0);  // the rewrite won
}

TEST_CASE("reassembler evicts the oldest message at the in-flight bound") {
    di::Deployment dep = make_deployment(55, 6, false);
    dep.channel.packet_payload = 12;  // 3 elems/packet -> 2 packets
    Vec a = encode_sample(dep, 5);

    Reassembler reasm(6, 10.0, 2);
    for (std::uint32_t id = 0; id < 3; ++id) {
        auto grams = encode_datagrams(a, dep, id, id);
        reasm.accept(grams[0].data(), grams[0].size(), 4, double(id));
    }
    // Message 0 was evicted to admit message 2.
    auto leftovers = reasm.drain_all();
    REQUIRE(leftovers.size() == 2);
    CHECK(leftovers[0].message_id != 0);
    CHECK(leftovers[1].message_id != 0);
}

TEST_CASE("garbage datagrams are counted, not fatal") {
    Reassembler reasm(6, 1.0);
    std::vector<std::uint8_t> junk(40, 0xAB);
    reasm.accept(junk.data(), junk.size(), 4, 0.0);
    reasm.accept(junk.data(), 3, 4, 0.0);
    CHECK(reasm.discarded_datagrams() == 2);
    CHECK(reasm.drain_all().empty());
}

TEST_CASE("loopback serve and send agree with in-process inference") {
    di::Deployment dep = make_deployment(56, 16, true);
    dep.channel.p = 0.0;

    harness::Dataset data;
    const std::size_t n = 25;
    data.features.resize(n, 6);
    data.labels.assign(n, 0);
    data.class_count = 4;
    SplitMix64 r(8);
    for (std::size_t i = 0; i < n; ++i)
        for (int j = 0; j < 6; ++j) data.features(i, j) = r.gaussian();

    ServeConfig scfg;
    scfg.expected_messages = n;
    scfg.deadline_s = 0.05;
    scfg.idle_timeout_s = 10.0;

    std::uint16_t port = 0;
    std::vector<WireRecord> records;
    std::thread server([&] {
        records = serve(dep, scfg, [&](std::uint16_t p) { port = p; });
    });
    while (port == 0) std::this_thread::yield();

    SendConfig ccfg;
    ccfg.port = port;
    ccfg.send_interval_s = 0.002;  // pace the datagrams; loopback still drops under bursts
    send_dataset(data, dep, ccfg);
    server.join();

    REQUIRE(records.size() == n);
    for (const auto& rec : records) {
        REQUIRE(rec.message_id < n);
        Vec x = data.features.row(rec.message_id);
        CHECK(rec.fraction_received == 1.0);
        CHECK_FALSE(rec.all_lost);
        std::vector<std::uint8_t> mask(16, 1);
        auto want = di::server_decode(di::device_encode(x, dep), mask, 0.0, dep);
        CHECK(rec.predicted_class == want.predicted_class);
    }
}

TEST_CASE("wire csv format") {
    CHECK(wire_csv_header() == "message_id,predicted_class,fraction_received,all_lost");
    WireRecord rec{12, 3, 0.75, false};
    CHECK(wire_csv_row(rec) == "12,3,0.75,0");
    rec.all_lost = true;
    rec.fraction_received = 0.0;
    rec.predicted_class = 1;
    CHECK(wire_csv_row(rec) == "12,1,0,1");
}
