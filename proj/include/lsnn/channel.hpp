#ifndef LSNN_CHANNEL_HPP
#define LSNN_CHANNEL_HPP

#include <cstdint>
#include <utility>
#include <vector>

#include "lsnn/rng.hpp"
#include "lsnn/tensor.hpp"

namespace lsnn::channel {

enum class LossMode : std::uint8_t {
    ElementIID,   // each element dropped independently (the analytic model)
    PacketLevel,  // whole packets dropped; elements within a packet correlate
};

struct ChannelConfig {
    double p = 0.0;                    // packet loss probability, [0, 1)
    std::size_t packet_payload = 100;  // bytes
    double throughput = 9.0e6;         // bits per second
    LossMode mode = LossMode::ElementIID;

    void validate() const;
};

struct Packet {
    std::uint16_t index = 0;  // position within the batch
    std::vector<double> values;
};

// One message cut into packets of `elements_per_packet` consecutive entries
// of the seeded permutation; the receiver regenerates the element indices
// from (permutation_seed, elements_per_packet, index).
struct PacketBatch {
    std::uint32_t message_id = 0;
    std::uint64_t permutation_seed = 0;
    std::size_t elements_per_packet = 0;
    std::size_t total_elements = 0;
    std::vector<Packet> packets;

    std::size_t total_packets() const { return packets.size(); }
};

struct LatencyModel {
    double seconds_per_packet = 0.0;  // T = packet_payload * 8 / throughput

    static LatencyModel from_config(const ChannelConfig& cfg) {
        return {static_cast<double>(cfg.packet_payload) * 8.0 / cfg.throughput};
    }
};

// Element-IID erasure: keep each element with probability 1-p, zero the rest.
std::pair<Vec, std::vector<std::uint8_t>> apply_elementwise(const Vec& x,
                                                            double p,
                                                            SplitMix64& rng);

std::size_t elements_per_packet(const ChannelConfig& cfg,
                                std::size_t element_wire_bytes);

PacketBatch packetize(const Vec& x, std::size_t elements_per_packet,
                      std::uint64_t permutation_seed,
                      std::uint32_t message_id = 0);

// Drop each packet independently with probability p; no retransmission.
PacketBatch transmit(const PacketBatch& batch, double p, SplitMix64& rng);

// Zero-fill missing elements, returning the reassembled vector and how many
// elements actually arrived.
std::pair<Vec, std::size_t> reconstruct(const PacketBatch& received,
                                        std::size_t total_elements);

// Binomial(n_t, 1-p) PMF over the received-packet count, log-domain
// coefficients so n_t in the hundreds stays finite.
std::vector<double> pmf_received(std::size_t n_t, double p);

// Unreliable protocol: fixed n_t * T, independent of the loss realization.
double latency_unreliable(std::size_t n_t, const LatencyModel& model);

// Reliable protocol: negative-binomial PMF over total transmissions k,
// reported as (latency = k*T, probability) for k = n_t .. k_max.
std::vector<std::pair<double, double>> pmf_latency_reliable(
    std::size_t n_t, double p, const LatencyModel& model, std::size_t k_max);

std::size_t packet_count(std::size_t message_bytes, std::size_t packet_payload);

}  // namespace lsnn::channel

#endif
