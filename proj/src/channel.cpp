#include "lsnn/channel.hpp"

#include <cmath>
#include <stdexcept>

namespace lsnn::channel {

void ChannelConfig::validate() const {
    if (!(p >= 0.0 && p < 1.0))
        throw std::invalid_argument("channel: loss rate p must be in [0, 1)");
    if (packet_payload == 0)
        throw std::invalid_argument("channel: packet payload must be >= 1 byte");
    if (!(throughput > 0.0))
        throw std::invalid_argument("channel: throughput must be positive");
}

std::pair<Vec, std::vector<std::uint8_t>> apply_elementwise(const Vec& x,
                                                            double p,
                                                            SplitMix64& rng) {
    if (!(p >= 0.0 && p < 1.0))
        throw std::invalid_argument("apply_elementwise: p must be in [0, 1)");
    Vec out(x.size());
    std::vector<std::uint8_t> mask(static_cast<std::size_t>(x.size()));
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        const bool keep = !rng.bernoulli(p);
        mask[static_cast<std::size_t>(i)] = keep ? 1 : 0;
        out(i) = keep ? x(i) : 0.0;
    }
    return {std::move(out), std::move(mask)};
}

std::size_t elements_per_packet(const ChannelConfig& cfg,
                                std::size_t element_wire_bytes) {
    cfg.validate();
    if (element_wire_bytes == 0)
        throw std::invalid_argument("elements_per_packet: element width must be positive");
    std::size_t s = cfg.packet_payload / element_wire_bytes;
    return s == 0 ? 1 : s;
}

PacketBatch packetize(const Vec& x, std::size_t elements_per_packet,
                      std::uint64_t permutation_seed,
                      std::uint32_t message_id) {
    if (x.size() == 0) throw std::invalid_argument("packetize: empty vector");
    if (elements_per_packet == 0)
        throw std::invalid_argument("packetize: elements_per_packet must be >= 1");

    const std::size_t d = static_cast<std::size_t>(x.size());
    const auto perm = random_permutation(d, permutation_seed);

    PacketBatch batch;
    batch.message_id = message_id;
    batch.permutation_seed = permutation_seed;
    batch.elements_per_packet = elements_per_packet;
    batch.total_elements = d;
    const std::size_t n_t = (d + elements_per_packet - 1) / elements_per_packet;
    if (n_t > 0xffff)
        throw std::invalid_argument("packetize: message needs more than 2^16 packets");
    batch.packets.reserve(n_t);
    for (std::size_t i = 0; i < n_t; ++i) {
        Packet pkt;
        pkt.index = static_cast<std::uint16_t>(i);
        const std::size_t begin = i * elements_per_packet;
        const std::size_t end = std::min(begin + elements_per_packet, d);
        pkt.values.reserve(end - begin);
        for (std::size_t j = begin; j < end; ++j)
            pkt.values.push_back(x(static_cast<Eigen::Index>(perm[j])));
        batch.packets.push_back(std::move(pkt));
    }
    return batch;
}

PacketBatch transmit(const PacketBatch& batch, double p, SplitMix64& rng) {
    if (!(p >= 0.0 && p < 1.0))
        throw std::invalid_argument("transmit: p must be in [0, 1)");
    PacketBatch received = batch;
    received.packets.clear();
    for (const auto& pkt : batch.packets)
        if (!rng.bernoulli(p)) received.packets.push_back(pkt);
    return received;
}

std::pair<Vec, std::size_t> reconstruct(const PacketBatch& received,
                                        std::size_t total_elements) {
    const auto perm = random_permutation(total_elements, received.permutation_seed);
    Vec out = Vec::Zero(static_cast<Eigen::Index>(total_elements));
    std::size_t count = 0;
    for (const auto& pkt : received.packets) {
        const std::size_t begin =
            static_cast<std::size_t>(pkt.index) * received.elements_per_packet;
        for (std::size_t k = 0; k < pkt.values.size(); ++k) {
            const std::size_t pos = begin + k;
            if (pos >= total_elements)
                throw std::invalid_argument("reconstruct: packet exceeds message bounds");
            out(static_cast<Eigen::Index>(perm[pos])) = pkt.values[k];
            ++count;
        }
    }
    return {std::move(out), count};
}

std::vector<double> pmf_received(std::size_t n_t, double p) {
    if (!(p >= 0.0 && p < 1.0))
        throw std::invalid_argument("pmf_received: p must be in [0, 1)");
    std::vector<double> pmf(n_t + 1, 0.0);
    if (p == 0.0) {
        pmf[n_t] = 1.0;
        return pmf;
    }
    const double n = static_cast<double>(n_t);
    const double log_p = std::log(p);
    const double log_q = std::log1p(-p);
    for (std::size_t k = 0; k <= n_t; ++k) {
        const double kd = static_cast<double>(k);
        const double log_binom = std::lgamma(n + 1.0) - std::lgamma(kd + 1.0) -
                                 std::lgamma(n - kd + 1.0);
        pmf[k] = std::exp(log_binom + (n - kd) * log_p + kd * log_q);
    }
    return pmf;
}

double latency_unreliable(std::size_t n_t, const LatencyModel& model) {
    return static_cast<double>(n_t) * model.seconds_per_packet;
}

std::vector<std::pair<double, double>> pmf_latency_reliable(
    std::size_t n_t, double p, const LatencyModel& model, std::size_t k_max) {
    if (!(p >= 0.0 && p < 1.0))
        throw std::invalid_argument("pmf_latency_reliable: p must be in [0, 1)");
    if (k_max < n_t)
        throw std::invalid_argument("pmf_latency_reliable: k_max must be >= n_t");
    if (n_t == 0)
        throw std::invalid_argument("pmf_latency_reliable: n_t must be >= 1");

    std::vector<std::pair<double, double>> pmf;
    pmf.reserve(k_max - n_t + 1);
    const double n = static_cast<double>(n_t);
    const double log_q = std::log1p(-p);
    for (std::size_t k = n_t; k <= k_max; ++k) {
        const double kd = static_cast<double>(k);
        double prob;
        if (p == 0.0) {
            prob = (k == n_t) ? 1.0 : 0.0;
        } else {
            // C(k-1, n_t-1) p^{k-n_t} (1-p)^{n_t}
            const double log_binom = std::lgamma(kd) - std::lgamma(n) -
                                     std::lgamma(kd - n + 1.0);
            prob = std::exp(log_binom + (kd - n) * std::log(p) + n * log_q);
        }
        pmf.emplace_back(kd * model.seconds_per_packet, prob);
    }
    return pmf;
}

std::size_t packet_count(std::size_t message_bytes,
                         std::size_t packet_payload) {
    if (packet_payload == 0)
        throw std::invalid_argument("packet_count: packet payload must be >= 1");
    return (message_bytes + packet_payload - 1) / packet_payload;
}

}  // namespace lsnn::channel
