#ifndef LSNN_DIPIPELINE_HPP
#define LSNN_DIPIPELINE_HPP

#include <cstdint>
#include <optional>
#include <vector>

#include "lsnn/channel.hpp"
#include "lsnn/codec.hpp"
#include "lsnn/nn.hpp"

namespace lsnn::di {

struct Deployment {
    nn::Network f_in;
    nn::Network f_out;
    std::optional<codec::CodecSpec> codec;
    channel::ChannelConfig channel;

    // Compensate with the observed receive fraction instead of the nominal
    // link p. Off by default: the paper's compensation uses the link
    // parameter.
    bool compensate_with_observed = false;

    std::size_t split_width() const;       // D
    std::size_t compressed_width() const;  // D' (== D without PCA)
    void validate() const;
};

struct InferenceOutcome {
    int predicted_class = -1;
    Vec probabilities;
    double latency_s = 0.0;
    double fraction_received = 0.0;
    bool all_lost = false;
};

// a = f_cmp(f_in(x)), Eval mode. Quantizer codes are carried as exact
// integer-valued doubles; PCA coefficients and raw activations as reals.
Vec device_encode(const Vec& x, const Deployment& dep);

// Zero-filled received vector + per-element arrival mask -> compensate by
// 1/(1-p), decode, predict. Latency is filled in by infer_once.
InferenceOutcome server_decode(const Vec& received,
                               const std::vector<std::uint8_t>& mask, double p,
                               const Deployment& dep);

// Number of packets one compressed message occupies on the wire.
std::size_t transmitted_packets(const Deployment& dep);

InferenceOutcome infer_once(const Vec& x, const Deployment& dep,
                            SplitMix64& rng);

}  // namespace lsnn::di

#endif
