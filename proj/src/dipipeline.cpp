#include "lsnn/dipipeline.hpp"

#include <stdexcept>

namespace lsnn::di {

std::size_t Deployment::split_width() const {
    auto w = f_in.output_dim();
    if (!w) throw std::logic_error("deployment: f_in has no shaped layer");
    return *w;
}

std::size_t Deployment::compressed_width() const {
    return codec::compressed_dim(codec, split_width());
}

void Deployment::validate() const {
    channel.validate();
    f_in.validate();
    f_out.validate();
    const std::size_t d = split_width();
    if (codec) {
        if (const auto* q = std::get_if<codec::QuantizerSpec>(&*codec)) {
            if (q->dim() != d)
                throw std::invalid_argument("deployment: quantizer width != split activation width");
        } else {
            const auto& p = std::get<codec::PcaSpec>(*codec);
            if (p.full_dim() != d)
                throw std::invalid_argument("deployment: PCA width != split activation width");
        }
    }
    if (auto out_in = f_out.input_dim(); out_in && *out_in != d)
        throw std::invalid_argument("deployment: f_out input width != decoded activation width");
}

Vec device_encode(const Vec& x, const Deployment& dep) {
    Mat probs = nn::forward(dep.f_in, x.transpose(), nn::Mode::Eval).output();
    Vec raw = probs.row(0).transpose();
    if (!dep.codec) return raw;
    if (const auto* q = std::get_if<codec::QuantizerSpec>(&*dep.codec)) {
        auto codes = codec::quantize(raw, *q);
        Vec out(static_cast<Eigen::Index>(codes.size()));
        for (std::size_t i = 0; i < codes.size(); ++i)
            out(static_cast<Eigen::Index>(i)) = static_cast<double>(codes[i]);
        return out;
    }
    return codec::pca_compress(raw, std::get<codec::PcaSpec>(*dep.codec));
}

InferenceOutcome server_decode(const Vec& received,
                               const std::vector<std::uint8_t>& mask, double p,
                               const Deployment& dep) {
    if (!(p >= 0.0 && p < 1.0))
        throw std::invalid_argument("server_decode: p must be in [0, 1)");
    if (static_cast<std::size_t>(received.size()) != mask.size())
        throw std::invalid_argument("server_decode: mask length mismatch");

    std::size_t arrived = 0;
    for (auto m : mask) arrived += m ? 1 : 0;

    double comp_p = p;
    if (dep.compensate_with_observed && !mask.empty()) {
        comp_p = 1.0 - static_cast<double>(arrived) / static_cast<double>(mask.size());
        if (comp_p >= 1.0) comp_p = p;  // nothing arrived, nothing to scale
    }
    const double comp = 1.0 / (1.0 - comp_p);

    Vec decoded;
    if (dep.codec && std::holds_alternative<codec::QuantizerSpec>(*dep.codec)) {
        // dequantize what arrived, leave lost elements at zero, then
        // compensate in the real domain
        const auto& q = std::get<codec::QuantizerSpec>(*dep.codec);
        decoded = Vec::Zero(received.size());
        for (Eigen::Index i = 0; i < received.size(); ++i) {
            if (!mask[static_cast<std::size_t>(i)]) continue;
            const auto code = static_cast<std::int32_t>(received(i));
            decoded(i) = q.s_min(i) + static_cast<double>(code) *
                                          (q.s_max(i) - q.s_min(i)) /
                                          (std::ldexp(1.0, q.n_bits) - 1.0);
        }
        decoded *= comp;
    } else if (dep.codec) {
        decoded = codec::pca_decompress(received * comp,
                                        std::get<codec::PcaSpec>(*dep.codec));
    } else {
        decoded = received * comp;
    }

    Mat probs = nn::forward(dep.f_out, decoded.transpose(), nn::Mode::Eval).output();

    InferenceOutcome outcome;
    outcome.probabilities = probs.row(0).transpose();
    Eigen::Index argmax = 0;
    outcome.probabilities.maxCoeff(&argmax);  // first max wins ties
    outcome.predicted_class = static_cast<int>(argmax);
    outcome.fraction_received =
        mask.empty() ? 0.0
                     : static_cast<double>(arrived) / static_cast<double>(mask.size());
    outcome.all_lost = arrived == 0;
    return outcome;
}

std::size_t transmitted_packets(const Deployment& dep) {
    const std::size_t s = channel::elements_per_packet(
        dep.channel, codec::element_wire_bytes(dep.codec));
    const std::size_t d = dep.compressed_width();
    return (d + s - 1) / s;
}

InferenceOutcome infer_once(const Vec& x, const Deployment& dep,
                            SplitMix64& rng) {
    Vec encoded = device_encode(x, dep);
    const std::size_t d = static_cast<std::size_t>(encoded.size());
    const std::size_t n_t = transmitted_packets(dep);

    Vec received;
    std::vector<std::uint8_t> mask;
    if (dep.channel.mode == channel::LossMode::ElementIID) {
        auto [vec, m] = channel::apply_elementwise(encoded, dep.channel.p, rng);
        received = std::move(vec);
        mask = std::move(m);
    } else {
        const std::size_t s = channel::elements_per_packet(
            dep.channel, codec::element_wire_bytes(dep.codec));
        auto batch = channel::packetize(encoded, s, rng.next());
        auto arrived = channel::transmit(batch, dep.channel.p, rng);
        auto [vec, count] = channel::reconstruct(arrived, d);
        received = std::move(vec);
        // rebuild the per-element arrival mask from the received packets
        mask.assign(d, 0);
        auto perm = random_permutation(d, arrived.permutation_seed);
        for (const auto& pkt : arrived.packets) {
            const std::size_t begin =
                static_cast<std::size_t>(pkt.index) * arrived.elements_per_packet;
            for (std::size_t k = 0; k < pkt.values.size(); ++k)
                mask[perm[begin + k]] = 1;
        }
        (void)count;
    }

    InferenceOutcome outcome = server_decode(received, mask, dep.channel.p, dep);
    outcome.latency_s = channel::latency_unreliable(
        n_t, channel::LatencyModel::from_config(dep.channel));
    return outcome;
}

}  // namespace lsnn::di
