#include "lsnn/model_io.hpp"

#include <fstream>

#include "lsnn/bytes.hpp"

namespace lsnn::nn {

namespace {

constexpr std::uint8_t kTagDense = 1;
constexpr std::uint8_t kTagRelu = 2;
constexpr std::uint8_t kTagSoftmax = 3;
constexpr std::uint8_t kTagDropout = 4;

constexpr char kMagic[4] = {'L', 'S', 'N', 'N'};

}  // namespace

std::vector<std::uint8_t> serialize(const Network& net) {
    if (net.layers.empty())
        throw std::invalid_argument("serialize: empty layer list");
    if (net.layers.size() > 0xffff)
        throw std::invalid_argument("serialize: too many layers");

    std::vector<std::uint8_t> out;
    out.insert(out.end(), kMagic, kMagic + 4);
    put_u16_le(out, kModelFormatVersion);
    put_u16_le(out, static_cast<std::uint16_t>(net.layers.size()));

    for (const auto& layer : net.layers) {
        if (const auto* d = std::get_if<Dense>(&layer)) {
            put_u8(out, kTagDense);
            put_u32_le(out, static_cast<std::uint32_t>(d->in_dim));
            put_u32_le(out, static_cast<std::uint32_t>(d->out_dim));
            for (std::size_t r = 0; r < d->out_dim; ++r)
                for (std::size_t c = 0; c < d->in_dim; ++c)
                    put_f64_le(out, d->weight(static_cast<Eigen::Index>(r),
                                               static_cast<Eigen::Index>(c)));
            for (std::size_t r = 0; r < d->out_dim; ++r)
                put_f64_le(out, d->bias(static_cast<Eigen::Index>(r)));
        } else if (std::holds_alternative<Relu>(layer)) {
            put_u8(out, kTagRelu);
        } else if (std::holds_alternative<Softmax>(layer)) {
            put_u8(out, kTagSoftmax);
        } else {
            put_u8(out, kTagDropout);
            put_f64_le(out, std::get<Dropout>(layer).rate);
        }
    }
    return out;
}

Network deserialize(const std::vector<std::uint8_t>& bytes) {
    ByteReader r(bytes.data(), bytes.size());
    if (!r.need(4) || std::memcmp(bytes.data(), kMagic, 4) != 0)
        throw ParseError("model: bad magic", 0);
    r.pos = 4;
    std::uint16_t version = r.u16_le();
    if (version != kModelFormatVersion)
        throw ParseError("model: unsupported format version", 4);
    std::uint16_t layer_count = r.u16_le();
    if (layer_count == 0) throw ParseError("model: empty layer list", 6);

    Network net;
    for (std::uint16_t i = 0; i < layer_count; ++i) {
        std::size_t tag_pos = r.pos;
        std::uint8_t tag = r.u8();
        if (!r.ok) throw ParseError("model: truncated stream", r.pos);
        switch (tag) {
            case kTagDense: {
                Dense d;
                d.in_dim = r.u32_le();
                d.out_dim = r.u32_le();
                if (!r.ok) throw ParseError("model: truncated stream", r.pos);
                if (d.in_dim == 0 || d.out_dim == 0)
                    throw ParseError("model: zero dense dimension", tag_pos);
                d.weight.resize(static_cast<Eigen::Index>(d.out_dim),
                                static_cast<Eigen::Index>(d.in_dim));
                for (std::size_t rw = 0; rw < d.out_dim; ++rw)
                    for (std::size_t c = 0; c < d.in_dim; ++c)
                        d.weight(static_cast<Eigen::Index>(rw),
                                 static_cast<Eigen::Index>(c)) = r.f64_le();
                d.bias.resize(static_cast<Eigen::Index>(d.out_dim));
                for (std::size_t rw = 0; rw < d.out_dim; ++rw)
                    d.bias(static_cast<Eigen::Index>(rw)) = r.f64_le();
                if (!r.ok) throw ParseError("model: truncated stream", r.pos);
                net.layers.emplace_back(std::move(d));
                break;
            }
            case kTagRelu:
                net.layers.emplace_back(Relu{});
                break;
            case kTagSoftmax:
                net.layers.emplace_back(Softmax{});
                break;
            case kTagDropout: {
                double rate = r.f64_le();
                if (!r.ok) throw ParseError("model: truncated stream", r.pos);
                if (!(rate >= 0.0 && rate < 1.0))
                    throw ParseError("model: dropout rate out of range", tag_pos);
                net.layers.emplace_back(Dropout{rate});
                break;
            }
            default:
                throw ParseError("model: unknown layer tag", tag_pos);
        }
    }
    if (r.pos != bytes.size())
        throw ParseError("model: trailing bytes", r.pos);
    net.validate();
    return net;
}

void save_network(const Network& net, const std::string& path) {
    auto bytes = serialize(net);
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open for write: " + path);
    f.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
}

Network load_network(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open for read: " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                                    std::istreambuf_iterator<char>());
    return deserialize(bytes);
}

}  // namespace lsnn::nn
