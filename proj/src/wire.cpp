#include "lsnn/wire.hpp"

#include "lsnn/bytes.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <chrono>
#include <cstring>
#include <fstream>
#include <algorithm>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace lsnn::wire {

namespace {

void put_u16_be(std::vector<std::uint8_t>& out, std::uint16_t v) {
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v & 0xff));
}

void put_u32_be(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 3; i >= 0; --i)
        out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}

std::uint16_t get_u16_be(const std::uint8_t* p) {
    return static_cast<std::uint16_t>(p[0] << 8 | p[1]);
}

std::uint32_t get_u32_be(const std::uint8_t* p) {
    return static_cast<std::uint32_t>(p[0]) << 24 |
           static_cast<std::uint32_t>(p[1]) << 16 |
           static_cast<std::uint32_t>(p[2]) << 8 | static_cast<std::uint32_t>(p[3]);
}

double monotonic_seconds() {
    return std::chrono::duration<double>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

}  // namespace

std::vector<std::uint8_t> encode_header(const DatagramHeader& h) {
    std::vector<std::uint8_t> out;
    out.reserve(DatagramHeader::kSize);
    out.push_back(DatagramHeader::kMagic0);
    out.push_back(DatagramHeader::kMagic1);
    out.push_back(DatagramHeader::kVersion);
    out.push_back(h.flags);
    put_u32_be(out, h.message_id);
    put_u16_be(out, h.packet_index);
    put_u16_be(out, h.total_packets);
    put_u32_be(out, h.permutation_seed);
    return out;
}

std::optional<DatagramHeader> decode_header(const std::uint8_t* data,
                                            std::size_t size) {
    if (size < DatagramHeader::kSize) return std::nullopt;
    if (data[0] != DatagramHeader::kMagic0 || data[1] != DatagramHeader::kMagic1 ||
        data[2] != DatagramHeader::kVersion)
        return std::nullopt;
    DatagramHeader h;
    h.flags = data[3];
    h.message_id = get_u32_be(data + 4);
    h.packet_index = get_u16_be(data + 8);
    h.total_packets = get_u16_be(data + 10);
    h.permutation_seed = get_u32_be(data + 12);
    if (h.total_packets == 0 || h.packet_index >= h.total_packets)
        return std::nullopt;
    return h;
}

std::vector<std::vector<std::uint8_t>> encode_datagrams(
    const Vec& compressed, const di::Deployment& dep, std::uint32_t message_id,
    std::uint32_t permutation_seed) {
    const bool quantized =
        dep.codec && std::holds_alternative<codec::QuantizerSpec>(*dep.codec);
    const std::size_t elem_bytes = codec::element_wire_bytes(dep.codec);
    const std::size_t s = channel::elements_per_packet(dep.channel, elem_bytes);

    channel::PacketBatch batch =
        channel::packetize(compressed, s, permutation_seed, message_id);
    if (batch.total_packets() > 0xffff)
        throw std::invalid_argument("encode_datagrams: message exceeds 2^16 packets");

    std::vector<std::vector<std::uint8_t>> datagrams;
    datagrams.reserve(batch.total_packets());
    for (const auto& pkt : batch.packets) {
        DatagramHeader h;
        h.flags = quantized ? DatagramHeader::kFlagQuantized : 0;
        h.message_id = message_id;
        h.packet_index = pkt.index;
        h.total_packets = static_cast<std::uint16_t>(batch.total_packets());
        h.permutation_seed = permutation_seed;
        std::vector<std::uint8_t> dgram = encode_header(h);
        for (double v : pkt.values) {
            if (quantized) {
                auto code = static_cast<std::uint32_t>(v);
                for (std::size_t b = 0; b < elem_bytes; ++b)
                    dgram.push_back(static_cast<std::uint8_t>((code >> (8 * b)) & 0xff));
            } else {
                put_f32_le(dgram, static_cast<float>(v));
            }
        }
        datagrams.push_back(std::move(dgram));
    }
    return datagrams;
}

std::optional<DecodedDatagram> decode_datagram(const std::uint8_t* data,
                                               std::size_t size,
                                               std::size_t element_bytes) {
    auto header = decode_header(data, size);
    if (!header) return std::nullopt;
    const std::size_t payload = size - DatagramHeader::kSize;
    if (element_bytes == 0 || payload % element_bytes != 0) return std::nullopt;

    DecodedDatagram decoded;
    decoded.header = *header;
    const std::uint8_t* p = data + DatagramHeader::kSize;
    const bool quantized = header->flags & DatagramHeader::kFlagQuantized;
    for (std::size_t i = 0; i < payload / element_bytes; ++i) {
        if (quantized) {
            std::uint32_t code = 0;
            for (std::size_t b = 0; b < element_bytes; ++b)
                code |= static_cast<std::uint32_t>(p[b]) << (8 * b);
            decoded.elements.push_back(static_cast<double>(code));
        } else {
            float v;
            std::uint32_t bits = static_cast<std::uint32_t>(p[0]) |
                                 static_cast<std::uint32_t>(p[1]) << 8 |
                                 static_cast<std::uint32_t>(p[2]) << 16 |
                                 static_cast<std::uint32_t>(p[3]) << 24;
            std::memcpy(&v, &bits, 4);
            decoded.elements.push_back(static_cast<double>(v));
        }
        p += element_bytes;
    }
    return decoded;
}

Reassembler::Reassembler(std::size_t total_elements, double deadline_s,
                         std::size_t max_in_flight)
    : total_elements_(total_elements),
      deadline_s_(deadline_s),
      max_in_flight_(max_in_flight) {
    if (total_elements_ == 0)
        throw std::invalid_argument("reassembler: total elements must be positive");
    if (max_in_flight_ == 0)
        throw std::invalid_argument("reassembler: max in-flight must be positive");
}

void Reassembler::accept(const std::uint8_t* data, std::size_t size,
                         std::size_t element_bytes, double now_s) {
    auto decoded = decode_datagram(data, size, element_bytes);
    if (!decoded) {
        ++discarded_;
        return;
    }
    const auto& h = decoded->header;
    auto it = pending_.find(h.message_id);
    if (it == pending_.end()) {
        if (pending_.size() >= max_in_flight_) {
            // evict the oldest in-flight message
            const std::uint32_t oldest = arrival_order_.front();
            arrival_order_.erase(arrival_order_.begin());
            pending_.erase(oldest);
        }
        Pending fresh;
        fresh.first_seen_s = now_s;
        fresh.permutation_seed = h.permutation_seed;
        fresh.total_packets = h.total_packets;
        it = pending_.emplace(h.message_id, std::move(fresh)).first;
        arrival_order_.push_back(h.message_id);
    }
    // The stride cannot be read off total_packets alone (the sender may use
    // any packet size whose count rounds up to total_packets); derive it from
    // the packets themselves. Every packet but the last carries exactly the
    // stride; from the last alone it is (total - last) / (total_packets - 1).
    Pending& pend = it->second;
    if (pend.elements_per_packet == 0) {
        if (h.total_packets == 1 || h.packet_index + 1u < h.total_packets)
            pend.elements_per_packet = decoded->elements.size();
        else if (total_elements_ > decoded->elements.size())
            pend.elements_per_packet =
                (total_elements_ - decoded->elements.size()) /
                (h.total_packets - 1);
    }
    // duplicate packet index: last writer wins
    pend.packets[h.packet_index] = std::move(decoded->elements);
}

ReassembledMessage Reassembler::finish(std::uint32_t id,
                                       const Pending& pending) const {
    ReassembledMessage msg;
    msg.message_id = id;
    msg.total_packets = pending.total_packets;
    msg.packets_received = pending.packets.size();
    msg.complete = pending.packets.size() == pending.total_packets;
    msg.values = Vec::Zero(static_cast<Eigen::Index>(total_elements_));
    msg.mask.assign(total_elements_, 0);

    const auto perm = random_permutation(total_elements_, pending.permutation_seed);
    for (const auto& [index, values] : pending.packets) {
        const std::size_t begin =
            static_cast<std::size_t>(index) * pending.elements_per_packet;
        for (std::size_t k = 0; k < values.size(); ++k) {
            const std::size_t pos = begin + k;
            if (pos >= total_elements_) break;  // oversized trailing payload
            msg.values(static_cast<Eigen::Index>(perm[pos])) = values[k];
            msg.mask[perm[pos]] = 1;
        }
    }
    return msg;
}

std::vector<ReassembledMessage> Reassembler::drain_ready(double now_s) {
    std::vector<ReassembledMessage> ready;
    for (auto it = pending_.begin(); it != pending_.end();) {
        const bool complete = it->second.packets.size() == it->second.total_packets;
        const bool expired = now_s - it->second.first_seen_s >= deadline_s_;
        if (complete || expired) {
            ready.push_back(finish(it->first, it->second));
            arrival_order_.erase(
                std::find(arrival_order_.begin(), arrival_order_.end(), it->first));
            it = pending_.erase(it);
        } else {
            ++it;
        }
    }
    return ready;
}

std::vector<ReassembledMessage> Reassembler::drain_all() {
    std::vector<ReassembledMessage> all;
    for (const auto& [id, pending] : pending_) all.push_back(finish(id, pending));
    pending_.clear();
    arrival_order_.clear();
    return all;
}

std::string wire_csv_header() {
    return "message_id,predicted_class,fraction_received,all_lost";
}

std::string wire_csv_row(const WireRecord& rec) {
    std::ostringstream os;
    os << rec.message_id << ',' << rec.predicted_class << ','
       << rec.fraction_received << ',' << (rec.all_lost ? 1 : 0);
    return os.str();
}

namespace {

struct Socket {
    int fd = -1;
    explicit Socket(int f) : fd(f) {}
    ~Socket() {
        if (fd >= 0) ::close(fd);
    }
    Socket(const Socket&) = delete;
    Socket& operator=(const Socket&) = delete;
};

sockaddr_in make_addr(const std::string& address, std::uint16_t port) {
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(port);
    if (::inet_pton(AF_INET, address.c_str(), &addr.sin_addr) != 1)
        throw std::runtime_error("wire: invalid IPv4 address: " + address);
    return addr;
}

}  // namespace

std::vector<WireRecord> serve(const di::Deployment& dep, const ServeConfig& cfg,
                              const std::function<void(std::uint16_t)>& on_ready) {
    dep.validate();
    Socket sock(::socket(AF_INET, SOCK_DGRAM, 0));
    if (sock.fd < 0) throw std::runtime_error("wire: socket() failed");
    sockaddr_in addr = make_addr(cfg.bind_address, cfg.port);
    if (::bind(sock.fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0)
        throw std::runtime_error("wire: bind failed on " + cfg.bind_address + ":" +
                                 std::to_string(cfg.port));
    socklen_t len = sizeof addr;
    ::getsockname(sock.fd, reinterpret_cast<sockaddr*>(&addr), &len);
    if (on_ready) on_ready(ntohs(addr.sin_port));

    const std::size_t elem_bytes = codec::element_wire_bytes(dep.codec);
    Reassembler reassembler(dep.compressed_width(), cfg.deadline_s);

    std::ofstream log;
    if (!cfg.results_path.empty()) {
        log.open(cfg.results_path);
        if (!log)
            throw std::runtime_error("wire: cannot open results log " + cfg.results_path);
        log << wire_csv_header() << '\n';
    }

    std::vector<WireRecord> records;
    auto handle = [&](const ReassembledMessage& msg) {
        di::InferenceOutcome outcome =
            di::server_decode(msg.values, msg.mask, dep.channel.p, dep);
        WireRecord rec;
        rec.message_id = msg.message_id;
        rec.predicted_class = outcome.predicted_class;
        rec.fraction_received = outcome.fraction_received;
        rec.all_lost = outcome.all_lost;
        if (log) log << wire_csv_row(rec) << '\n';
        records.push_back(rec);
    };

    double last_activity = monotonic_seconds();
    std::vector<std::uint8_t> buf(65536);
    for (;;) {
        if (cfg.expected_messages > 0 && records.size() >= cfg.expected_messages)
            break;
        pollfd pfd{sock.fd, POLLIN, 0};
        const int rc = ::poll(&pfd, 1, 20);
        const double now = monotonic_seconds();
        if (rc > 0 && (pfd.revents & POLLIN)) {
            const ssize_t n = ::recvfrom(sock.fd, buf.data(), buf.size(), 0,
                                         nullptr, nullptr);
            if (n > 0) {
                reassembler.accept(buf.data(), static_cast<std::size_t>(n),
                                   elem_bytes, now);
                last_activity = now;
            }
        }
        for (const auto& msg : reassembler.drain_ready(now)) handle(msg);
        if (now - last_activity > cfg.idle_timeout_s) {
            for (const auto& msg : reassembler.drain_all()) handle(msg);
            break;
        }
    }
    return records;
}

void send_dataset(const harness::Dataset& data, const di::Deployment& dep,
                  const SendConfig& cfg) {
    dep.validate();
    Socket sock(::socket(AF_INET, SOCK_DGRAM, 0));
    if (sock.fd < 0) throw std::runtime_error("wire: socket() failed");
    sockaddr_in addr = make_addr(cfg.target_address, cfg.port);

    SplitMix64 loss_rng(cfg.loss_seed);
    SplitMix64 perm_rng(cfg.loss_seed ^ 0xD1B54A32D192ED03ULL);

    for (std::size_t i = 0; i < data.size(); ++i) {
        Vec x = data.features.row(static_cast<Eigen::Index>(i)).transpose();
        Vec encoded = di::device_encode(x, dep);
        auto datagrams = encode_datagrams(
            encoded, dep, static_cast<std::uint32_t>(i),
            static_cast<std::uint32_t>(perm_rng.next()));
        for (const auto& dgram : datagrams) {
            if (cfg.loss_inject_p > 0.0 && loss_rng.bernoulli(cfg.loss_inject_p))
                continue;  // injected loss, pre-socket
            if (::sendto(sock.fd, dgram.data(), dgram.size(), 0,
                         reinterpret_cast<sockaddr*>(&addr), sizeof addr) < 0)
                throw std::runtime_error("wire: sendto failed toward " +
                                         cfg.target_address + ":" +
                                         std::to_string(cfg.port));
        }
        if (cfg.send_interval_s > 0.0)
            std::this_thread::sleep_for(
                std::chrono::duration<double>(cfg.send_interval_s));
    }
}

}  // namespace lsnn::wire
