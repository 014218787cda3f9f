#ifndef LSNN_WIRE_HPP
#define LSNN_WIRE_HPP

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "lsnn/dataset.hpp"
#include "lsnn/dipipeline.hpp"

namespace lsnn::wire {

// 16-byte datagram header; multi-byte fields big-endian.
struct DatagramHeader {
    static constexpr std::uint8_t kMagic0 = 0x53;
    static constexpr std::uint8_t kMagic1 = 0x49;
    static constexpr std::uint8_t kVersion = 1;
    static constexpr std::uint8_t kFlagQuantized = 0x01;
    static constexpr std::size_t kSize = 16;

    std::uint8_t flags = 0;
    std::uint32_t message_id = 0;
    std::uint16_t packet_index = 0;
    std::uint16_t total_packets = 0;
    std::uint32_t permutation_seed = 0;
};

std::vector<std::uint8_t> encode_header(const DatagramHeader& h);

// nullopt on bad magic/version/truncation; index bounds are also checked.
std::optional<DatagramHeader> decode_header(const std::uint8_t* data,
                                            std::size_t size);

// One datagram per packet: header + elements in permuted order. Quantized
// codes go little-endian in ceil(n/8)-byte cells (byte-aligned, not
// bit-packed); raw/PCA values as IEEE-754 f32 little-endian.
std::vector<std::vector<std::uint8_t>> encode_datagrams(
    const Vec& compressed, const di::Deployment& dep, std::uint32_t message_id,
    std::uint32_t permutation_seed);

struct DecodedDatagram {
    DatagramHeader header;
    std::vector<double> elements;
};

// element_bytes: 4 for f32 payloads, ceil(n/8) for quantized codes.
std::optional<DecodedDatagram> decode_datagram(const std::uint8_t* data,
                                               std::size_t size,
                                               std::size_t element_bytes);

struct ReassembledMessage {
    std::uint32_t message_id = 0;
    Vec values;                       // zero-filled where packets are missing
    std::vector<std::uint8_t> mask;   // per-element arrival flags
    std::size_t packets_received = 0;
    std::size_t total_packets = 0;
    bool complete = false;            // all packets vs deadline expiry
};

// Per-message_id reassembly table with a deadline and a bound on in-flight
// messages (oldest evicted). Owned by the receive loop; not thread-safe.
class Reassembler {
public:
    Reassembler(std::size_t total_elements, double deadline_s,
                std::size_t max_in_flight = 64);

    // Feed one datagram; now_s is the caller's clock. Duplicate packet
    // indices are last-writer-wins; malformed datagrams count, not throw.
    void accept(const std::uint8_t* data, std::size_t size,
                std::size_t element_bytes, double now_s);

    // Messages that completed or whose deadline passed as of now_s.
    std::vector<ReassembledMessage> drain_ready(double now_s);
    // Whatever is still pending, regardless of deadline.
    std::vector<ReassembledMessage> drain_all();

    std::size_t discarded_datagrams() const { return discarded_; }

private:
    struct Pending {
        double first_seen_s = 0.0;
        std::uint32_t permutation_seed = 0;
        std::size_t elements_per_packet = 0;
        std::uint16_t total_packets = 0;
        std::map<std::uint16_t, std::vector<double>> packets;
    };

    ReassembledMessage finish(std::uint32_t id, const Pending& pending) const;

    std::size_t total_elements_;
    double deadline_s_;
    std::size_t max_in_flight_;
    std::size_t discarded_ = 0;
    std::map<std::uint32_t, Pending> pending_;
    std::vector<std::uint32_t> arrival_order_;
};

struct ServeConfig {
    std::string bind_address = "127.0.0.1";
    std::uint16_t port = 0;  // 0 = ephemeral
    double deadline_s = 0.1;
    std::size_t expected_messages = 0;  // stop after this many (0 = no limit)
    double idle_timeout_s = 5.0;        // stop when idle this long
    std::string results_path;
};

struct SendConfig {
    std::string target_address = "127.0.0.1";
    std::uint16_t port = 0;
    double loss_inject_p = 0.0;  // Bernoulli drop before the socket write
    std::uint64_t loss_seed = 1;
    double send_interval_s = 0.0;
};

struct WireRecord {
    std::uint32_t message_id = 0;
    int predicted_class = -1;
    double fraction_received = 0.0;
    bool all_lost = false;
};

std::string wire_csv_header();
std::string wire_csv_row(const WireRecord& rec);

// Bind, reassemble per message_id, decode and predict, append one CSV row
// per message. Returns the records. on_ready (if set) fires after bind with
// the actually-bound port.
std::vector<WireRecord> serve(const di::Deployment& dep, const ServeConfig& cfg,
                              const std::function<void(std::uint16_t)>& on_ready = nullptr);

// Stream dataset rows as messages (message_id = row index), with optional
// sender-side Bernoulli loss injection for deterministic tests.
void send_dataset(const harness::Dataset& data, const di::Deployment& dep,
                  const SendConfig& cfg);

}  // namespace lsnn::wire

#endif
