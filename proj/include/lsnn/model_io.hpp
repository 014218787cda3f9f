#ifndef LSNN_MODEL_IO_HPP
#define LSNN_MODEL_IO_HPP

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "lsnn/nn.hpp"

namespace lsnn::nn {

// Model file: magic "LSNN", format version u16, layer count u16; per layer a
// kind tag u8, dims as u32 and parameters as f64, all little-endian,
// weights row-major. Round trips are bit-exact.
inline constexpr std::uint16_t kModelFormatVersion = 1;

class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& what, std::size_t offset)
        : std::runtime_error(what + " (at byte " + std::to_string(offset) + ")"),
          offset_(offset) {}
    std::size_t offset() const { return offset_; }

private:
    std::size_t offset_;
};

std::vector<std::uint8_t> serialize(const Network& net);
Network deserialize(const std::vector<std::uint8_t>& bytes);

void save_network(const Network& net, const std::string& path);
Network load_network(const std::string& path);

}  // namespace lsnn::nn

#endif
