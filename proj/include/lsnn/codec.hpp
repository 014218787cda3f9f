#ifndef LSNN_CODEC_HPP
#define LSNN_CODEC_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "lsnn/tensor.hpp"

namespace lsnn::codec {

// Per-element affine quantizer: values are clipped to [s_min, s_max] and
// mapped to n-bit integer codes in [0, 2^n - 1].
struct QuantizerSpec {
    Vec s_min;
    Vec s_max;
    int n_bits = 8;  // in [1, 31]; 32 means "no quantization" upstream

    std::size_t dim() const { return static_cast<std::size_t>(s_min.size()); }
    void validate() const;
};

// PCA reduction: rows of W are the top-D' covariance eigenvectors; bias is
// the projection of the calibration mean onto the discarded eigenvector span.
struct PcaSpec {
    Mat W;     // D' x D, orthonormal rows
    Vec bias;  // D

    std::size_t full_dim() const { return static_cast<std::size_t>(W.cols()); }
    std::size_t reduced_dim() const { return static_cast<std::size_t>(W.rows()); }
    void validate() const;
};

using CodecSpec = std::variant<QuantizerSpec, PcaSpec>;

// n = floor(32 M / M_float); throws if the budget cannot afford one bit,
// clamps 32 down to 31 (n = 32 means the quantizer is disabled).
int bits_for_budget(std::size_t message_bytes, std::size_t float_bytes);

// D' = floor(M D / M_float).
std::size_t dims_for_budget(std::size_t message_bytes, std::size_t float_bytes,
                            std::size_t full_dim);

// Per-element min/max over the calibration set; degenerate (constant)
// elements are widened by 1e-6 on each side.
QuantizerSpec calibrate_quantizer(const Mat& calibration_rows, int n_bits);

std::vector<std::int32_t> quantize(const Vec& a, const QuantizerSpec& spec);
Vec dequantize(const std::vector<std::int32_t>& q, const QuantizerSpec& spec);

Vec clip(const Vec& a, const QuantizerSpec& spec);

// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations,
// iterated until the off-diagonal Frobenius norm drops below 1e-10.
// Eigenvalues descending; each eigenvector's largest-|.| component positive.
struct EigenResult {
    Vec values;
    Mat vectors;  // column i is the eigenvector for values[i]
};
EigenResult jacobi_eigen_symmetric(const Mat& symmetric);

// Covariance uses the 1/N normalization. Needs at least reduced_dim + 1 rows.
PcaSpec fit_pca(const Mat& calibration_rows, std::size_t reduced_dim);

Vec pca_compress(const Vec& a, const PcaSpec& spec);
Vec pca_decompress(const Vec& reduced, const PcaSpec& spec);

// Wire width of one compressed element in bytes: ceil(n/8) for quantizer
// codes, 4 (f32) for PCA coefficients and raw activations.
std::size_t element_wire_bytes(const std::optional<CodecSpec>& codec);
std::size_t compressed_dim(const std::optional<CodecSpec>& codec,
                           std::size_t raw_dim);

// Codec spec file: tag u8 (1 = quantizer, 2 = PCA), dimensions u32,
// payload arrays as little-endian f64.
std::vector<std::uint8_t> serialize_spec(const CodecSpec& spec);
CodecSpec deserialize_spec(const std::vector<std::uint8_t>& bytes);
void save_spec(const CodecSpec& spec, const std::string& path);
CodecSpec load_spec(const std::string& path);

}  // namespace lsnn::codec

#endif
