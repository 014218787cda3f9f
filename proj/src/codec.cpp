#include "lsnn/codec.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "lsnn/bytes.hpp"
#include "lsnn/model_io.hpp"

namespace lsnn::codec {

void QuantizerSpec::validate() const {
    if (s_min.size() == 0 || s_min.size() != s_max.size())
        throw std::invalid_argument("quantizer: scale vector sizes inconsistent");
    if (n_bits < 1 || n_bits > 31)
        throw std::invalid_argument("quantizer: n_bits must be in [1, 31]");
    for (Eigen::Index i = 0; i < s_min.size(); ++i)
        if (!(s_min(i) < s_max(i)))
            throw std::invalid_argument("quantizer: s_min must be < s_max per element");
}

void PcaSpec::validate() const {
    if (W.rows() == 0 || W.cols() == 0 || W.rows() > W.cols())
        throw std::invalid_argument("pca: W must be D'xD with D' <= D");
    if (bias.size() != W.cols())
        throw std::invalid_argument("pca: bias length must equal D");
    Mat gram = W * W.transpose();
    if ((gram - Mat::Identity(W.rows(), W.rows())).cwiseAbs().maxCoeff() > 1e-8)
        throw std::invalid_argument("pca: rows of W are not orthonormal");
    if ((W * bias).cwiseAbs().maxCoeff() > 1e-6)
        throw std::invalid_argument("pca: bias not orthogonal to row space of W");
}

int bits_for_budget(std::size_t message_bytes, std::size_t float_bytes) {
    if (message_bytes == 0 || float_bytes == 0 || message_bytes > float_bytes)
        throw std::invalid_argument("bits_for_budget: need 0 < M <= M_float");
    std::size_t n = 32 * message_bytes / float_bytes;
    if (n == 0)
        throw std::invalid_argument("bits_for_budget: budget below one bit per element");
    return static_cast<int>(std::min<std::size_t>(n, 31));
}

std::size_t dims_for_budget(std::size_t message_bytes, std::size_t float_bytes,
                            std::size_t full_dim) {
    if (message_bytes == 0 || float_bytes == 0 || message_bytes > float_bytes)
        throw std::invalid_argument("dims_for_budget: need 0 < M <= M_float");
    std::size_t d = message_bytes * full_dim / float_bytes;
    if (d == 0)
        throw std::invalid_argument("dims_for_budget: budget below one dimension");
    return std::min(d, full_dim);
}

QuantizerSpec calibrate_quantizer(const Mat& calibration_rows, int n_bits) {
    if (calibration_rows.rows() < 2)
        throw std::invalid_argument("calibrate_quantizer: need at least 2 calibration vectors");
    QuantizerSpec spec;
    spec.n_bits = n_bits;
    spec.s_min = calibration_rows.colwise().minCoeff().transpose();
    spec.s_max = calibration_rows.colwise().maxCoeff().transpose();
    constexpr double kEps = 1e-6;
    for (Eigen::Index i = 0; i < spec.s_min.size(); ++i) {
        if (spec.s_min(i) == spec.s_max(i)) {
            spec.s_min(i) -= kEps;
            spec.s_max(i) += kEps;
        }
    }
    spec.validate();
    return spec;
}

Vec clip(const Vec& a, const QuantizerSpec& spec) {
    return a.cwiseMax(spec.s_min).cwiseMin(spec.s_max);
}

namespace {

// round half away from zero, fixed for cross-language bit-compatibility
double round_half_away(double x) {
    return x >= 0.0 ? std::floor(x + 0.5) : std::ceil(x - 0.5);
}

}  // namespace

std::vector<std::int32_t> quantize(const Vec& a, const QuantizerSpec& spec) {
    spec.validate();
    if (a.size() != spec.s_min.size())
        throw std::invalid_argument("quantize: dimension mismatch");
    const double levels = std::ldexp(1.0, spec.n_bits) - 1.0;  // 2^n - 1
    std::vector<std::int32_t> q(static_cast<std::size_t>(a.size()));
    for (Eigen::Index i = 0; i < a.size(); ++i) {
        double c = std::min(std::max(a(i), spec.s_min(i)), spec.s_max(i));
        double scaled = (c - spec.s_min(i)) * levels / (spec.s_max(i) - spec.s_min(i));
        q[static_cast<std::size_t>(i)] =
            static_cast<std::int32_t>(round_half_away(scaled));
    }
    return q;
}

Vec dequantize(const std::vector<std::int32_t>& q, const QuantizerSpec& spec) {
    spec.validate();
    if (static_cast<Eigen::Index>(q.size()) != spec.s_min.size())
        throw std::invalid_argument("dequantize: dimension mismatch");
    const double levels = std::ldexp(1.0, spec.n_bits) - 1.0;
    const std::int64_t max_code = static_cast<std::int64_t>(levels);
    Vec out(spec.s_min.size());
    for (Eigen::Index i = 0; i < out.size(); ++i) {
        std::int32_t code = q[static_cast<std::size_t>(i)];
        if (code < 0 || code > max_code)
            throw std::invalid_argument("dequantize: code out of range");
        out(i) = spec.s_min(i) +
                 static_cast<double>(code) * (spec.s_max(i) - spec.s_min(i)) / levels;
    }
    return out;
}

EigenResult jacobi_eigen_symmetric(const Mat& symmetric) {
    if (symmetric.rows() != symmetric.cols())
        throw std::invalid_argument("jacobi: matrix must be square");
    const Eigen::Index n = symmetric.rows();
    Mat a = symmetric;
    Mat v = Mat::Identity(n, n);
    constexpr double kTol = 1e-10;
    constexpr int kMaxSweeps = 100;

    for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
        double off = 0.0;
        for (Eigen::Index p = 0; p < n; ++p)
            for (Eigen::Index q = p + 1; q < n; ++q) off += 2.0 * a(p, q) * a(p, q);
        if (std::sqrt(off) < kTol) break;

        for (Eigen::Index p = 0; p < n - 1; ++p) {
            for (Eigen::Index q = p + 1; q < n; ++q) {
                if (a(p, q) == 0.0) continue;
                const double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
                const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (Eigen::Index k = 0; k < n; ++k) {
                    const double akp = a(k, p);
                    const double akq = a(k, q);
                    a(k, p) = c * akp - s * akq;
                    a(k, q) = s * akp + c * akq;
                }
                for (Eigen::Index k = 0; k < n; ++k) {
                    const double apk = a(p, k);
                    const double aqk = a(q, k);
                    a(p, k) = c * apk - s * aqk;
                    a(q, k) = s * apk + c * aqk;
                }
                for (Eigen::Index k = 0; k < n; ++k) {
                    const double vkp = v(k, p);
                    const double vkq = v(k, q);
                    v(k, p) = c * vkp - s * vkq;
                    v(k, q) = s * vkp + c * vkq;
                }
            }
        }
    }

    // sort descending by eigenvalue, then fix each vector's sign
    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](Eigen::Index i, Eigen::Index j) {
        return a(i, i) > a(j, j);
    });

    EigenResult result;
    result.values.resize(n);
    result.vectors.resize(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        result.values(i) = a(order[static_cast<std::size_t>(i)],
                             order[static_cast<std::size_t>(i)]);
        Vec col = v.col(order[static_cast<std::size_t>(i)]);
        Eigen::Index imax = 0;
        col.cwiseAbs().maxCoeff(&imax);
        if (col(imax) < 0.0) col = -col;
        result.vectors.col(i) = col;
    }
    return result;
}

PcaSpec fit_pca(const Mat& calibration_rows, std::size_t reduced_dim) {
    const std::size_t d = static_cast<std::size_t>(calibration_rows.cols());
    if (reduced_dim == 0 || reduced_dim > d)
        throw std::invalid_argument("fit_pca: reduced dim must be in [1, D]");
    if (static_cast<std::size_t>(calibration_rows.rows()) < reduced_dim + 1)
        throw std::invalid_argument("fit_pca: need at least D'+1 calibration vectors");

    const double n = static_cast<double>(calibration_rows.rows());
    Vec mean = calibration_rows.colwise().mean().transpose();
    Mat centered = calibration_rows.rowwise() - mean.transpose();
    Mat cov = centered.transpose() * centered / n;  // 1/N, as specified

    EigenResult eig = jacobi_eigen_symmetric(cov);

    PcaSpec spec;
    spec.W = eig.vectors.leftCols(static_cast<Eigen::Index>(reduced_dim)).transpose();
    spec.bias = Vec::Zero(static_cast<Eigen::Index>(d));
    for (std::size_t i = reduced_dim; i < d; ++i) {
        Vec u = eig.vectors.col(static_cast<Eigen::Index>(i));
        spec.bias += mean.dot(u) * u;
    }
    return spec;
}

Vec pca_compress(const Vec& a, const PcaSpec& spec) {
    if (a.size() != spec.W.cols())
        throw std::invalid_argument("pca_compress: dimension mismatch");
    return spec.W * a;
}

Vec pca_decompress(const Vec& reduced, const PcaSpec& spec) {
    if (reduced.size() != spec.W.rows())
        throw std::invalid_argument("pca_decompress: dimension mismatch");
    return spec.W.transpose() * reduced + spec.bias;
}

std::size_t element_wire_bytes(const std::optional<CodecSpec>& codec) {
    if (codec) {
        if (const auto* q = std::get_if<QuantizerSpec>(&*codec))
            return static_cast<std::size_t>((q->n_bits + 7) / 8);
    }
    return 4;  // IEEE-754 f32
}

std::size_t compressed_dim(const std::optional<CodecSpec>& codec,
                           std::size_t raw_dim) {
    if (codec) {
        if (const auto* p = std::get_if<PcaSpec>(&*codec)) return p->reduced_dim();
    }
    return raw_dim;
}

namespace {
constexpr std::uint8_t kTagQuantizer = 1;
constexpr std::uint8_t kTagPca = 2;
}  // namespace

std::vector<std::uint8_t> serialize_spec(const CodecSpec& spec) {
    std::vector<std::uint8_t> out;
    if (const auto* q = std::get_if<QuantizerSpec>(&spec)) {
        q->validate();
        put_u8(out, kTagQuantizer);
        put_u32_le(out, static_cast<std::uint32_t>(q->dim()));
        put_u32_le(out, static_cast<std::uint32_t>(q->n_bits));
        for (Eigen::Index i = 0; i < q->s_min.size(); ++i)
            put_f64_le(out, q->s_min(i));
        for (Eigen::Index i = 0; i < q->s_max.size(); ++i)
            put_f64_le(out, q->s_max(i));
    } else {
        const auto& p = std::get<PcaSpec>(spec);
        p.validate();
        put_u8(out, kTagPca);
        put_u32_le(out, static_cast<std::uint32_t>(p.full_dim()));
        put_u32_le(out, static_cast<std::uint32_t>(p.reduced_dim()));
        for (Eigen::Index r = 0; r < p.W.rows(); ++r)
            for (Eigen::Index c = 0; c < p.W.cols(); ++c)
                put_f64_le(out, p.W(r, c));
        for (Eigen::Index i = 0; i < p.bias.size(); ++i)
            put_f64_le(out, p.bias(i));
    }
    return out;
}

CodecSpec deserialize_spec(const std::vector<std::uint8_t>& bytes) {
    ByteReader r(bytes.data(), bytes.size());
    std::uint8_t tag = r.u8();
    if (!r.ok) throw nn::ParseError("codec spec: empty stream", 0);
    if (tag == kTagQuantizer) {
        std::uint32_t d = r.u32_le();
        std::uint32_t n_bits = r.u32_le();
        if (!r.ok) throw nn::ParseError("codec spec: truncated header", r.pos);
        QuantizerSpec q;
        q.n_bits = static_cast<int>(n_bits);
        q.s_min.resize(static_cast<Eigen::Index>(d));
        q.s_max.resize(static_cast<Eigen::Index>(d));
        for (std::uint32_t i = 0; i < d; ++i)
            q.s_min(static_cast<Eigen::Index>(i)) = r.f64_le();
        for (std::uint32_t i = 0; i < d; ++i)
            q.s_max(static_cast<Eigen::Index>(i)) = r.f64_le();
        if (!r.ok) throw nn::ParseError("codec spec: truncated stream", r.pos);
        q.validate();
        return q;
    }
    if (tag == kTagPca) {
        std::uint32_t d = r.u32_le();
        std::uint32_t dp = r.u32_le();
        if (!r.ok) throw nn::ParseError("codec spec: truncated header", r.pos);
        if (dp == 0 || dp > d)
            throw nn::ParseError("codec spec: bad PCA dimensions", 1);
        PcaSpec p;
        p.W.resize(static_cast<Eigen::Index>(dp), static_cast<Eigen::Index>(d));
        for (std::uint32_t rw = 0; rw < dp; ++rw)
            for (std::uint32_t c = 0; c < d; ++c)
                p.W(static_cast<Eigen::Index>(rw), static_cast<Eigen::Index>(c)) =
                    r.f64_le();
        p.bias.resize(static_cast<Eigen::Index>(d));
        for (std::uint32_t i = 0; i < d; ++i)
            p.bias(static_cast<Eigen::Index>(i)) = r.f64_le();
        if (!r.ok) throw nn::ParseError("codec spec: truncated stream", r.pos);
        p.validate();
        return p;
    }
    throw nn::ParseError("codec spec: unknown tag", 0);
}

void save_spec(const CodecSpec& spec, const std::string& path) {
    auto bytes = serialize_spec(spec);
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open for write: " + path);
    f.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
}

CodecSpec load_spec(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open for read: " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                                    std::istreambuf_iterator<char>());
    return deserialize_spec(bytes);
}

}  // namespace lsnn::codec
