#ifndef LSNN_TENSOR_HPP
#define LSNN_TENSOR_HPP

#include <Eigen/Dense>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace lsnn {

using Mat = Eigen::MatrixXd;  // rows = batch, cols = features
using Vec = Eigen::VectorXd;

// Flat row-major tensor. The boundary type for model files, datasets and the
// CLI; the engine itself works on Eigen matrices.
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<double> data;

    Tensor() = default;
    Tensor(std::vector<std::size_t> s, std::vector<double> d)
        : shape(std::move(s)), data(std::move(d)) {
        if (element_count(shape) != data.size())
            throw std::invalid_argument("tensor: shape/data size mismatch");
    }

    static std::size_t element_count(const std::vector<std::size_t>& shape) {
        std::size_t n = 1;
        for (auto s : shape) n *= s;
        return n;
    }

    std::size_t size() const { return data.size(); }

    bool all_finite() const {
        for (double v : data)
            if (!std::isfinite(v)) return false;
        return true;
    }
};

inline Vec to_vec(const Tensor& t) {
    return Eigen::Map<const Vec>(t.data.data(),
                                 static_cast<Eigen::Index>(t.data.size()));
}

inline Tensor from_vec(const Vec& v) {
    return Tensor({static_cast<std::size_t>(v.size())},
                  std::vector<double>(v.data(), v.data() + v.size()));
}

}  // namespace lsnn

#endif
