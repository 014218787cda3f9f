#ifndef LSNN_DATASET_HPP
#define LSNN_DATASET_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "lsnn/tensor.hpp"

namespace lsnn::harness {

struct Dataset {
    Mat features;             // N x d
    std::vector<int> labels;  // N, in [0, class_count)
    int class_count = 0;
    std::string source;
    std::uint64_t seed = 0;

    std::size_t size() const { return static_cast<std::size_t>(features.rows()); }
    std::size_t feature_dim() const { return static_cast<std::size_t>(features.cols()); }
    void validate() const;
};

struct SyntheticSplit {
    Dataset train;
    Dataset test;
};

// Gaussian mixture: one unit-covariance component per class, class means at
// seeded random unit directions scaled by `spread`. Deterministic per seed.
SyntheticSplit gen_synthetic(std::uint64_t seed, std::size_t feature_dim,
                             int classes, std::size_t n_train,
                             std::size_t n_test, double spread);

// CSV rows: d real features then one integer label; optional header.
Dataset load_csv(const std::string& path);

}  // namespace lsnn::harness

#endif
