#include "lsnn/dataset.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "lsnn/rng.hpp"

namespace lsnn::harness {

void Dataset::validate() const {
    if (labels.size() != size())
        throw std::invalid_argument("dataset: feature/label count mismatch");
    if (class_count < 2)
        throw std::invalid_argument("dataset: need at least 2 classes");
    for (int y : labels)
        if (y < 0 || y >= class_count)
            throw std::invalid_argument("dataset: label out of range");
    for (Eigen::Index r = 0; r < features.rows(); ++r)
        for (Eigen::Index c = 0; c < features.cols(); ++c)
            if (!std::isfinite(features(r, c)))
                throw std::invalid_argument("dataset: non-finite feature");
}

namespace {

Dataset sample_mixture(const Mat& means, std::size_t n, SplitMix64& rng,
                       std::uint64_t seed, const std::string& source) {
    const int classes = static_cast<int>(means.rows());
    Dataset ds;
    ds.class_count = classes;
    ds.seed = seed;
    ds.source = source;
    ds.features.resize(static_cast<Eigen::Index>(n), means.cols());
    ds.labels.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const int label = static_cast<int>(rng.next() % static_cast<std::uint64_t>(classes));
        ds.labels[i] = label;
        for (Eigen::Index c = 0; c < means.cols(); ++c)
            ds.features(static_cast<Eigen::Index>(i), c) =
                means(label, c) + rng.gaussian();
    }
    return ds;
}

}  // namespace

SyntheticSplit gen_synthetic(std::uint64_t seed, std::size_t feature_dim,
                             int classes, std::size_t n_train,
                             std::size_t n_test, double spread) {
    if (classes < 2)
        throw std::invalid_argument("gen_synthetic: need at least 2 classes");
    if (feature_dim == 0 || n_train == 0 || n_test == 0)
        throw std::invalid_argument("gen_synthetic: sizes must be positive");

    SplitMix64 rng(seed);

    // class means: random unit directions scaled by spread
    Mat means(classes, static_cast<Eigen::Index>(feature_dim));
    for (int k = 0; k < classes; ++k) {
        Vec dir(static_cast<Eigen::Index>(feature_dim));
        for (Eigen::Index c = 0; c < dir.size(); ++c) dir(c) = rng.gaussian();
        means.row(k) = (spread / dir.norm()) * dir.transpose();
    }

    SyntheticSplit split;
    SplitMix64 train_rng = rng.fork(1);
    SplitMix64 test_rng = rng.fork(2);
    split.train = sample_mixture(means, n_train, train_rng, seed, "synthetic/train");
    split.test = sample_mixture(means, n_test, test_rng, seed, "synthetic/test");
    return split;
}

Dataset load_csv(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open csv: " + path);

    std::vector<std::vector<double>> rows;
    std::vector<int> labels;
    std::string line;
    std::size_t line_no = 0;
    std::size_t width = 0;

    while (std::getline(f, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (cells.empty()) continue;

        std::vector<double> values;
        values.reserve(cells.size());
        bool numeric = true;
        for (const auto& c : cells) {
            try {
                std::size_t used = 0;
                double v = std::stod(c, &used);
                while (used < c.size() && std::isspace(static_cast<unsigned char>(c[used]))) ++used;
                if (used != c.size()) { numeric = false; break; }
                values.push_back(v);
            } catch (const std::exception&) {
                numeric = false;
                break;
            }
        }
        if (!numeric) {
            if (line_no == 1) continue;  // header row
            throw std::runtime_error("csv: non-numeric cell at line " +
                                     std::to_string(line_no));
        }
        if (values.size() < 2)
            throw std::runtime_error("csv: need at least one feature and a label at line " +
                                     std::to_string(line_no));
        if (width == 0) width = values.size();
        if (values.size() != width)
            throw std::runtime_error("csv: ragged row at line " +
                                     std::to_string(line_no));
        const double raw_label = values.back();
        values.pop_back();
        if (raw_label != std::floor(raw_label) || raw_label < 0)
            throw std::runtime_error("csv: label must be a nonnegative integer at line " +
                                     std::to_string(line_no));
        labels.push_back(static_cast<int>(raw_label));
        rows.push_back(std::move(values));
    }
    if (rows.empty()) throw std::runtime_error("csv: no data rows in " + path);

    Dataset ds;
    ds.source = path;
    ds.features.resize(static_cast<Eigen::Index>(rows.size()),
                       static_cast<Eigen::Index>(width - 1));
    for (std::size_t r = 0; r < rows.size(); ++r)
        for (std::size_t c = 0; c + 1 < width; ++c)
            ds.features(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
                rows[r][c];
    ds.labels = std::move(labels);
    int max_label = 0;
    for (int y : ds.labels) max_label = std::max(max_label, y);
    ds.class_count = max_label + 1;
    ds.validate();
    return ds;
}

}  // namespace lsnn::harness
