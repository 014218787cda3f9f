#include "lsnn/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace lsnn::nn {

namespace {

std::optional<std::size_t> layer_out_dim(const LayerSpec& layer) {
    if (const auto* d = std::get_if<Dense>(&layer)) return d->out_dim;
    return std::nullopt;
}

std::optional<std::size_t> layer_in_dim(const LayerSpec& layer) {
    if (const auto* d = std::get_if<Dense>(&layer)) return d->in_dim;
    return std::nullopt;
}

Mat softmax_rows(const Mat& z) {
    Mat out(z.rows(), z.cols());
    for (Eigen::Index r = 0; r < z.rows(); ++r) {
        double m = z.row(r).maxCoeff();
        Eigen::ArrayXd e = (z.row(r).array() - m).exp();
        out.row(r) = (e / e.sum()).matrix();
    }
    return out;
}

}  // namespace

std::optional<std::size_t> Network::width_before(std::size_t layer_index) const {
    for (std::size_t i = layer_index; i-- > 0;)
        if (auto d = layer_out_dim(layers[i])) return d;
    return std::nullopt;
}

std::optional<std::size_t> Network::input_dim() const {
    for (const auto& l : layers)
        if (auto d = layer_in_dim(l)) return d;
    return std::nullopt;
}

std::optional<std::size_t> Network::output_dim() const {
    for (std::size_t i = layers.size(); i-- > 0;)
        if (auto d = layer_out_dim(layers[i])) return d;
    return std::nullopt;
}

void Network::validate() const {
    std::optional<std::size_t> width;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        if (const auto* d = std::get_if<Dense>(&layers[i])) {
            if (d->weight.rows() != static_cast<Eigen::Index>(d->out_dim) ||
                d->weight.cols() != static_cast<Eigen::Index>(d->in_dim) ||
                d->bias.size() != static_cast<Eigen::Index>(d->out_dim))
                throw std::invalid_argument("network: dense parameter shapes inconsistent at layer " + std::to_string(i));
            if (width && *width != d->in_dim)
                throw std::invalid_argument("network: dim mismatch between layers at layer " + std::to_string(i));
            width = d->out_dim;
        } else if (const auto* dr = std::get_if<Dropout>(&layers[i])) {
            if (!(dr->rate >= 0.0 && dr->rate < 1.0))
                throw std::invalid_argument("network: dropout rate must be in [0,1)");
        }
    }
}

ForwardTrace forward(const Network& net, const Mat& x, Mode mode,
                     SplitMix64* rng) {
    if (auto in = net.input_dim();
        in && static_cast<Eigen::Index>(*in) != x.cols())
        throw std::invalid_argument("forward: input width " + std::to_string(x.cols()) +
                                    " does not match network input dim " + std::to_string(*in));

    ForwardTrace trace;
    trace.mode = mode;
    trace.activations.reserve(net.layers.size() + 1);
    trace.activations.push_back(x);
    trace.dropout_masks.resize(net.layers.size());

    for (std::size_t i = 0; i < net.layers.size(); ++i) {
        const Mat& a = trace.activations.back();
        if (const auto* d = std::get_if<Dense>(&net.layers[i])) {
            if (a.cols() != static_cast<Eigen::Index>(d->in_dim))
                throw std::invalid_argument("forward: dim mismatch at layer " + std::to_string(i));
            Mat z = a * d->weight.transpose();
            z.rowwise() += d->bias.transpose();
            trace.activations.push_back(std::move(z));
        } else if (std::holds_alternative<Relu>(net.layers[i])) {
            trace.activations.push_back(a.cwiseMax(0.0));
        } else if (std::holds_alternative<Softmax>(net.layers[i])) {
            trace.activations.push_back(softmax_rows(a));
        } else {
            const auto& dr = std::get<Dropout>(net.layers[i]);
            if (mode == Mode::Eval || dr.rate == 0.0) {
                trace.activations.push_back(a);
                if (mode == Mode::Train)
                    trace.dropout_masks[i] = Mat::Ones(a.rows(), a.cols());
            } else {
                if (!rng)
                    throw std::invalid_argument("forward: Train-mode dropout requires an rng");
                Mat mask(a.rows(), a.cols());
                for (Eigen::Index r = 0; r < a.rows(); ++r)
                    for (Eigen::Index c = 0; c < a.cols(); ++c)
                        mask(r, c) = rng->bernoulli(dr.rate) ? 0.0 : 1.0;
                trace.dropout_masks[i] = mask;
                trace.activations.push_back(
                    (a.array() * mask.array() / (1.0 - dr.rate)).matrix());
            }
        }
    }
    return trace;
}

Gradients backward(const Network& net, const ForwardTrace& trace,
                   const Mat& grad_output) {
    if (trace.activations.size() != net.layers.size() + 1)
        throw std::invalid_argument("backward: trace does not match network");

    Gradients grads;
    grads.layers.resize(net.layers.size());
    Mat g = grad_output;

    for (std::size_t i = net.layers.size(); i-- > 0;) {
        const Mat& in = trace.activations[i];
        const Mat& out = trace.activations[i + 1];
        if (const auto* d = std::get_if<Dense>(&net.layers[i])) {
            grads.layers[i].weight = g.transpose() * in;
            grads.layers[i].bias = g.colwise().sum().transpose();
            g = g * d->weight;
        } else if (std::holds_alternative<Relu>(net.layers[i])) {
            // subgradient at 0 is 0
            g = (in.array() > 0.0).cast<double>() * g.array();
        } else if (std::holds_alternative<Softmax>(net.layers[i])) {
            // dz = y .* (g - rowwise dot(g, y))
            Mat gz(g.rows(), g.cols());
            for (Eigen::Index r = 0; r < g.rows(); ++r) {
                double dot = g.row(r).dot(out.row(r));
                gz.row(r) =
                    (out.row(r).array() * (g.row(r).array() - dot)).matrix();
            }
            g = std::move(gz);
        } else {
            const auto& dr = std::get<Dropout>(net.layers[i]);
            if (trace.mode == Mode::Eval) {
                if (dr.rate != 0.0)
                    throw std::logic_error("backward: dropout mask missing (Eval-mode trace)");
            } else {
                if (trace.dropout_masks[i].size() == 0)
                    throw std::logic_error("backward: dropout mask missing from trace");
                g = (g.array() * trace.dropout_masks[i].array() /
                     (1.0 - dr.rate))
                        .matrix();
            }
        }
    }
    grads.input = std::move(g);
    return grads;
}

double cross_entropy(const Mat& probs, const std::vector<int>& labels) {
    if (static_cast<Eigen::Index>(labels.size()) != probs.rows())
        throw std::invalid_argument("cross_entropy: batch size mismatch");
    double total = 0.0;
    for (Eigen::Index r = 0; r < probs.rows(); ++r) {
        int label = labels[static_cast<std::size_t>(r)];
        if (label < 0 || label >= probs.cols())
            throw std::out_of_range("cross_entropy: label out of range");
        total += -std::log(std::max(probs(r, label), 1e-12));
    }
    return total / static_cast<double>(probs.rows());
}

Mat cross_entropy_grad(const Mat& probs, const std::vector<int>& labels) {
    if (static_cast<Eigen::Index>(labels.size()) != probs.rows())
        throw std::invalid_argument("cross_entropy_grad: batch size mismatch");
    Mat g = Mat::Zero(probs.rows(), probs.cols());
    const double inv_batch = 1.0 / static_cast<double>(probs.rows());
    for (Eigen::Index r = 0; r < probs.rows(); ++r) {
        int label = labels[static_cast<std::size_t>(r)];
        if (label < 0 || label >= probs.cols())
            throw std::out_of_range("cross_entropy_grad: label out of range");
        g(r, label) = -inv_batch / std::max(probs(r, label), 1e-12);
    }
    return g;
}

std::pair<Network, Network> split(const Network& net,
                                  std::size_t division_index) {
    if (division_index == 0 || division_index >= net.layers.size())
        throw std::out_of_range("split: division index out of range");
    Network f_in, f_out;
    f_in.layers.assign(net.layers.begin(),
                       net.layers.begin() + static_cast<std::ptrdiff_t>(division_index));
    f_out.layers.assign(net.layers.begin() + static_cast<std::ptrdiff_t>(division_index),
                        net.layers.end());
    return {std::move(f_in), std::move(f_out)};
}

void init_weights(Network& net, SplitMix64& rng) {
    for (auto& layer : net.layers) {
        if (auto* d = std::get_if<Dense>(&layer)) {
            const double limit =
                std::sqrt(6.0 / static_cast<double>(d->in_dim + d->out_dim));
            d->weight.resize(static_cast<Eigen::Index>(d->out_dim),
                             static_cast<Eigen::Index>(d->in_dim));
            for (Eigen::Index r = 0; r < d->weight.rows(); ++r)
                for (Eigen::Index c = 0; c < d->weight.cols(); ++c)
                    d->weight(r, c) = (2.0 * rng.uniform() - 1.0) * limit;
            d->bias = Vec::Zero(static_cast<Eigen::Index>(d->out_dim));
        }
    }
}

Network make_mlp(const std::vector<std::size_t>& widths) {
    if (widths.size() < 2)
        throw std::invalid_argument("make_mlp: need at least input and output widths");
    Network net;
    for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
        Dense d;
        d.in_dim = widths[i];
        d.out_dim = widths[i + 1];
        d.weight = Mat::Zero(static_cast<Eigen::Index>(d.out_dim),
                             static_cast<Eigen::Index>(d.in_dim));
        d.bias = Vec::Zero(static_cast<Eigen::Index>(d.out_dim));
        net.layers.emplace_back(std::move(d));
        if (i + 2 < widths.size())
            net.layers.emplace_back(Relu{});
        else
            net.layers.emplace_back(Softmax{});
    }
    return net;
}

}  // namespace lsnn::nn
