#ifndef LSNN_NN_HPP
#define LSNN_NN_HPP

#include <cstddef>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "lsnn/rng.hpp"
#include "lsnn/tensor.hpp"

namespace lsnn::nn {

struct Dense {
    std::size_t in_dim = 0;
    std::size_t out_dim = 0;
    Mat weight;  // out_dim x in_dim
    Vec bias;    // out_dim
};

struct Relu {};
struct Softmax {};

struct Dropout {
    double rate = 0.0;  // in [0, 1)
};

using LayerSpec = std::variant<Dense, Relu, Softmax, Dropout>;

enum class Mode { Train, Eval };

struct Network {
    std::vector<LayerSpec> layers;

    // Output width of the last shaped layer before `layer_index`, or nullopt
    // if none exists (shapeless prefix).
    std::optional<std::size_t> width_before(std::size_t layer_index) const;
    std::optional<std::size_t> input_dim() const;
    std::optional<std::size_t> output_dim() const;
    void validate() const;  // throws on incompatible consecutive dims
};

// Everything backward needs: per-layer activations (activations[0] is the
// input, activations[i+1] the output of layer i) and the dropout masks drawn
// during a Train-mode forward.
struct ForwardTrace {
    Mode mode = Mode::Eval;
    std::vector<Mat> activations;
    std::vector<Mat> dropout_masks;  // one slot per layer; empty if unused
    const Mat& output() const { return activations.back(); }
};

struct LayerGrads {
    Mat weight;  // empty for parameterless layers
    Vec bias;
};

struct Gradients {
    std::vector<LayerGrads> layers;
    Mat input;  // dLoss/dInput, same shape as the forward input
};

// Forward pass over a batch (rows = samples). rng is required only when
// mode == Train and the net contains a Dropout layer.
ForwardTrace forward(const Network& net, const Mat& x, Mode mode,
                     SplitMix64* rng = nullptr);

// Backprop from dLoss/dOutput through every layer of `net`. The trace must
// come from a matching forward call; reusing an Eval-mode trace for a net
// with Dropout is a state error.
Gradients backward(const Network& net, const ForwardTrace& trace,
                   const Mat& grad_output);

// Mean over the batch of -log(probs[label]), clamped below by -log(1e-12).
double cross_entropy(const Mat& probs, const std::vector<int>& labels);

// dLoss/dProbs for the loss above (1/batch folded in).
Mat cross_entropy_grad(const Mat& probs, const std::vector<int>& labels);

// Cut the layer list at division_index: f_out(f_in(x)) == net(x) exactly.
std::pair<Network, Network> split(const Network& net,
                                  std::size_t division_index);

// Glorot-uniform init of every Dense layer, in place.
void init_weights(Network& net, SplitMix64& rng);

Network make_mlp(const std::vector<std::size_t>& widths);  // Dense+ReLU, Softmax head

}  // namespace lsnn::nn

#endif
