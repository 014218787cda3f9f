#ifndef LSNN_ADAM_HPP
#define LSNN_ADAM_HPP

#include <cstddef>
#include <vector>

namespace lsnn::nn {

// Mutable view of one parameter tensor's storage.
struct ParamView {
    double* data = nullptr;
    std::size_t size = 0;
};

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

struct AdamState {
    std::vector<std::vector<double>> m;  // first moments, one per tensor
    std::vector<std::vector<double>> v;  // second moments
    long t = 0;
};

// Standard Adam with bias correction; lazily sizes the state on first use.
void adam_step(const std::vector<ParamView>& params,
               const std::vector<ParamView>& grads, AdamState& state,
               double lr, const AdamConfig& cfg = {});

}  // namespace lsnn::nn

#endif
