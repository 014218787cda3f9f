#include "lsnn/adam.hpp"

#include <cmath>
#include <stdexcept>

namespace lsnn::nn {

void adam_step(const std::vector<ParamView>& params,
               const std::vector<ParamView>& grads, AdamState& state,
               double lr, const AdamConfig& cfg) {
    if (params.size() != grads.size())
        throw std::invalid_argument("adam_step: param/grad tensor count mismatch");

    if (state.m.empty()) {
        state.m.resize(params.size());
        state.v.resize(params.size());
        for (std::size_t i = 0; i < params.size(); ++i) {
            state.m[i].assign(params[i].size, 0.0);
            state.v[i].assign(params[i].size, 0.0);
        }
    }

    state.t += 1;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));

    for (std::size_t i = 0; i < params.size(); ++i) {
        if (params[i].size != grads[i].size ||
            state.m[i].size() != params[i].size)
            throw std::invalid_argument("adam_step: tensor shape mismatch");
        double* w = params[i].data;
        const double* g = grads[i].data;
        double* m = state.m[i].data();
        double* v = state.v[i].data();
        for (std::size_t k = 0; k < params[i].size; ++k) {
            m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * g[k];
            v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * g[k] * g[k];
            const double m_hat = m[k] / bc1;
            const double v_hat = v[k] / bc2;
            w[k] -= lr * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
        }
    }
}

}  // namespace lsnn::nn
