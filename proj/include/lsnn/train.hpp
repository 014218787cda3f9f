#ifndef LSNN_TRAIN_HPP
#define LSNN_TRAIN_HPP

#include <cstdint>
#include <functional>
#include <vector>

#include "lsnn/adam.hpp"
#include "lsnn/nn.hpp"

namespace lsnn::nn {

struct TrainConfig {
    double learning_rate = 0.001;
    std::size_t batch_size = 128;
    std::size_t max_epochs = 150;
    std::size_t patience = 20;
    double validation_fraction = 0.1;
    std::uint64_t seed = 0;
    // When true, the per-epoch validation loss is computed with the
    // training-mode forward pass (stochastic layers active), averaged over a
    // few draws whose masks are fixed across epochs so the values stay
    // comparable. Deterministic Eval-mode validation selects the snapshot
    // with the best clean loss, which for a heavily-regularized objective is
    // not the snapshot that best minimizes the objective being trained.
    bool objective_validation = false;

    void validate() const;
};

// Anything the mini-batch loop can optimize: a plain Network or the
// fine-tuning composite. compute_grads runs a Train-mode forward/backward on
// one batch and caches the gradients behind gradients().
class TrainableModel {
public:
    virtual ~TrainableModel() = default;
    virtual Mat predict(const Mat& x) const = 0;
    virtual double compute_grads(const Mat& x, const std::vector<int>& labels,
                                 SplitMix64& rng) = 0;
    virtual std::vector<ParamView> parameters() = 0;
    virtual std::vector<ParamView> gradients() = 0;
};

std::vector<double> snapshot_params(TrainableModel& model);
void restore_params(TrainableModel& model, const std::vector<double>& flat);

class NetworkModel : public TrainableModel {
public:
    explicit NetworkModel(Network net) : net_(std::move(net)) {}
    Network& net() { return net_; }
    const Network& net() const { return net_; }

    Mat predict(const Mat& x) const override;
    double compute_grads(const Mat& x, const std::vector<int>& labels,
                         SplitMix64& rng) override;
    std::vector<ParamView> parameters() override;
    std::vector<ParamView> gradients() override;

private:
    Network net_;
    Gradients grads_;
};

struct EpochStats {
    double train_loss = 0.0;
    double val_loss = 0.0;
};

struct TrainResult {
    std::vector<EpochStats> history;
    std::size_t best_epoch = 0;  // 1-based epoch whose weights were kept
    bool stopped_early = false;
};

// Test seam: replaces the validation-loss evaluation.
using ValidationHook = std::function<double(TrainableModel&, std::size_t epoch)>;

// Seeded 9:1 shuffle-split, mini-batch Adam, early stop after `patience`
// consecutive validation-loss increases. On return the model carries the
// best-validation weights.
TrainResult train_model(TrainableModel& model, const Mat& features,
                        const std::vector<int>& labels, const TrainConfig& cfg,
                        const ValidationHook& val_hook = nullptr);

struct TrainedNetwork {
    Network net;
    TrainResult result;
};

TrainedNetwork train(Network net, const Mat& features,
                     const std::vector<int>& labels, const TrainConfig& cfg);

double accuracy(const TrainableModel& model, const Mat& features,
                const std::vector<int>& labels);

}  // namespace lsnn::nn

#endif
