#include "lsnn/train.hpp"

#include <algorithm>
#include <limits>
#include <stdexcept>

namespace lsnn::nn {

void TrainConfig::validate() const {
    if (!(validation_fraction > 0.0 && validation_fraction < 1.0))
        throw std::invalid_argument("train config: validation_fraction must be in (0,1)");
    if (patience > max_epochs)
        throw std::invalid_argument("train config: patience exceeds max_epochs");
    if (batch_size == 0 || max_epochs == 0)
        throw std::invalid_argument("train config: batch_size and max_epochs must be positive");
    if (learning_rate <= 0.0)
        throw std::invalid_argument("train config: learning_rate must be positive");
}

std::vector<double> snapshot_params(TrainableModel& model) {
    std::vector<double> flat;
    for (const auto& view : model.parameters())
        flat.insert(flat.end(), view.data, view.data + view.size);
    return flat;
}

void restore_params(TrainableModel& model, const std::vector<double>& flat) {
    std::size_t offset = 0;
    for (auto& view : model.parameters()) {
        if (offset + view.size > flat.size())
            throw std::invalid_argument("restore_params: snapshot too short");
        std::copy(flat.begin() + static_cast<std::ptrdiff_t>(offset),
                  flat.begin() + static_cast<std::ptrdiff_t>(offset + view.size),
                  view.data);
        offset += view.size;
    }
    if (offset != flat.size())
        throw std::invalid_argument("restore_params: snapshot size mismatch");
}

Mat NetworkModel::predict(const Mat& x) const {
    return forward(net_, x, Mode::Eval).output();
}

double NetworkModel::compute_grads(const Mat& x, const std::vector<int>& labels,
                                   SplitMix64& rng) {
    ForwardTrace trace = forward(net_, x, Mode::Train, &rng);
    double loss = cross_entropy(trace.output(), labels);
    grads_ = backward(net_, trace, cross_entropy_grad(trace.output(), labels));
    return loss;
}

std::vector<ParamView> NetworkModel::parameters() {
    std::vector<ParamView> views;
    for (auto& layer : net_.layers) {
        if (auto* d = std::get_if<Dense>(&layer)) {
            views.push_back({d->weight.data(),
                             static_cast<std::size_t>(d->weight.size())});
            views.push_back(
                {d->bias.data(), static_cast<std::size_t>(d->bias.size())});
        }
    }
    return views;
}

std::vector<ParamView> NetworkModel::gradients() {
    std::vector<ParamView> views;
    for (auto& lg : grads_.layers) {
        if (lg.weight.size() > 0) {
            views.push_back(
                {lg.weight.data(), static_cast<std::size_t>(lg.weight.size())});
            views.push_back(
                {lg.bias.data(), static_cast<std::size_t>(lg.bias.size())});
        }
    }
    return views;
}

namespace {

Mat gather_rows(const Mat& m, const std::vector<std::uint32_t>& idx,
                std::size_t begin, std::size_t end) {
    Mat out(static_cast<Eigen::Index>(end - begin), m.cols());
    for (std::size_t i = begin; i < end; ++i)
        out.row(static_cast<Eigen::Index>(i - begin)) = m.row(idx[i]);
    return out;
}

std::vector<int> gather_labels(const std::vector<int>& labels,
                               const std::vector<std::uint32_t>& idx,
                               std::size_t begin, std::size_t end) {
    std::vector<int> out(end - begin);
    for (std::size_t i = begin; i < end; ++i) out[i - begin] = labels[idx[i]];
    return out;
}

}  // namespace

TrainResult train_model(TrainableModel& model, const Mat& features,
                        const std::vector<int>& labels, const TrainConfig& cfg,
                        const ValidationHook& val_hook) {
    cfg.validate();
    const std::size_t n = static_cast<std::size_t>(features.rows());
    if (n == 0) throw std::invalid_argument("train: empty dataset");
    if (labels.size() != n)
        throw std::invalid_argument("train: feature/label count mismatch");

    SplitMix64 rng(cfg.seed);
    SplitMix64 dropout_rng = rng.fork(1);

    // 9:1 (by default) shuffle-split into updating and validation sets.
    std::vector<std::uint32_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = static_cast<std::uint32_t>(i);
    fisher_yates(order, rng);
    std::size_t n_val = static_cast<std::size_t>(
        static_cast<double>(n) * cfg.validation_fraction);
    if (n_val == 0 && n > 1) n_val = 1;
    const std::size_t n_upd = n - n_val;
    if (n_upd == 0) throw std::invalid_argument("train: no updating samples left");

    std::vector<std::uint32_t> upd_idx(order.begin(),
                                       order.begin() + static_cast<std::ptrdiff_t>(n_upd));
    const Mat val_x = gather_rows(features, order, n_upd, n);
    const std::vector<int> val_y = gather_labels(labels, order, n_upd, n);

    AdamState adam;
    TrainResult result;
    std::vector<double> best_snapshot = snapshot_params(model);
    double best_val = std::numeric_limits<double>::infinity();
    double prev_val = std::numeric_limits<double>::infinity();
    std::size_t increase_streak = 0;

    for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        fisher_yates(upd_idx, rng);
        double train_loss = 0.0;
        std::size_t seen = 0;
        for (std::size_t b = 0; b < n_upd; b += cfg.batch_size) {
            const std::size_t e = std::min(b + cfg.batch_size, n_upd);
            Mat bx = gather_rows(features, upd_idx, b, e);
            std::vector<int> by = gather_labels(labels, upd_idx, b, e);
            double loss = model.compute_grads(bx, by, dropout_rng);
            adam_step(model.parameters(), model.gradients(), adam,
                      cfg.learning_rate);
            train_loss += loss * static_cast<double>(e - b);
            seen += e - b;
        }
        train_loss /= static_cast<double>(seen);

        double val_loss;
        if (val_hook) {
            val_loss = val_hook(model, epoch);
        } else if (n_val > 0 && cfg.objective_validation) {
            // Same mask stream every epoch: losses differ only through the
            // parameters, so the early-stopping comparison stays meaningful.
            SplitMix64 val_rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
            val_loss = 0.0;
            for (int draw = 0; draw < 3; ++draw)
                val_loss += model.compute_grads(val_x, val_y, val_rng) / 3.0;
        } else if (n_val > 0) {
            val_loss = cross_entropy(model.predict(val_x), val_y);
        } else {
            val_loss = train_loss;
        }
        result.history.push_back({train_loss, val_loss});

        if (val_loss < best_val) {
            best_val = val_loss;
            best_snapshot = snapshot_params(model);
            result.best_epoch = epoch;
        }
        increase_streak = (val_loss > prev_val) ? increase_streak + 1 : 0;
        prev_val = val_loss;
        if (increase_streak >= cfg.patience) {
            result.stopped_early = true;
            break;
        }
    }

    restore_params(model, best_snapshot);
    return result;
}

TrainedNetwork train(Network net, const Mat& features,
                     const std::vector<int>& labels, const TrainConfig& cfg) {
    NetworkModel model(std::move(net));
    TrainResult result = train_model(model, features, labels, cfg);
    return {std::move(model.net()), std::move(result)};
}

double accuracy(const TrainableModel& model, const Mat& features,
                const std::vector<int>& labels) {
    Mat probs = model.predict(features);
    std::size_t correct = 0;
    for (Eigen::Index r = 0; r < probs.rows(); ++r) {
        Eigen::Index argmax = 0;
        probs.row(r).maxCoeff(&argmax);
        if (static_cast<int>(argmax) == labels[static_cast<std::size_t>(r)])
            ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(probs.rows());
}

}  // namespace lsnn::nn
