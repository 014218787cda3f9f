#include "lsnn/comtune.hpp"

#include <sstream>
#include <stdexcept>

namespace lsnn::comtune {

void ComtuneConfig::validate() const {
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0))
        throw std::invalid_argument("comtune: dropout rate must be in [0, 1)");
    if (division_index == 0)
        throw std::invalid_argument("comtune: division index must leave a non-empty device side");
    train.validate();
    if (codec.kind != CodecKind::None && codec.message_bytes == 0)
        throw std::invalid_argument("comtune: codec requested without a message budget");
}

ComtuneGraph::ComtuneGraph(nn::Network f_in, nn::Network f_out,
                           std::optional<codec::CodecSpec> codec,
                           double dropout_rate)
    : f_in_(std::move(f_in)),
      f_out_(std::move(f_out)),
      codec_(std::move(codec)),
      dropout_rate_(dropout_rate) {
    if (!(dropout_rate_ >= 0.0 && dropout_rate_ < 1.0))
        throw std::invalid_argument("comtune graph: dropout rate must be in [0, 1)");
    auto width = f_in_.output_dim();
    if (width && codec_) {
        std::size_t codec_dim =
            std::holds_alternative<codec::QuantizerSpec>(*codec_)
                ? std::get<codec::QuantizerSpec>(*codec_).dim()
                : std::get<codec::PcaSpec>(*codec_).full_dim();
        if (codec_dim != *width)
            throw std::invalid_argument("comtune graph: codec width does not match split activation");
    }
}

std::size_t ComtuneGraph::dropout_width() const {
    std::size_t raw = f_in_.output_dim().value_or(0);
    return codec::compressed_dim(codec_, raw);
}

Mat ComtuneGraph::forward_impl(const Mat& x, nn::Mode mode, SplitMix64* rng,
                               Stage* stage) const {
    nn::ForwardTrace in_trace = nn::forward(f_in_, x, mode, rng);
    const Mat& raw = in_trace.output();

    // f_cmp: to the representation the wire would carry, kept real-valued.
    Mat compressed;
    Mat ste_pass;
    if (codec_ && std::holds_alternative<codec::PcaSpec>(*codec_)) {
        compressed = raw * std::get<codec::PcaSpec>(*codec_).W.transpose();
    } else if (codec_) {
        const auto& q = std::get<codec::QuantizerSpec>(*codec_);
        compressed.resize(raw.rows(), raw.cols());
        if (stage) ste_pass.resize(raw.rows(), raw.cols());
        for (Eigen::Index r = 0; r < raw.rows(); ++r) {
            Vec row = raw.row(r).transpose();
            compressed.row(r) =
                codec::dequantize(codec::quantize(row, q), q).transpose();
            if (stage)
                for (Eigen::Index c = 0; c < raw.cols(); ++c)
                    ste_pass(r, c) =
                        (raw(r, c) >= q.s_min(c) && raw(r, c) <= q.s_max(c)) ? 1.0 : 0.0;
        }
    } else {
        compressed = raw;
    }

    // f_d: Bernoulli mask over the compressed width, Train mode only.
    Mat dropped;
    Mat mask;
    if (mode == nn::Mode::Train && dropout_rate_ > 0.0) {
        if (!rng)
            throw std::invalid_argument("comtune graph: Train-mode forward requires an rng");
        mask.resize(compressed.rows(), compressed.cols());
        for (Eigen::Index r = 0; r < mask.rows(); ++r)
            for (Eigen::Index c = 0; c < mask.cols(); ++c)
                mask(r, c) = rng->bernoulli(dropout_rate_) ? 0.0 : 1.0;
        dropped = (compressed.array() * mask.array() / (1.0 - dropout_rate_)).matrix();
    } else {
        dropped = compressed;
        if (stage) mask = Mat::Ones(compressed.rows(), compressed.cols());
    }

    // f_dec
    Mat decoded;
    if (codec_ && std::holds_alternative<codec::PcaSpec>(*codec_)) {
        const auto& p = std::get<codec::PcaSpec>(*codec_);
        decoded = dropped * p.W;
        decoded.rowwise() += p.bias.transpose();
    } else {
        // quantizer stage is already back in the real domain; a dropped
        // element stays zero, matching a lost element at inference
        decoded = dropped;
    }

    nn::ForwardTrace out_trace = nn::forward(f_out_, decoded, mode, rng);
    Mat result = out_trace.output();

    if (stage) {
        stage->raw = raw;  // copy before in_trace (which owns it) is moved
        stage->in_trace = std::move(in_trace);
        stage->out_trace = std::move(out_trace);
        stage->compressed = std::move(compressed);
        stage->mask = std::move(mask);
        stage->ste_pass = std::move(ste_pass);
    }
    return result;
}

Mat ComtuneGraph::predict(const Mat& x) const {
    return forward_impl(x, nn::Mode::Eval, nullptr, nullptr);
}

Mat ComtuneGraph::forward_train(const Mat& x, SplitMix64& rng) const {
    return forward_impl(x, nn::Mode::Train, &rng, nullptr);
}

double ComtuneGraph::compute_grads(const Mat& x, const std::vector<int>& labels,
                                   SplitMix64& rng) {
    Mat probs = forward_impl(x, nn::Mode::Train, &rng, &stage_);
    double loss = nn::cross_entropy(probs, labels);

    grads_out_ = nn::backward(f_out_, stage_.out_trace,
                              nn::cross_entropy_grad(probs, labels));
    Mat g = grads_out_.input;  // dLoss/dDecoded

    if (codec_ && std::holds_alternative<codec::PcaSpec>(*codec_)) {
        g = g * std::get<codec::PcaSpec>(*codec_).W.transpose();
    }
    // dropout backward
    if (dropout_rate_ > 0.0)
        g = (g.array() * stage_.mask.array() / (1.0 - dropout_rate_)).matrix();
    // f_cmp backward
    if (codec_ && std::holds_alternative<codec::PcaSpec>(*codec_)) {
        g = g * std::get<codec::PcaSpec>(*codec_).W;
    } else if (codec_) {
        // straight-through: identity inside the clip range, zero outside
        g = (g.array() * stage_.ste_pass.array()).matrix();
    }

    grads_in_ = nn::backward(f_in_, stage_.in_trace, g);
    return loss;
}

namespace {

void append_views(std::vector<nn::ParamView>& views, nn::Network& net) {
    for (auto& layer : net.layers) {
        if (auto* d = std::get_if<nn::Dense>(&layer)) {
            views.push_back({d->weight.data(),
                             static_cast<std::size_t>(d->weight.size())});
            views.push_back(
                {d->bias.data(), static_cast<std::size_t>(d->bias.size())});
        }
    }
}

void append_grad_views(std::vector<nn::ParamView>& views, nn::Gradients& g) {
    for (auto& lg : g.layers) {
        if (lg.weight.size() > 0) {
            views.push_back(
                {lg.weight.data(), static_cast<std::size_t>(lg.weight.size())});
            views.push_back(
                {lg.bias.data(), static_cast<std::size_t>(lg.bias.size())});
        }
    }
}

}  // namespace

std::vector<nn::ParamView> ComtuneGraph::parameters() {
    std::vector<nn::ParamView> views;
    append_views(views, f_in_);
    append_views(views, f_out_);
    return views;
}

std::vector<nn::ParamView> ComtuneGraph::gradients() {
    std::vector<nn::ParamView> views;
    append_grad_views(views, grads_in_);
    append_grad_views(views, grads_out_);
    return views;
}

Mat split_activations(const nn::Network& f_in, const Mat& features) {
    return nn::forward(f_in, features, nn::Mode::Eval).output();
}

std::optional<codec::CodecSpec> calibrate_codec(const CodecRequest& request,
                                                const Mat& activations) {
    if (request.kind == CodecKind::None) return std::nullopt;
    const std::size_t d = static_cast<std::size_t>(activations.cols());
    const std::size_t float_bytes = 4 * d;
    if (request.kind == CodecKind::Quantizer) {
        int n_bits = codec::bits_for_budget(request.message_bytes, float_bytes);
        return codec::calibrate_quantizer(activations, n_bits);
    }
    std::size_t dp = codec::dims_for_budget(request.message_bytes, float_bytes, d);
    return codec::fit_pca(activations, dp);
}

nn::TrainedNetwork pretrain_base(const Mat& features,
                                 const std::vector<int>& labels,
                                 const std::vector<std::size_t>& widths,
                                 const nn::TrainConfig& cfg) {
    if (widths.front() != static_cast<std::size_t>(features.cols()))
        throw std::invalid_argument("pretrain: architecture input width does not match features");
    int max_label = 0;
    for (int y : labels) max_label = std::max(max_label, y);
    if (widths.back() <= static_cast<std::size_t>(max_label))
        throw std::invalid_argument("pretrain: architecture output width too small for labels");

    nn::Network net = nn::make_mlp(widths);
    SplitMix64 init_rng(cfg.seed ^ 0xA5A5A5A5A5A5A5A5ULL);
    nn::init_weights(net, init_rng);
    return nn::train(std::move(net), features, labels, cfg);
}

TunedModel fine_tune(const nn::Network& f_pre, const Mat& features,
                     const std::vector<int>& labels, const ComtuneConfig& cfg) {
    cfg.validate();
    auto [f_in, f_out] = nn::split(f_pre, cfg.division_index);

    // Calibration is fixed from the pre-tuning activations; tuning must not
    // move the codec under the model.
    std::optional<codec::CodecSpec> spec;
    if (cfg.codec.kind != CodecKind::None) {
        Mat activations = split_activations(f_in, features);
        spec = calibrate_codec(cfg.codec, activations);
    }

    ComtuneGraph graph(std::move(f_in), std::move(f_out), spec,
                       cfg.dropout_rate);
    // Early stopping must monitor the objective actually being minimized.
    // Selecting snapshots by clean-mode validation loss systematically picks,
    // for high dropout rates, the weights that best exploit the
    // regularization for clean accuracy rather than the most loss-tolerant
    // ones.
    nn::TrainConfig tc = cfg.train;
    tc.objective_validation = true;
    nn::TrainResult history = nn::train_model(graph, features, labels, tc);

    TunedModel tuned;
    tuned.f_in = graph.f_in();
    tuned.f_out = graph.f_out();
    tuned.codec = spec;
    tuned.history = std::move(history);
    return tuned;
}

std::string deployment_manifest(const ComtuneConfig& cfg,
                                const std::optional<codec::CodecSpec>& codec) {
    std::uint64_t hash = 0xcbf29ce484222325ULL;  // FNV-1a over the spec bytes
    if (codec) {
        for (std::uint8_t b : codec::serialize_spec(*codec)) {
            hash ^= b;
            hash *= 0x100000001b3ULL;
        }
    }
    std::ostringstream os;
    os << "division_index=" << cfg.division_index << "\n";
    os << "dropout_rate=" << cfg.dropout_rate << "\n";
    os << "message_bytes="
       << (cfg.codec.kind == CodecKind::None ? 0 : cfg.codec.message_bytes)
       << "\n";
    os << "codec="
       << (cfg.codec.kind == CodecKind::None
               ? "none"
               : (cfg.codec.kind == CodecKind::Quantizer ? "quantizer" : "pca"))
       << "\n";
    os << "calibration_hash=" << std::hex << hash << "\n";
    return os.str();
}

}  // namespace lsnn::comtune
