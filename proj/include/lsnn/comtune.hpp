#ifndef LSNN_COMTUNE_HPP
#define LSNN_COMTUNE_HPP

#include <optional>
#include <string>

#include "lsnn/codec.hpp"
#include "lsnn/nn.hpp"
#include "lsnn/train.hpp"

namespace lsnn::comtune {

enum class CodecKind { None, Quantizer, Pca };

// Which codec to calibrate before tuning, and the byte budget it must hit.
struct CodecRequest {
    CodecKind kind = CodecKind::None;
    std::size_t message_bytes = 0;
};

struct ComtuneConfig {
    double dropout_rate = 0.0;  // r in [0, 1)
    std::size_t division_index = 0;
    CodecRequest codec;
    nn::TrainConfig train;

    void validate() const;
};

// The tuned composite out(dec(dropout(cmp(in(x))))): dropout acts on the
// compressed representation, survivors scaled by 1/(1-r). The quantizer
// stage backpropagates with the straight-through rule (identity inside the
// clip range, zero outside); the PCA stage is linear.
class ComtuneGraph : public nn::TrainableModel {
public:
    ComtuneGraph(nn::Network f_in, nn::Network f_out,
                 std::optional<codec::CodecSpec> codec, double dropout_rate);

    Mat predict(const Mat& x) const override;
    double compute_grads(const Mat& x, const std::vector<int>& labels,
                         SplitMix64& rng) override;
    std::vector<nn::ParamView> parameters() override;
    std::vector<nn::ParamView> gradients() override;

    // Train-mode forward of the full composite; exposed so the dropout/loss
    // equivalence of the emulated link can be checked directly.
    Mat forward_train(const Mat& x, SplitMix64& rng) const;

    // Width of the vector the dropout stage actually masks.
    std::size_t dropout_width() const;

    const nn::Network& f_in() const { return f_in_; }
    const nn::Network& f_out() const { return f_out_; }
    const std::optional<codec::CodecSpec>& codec() const { return codec_; }

private:
    struct Stage {  // per-batch cache between forward and backward
        nn::ForwardTrace in_trace;
        nn::ForwardTrace out_trace;
        Mat raw;          // split-point activation
        Mat compressed;   // after f_cmp (pre-dropout)
        Mat mask;         // dropout mask over the compressed width
        Mat ste_pass;     // quantizer: 1 inside clip range, else 0
    };

    Mat forward_impl(const Mat& x, nn::Mode mode, SplitMix64* rng,
                     Stage* stage) const;

    nn::Network f_in_;
    nn::Network f_out_;
    std::optional<codec::CodecSpec> codec_;
    double dropout_rate_;

    Stage stage_;
    nn::Gradients grads_in_;
    nn::Gradients grads_out_;
};

// Activations of f_in over the dataset (Eval mode), the calibration set for
// both codecs.
Mat split_activations(const nn::Network& f_in, const Mat& features);

// Calibrate the requested codec from pre-tuning f_in activations. The raw
// message is 4 bytes per split-point element (f32 on the wire).
std::optional<codec::CodecSpec> calibrate_codec(const CodecRequest& request,
                                                const Mat& activations);

nn::TrainedNetwork pretrain_base(const Mat& features,
                                 const std::vector<int>& labels,
                                 const std::vector<std::size_t>& widths,
                                 const nn::TrainConfig& cfg);

struct TunedModel {
    nn::Network f_in;
    nn::Network f_out;
    std::optional<codec::CodecSpec> codec;
    nn::TrainResult history;
};

// Split f_pre, calibrate the codec from the pre-tuning activations, then
// train the composite (both sub-networks update).
TunedModel fine_tune(const nn::Network& f_pre, const Mat& features,
                     const std::vector<int>& labels, const ComtuneConfig& cfg);

// Deployment manifest: division index, dropout rate, message budget and a
// hash of the calibrated codec spec.
std::string deployment_manifest(const ComtuneConfig& cfg,
                                const std::optional<codec::CodecSpec>& codec);

}  // namespace lsnn::comtune

#endif
