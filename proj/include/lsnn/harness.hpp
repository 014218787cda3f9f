#ifndef LSNN_HARNESS_HPP
#define LSNN_HARNESS_HPP

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "lsnn/comtune.hpp"
#include "lsnn/dataset.hpp"
#include "lsnn/dipipeline.hpp"

namespace lsnn::harness {

struct CodecArm {
    comtune::CodecKind kind = comtune::CodecKind::None;
    std::size_t message_bytes = 0;  // 0 with kind None = uncompressed
};

struct SweepConfig {
    std::vector<double> loss_rates;
    std::vector<double> dropout_rates;
    std::vector<CodecArm> codec_arms = {{}};
    std::size_t trials = 10;
    std::uint64_t base_seed = 0;

    std::vector<std::size_t> architecture = {64, 256, 128, 10};
    std::size_t division_index = 2;  // after the first Dense+ReLU pair

    channel::ChannelConfig channel;
    nn::TrainConfig pretrain_cfg;
    nn::TrainConfig finetune_cfg;

    // synthetic dataset; ignored when csv_path is set
    std::size_t feature_dim = 64;
    int classes = 10;
    std::size_t n_train = 5000;
    std::size_t n_test = 1000;
    double spread = 3.0;
    std::optional<std::string> csv_train;
    std::optional<std::string> csv_test;

    void validate() const;
};

struct TrialRecord {
    std::string arm_id;
    std::string codec;  // "none" | "quantizer" | "pca"
    double r = 0.0;
    std::size_t message_bytes = 0;
    double p = 0.0;
    std::uint64_t seed = 0;
    double accuracy = 0.0;
    double mean_latency_ms = 0.0;
    double fraction_received_mean = 0.0;
    std::size_t all_lost_count = 0;
};

std::string csv_header();
std::string csv_row(const TrialRecord& rec);

struct EvalResult {
    double accuracy = 0.0;
    double latency_ms = 0.0;
    double fraction_received_mean = 0.0;
    std::size_t all_lost_count = 0;
};

// Whole-test-set evaluation with one fresh mask per sample. Batched, but
// draws masks in the same sample order as repeated infer_once calls on the
// same rng stream, so both paths agree bit-for-bit in ElementIID mode.
EvalResult evaluate_deployment(const di::Deployment& dep, const Dataset& test,
                               SplitMix64& rng);

// The full experiment: per seed pretrain once, fine-tune every (r, codec)
// arm, evaluate each arm under every loss rate. Rows stream to `out` as they
// are produced.
std::vector<TrialRecord> run_sweep(const SweepConfig& cfg, std::ostream& out);

// Empirical CDF, right-continuous, from 0 to 1.
std::vector<std::pair<double, double>> cdf(std::vector<double> samples);

struct SummaryRow {
    std::string arm_id;
    double p = 0.0;
    std::size_t count = 0;
    double mean = 0.0;
    double stddev = 0.0;  // sample std; 0 by convention for a single trial
    bool single_trial = false;
};

std::vector<SummaryRow> summarize(const std::vector<TrialRecord>& records);

// Eq-level channel tables: received-count PMF, reliable-latency PMF and the
// fixed unreliable latency, as CSV.
void analytics_csv(std::size_t n_t, double p, std::size_t packet_payload,
                   double throughput, std::size_t k_max, std::ostream& out);

SyntheticSplit load_sweep_data(const SweepConfig& cfg);

}  // namespace lsnn::harness

#endif
