#include "lsnn/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace lsnn::harness {

void SweepConfig::validate() const {
    if (loss_rates.empty() || dropout_rates.empty())
        throw std::invalid_argument("sweep: loss_rates and dropout_rates must be nonempty");
    for (double p : loss_rates)
        if (!(p >= 0.0 && p < 1.0))
            throw std::invalid_argument("sweep: loss rates must be in [0, 1)");
    for (double r : dropout_rates)
        if (!(r >= 0.0 && r < 1.0))
            throw std::invalid_argument("sweep: dropout rates must be in [0, 1)");
    if (trials == 0) throw std::invalid_argument("sweep: trials must be >= 1");
    if (codec_arms.empty())
        throw std::invalid_argument("sweep: need at least one codec arm");
    if (division_index == 0 ||
        division_index >= 2 * (architecture.size() - 1))
        throw std::invalid_argument("sweep: division index outside the architecture");
    channel.validate();
    pretrain_cfg.validate();
    finetune_cfg.validate();
}

namespace {

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.12g", v);
    return buf;
}

std::string codec_name(comtune::CodecKind kind) {
    switch (kind) {
        case comtune::CodecKind::Quantizer: return "quantizer";
        case comtune::CodecKind::Pca: return "pca";
        default: return "none";
    }
}

}  // namespace

std::string csv_header() {
    return "arm_id,codec,r,M_bytes,p,seed,accuracy,mean_latency_ms,"
           "fraction_received_mean,all_lost_count";
}

std::string csv_row(const TrialRecord& rec) {
    std::ostringstream os;
    os << rec.arm_id << ',' << rec.codec << ',' << fmt_double(rec.r) << ','
       << rec.message_bytes << ',' << fmt_double(rec.p) << ',' << rec.seed
       << ',' << fmt_double(rec.accuracy) << ','
       << fmt_double(rec.mean_latency_ms) << ','
       << fmt_double(rec.fraction_received_mean) << ',' << rec.all_lost_count;
    return os.str();
}

EvalResult evaluate_deployment(const di::Deployment& dep, const Dataset& test,
                               SplitMix64& rng) {
    dep.validate();
    const std::size_t n = test.size();
    if (n == 0) throw std::invalid_argument("evaluate: empty test set");

    const std::size_t n_t = di::transmitted_packets(dep);
    const double latency_s = channel::latency_unreliable(
        n_t, channel::LatencyModel::from_config(dep.channel));

    // batched encode: f_in over the whole set, then the codec per row
    Mat raw = nn::forward(dep.f_in, test.features, nn::Mode::Eval).output();
    Mat encoded;
    if (dep.codec && std::holds_alternative<codec::PcaSpec>(*dep.codec)) {
        encoded = raw * std::get<codec::PcaSpec>(*dep.codec).W.transpose();
    } else if (dep.codec) {
        const auto& q = std::get<codec::QuantizerSpec>(*dep.codec);
        encoded.resize(raw.rows(), raw.cols());
        for (Eigen::Index r = 0; r < raw.rows(); ++r) {
            auto codes = codec::quantize(raw.row(r).transpose(), q);
            for (Eigen::Index c = 0; c < raw.cols(); ++c)
                encoded(r, c) = static_cast<double>(codes[static_cast<std::size_t>(c)]);
        }
    } else {
        encoded = raw;
    }

    EvalResult result;
    result.latency_ms = latency_s * 1e3;

    std::size_t correct = 0;
    double fraction_sum = 0.0;

    // per-sample loss realization + decode, batched into one f_out pass
    Mat decoded(encoded.rows(), static_cast<Eigen::Index>(dep.split_width()));
    const double comp = 1.0 / (1.0 - dep.channel.p);
    const std::size_t dc = static_cast<std::size_t>(encoded.cols());
    const std::size_t s = channel::elements_per_packet(
        dep.channel, codec::element_wire_bytes(dep.codec));

    for (Eigen::Index i = 0; i < encoded.rows(); ++i) {
        Vec row = encoded.row(i).transpose();
        Vec received;
        std::vector<std::uint8_t> mask;
        if (dep.channel.mode == channel::LossMode::ElementIID) {
            auto [vec, m] = channel::apply_elementwise(row, dep.channel.p, rng);
            received = std::move(vec);
            mask = std::move(m);
        } else {
            auto batch = channel::packetize(row, s, rng.next());
            auto arrived = channel::transmit(batch, dep.channel.p, rng);
            auto [vec, count] = channel::reconstruct(arrived, dc);
            received = std::move(vec);
            mask.assign(dc, 0);
            auto perm = random_permutation(dc, arrived.permutation_seed);
            for (const auto& pkt : arrived.packets) {
                const std::size_t begin =
                    static_cast<std::size_t>(pkt.index) * arrived.elements_per_packet;
                for (std::size_t k = 0; k < pkt.values.size(); ++k)
                    mask[perm[begin + k]] = 1;
            }
            (void)count;
        }

        std::size_t arrived_count = 0;
        for (auto m : mask) arrived_count += m;
        fraction_sum += static_cast<double>(arrived_count) / static_cast<double>(dc);
        if (arrived_count == 0) ++result.all_lost_count;

        if (dep.codec && std::holds_alternative<codec::QuantizerSpec>(*dep.codec)) {
            const auto& q = std::get<codec::QuantizerSpec>(*dep.codec);
            const double levels = std::ldexp(1.0, q.n_bits) - 1.0;
            for (Eigen::Index c = 0; c < received.size(); ++c) {
                decoded(i, c) =
                    mask[static_cast<std::size_t>(c)]
                        ? comp * (q.s_min(c) + received(c) * (q.s_max(c) - q.s_min(c)) / levels)
                        : 0.0;
            }
        } else if (dep.codec) {
            const auto& pca = std::get<codec::PcaSpec>(*dep.codec);
            decoded.row(i) =
                (codec::pca_decompress(received * comp, pca)).transpose();
        } else {
            decoded.row(i) = (received * comp).transpose();
        }
    }

    Mat probs = nn::forward(dep.f_out, decoded, nn::Mode::Eval).output();
    for (Eigen::Index i = 0; i < probs.rows(); ++i) {
        Eigen::Index argmax = 0;
        probs.row(i).maxCoeff(&argmax);
        if (static_cast<int>(argmax) == test.labels[static_cast<std::size_t>(i)])
            ++correct;
    }

    result.accuracy = static_cast<double>(correct) / static_cast<double>(n);
    result.fraction_received_mean = fraction_sum / static_cast<double>(n);
    return result;
}

SyntheticSplit load_sweep_data(const SweepConfig& cfg) {
    if (cfg.csv_train && cfg.csv_test) {
        SyntheticSplit split;
        split.train = load_csv(*cfg.csv_train);
        split.test = load_csv(*cfg.csv_test);
        return split;
    }
    if (cfg.csv_train || cfg.csv_test)
        throw std::invalid_argument("sweep: csv_train and csv_test must be set together");
    return gen_synthetic(cfg.base_seed, cfg.feature_dim, cfg.classes,
                         cfg.n_train, cfg.n_test, cfg.spread);
}

std::vector<TrialRecord> run_sweep(const SweepConfig& cfg, std::ostream& out) {
    cfg.validate();
    SyntheticSplit data = load_sweep_data(cfg);
    data.train.validate();
    data.test.validate();

    out << csv_header() << '\n';
    std::vector<TrialRecord> records;

    for (std::size_t t = 0; t < cfg.trials; ++t) {
        const std::uint64_t seed = cfg.base_seed + t;

        nn::TrainConfig pre_cfg = cfg.pretrain_cfg;
        pre_cfg.seed = seed;
        nn::TrainedNetwork base = comtune::pretrain_base(
            data.train.features, data.train.labels, cfg.architecture, pre_cfg);

        for (double r : cfg.dropout_rates) {
            for (const auto& arm : cfg.codec_arms) {
                comtune::ComtuneConfig ct;
                ct.dropout_rate = r;
                ct.division_index = cfg.division_index;
                ct.codec = {arm.kind, arm.message_bytes};
                ct.train = cfg.finetune_cfg;
                ct.train.seed = seed;

                comtune::TunedModel tuned = comtune::fine_tune(
                    base.net, data.train.features, data.train.labels, ct);

                std::ostringstream arm_id;
                arm_id << "r" << fmt_double(r) << "_" << codec_name(arm.kind);
                if (arm.kind != comtune::CodecKind::None)
                    arm_id << arm.message_bytes;

                for (double p : cfg.loss_rates) {
                    di::Deployment dep;
                    dep.f_in = tuned.f_in;
                    dep.f_out = tuned.f_out;
                    dep.codec = tuned.codec;
                    dep.channel = cfg.channel;
                    dep.channel.p = p;

                    // fresh masks per sample, stream derived from trial+arm+p
                    SplitMix64 eval_rng(seed ^
                                        (std::hash<std::string>{}(arm_id.str()) |
                                         1) *
                                            0x9E3779B97F4A7C15ULL ^
                                        static_cast<std::uint64_t>(p * 1e6));
                    EvalResult eval = evaluate_deployment(dep, data.test, eval_rng);

                    TrialRecord rec;
                    rec.arm_id = arm_id.str();
                    rec.codec = codec_name(arm.kind);
                    rec.r = r;
                    rec.message_bytes = arm.message_bytes;
                    rec.p = p;
                    rec.seed = seed;
                    rec.accuracy = eval.accuracy;
                    rec.mean_latency_ms = eval.latency_ms;
                    rec.fraction_received_mean = eval.fraction_received_mean;
                    rec.all_lost_count = eval.all_lost_count;
                    out << csv_row(rec) << '\n';
                    out.flush();
                    records.push_back(std::move(rec));
                }
            }
        }
    }
    return records;
}

std::vector<std::pair<double, double>> cdf(std::vector<double> samples) {
    if (samples.empty()) throw std::invalid_argument("cdf: no samples");
    std::sort(samples.begin(), samples.end());
    std::vector<std::pair<double, double>> steps;
    const double n = static_cast<double>(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const bool last_of_value =
            i + 1 == samples.size() || samples[i + 1] != samples[i];
        if (last_of_value)
            steps.emplace_back(samples[i], static_cast<double>(i + 1) / n);
    }
    return steps;
}

std::vector<SummaryRow> summarize(const std::vector<TrialRecord>& records) {
    std::map<std::pair<std::string, double>, std::vector<double>> groups;
    for (const auto& rec : records)
        groups[{rec.arm_id, rec.p}].push_back(rec.accuracy);

    std::vector<SummaryRow> rows;
    for (const auto& [key, values] : groups) {
        SummaryRow row;
        row.arm_id = key.first;
        row.p = key.second;
        row.count = values.size();
        double sum = 0.0;
        for (double v : values) sum += v;
        row.mean = sum / static_cast<double>(values.size());
        if (values.size() > 1) {
            double ss = 0.0;
            for (double v : values) ss += (v - row.mean) * (v - row.mean);
            row.stddev = std::sqrt(ss / static_cast<double>(values.size() - 1));
        } else {
            row.stddev = 0.0;
            row.single_trial = true;
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

void analytics_csv(std::size_t n_t, double p, std::size_t packet_payload,
                   double throughput, std::size_t k_max, std::ostream& out) {
    channel::ChannelConfig cfg;
    cfg.p = p;
    cfg.packet_payload = packet_payload;
    cfg.throughput = throughput;
    cfg.validate();
    const auto model = channel::LatencyModel::from_config(cfg);

    out << "table,key,value,probability\n";
    out << "latency_unreliable_s,n_t=" << n_t << ','
        << fmt_double(channel::latency_unreliable(n_t, model)) << ",1\n";

    auto received = channel::pmf_received(n_t, p);
    for (std::size_t k = 0; k < received.size(); ++k)
        out << "pmf_received,n_r=" << k << ',' << k << ','
            << fmt_double(received[k]) << '\n';

    if (k_max < n_t) k_max = n_t;
    for (const auto& [tau, prob] : channel::pmf_latency_reliable(n_t, p, model, k_max))
        out << "pmf_latency_reliable_s,tau," << fmt_double(tau) << ','
            << fmt_double(prob) << '\n';
}

}  // namespace lsnn::harness
