// Command-line front end: model training, channel simulation, the sweep
// harness and the datagram demo, all driven by flags plus an optional JSON
// config whose keys mirror the SweepConfig/ChannelConfig/TrainConfig fields.
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "lsnn/comtune.hpp"
#include "lsnn/dipipeline.hpp"
#include "lsnn/harness.hpp"
#include "lsnn/model_io.hpp"
#include "lsnn/wire.hpp"

using json = nlohmann::json;
using namespace lsnn;

namespace {

void parse_train_config(const json& j, nn::TrainConfig& cfg) {
    if (j.contains("learning_rate")) cfg.learning_rate = j["learning_rate"];
    if (j.contains("batch_size")) cfg.batch_size = j["batch_size"];
    if (j.contains("max_epochs")) cfg.max_epochs = j["max_epochs"];
    if (j.contains("patience")) cfg.patience = j["patience"];
    if (j.contains("validation_fraction"))
        cfg.validation_fraction = j["validation_fraction"];
    if (j.contains("seed")) cfg.seed = j["seed"];
}

void parse_channel_config(const json& j, channel::ChannelConfig& cfg) {
    if (j.contains("p")) cfg.p = j["p"];
    if (j.contains("packet_payload")) cfg.packet_payload = j["packet_payload"];
    if (j.contains("throughput")) cfg.throughput = j["throughput"];
    if (j.contains("mode"))
        cfg.mode = j["mode"] == "packet" ? channel::LossMode::PacketLevel
                                         : channel::LossMode::ElementIID;
}

comtune::CodecKind parse_codec_kind(const std::string& name) {
    if (name == "none") return comtune::CodecKind::None;
    if (name == "quantizer") return comtune::CodecKind::Quantizer;
    if (name == "pca") return comtune::CodecKind::Pca;
    throw CLI::ValidationError("codec must be none|quantizer|pca, got " + name);
}

harness::SweepConfig parse_sweep_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw CLI::ValidationError("cannot open config: " + path);
    json j = json::parse(in);

    harness::SweepConfig cfg;
    if (j.contains("loss_rates"))
        cfg.loss_rates = j["loss_rates"].get<std::vector<double>>();
    if (j.contains("dropout_rates"))
        cfg.dropout_rates = j["dropout_rates"].get<std::vector<double>>();
    if (j.contains("codec_arms")) {
        cfg.codec_arms.clear();
        for (const auto& arm : j["codec_arms"]) {
            harness::CodecArm a;
            a.kind = parse_codec_kind(arm.value("kind", "none"));
            a.message_bytes = arm.value("message_bytes", 0);
            cfg.codec_arms.push_back(a);
        }
    }
    if (j.contains("trials")) cfg.trials = j["trials"];
    if (j.contains("base_seed")) cfg.base_seed = j["base_seed"];
    if (j.contains("architecture"))
        cfg.architecture = j["architecture"].get<std::vector<std::size_t>>();
    if (j.contains("division_index")) cfg.division_index = j["division_index"];
    if (j.contains("channel")) parse_channel_config(j["channel"], cfg.channel);
    if (j.contains("pretrain")) parse_train_config(j["pretrain"], cfg.pretrain_cfg);
    if (j.contains("finetune")) parse_train_config(j["finetune"], cfg.finetune_cfg);
    if (j.contains("feature_dim")) cfg.feature_dim = j["feature_dim"];
    if (j.contains("classes")) cfg.classes = j["classes"];
    if (j.contains("n_train")) cfg.n_train = j["n_train"];
    if (j.contains("n_test")) cfg.n_test = j["n_test"];
    if (j.contains("spread")) cfg.spread = j["spread"];
    if (j.contains("csv_train")) cfg.csv_train = j["csv_train"].get<std::string>();
    if (j.contains("csv_test")) cfg.csv_test = j["csv_test"].get<std::string>();
    return cfg;
}

// Shared dataset flags: a CSV path or synthetic-generation parameters.
struct DataArgs {
    std::string csv_path;
    std::uint64_t seed = 0;
    std::size_t feature_dim = 64;
    int classes = 10;
    std::size_t n_train = 5000;
    std::size_t n_test = 1000;
    double spread = 3.0;

    void attach(CLI::App* app) {
        app->add_option("--data", csv_path, "dataset CSV (features...,label)");
        app->add_option("--data-seed", seed, "synthetic dataset seed");
        app->add_option("--feature-dim", feature_dim);
        app->add_option("--classes", classes);
        app->add_option("--n-train", n_train);
        app->add_option("--n-test", n_test);
        app->add_option("--spread", spread, "class-mean distance from origin");
    }

    harness::SyntheticSplit load() const {
        if (!csv_path.empty()) {
            harness::SyntheticSplit split;
            split.train = harness::load_csv(csv_path);
            split.test = split.train;
            return split;
        }
        return harness::gen_synthetic(seed, feature_dim, classes, n_train,
                                      n_test, spread);
    }
};

struct TrainArgs {
    nn::TrainConfig cfg;

    void attach(CLI::App* app) {
        app->add_option("--lr", cfg.learning_rate);
        app->add_option("--batch-size", cfg.batch_size);
        app->add_option("--max-epochs", cfg.max_epochs);
        app->add_option("--patience", cfg.patience);
        app->add_option("--validation-fraction", cfg.validation_fraction);
        app->add_option("--seed", cfg.seed);
    }
};

struct ChannelArgs {
    channel::ChannelConfig cfg;
    std::string mode = "element";

    void attach(CLI::App* app) {
        app->add_option("--p", cfg.p, "loss probability");
        app->add_option("--packet-payload", cfg.packet_payload, "bytes per packet");
        app->add_option("--throughput", cfg.throughput, "bits per second");
        app->add_option("--loss-mode", mode, "element|packet");
    }

    channel::ChannelConfig resolve() const {
        channel::ChannelConfig c = cfg;
        c.mode = mode == "packet" ? channel::LossMode::PacketLevel
                                  : channel::LossMode::ElementIID;
        c.validate();
        return c;
    }
};

di::Deployment load_deployment(const std::string& f_in_path,
                               const std::string& f_out_path,
                               const std::string& codec_path) {
    di::Deployment dep;
    dep.f_in = nn::load_network(f_in_path);
    dep.f_out = nn::load_network(f_out_path);
    if (!codec_path.empty()) dep.codec = codec::load_spec(codec_path);
    return dep;
}

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path);
    if (!out) throw CLI::ValidationError("cannot open output file: " + path);
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"split-inference toolkit: loss-resilient tuning, channel "
                 "simulation and a datagram wire demo"};
    app.require_subcommand(1);

    // pretrain ---------------------------------------------------------
    auto* pretrain = app.add_subcommand("pretrain", "train the base network");
    DataArgs pre_data;
    TrainArgs pre_train;
    std::vector<std::size_t> pre_arch = {64, 256, 128, 10};
    std::string pre_out = "f_pre.lsnn";
    pre_data.attach(pretrain);
    pre_train.attach(pretrain);
    pretrain->add_option("--architecture", pre_arch, "layer widths");
    pretrain->add_option("--out", pre_out, "model file");

    // comtune ----------------------------------------------------------
    auto* tune = app.add_subcommand("comtune", "fine-tune with split-point dropout");
    DataArgs tune_data;
    TrainArgs tune_train;
    std::string tune_model = "f_pre.lsnn";
    double tune_r = 0.0;
    std::size_t tune_division = 2;
    std::string tune_codec = "none";
    std::size_t tune_bytes = 0;
    std::string tune_prefix = "tuned";
    tune_data.attach(tune);
    tune_train.attach(tune);
    tune->add_option("--model", tune_model, "pre-trained base model");
    tune->add_option("--r", tune_r, "dropout rate at the split");
    tune->add_option("--division-index", tune_division);
    tune->add_option("--codec", tune_codec, "none|quantizer|pca");
    tune->add_option("--message-bytes", tune_bytes, "compressed message budget");
    tune->add_option("--out-prefix", tune_prefix,
                     "writes <prefix>_in.lsnn, <prefix>_out.lsnn, "
                     "<prefix>.codec, <prefix>.manifest");

    // simulate ---------------------------------------------------------
    auto* simulate = app.add_subcommand("simulate", "evaluate a deployment under simulated loss");
    DataArgs sim_data;
    ChannelArgs sim_channel;
    std::string sim_f_in = "tuned_in.lsnn", sim_f_out = "tuned_out.lsnn";
    std::string sim_codec_path;
    std::uint64_t sim_seed = 0;
    std::string sim_out;
    sim_data.attach(simulate);
    sim_channel.attach(simulate);
    simulate->add_option("--f-in", sim_f_in);
    simulate->add_option("--f-out", sim_f_out);
    simulate->add_option("--codec-spec", sim_codec_path);
    simulate->add_option("--seed", sim_seed, "mask stream seed");
    simulate->add_option("--out", sim_out, "CSV file (default stdout)");

    // sweep ------------------------------------------------------------
    auto* sweep = app.add_subcommand("sweep", "run the full experiment grid");
    std::string sweep_config;
    std::string sweep_out;
    sweep->add_option("--config", sweep_config, "JSON config")->required();
    sweep->add_option("--out", sweep_out, "CSV file (default stdout)");

    // analytics --------------------------------------------------------
    auto* analytics = app.add_subcommand("analytics", "channel PMF and latency tables");
    std::size_t ana_n_t = 655;
    double ana_p = 0.1;
    std::size_t ana_payload = 100;
    double ana_throughput = 9.0e6;
    std::size_t ana_k_max = 2000;
    std::string ana_out;
    analytics->add_option("--n-t", ana_n_t, "packets per message");
    analytics->add_option("--p", ana_p, "loss probability");
    analytics->add_option("--packet-payload", ana_payload);
    analytics->add_option("--throughput", ana_throughput);
    analytics->add_option("--k-max", ana_k_max, "reliable-protocol PMF cutoff");
    analytics->add_option("--out", ana_out, "CSV file (default stdout)");

    // serve ------------------------------------------------------------
    auto* serve_cmd = app.add_subcommand("serve", "edge server: receive, decode, predict");
    ChannelArgs srv_channel;
    std::string srv_f_in = "tuned_in.lsnn", srv_f_out = "tuned_out.lsnn";
    std::string srv_codec_path;
    wire::ServeConfig srv_cfg;
    srv_channel.attach(serve_cmd);
    serve_cmd->add_option("--f-in", srv_f_in);
    serve_cmd->add_option("--f-out", srv_f_out);
    serve_cmd->add_option("--codec-spec", srv_codec_path);
    serve_cmd->add_option("--bind", srv_cfg.bind_address);
    serve_cmd->add_option("--port", srv_cfg.port, "0 = ephemeral (printed on stdout)");
    serve_cmd->add_option("--deadline", srv_cfg.deadline_s, "reassembly deadline, seconds");
    serve_cmd->add_option("--expected-messages", srv_cfg.expected_messages,
                          "stop after this many (0 = until idle)");
    serve_cmd->add_option("--idle-timeout", srv_cfg.idle_timeout_s);
    serve_cmd->add_option("--results", srv_cfg.results_path, "CSV log");

    // send -------------------------------------------------------------
    auto* send_cmd = app.add_subcommand("send", "device agent: encode and transmit rows");
    DataArgs send_data;
    ChannelArgs send_channel;
    std::string send_f_in = "tuned_in.lsnn", send_f_out = "tuned_out.lsnn";
    std::string send_codec_path;
    wire::SendConfig send_cfg;
    send_data.attach(send_cmd);
    send_channel.attach(send_cmd);
    send_cmd->add_option("--f-in", send_f_in);
    send_cmd->add_option("--f-out", send_f_out);
    send_cmd->add_option("--codec-spec", send_codec_path);
    send_cmd->add_option("--target", send_cfg.target_address);
    send_cmd->add_option("--port", send_cfg.port)->required();
    send_cmd->add_option("--loss-inject-p", send_cfg.loss_inject_p,
                         "drop datagrams before the socket write");
    send_cmd->add_option("--loss-seed", send_cfg.loss_seed);
    send_cmd->add_option("--interval", send_cfg.send_interval_s,
                         "seconds between messages");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*pretrain) {
            auto data = pre_data.load();
            auto trained = comtune::pretrain_base(
                data.train.features, data.train.labels, pre_arch, pre_train.cfg);
            nn::save_network(trained.net, pre_out);
            nn::NetworkModel model(trained.net);
            std::cerr << "epochs=" << trained.result.history.size()
                      << " best_epoch=" << trained.result.best_epoch
                      << " test_accuracy="
                      << nn::accuracy(model, data.test.features, data.test.labels)
                      << "\n";
            std::cout << pre_out << "\n";
        } else if (*tune) {
            auto data = tune_data.load();
            nn::Network f_pre = nn::load_network(tune_model);
            comtune::ComtuneConfig cfg;
            cfg.dropout_rate = tune_r;
            cfg.division_index = tune_division;
            cfg.codec = {parse_codec_kind(tune_codec), tune_bytes};
            cfg.train = tune_train.cfg;
            auto tuned = comtune::fine_tune(f_pre, data.train.features,
                                            data.train.labels, cfg);
            nn::save_network(tuned.f_in, tune_prefix + "_in.lsnn");
            nn::save_network(tuned.f_out, tune_prefix + "_out.lsnn");
            if (tuned.codec) codec::save_spec(*tuned.codec, tune_prefix + ".codec");
            open_out(tune_prefix + ".manifest")
                << comtune::deployment_manifest(cfg, tuned.codec);
            std::cout << tune_prefix << "_in.lsnn " << tune_prefix
                      << "_out.lsnn\n";
        } else if (*simulate) {
            auto data = sim_data.load();
            di::Deployment dep = load_deployment(sim_f_in, sim_f_out, sim_codec_path);
            dep.channel = sim_channel.resolve();
            dep.validate();
            SplitMix64 rng(sim_seed);
            auto result = harness::evaluate_deployment(dep, data.test, rng);

            harness::TrialRecord rec;
            rec.arm_id = "simulate";
            rec.codec = sim_codec_path.empty() ? "none" : "file";
            rec.message_bytes =
                dep.compressed_width() * codec::element_wire_bytes(dep.codec);
            rec.p = dep.channel.p;
            rec.seed = sim_seed;
            rec.accuracy = result.accuracy;
            rec.mean_latency_ms = result.latency_ms;
            rec.fraction_received_mean = result.fraction_received_mean;
            rec.all_lost_count = result.all_lost_count;
            std::ofstream file;
            std::ostream& out = sim_out.empty() ? std::cout
                                                : (file = open_out(sim_out), file);
            out << harness::csv_header() << "\n" << harness::csv_row(rec) << "\n";
        } else if (*sweep) {
            auto cfg = parse_sweep_config(sweep_config);
            std::ofstream file;
            std::ostream& out = sweep_out.empty() ? std::cout
                                                  : (file = open_out(sweep_out), file);
            harness::run_sweep(cfg, out);
        } else if (*analytics) {
            std::ofstream file;
            std::ostream& out = ana_out.empty() ? std::cout
                                                : (file = open_out(ana_out), file);
            harness::analytics_csv(ana_n_t, ana_p, ana_payload, ana_throughput,
                                   ana_k_max, out);
        } else if (*serve_cmd) {
            di::Deployment dep = load_deployment(srv_f_in, srv_f_out, srv_codec_path);
            dep.channel = srv_channel.resolve();
            dep.validate();
            auto records = wire::serve(dep, srv_cfg, [](std::uint16_t port) {
                std::cout << "listening on port " << port << std::endl;
            });
            std::cerr << "handled " << records.size() << " messages\n";
        } else if (*send_cmd) {
            auto data = send_data.load();
            di::Deployment dep = load_deployment(send_f_in, send_f_out, send_codec_path);
            dep.channel = send_channel.resolve();
            dep.validate();
            wire::send_dataset(data.test, dep, send_cfg);
            std::cerr << "sent " << data.test.size() << " messages\n";
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
