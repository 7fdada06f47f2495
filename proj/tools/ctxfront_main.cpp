#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "ctxfront/datagen.hpp"
#include "ctxfront/gradcheck_suite.hpp"
#include "ctxfront/inference.hpp"
#include "ctxfront/model.hpp"
#include "ctxfront/trainer.hpp"

using nlohmann::json;
using namespace ctxfront;

namespace {

// Strict schema: any key outside `allowed` is an error naming the key and
// its section.
void check_keys(const json &obj, const std::vector<std::string> &allowed,
                const std::string &section) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        if (std::find(allowed.begin(), allowed.end(), it.key()) == allowed.end()) {
            throw std::runtime_error("unknown config key '" + it.key() + "' in section '" +
                                     section + "'");
        }
    }
}

json load_config(const std::string &path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file: " + path);
    json cfg;
    try {
        cfg = json::parse(in);
    } catch (const json::parse_error &e) {
        throw std::runtime_error("malformed config " + path + ": " + e.what());
    }
    check_keys(cfg, {"seed", "arch", "simulate", "train", "mask_policy"}, "<top level>");
    return cfg;
}

nn::ArchConfig parse_arch(const json &j) {
    check_keys(j,
               {"d_model", "n_primary_blocks", "n_context_blocks", "n_cross_blocks",
                "ffn_multiplier", "n_heads", "attn_window_past", "conv_kernel", "dvec_dim",
                "n_mels"},
               "arch");
    nn::ArchConfig c;
    c.d_model = j.value("d_model", c.d_model);
    c.n_primary_blocks = j.value("n_primary_blocks", c.n_primary_blocks);
    c.n_context_blocks = j.value("n_context_blocks", c.n_context_blocks);
    c.n_cross_blocks = j.value("n_cross_blocks", c.n_cross_blocks);
    c.ffn_multiplier = j.value("ffn_multiplier", c.ffn_multiplier);
    c.n_heads = j.value("n_heads", c.n_heads);
    c.attn_window_past = j.value("attn_window_past", c.attn_window_past);
    c.conv_kernel = j.value("conv_kernel", c.conv_kernel);
    c.dvec_dim = j.value("dvec_dim", c.dvec_dim);
    c.n_mels = j.value("n_mels", c.n_mels);
    c.validate();
    return c;
}

std::array<double, 4> parse_mix_weights(const json &j, const std::string &section) {
    check_keys(j, {"echo", "noise", "multispeaker", "clean"}, section);
    std::array<double, 4> w = {0.25, 0.25, 0.25, 0.25};
    w[0] = j.value("echo", w[0]);
    w[1] = j.value("noise", w[1]);
    w[2] = j.value("multispeaker", w[2]);
    w[3] = j.value("clean", w[3]);
    return w;
}

template <size_t N>
std::array<double, N> parse_range(const json &j, const std::string &key) {
    auto v = j.get<std::vector<double>>();
    if (v.size() != N) {
        throw std::runtime_error("config key '" + key + "' must hold " + std::to_string(N) +
                                 " numbers");
    }
    std::array<double, N> out;
    std::copy(v.begin(), v.end(), out.begin());
    return out;
}

DatasetSpec parse_simulate(const json &j, uint64_t seed) {
    check_keys(j,
               {"n_examples", "mix_weights", "snr_choices_db", "snr_range_db",
                "reverb_decay_range_ms", "echo_delay_range_ms", "echo_gain_range",
                "clip_level_range", "utterance_duration_s", "n_speakers",
                "copies_per_utterance"},
               "simulate");
    DatasetSpec s;
    s.seed = seed;
    s.n_examples = j.value("n_examples", s.n_examples);
    if (j.contains("mix_weights"))
        s.mix_weights = parse_mix_weights(j["mix_weights"], "simulate.mix_weights");
    if (j.contains("snr_choices_db"))
        s.snr_choices_db = j["snr_choices_db"].get<std::vector<double>>();
    if (j.contains("snr_range_db"))
        s.snr_range_db = parse_range<2>(j["snr_range_db"], "snr_range_db");
    if (j.contains("reverb_decay_range_ms"))
        s.reverb_decay_range_ms =
            parse_range<2>(j["reverb_decay_range_ms"], "reverb_decay_range_ms");
    if (j.contains("echo_delay_range_ms"))
        s.echo_delay_range_ms = parse_range<2>(j["echo_delay_range_ms"], "echo_delay_range_ms");
    if (j.contains("echo_gain_range"))
        s.echo_gain_range = parse_range<2>(j["echo_gain_range"], "echo_gain_range");
    if (j.contains("clip_level_range"))
        s.clip_level_range = parse_range<2>(j["clip_level_range"], "clip_level_range");
    s.utterance_duration_s = j.value("utterance_duration_s", s.utterance_duration_s);
    s.n_speakers = j.value("n_speakers", s.n_speakers);
    s.copies_per_utterance = j.value("copies_per_utterance", s.copies_per_utterance);
    return s;
}

train::TrainConfig parse_train(const json &j, uint64_t seed) {
    check_keys(j,
               {"learning_rate", "beta1", "beta2", "adam_eps", "batch_size", "steps",
                "checkpoint_every", "grad_clip_norm", "mix_weights", "ramp"},
               "train");
    train::TrainConfig c;
    c.seed = seed;
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.beta1 = j.value("beta1", c.beta1);
    c.beta2 = j.value("beta2", c.beta2);
    c.adam_eps = j.value("adam_eps", c.adam_eps);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.steps = j.value("steps", c.steps);
    c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
    c.grad_clip_norm = j.value("grad_clip_norm", c.grad_clip_norm);
    if (j.contains("mix_weights"))
        c.mix_weights = parse_mix_weights(j["mix_weights"], "train.mix_weights");
    if (j.contains("ramp")) {
        const json &r = j["ramp"];
        check_keys(r, {"spectral_only_steps", "ramp_steps", "max_asr_weight"}, "train.ramp");
        c.ramp.spectral_only_steps = r.value("spectral_only_steps", c.ramp.spectral_only_steps);
        c.ramp.ramp_steps = r.value("ramp_steps", c.ramp.ramp_steps);
        c.ramp.max_asr_weight = r.value("max_asr_weight", c.ramp.max_asr_weight);
    }
    c.validate();
    return c;
}

int cmd_simulate(const std::string &config_path, const std::string &out_dir) {
    json cfg = load_config(config_path);
    if (!cfg.contains("simulate")) {
        throw std::runtime_error("config is missing the 'simulate' section");
    }
    const uint64_t seed = cfg.value("seed", 1);
    DatasetSpec spec = parse_simulate(cfg["simulate"], seed);
    std::vector<UtteranceExample> examples = generate_dataset(spec);
    write_dataset(examples, out_dir);
    std::cout << "wrote " << examples.size() << " examples to " << out_dir << "\n";
    return 0;
}

int cmd_train(const std::string &config_path, const std::string &data_dir,
              const std::string &out_dir, const std::string &heldout_dir) {
    json cfg = load_config(config_path);
    const uint64_t seed = cfg.value("seed", 1);
    nn::ArchConfig arch = cfg.contains("arch") ? parse_arch(cfg["arch"]) : nn::ArchConfig{};
    train::TrainConfig tc =
        cfg.contains("train") ? parse_train(cfg["train"], seed) : train::TrainConfig{};
    tc.seed = seed;

    std::vector<UtteranceExample> dataset = read_dataset(data_dir);
    std::vector<UtteranceExample> heldout;
    if (!heldout_dir.empty()) heldout = read_dataset(heldout_dir);
    nn::FrontendModel model(arch, seed);
    std::cout << "training " << model.parameter_count() << " parameters on " << dataset.size()
              << " examples for " << tc.steps << " steps\n";
    train::TrainResult result = train::run_training(model, dataset, tc, out_dir,
                                                    heldout.empty() ? nullptr : &heldout);

    std::filesystem::create_directories(out_dir);
    std::ofstream metrics(out_dir + "/metrics.jsonl");
    for (const auto &m : result.metrics) {
        json line = {{"step", m.step},
                     {"spectral_loss", m.spectral_loss},
                     {"asr_loss", m.asr_loss},
                     {"asr_weight", m.asr_weight},
                     {"total_loss", m.total_loss}};
        metrics << line.dump() << "\n";
    }
    json final_line = {{"final", true},
                       {"steps", tc.steps},
                       {"frozen_encoder_hash", std::to_string(result.frozen_encoder_hash_after)}};
    if (!heldout.empty()) final_line["heldout_mask_mae"] = result.heldout_mask_mae;
    metrics << final_line.dump() << "\n";
    if (!result.metrics.empty()) {
        std::cout << "final spectral loss " << result.metrics.back().spectral_loss << "\n";
    }
    std::cout << "checkpoints written to " << out_dir << "\n";
    return 0;
}

int cmd_enhance(const std::string &ckpt_dir, const std::string &data_dir,
                const std::string &out_dir, double alpha, double beta) {
    infer::MaskPolicy policy;
    policy.alpha = alpha;
    policy.beta = beta;
    policy.validate();
    nn::FrontendModel model = nn::load_checkpoint(ckpt_dir);
    std::vector<UtteranceExample> dataset = read_dataset(data_dir);
    std::filesystem::create_directories(out_dir);

    json manifest;
    manifest["alpha"] = alpha;
    manifest["beta"] = beta;
    json entries = json::array();
    for (const auto &ex : dataset) {
        infer::EnhanceResult res = infer::enhance_utterance(model, ex, policy);
        const std::string lfbe_file = ex.id + ".enhanced.f32";
        const std::string stacked_file = ex.id + ".stacked.f32";
        auto dump = [&](const std::string &name, const FeatureMatrix &m) {
            std::ofstream out(out_dir + "/" + name, std::ios::binary);
            if (!out) throw std::runtime_error("cannot write " + out_dir + "/" + name);
            out.write(reinterpret_cast<const char *>(m.values.data()),
                      static_cast<std::streamsize>(m.values.size() * sizeof(float)));
        };
        dump(lfbe_file, res.enhanced_lfbe);
        dump(stacked_file, res.enhanced_stacked);
        entries.push_back({{"id", ex.id},
                           {"enhanced_lfbe", lfbe_file},
                           {"enhanced_stacked", stacked_file},
                           {"frames", res.enhanced_lfbe.frames},
                           {"stacked_frames", res.enhanced_stacked.frames},
                           {"n_mels", res.enhanced_lfbe.channels},
                           {"stacked_width", res.enhanced_stacked.channels}});
    }
    manifest["examples"] = entries;
    std::ofstream mf(out_dir + "/manifest.json");
    mf << manifest.dump(2) << "\n";
    std::cout << "enhanced " << dataset.size() << " examples into " << out_dir << "\n";
    return 0;
}

int cmd_eval(const std::string &ckpt_dir, const std::string &data_dir,
             const std::string &report_path, double alpha, double beta) {
    infer::MaskPolicy policy;
    policy.alpha = alpha;
    policy.beta = beta;
    policy.validate();
    nn::FrontendModel model = nn::load_checkpoint(ckpt_dir);
    std::vector<UtteranceExample> dataset = read_dataset(data_dir);
    infer::EvalReport report = infer::evaluate(model, dataset, policy);
    const std::string text = report.to_json(policy);
    if (report_path.empty() || report_path == "-") {
        std::cout << text << "\n";
    } else {
        std::ofstream out(report_path);
        if (!out) throw std::runtime_error("cannot write report: " + report_path);
        out << text << "\n";
        std::cout << "report written to " << report_path << "\n";
    }
    std::cout << "overall: mask MAE " << report.overall.mask_mae << ", LSD enhanced "
              << report.overall.lsd_enhanced << " vs noisy " << report.overall.lsd_noisy << "\n";
    return 0;
}

int cmd_gradcheck() {
    auto results = ad::gradcheck_suite();
    double worst = 0.0;
    for (const auto &[name, err] : results) {
        std::printf("%-28s max relative error %.3e\n", name.c_str(), err);
        worst = std::max(worst, err);
    }
    std::printf("worst: %.3e (tolerance 1e-4)\n", worst);
    return worst < 1e-4 ? 0 : 1;
}

} // namespace

int main(int argc, char **argv) {
    CLI::App app{"contextual enhancement frontend: simulation, training, inference"};
    app.require_subcommand(1);
    app.failure_message(CLI::FailureMessage::help);

    std::string config_path, data_dir, out_dir, ckpt_dir, report_path, heldout_dir;
    double alpha = 0.5, beta = 0.01;

    CLI::App *simulate = app.add_subcommand("simulate", "synthesize a dataset");
    simulate->add_option("--config", config_path, "JSON config")->required();
    simulate->add_option("--out", out_dir, "output dataset directory")->required();

    CLI::App *train_cmd = app.add_subcommand("train", "train the frontend");
    train_cmd->add_option("--config", config_path, "JSON config")->required();
    train_cmd->add_option("--data", data_dir, "dataset directory")->required();
    train_cmd->add_option("--out", out_dir, "checkpoint output directory")->required();
    train_cmd->add_option("--heldout", heldout_dir, "held-out dataset for final mask MAE");

    CLI::App *enhance = app.add_subcommand("enhance", "run mask-scaled enhancement");
    enhance->add_option("--ckpt", ckpt_dir, "checkpoint directory")->required();
    enhance->add_option("--data", data_dir, "dataset directory")->required();
    enhance->add_option("--out", out_dir, "output directory")->required();
    enhance->add_option("--alpha", alpha, "mask scalar");
    enhance->add_option("--beta", beta, "mask floor");

    CLI::App *eval_cmd = app.add_subcommand("eval", "per-condition metrics report");
    eval_cmd->add_option("--ckpt", ckpt_dir, "checkpoint directory")->required();
    eval_cmd->add_option("--data", data_dir, "dataset directory")->required();
    eval_cmd->add_option("--report", report_path, "report JSON path ('-' for stdout)");
    eval_cmd->add_option("--alpha", alpha, "mask scalar");
    eval_cmd->add_option("--beta", beta, "mask floor");

    CLI::App *gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient suite");

    CLI11_PARSE(app, argc, argv);

    try {
        if (simulate->parsed()) return cmd_simulate(config_path, out_dir);
        if (train_cmd->parsed()) return cmd_train(config_path, data_dir, out_dir, heldout_dir);
        if (enhance->parsed()) return cmd_enhance(ckpt_dir, data_dir, out_dir, alpha, beta);
        if (eval_cmd->parsed()) return cmd_eval(ckpt_dir, data_dir, report_path, alpha, beta);
        if (gradcheck->parsed()) return cmd_gradcheck();
    } catch (const std::exception &e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
