// Command-line front end for the imbalance-aware conditional GAN pipeline.
//
// Subcommands map onto pipeline stages (each runs every earlier stage that is
// not already complete for the same configuration):
//   prepare | pretrain | transfer | train | generate | evaluate | report
// plus `ablate`, which runs the built-in pre-training ablation grid.
//
// Exit codes: 0 success, 2 configuration error, 3 data/artifact error,
// 1 anything else.

#include <exception>
#include <iostream>
#include <string>

#include <nlohmann/json.hpp>

#include "CLI11.hpp"

#include "capgan/harness.hpp"

namespace {

struct Overrides {
    std::string config_path;
    std::string name, output_dir, dataset_kind, strategy, embedder;
    double rate = -1;
    int majority_class = -1;
    long long seed = -1;
    int pretrain_epochs = -1, gan_epochs = -1;
    long long samples_per_class = -1;
    bool no_pretrain = false;
    bool enforce_sweep_ranges = false;
};

void add_common_options(CLI::App* cmd, Overrides& o) {
    cmd->add_option("--config", o.config_path, "Experiment config JSON file");
    cmd->add_option("--name", o.name, "Experiment name");
    cmd->add_option("--output", o.output_dir,
                    "Output directory (relative paths resolve against "
                    "$CAPGAN_OUTPUT_ROOT)");
    cmd->add_option("--dataset", o.dataset_kind,
                    "Dataset kind: synthetic|idx|cifar10|image_dir");
    cmd->add_option("--rate", o.rate, "Imbalance rate (>= 1)");
    cmd->add_option("--majority-class", o.majority_class, "Majority class id");
    cmd->add_option("--seed", o.seed, "Master seed");
    cmd->add_option("--strategy", o.strategy,
                    "Pre-training strategy: ros|two_phase|ensemble|imbalanced");
    cmd->add_option("--pretrain-epochs", o.pretrain_epochs, "CVAE pre-training epochs");
    cmd->add_option("--gan-epochs", o.gan_epochs, "Adversarial training epochs");
    cmd->add_option("--embedder", o.embedder, "Metric embedder: pixel|classifier");
    cmd->add_option("--samples-per-class", o.samples_per_class,
                    "Generated samples per class for evaluation");
    cmd->add_flag("--no-pretrain", o.no_pretrain,
                  "Skip pre-training; initialize the GAN randomly");
    cmd->add_flag("--enforce-sweep-ranges", o.enforce_sweep_ranges,
                  "Reject hyperparameters outside the documented sweep ranges");
}

capgan::harness::ExperimentConfig resolve_config(const Overrides& o) {
    capgan::harness::ExperimentConfig cfg;
    if (!o.config_path.empty())
        cfg = capgan::harness::ExperimentConfig::load(o.config_path);
    if (!o.name.empty()) cfg.name = o.name;
    if (!o.output_dir.empty()) cfg.output_dir = o.output_dir;
    if (!o.dataset_kind.empty()) cfg.dataset.kind = o.dataset_kind;
    if (o.rate >= 0) cfg.imbalance.rate = o.rate;
    if (o.majority_class >= 0) cfg.imbalance.majority_class = o.majority_class;
    if (o.seed >= 0) cfg.seed = static_cast<std::uint64_t>(o.seed);
    if (!o.strategy.empty())
        cfg.pretrain.strategy = capgan::pretrain::strategy_from_string(o.strategy);
    if (o.pretrain_epochs >= 0) cfg.pretrain.epochs = o.pretrain_epochs;
    if (o.gan_epochs >= 0) cfg.gan.epochs = o.gan_epochs;
    if (!o.embedder.empty()) cfg.embedder = o.embedder;
    if (o.samples_per_class >= 0)
        cfg.samples_per_class = static_cast<std::size_t>(o.samples_per_class);
    if (o.no_pretrain) cfg.no_pretrain = true;
    if (o.enforce_sweep_ranges) cfg.enforce_sweep_ranges = true;
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Class-imbalance-aware conditional GAN pipeline"};
    app.require_subcommand(1);

    const std::vector<std::string> stage_names = {
        "prepare", "pretrain", "transfer", "train", "generate", "evaluate", "report"};
    std::vector<std::pair<CLI::App*, Overrides>> stage_cmds;
    stage_cmds.reserve(stage_names.size() + 1);
    for (const auto& name : stage_names) {
        CLI::App* cmd = app.add_subcommand(
            name, "Run the pipeline through the '" + name + "' stage");
        stage_cmds.emplace_back(cmd, Overrides{});
        add_common_options(cmd, stage_cmds.back().second);
    }
    CLI::App* ablate = app.add_subcommand(
        "ablate", "Run the pre-training ablation grid and write a comparison report");
    stage_cmds.emplace_back(ablate, Overrides{});
    add_common_options(ablate, stage_cmds.back().second);

    CLI11_PARSE(app, argc, argv);

    try {
        for (std::size_t i = 0; i < stage_names.size(); ++i) {
            auto& [cmd, overrides] = stage_cmds[i];
            if (!cmd->parsed()) continue;
            const auto cfg = resolve_config(overrides);
            const auto manifest = capgan::harness::run_pipeline(
                cfg, capgan::harness::stage_from_string(stage_names[i]));
            std::cout << "completed through stage '" << stage_names[i] << "'; outputs in "
                      << cfg.resolved_output_dir().string() << "\n";
            for (const auto& t : manifest.timings)
                std::cout << "  " << t.stage << ": "
                          << (t.skipped ? "skipped (up to date)"
                                        : std::to_string(t.seconds) + " s")
                          << "\n";
            return 0;
        }
        if (ablate->parsed()) {
            const auto cfg = resolve_config(stage_cmds.back().second);
            capgan::harness::run_ablation(cfg,
                                          capgan::harness::default_ablation_variants());
            std::cout << "ablation report written to "
                      << (cfg.resolved_output_dir() / "ablation_report.csv").string()
                      << "\n";
            return 0;
        }
    } catch (const std::invalid_argument& e) {
        std::cerr << "configuration error: " << e.what() << "\n";
        return 2;
    } catch (const std::runtime_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "unexpected error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
