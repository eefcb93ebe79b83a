#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "capgan/data.hpp"
#include "capgan/gan.hpp"
#include "capgan/metrics.hpp"
#include "capgan/models.hpp"
#include "capgan/pretrain.hpp"

namespace capgan::harness {

// Where to load training data from.
struct DatasetSpec {
    std::string kind = "synthetic";  // synthetic | idx | cifar10 | image_dir
    // idx
    std::filesystem::path idx_images, idx_labels;
    // cifar10
    std::vector<std::filesystem::path> cifar_files;
    // image_dir
    std::filesystem::path image_root;
    std::size_t image_dir_channels = 3;
    // synthetic
    int synthetic_classes = 4;
    std::size_t synthetic_per_class = 64;
    std::size_t synthetic_hw = 32;
    std::size_t synthetic_channels = 1;
    // common
    std::size_t resize_to = 0;  // 0 keeps the native resolution
    double test_fraction = 0.2;

    void validate() const;
    nlohmann::json to_json() const;
    static DatasetSpec from_json(const nlohmann::json& j);
};

struct ExperimentConfig {
    std::string name = "experiment";
    DatasetSpec dataset;
    data::ImbalancePlan imbalance;  // rate 1 leaves the data untouched
    models::ModelConfig model;
    pretrain::PretrainConfig pretrain;
    gan::GanConfig gan;
    std::string embedder = "pixel";  // pixel | classifier
    metrics::OracleConfig oracle;    // used when embedder == classifier
    std::size_t samples_per_class = 200;
    std::size_t ssim_pairs = 200;
    std::filesystem::path output_dir = "runs/experiment";
    std::uint64_t seed = 0;
    bool no_pretrain = false;  // random GAN init; the transfer stage is skipped
    // Reject hyperparameters outside the documented sweep ranges (off by
    // default so that desk-scale runs can use smaller budgets).
    bool enforce_sweep_ranges = false;

    void validate() const;
    nlohmann::json to_json() const;
    static ExperimentConfig from_json(const nlohmann::json& j);
    static ExperimentConfig load(const std::filesystem::path& path);
    void save(const std::filesystem::path& path) const;

    // Stable hash of the canonical JSON form; identifies a run.
    std::string hash() const;
    // output_dir resolved against $CAPGAN_OUTPUT_ROOT when relative.
    std::filesystem::path resolved_output_dir() const;
};

enum class Stage { Prepare, Pretrain, Transfer, Train, Generate, Evaluate, Report };

Stage stage_from_string(const std::string& s);
std::string to_string(Stage s);

struct StageTiming {
    std::string stage;
    double seconds = 0;
    bool skipped = false;
};

struct RunManifest {
    std::string config_hash;
    std::string command;  // canonical command reconstructing the run
    std::map<std::string, std::string> artifacts;
    std::vector<StageTiming> timings;
    std::string version;

    void save(const std::filesystem::path& path) const;
    static RunManifest load(const std::filesystem::path& path);
};

// Executes all stages up to and including `final_stage`, persisting artifacts
// under the resolved output directory. Completed stages whose recorded config
// hash matches are skipped; corrupted intermediates surface as stage-level
// errors naming the stage.
RunManifest run_pipeline(const ExperimentConfig& config, Stage final_stage = Stage::Report);

struct AblationVariant {
    std::string name;       // directory-safe label
    std::string strategy;   // ros | two_phase | ensemble | imbalanced | none
    bool mse_only = false;  // drop the KL and cross-entropy terms
};

// {ros, two_phase, ensemble, imbalanced, none} x {full, mse_only}; the
// no-pretrain variant has no reconstruction loss to ablate.
std::vector<AblationVariant> default_ablation_variants();

// Runs one pipeline per variant under <output>/ablation/<name> and writes
// ablation_report.{csv,json} with one row per variant per class plus a paired
// t-test of each variant's per-class Frechet distances against the first.
nlohmann::json run_ablation(const ExperimentConfig& base,
                            const std::vector<AblationVariant>& variants);

}  // namespace capgan::harness
