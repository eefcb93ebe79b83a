#include "capgan/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <memory>
#include <fstream>
#include <iostream>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace capgan::harness {

namespace fs = std::filesystem;
using nlohmann::json;

static constexpr const char* kVersion = "capgan 1.0.0";

// ---------------------------------------------------------------- config ----

void DatasetSpec::validate() const {
    if (kind != "synthetic" && kind != "idx" && kind != "cifar10" && kind != "image_dir")
        throw std::invalid_argument("DatasetSpec: unknown kind '" + kind + "'");
    if (kind == "idx" && (idx_images.empty() || idx_labels.empty()))
        throw std::invalid_argument("DatasetSpec: idx kind needs idx_images and idx_labels");
    if (kind == "cifar10" && cifar_files.empty())
        throw std::invalid_argument("DatasetSpec: cifar10 kind needs cifar_files");
    if (kind == "image_dir" && image_root.empty())
        throw std::invalid_argument("DatasetSpec: image_dir kind needs image_root");
    if (kind == "synthetic" && (synthetic_classes < 2 || synthetic_per_class < 2))
        throw std::invalid_argument("DatasetSpec: synthetic needs >= 2 classes, >= 2 each");
    if (test_fraction <= 0.0 || test_fraction >= 1.0)
        throw std::invalid_argument("DatasetSpec: test_fraction in (0,1)");
}

json DatasetSpec::to_json() const {
    json files = json::array();
    for (const auto& f : cifar_files) files.push_back(f.string());
    return {{"kind", kind},
            {"idx_images", idx_images.string()},
            {"idx_labels", idx_labels.string()},
            {"cifar_files", files},
            {"image_root", image_root.string()},
            {"image_dir_channels", image_dir_channels},
            {"synthetic_classes", synthetic_classes},
            {"synthetic_per_class", synthetic_per_class},
            {"synthetic_hw", synthetic_hw},
            {"synthetic_channels", synthetic_channels},
            {"resize_to", resize_to},
            {"test_fraction", test_fraction}};
}

DatasetSpec DatasetSpec::from_json(const json& j) {
    DatasetSpec s;
    s.kind = j.value("kind", s.kind);
    s.idx_images = j.value("idx_images", std::string());
    s.idx_labels = j.value("idx_labels", std::string());
    for (const auto& f : j.value("cifar_files", json::array()))
        s.cifar_files.emplace_back(f.get<std::string>());
    s.image_root = j.value("image_root", std::string());
    s.image_dir_channels = j.value("image_dir_channels", s.image_dir_channels);
    s.synthetic_classes = j.value("synthetic_classes", s.synthetic_classes);
    s.synthetic_per_class = j.value("synthetic_per_class", s.synthetic_per_class);
    s.synthetic_hw = j.value("synthetic_hw", s.synthetic_hw);
    s.synthetic_channels = j.value("synthetic_channels", s.synthetic_channels);
    s.resize_to = j.value("resize_to", s.resize_to);
    s.test_fraction = j.value("test_fraction", s.test_fraction);
    return s;
}

namespace {
void check_range(double v, double lo, double hi, const std::string& what) {
    if (v < lo || v > hi)
        throw std::invalid_argument("ExperimentConfig: " + what + " = " +
                                    std::to_string(v) + " outside sweep range [" +
                                    std::to_string(lo) + ", " + std::to_string(hi) + "]");
}
}  // namespace

void ExperimentConfig::validate() const {
    dataset.validate();
    model.validate();
    pretrain.validate();
    gan.validate();
    if (imbalance.rate < 1.0)
        throw std::invalid_argument("ExperimentConfig: imbalance rate >= 1 required");
    if (imbalance.majority_class < 0)
        throw std::invalid_argument("ExperimentConfig: majority_class >= 0 required");
    if (embedder != "pixel" && embedder != "classifier")
        throw std::invalid_argument("ExperimentConfig: embedder must be pixel|classifier");
    if (samples_per_class < 2)
        throw std::invalid_argument("ExperimentConfig: samples_per_class >= 2 required");
    if (name.empty() || name.find('/') != std::string::npos)
        throw std::invalid_argument("ExperimentConfig: name must be a non-empty token");
    if (enforce_sweep_ranges) {
        check_range(pretrain.learning_rate, 0.0005, 0.001, "cvae learning rate");
        check_range(pretrain.epochs, 30, 50, "cvae epochs");
        check_range(pretrain.adam_beta1, 0.5, 0.8, "cvae adam beta1");
        check_range(gan.lr_generator, 0.00005, 0.002, "generator learning rate");
        check_range(gan.lr_discriminator, 0.00005, 0.002, "discriminator learning rate");
        check_range(gan.gp_weight, 5, 10, "gradient penalty weight");
        check_range(gan.train_ratio, 2, 10, "train ratio");
        check_range(double(gan.batch_size), 32, 256, "batch size");
        check_range(double(model.latent_dim), 64, 512, "latent dimension");
    }
}

json ExperimentConfig::to_json() const {
    json j;
    j["name"] = name;
    j["dataset"] = dataset.to_json();
    j["imbalance"] = {{"majority_class", imbalance.majority_class},
                      {"rate", imbalance.rate}};
    j["model"] = model.to_json();
    j["pretrain"] = {{"strategy", pretrain::to_string(pretrain.strategy)},
                     {"epochs", pretrain.epochs},
                     {"learning_rate", pretrain.learning_rate},
                     {"adam_beta1", pretrain.adam_beta1},
                     {"batch_size", pretrain.batch_size},
                     {"finetune_epochs", pretrain.finetune_epochs},
                     {"num_members", pretrain.num_members},
                     {"w_kl", pretrain.w_kl},
                     {"w_bce", pretrain.w_bce},
                     {"w_mse", pretrain.w_mse},
                     {"redraw_ros_each_epoch", pretrain.redraw_ros_each_epoch}};
    j["gan"] = {{"lr_generator", gan.lr_generator},
                {"lr_discriminator", gan.lr_discriminator},
                {"gp_weight", gan.gp_weight},
                {"train_ratio", gan.train_ratio},
                {"batch_size", gan.batch_size},
                {"epochs", gan.epochs},
                {"adam_beta1", gan.adam_beta1},
                {"interpolate_real_fake", gan.interpolate_real_fake},
                {"train_on_balanced", gan.train_on_balanced},
                {"logit_clamp", gan.logit_clamp}};
    j["embedder"] = embedder;
    j["oracle"] = {{"epochs", oracle.epochs},
                   {"learning_rate", oracle.learning_rate},
                   {"batch_size", oracle.batch_size},
                   {"base_filters", oracle.base_filters},
                   {"depth", oracle.depth}};
    j["samples_per_class"] = samples_per_class;
    j["ssim_pairs"] = ssim_pairs;
    j["output_dir"] = output_dir.string();
    j["seed"] = seed;
    j["no_pretrain"] = no_pretrain;
    j["enforce_sweep_ranges"] = enforce_sweep_ranges;
    return j;
}

ExperimentConfig ExperimentConfig::from_json(const json& j) {
    ExperimentConfig c;
    c.name = j.value("name", c.name);
    if (j.contains("dataset")) c.dataset = DatasetSpec::from_json(j.at("dataset"));
    if (j.contains("imbalance")) {
        const json& ji = j.at("imbalance");
        c.imbalance.majority_class = ji.value("majority_class", 0);
        c.imbalance.rate = ji.value("rate", 1.0);
    }
    if (j.contains("model")) c.model = models::ModelConfig::from_json(j.at("model"));
    if (j.contains("pretrain")) {
        const json& jp = j.at("pretrain");
        c.pretrain.strategy = pretrain::strategy_from_string(
            jp.value("strategy", pretrain::to_string(c.pretrain.strategy)));
        c.pretrain.epochs = jp.value("epochs", c.pretrain.epochs);
        c.pretrain.learning_rate = jp.value("learning_rate", c.pretrain.learning_rate);
        c.pretrain.adam_beta1 = jp.value("adam_beta1", c.pretrain.adam_beta1);
        c.pretrain.batch_size = jp.value("batch_size", c.pretrain.batch_size);
        c.pretrain.finetune_epochs = jp.value("finetune_epochs", c.pretrain.finetune_epochs);
        c.pretrain.num_members = jp.value("num_members", c.pretrain.num_members);
        c.pretrain.w_kl = jp.value("w_kl", c.pretrain.w_kl);
        c.pretrain.w_bce = jp.value("w_bce", c.pretrain.w_bce);
        c.pretrain.w_mse = jp.value("w_mse", c.pretrain.w_mse);
        c.pretrain.redraw_ros_each_epoch =
            jp.value("redraw_ros_each_epoch", c.pretrain.redraw_ros_each_epoch);
    }
    if (j.contains("gan")) {
        const json& jg = j.at("gan");
        c.gan.lr_generator = jg.value("lr_generator", c.gan.lr_generator);
        c.gan.lr_discriminator = jg.value("lr_discriminator", c.gan.lr_discriminator);
        c.gan.gp_weight = jg.value("gp_weight", c.gan.gp_weight);
        c.gan.train_ratio = jg.value("train_ratio", c.gan.train_ratio);
        c.gan.batch_size = jg.value("batch_size", c.gan.batch_size);
        c.gan.epochs = jg.value("epochs", c.gan.epochs);
        c.gan.adam_beta1 = jg.value("adam_beta1", c.gan.adam_beta1);
        c.gan.interpolate_real_fake =
            jg.value("interpolate_real_fake", c.gan.interpolate_real_fake);
        c.gan.train_on_balanced = jg.value("train_on_balanced", c.gan.train_on_balanced);
        c.gan.logit_clamp = jg.value("logit_clamp", c.gan.logit_clamp);
    }
    c.embedder = j.value("embedder", c.embedder);
    if (j.contains("oracle")) {
        const json& jo = j.at("oracle");
        c.oracle.epochs = jo.value("epochs", c.oracle.epochs);
        c.oracle.learning_rate = jo.value("learning_rate", c.oracle.learning_rate);
        c.oracle.batch_size = jo.value("batch_size", c.oracle.batch_size);
        c.oracle.base_filters = jo.value("base_filters", c.oracle.base_filters);
        c.oracle.depth = jo.value("depth", c.oracle.depth);
    }
    c.samples_per_class = j.value("samples_per_class", c.samples_per_class);
    c.ssim_pairs = j.value("ssim_pairs", c.ssim_pairs);
    c.output_dir = j.value("output_dir", c.output_dir.string());
    c.seed = j.value("seed", c.seed);
    c.no_pretrain = j.value("no_pretrain", c.no_pretrain);
    c.enforce_sweep_ranges = j.value("enforce_sweep_ranges", c.enforce_sweep_ranges);
    return c;
}

ExperimentConfig ExperimentConfig::load(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read config " + path.string());
    json j;
    in >> j;
    return from_json(j);
}

void ExperimentConfig::save(const fs::path& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write config " + path.string());
    out << to_json().dump(2) << "\n";
}

std::string ExperimentConfig::hash() const {
    const std::string dump = to_json().dump();
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : dump) {
        h ^= c;
        h *= 1099511628211ull;
    }
    std::ostringstream os;
    os << std::hex << h;
    return os.str();
}

fs::path ExperimentConfig::resolved_output_dir() const {
    if (output_dir.is_absolute()) return output_dir;
    if (const char* root = std::getenv("CAPGAN_OUTPUT_ROOT"))
        return fs::path(root) / output_dir;
    return output_dir;
}

// ---------------------------------------------------------------- stages ----

Stage stage_from_string(const std::string& s) {
    if (s == "prepare") return Stage::Prepare;
    if (s == "pretrain") return Stage::Pretrain;
    if (s == "transfer") return Stage::Transfer;
    if (s == "train") return Stage::Train;
    if (s == "generate") return Stage::Generate;
    if (s == "evaluate") return Stage::Evaluate;
    if (s == "report") return Stage::Report;
    throw std::invalid_argument("unknown stage '" + s + "'");
}

std::string to_string(Stage s) {
    switch (s) {
        case Stage::Prepare: return "prepare";
        case Stage::Pretrain: return "pretrain";
        case Stage::Transfer: return "transfer";
        case Stage::Train: return "train";
        case Stage::Generate: return "generate";
        case Stage::Evaluate: return "evaluate";
        case Stage::Report: return "report";
    }
    throw std::logic_error("unreachable stage");
}

void RunManifest::save(const fs::path& path) const {
    json j;
    j["config_hash"] = config_hash;
    j["command"] = command;
    j["version"] = version;
    for (const auto& [k, v] : artifacts) j["artifacts"][k] = v;
    for (const auto& t : timings)
        j["timings"].push_back(
            {{"stage", t.stage}, {"seconds", t.seconds}, {"skipped", t.skipped}});
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << j.dump(2) << "\n";
}

RunManifest RunManifest::load(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read " + path.string());
    json j;
    in >> j;
    RunManifest m;
    m.config_hash = j.value("config_hash", "");
    m.command = j.value("command", "");
    m.version = j.value("version", "");
    for (const auto& [k, v] : j.value("artifacts", json::object()).items())
        m.artifacts[k] = v.get<std::string>();
    for (const auto& t : j.value("timings", json::array()))
        m.timings.push_back({t.value("stage", ""), t.value("seconds", 0.0),
                             t.value("skipped", false)});
    return m;
}

namespace {

// Per-stage completion marker: records the config hash and the artifacts the
// stage produced so a rerun with the same config can skip it.
bool stage_done(const fs::path& dir, const std::string& stage, const std::string& hash) {
    const fs::path marker = dir / (stage + ".done");
    std::ifstream in(marker);
    if (!in) return false;
    json j;
    try {
        in >> j;
    } catch (const json::exception&) {
        return false;
    }
    if (j.value("config_hash", "") != hash) return false;
    for (const auto& a : j.value("artifacts", json::array()))
        if (!fs::exists(dir / a.get<std::string>())) return false;
    return true;
}

void mark_stage_done(const fs::path& dir, const std::string& stage,
                     const std::string& hash, const std::vector<std::string>& artifacts) {
    json j{{"config_hash", hash}, {"artifacts", artifacts}};
    std::ofstream out(dir / (stage + ".done"));
    out << j.dump(2) << "\n";
}

void save_model_params(const fs::path& path, const nn::ParamList& params,
                       const models::ModelConfig& cfg, const std::string& kind) {
    NamedArrayArchive arc;
    nn::save_params(arc, params);
    arc.set_meta("kind", kind);
    arc.set_meta("model_config", cfg.to_json());
    arc.save(path);
}

models::Generator load_generator(const fs::path& path) {
    NamedArrayArchive arc = NamedArrayArchive::load(path);
    models::Generator gen =
        models::Generator::init(models::ModelConfig::from_json(arc.meta("model_config")), 0);
    nn::load_params(arc, gen.params());
    return gen;
}

models::Discriminator load_discriminator(const fs::path& path) {
    NamedArrayArchive arc = NamedArrayArchive::load(path);
    models::Discriminator disc = models::Discriminator::init(
        models::ModelConfig::from_json(arc.meta("model_config")), 0);
    nn::load_params(arc, disc.params());
    return disc;
}

data::ImageBatch load_source_dataset(const DatasetSpec& spec) {
    data::ImageBatch batch;
    if (spec.kind == "synthetic")
        batch = data::make_synthetic(spec.synthetic_classes, spec.synthetic_per_class,
                                     spec.synthetic_hw, spec.synthetic_channels,
                                     /*seed=*/1234);
    else if (spec.kind == "idx")
        batch = data::load_idx(spec.idx_images, spec.idx_labels);
    else if (spec.kind == "cifar10")
        batch = data::load_cifar10(spec.cifar_files);
    else
        batch = data::load_image_dir(spec.image_root, spec.image_dir_channels);
    if (spec.resize_to != 0 &&
        (batch.height() != spec.resize_to || batch.width() != spec.resize_to))
        batch = data::resize(batch, spec.resize_to, spec.resize_to);
    return batch;
}

metrics::FeatureEmbedder make_embedder(const ExperimentConfig& cfg,
                                       const data::ImageBatch& train,
                                       const data::ImageBatch& test,
                                       double* oracle_test_accuracy) {
    if (cfg.embedder == "pixel")
        return metrics::pixel_embedder(test.height(), test.width(), test.channels());
    metrics::OracleConfig ocfg = cfg.oracle;
    ocfg.seed = derive_seed(cfg.seed, "oracle");
    const data::ImageBatch balanced =
        data::random_oversample(train, derive_seed(cfg.seed, "oracle_balance"));
    // The classifier must outlive the returned closure; keep it on the heap
    // inside the std::function.
    auto clf = std::make_shared<metrics::OracleClassifier>(
        metrics::train_oracle_classifier(balanced, test, ocfg));
    if (oracle_test_accuracy) *oracle_test_accuracy = clf->test_accuracy;
    metrics::FeatureEmbedder e;
    e.kind = "classifier";
    e.embedding_dim = clf->cfg.trunk_dim();
    e.embed = [clf](const data::ImageBatch& b) { return clf->embedder().embed(b); };
    return e;
}

struct StageRunner {
    const fs::path& dir;
    const std::string& hash;
    RunManifest& manifest;

    template <class F>
    void run(Stage s, const std::vector<std::string>& artifacts, F&& body) {
        const std::string name = to_string(s);
        StageTiming timing{name, 0, false};
        if (stage_done(dir, name, hash)) {
            timing.skipped = true;
        } else {
            const auto t0 = std::chrono::steady_clock::now();
            try {
                body();
            } catch (const std::exception& e) {
                throw std::runtime_error("stage " + name + ": " + e.what());
            }
            timing.seconds =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
                    .count();
            mark_stage_done(dir, name, hash, artifacts);
        }
        for (const auto& a : artifacts) manifest.artifacts[name + ":" + a] = (dir / a).string();
        manifest.timings.push_back(timing);
    }
};

}  // namespace

RunManifest run_pipeline(const ExperimentConfig& config, Stage final_stage) {
    config.validate();
    const fs::path dir = config.resolved_output_dir();
    fs::create_directories(dir);
    const std::string hash = config.hash();
    config.save(dir / "config.json");

    RunManifest manifest;
    manifest.config_hash = hash;
    manifest.command = "capgan report --config " + (dir / "config.json").string();
    manifest.version = kVersion;
    manifest.artifacts["config"] = (dir / "config.json").string();
    StageRunner runner{dir, hash, manifest};

    runner.run(Stage::Prepare, {"train_data.arc", "test_data.arc"}, [&] {
        data::ImageBatch full = load_source_dataset(config.dataset);
        auto [train, test] = data::stratified_split(full, config.dataset.test_fraction,
                                                    derive_seed(config.seed, "split"));
        if (config.imbalance.rate > 1.0) {
            data::ImbalancePlan plan = config.imbalance;
            plan.seed = derive_seed(config.seed, "imbalance");
            train = data::impose_imbalance(train, plan);
        }
        data::save_batch(train, dir / "train_data.arc", config.name + "_train");
        data::save_batch(test, dir / "test_data.arc", config.name + "_test");
    });
    if (final_stage == Stage::Prepare) {
        manifest.save(dir / "manifest.json");
        return manifest;
    }

    // Architecture is resolved from the prepared data once and reused below.
    auto resolved_model = [&](const data::ImageBatch& b) {
        models::ModelConfig m = config.model;
        m.image_hw = b.height();
        m.channels = b.channels();
        m.num_classes = b.num_classes;
        m.validate();
        return m;
    };

    if (!config.no_pretrain) {
        runner.run(Stage::Pretrain, {"cvae.arc", "pretrain_history.csv"}, [&] {
            const data::ImageBatch train = data::load_batch(dir / "train_data.arc");
            pretrain::PretrainConfig pcfg = config.pretrain;
            pcfg.seed = derive_seed(config.seed, "pretrain");
            pretrain::PretrainResult res =
                pretrain::pretrain(train, resolved_model(train), pcfg);
            res.archive.save(dir / "cvae.arc");
            pretrain::write_history_csv(dir / "pretrain_history.csv", res.history);
        });
    }
    if (final_stage == Stage::Pretrain) {
        manifest.save(dir / "manifest.json");
        return manifest;
    }

    runner.run(Stage::Transfer, {"generator_init.arc", "discriminator_init.arc"}, [&] {
        const data::ImageBatch train = data::load_batch(dir / "train_data.arc");
        const models::ModelConfig mcfg = resolved_model(train);
        models::Generator gen = models::Generator::init(mcfg, 0);
        models::Discriminator disc = models::Discriminator::init(mcfg, 0);
        if (config.no_pretrain) {
            const std::uint64_t s = derive_seed(config.seed, "gan_init");
            gen = models::Generator::init(mcfg, s);
            disc = models::Discriminator::init(mcfg, derive_seed(s, "disc"));
        } else {
            NamedArrayArchive cvae = NamedArrayArchive::load(dir / "cvae.arc");
            std::tie(gen, disc) =
                models::transfer_weights(cvae, derive_seed(config.seed, "transfer"));
        }
        save_model_params(dir / "generator_init.arc", gen.params(), gen.cfg, "generator");
        save_model_params(dir / "discriminator_init.arc", disc.params(), disc.cfg,
                          "discriminator");
    });
    if (final_stage == Stage::Transfer) {
        manifest.save(dir / "manifest.json");
        return manifest;
    }

    runner.run(Stage::Train,
               {"generator.arc", "discriminator.arc", "gan_history.csv"}, [&] {
        const data::ImageBatch train = data::load_batch(dir / "train_data.arc");
        models::Generator gen = load_generator(dir / "generator_init.arc");
        models::Discriminator disc = load_discriminator(dir / "discriminator_init.arc");
        gan::GanConfig gcfg = config.gan;
        gcfg.seed = derive_seed(config.seed, "gan");
        gan::TrainingHistory history = gan::train(gen, disc, train, gcfg);
        save_model_params(dir / "generator.arc", gen.params(), gen.cfg, "generator");
        save_model_params(dir / "discriminator.arc", disc.params(), disc.cfg,
                          "discriminator");
        gan::write_history_csv(dir / "gan_history.csv", history);
    });
    if (final_stage == Stage::Train) {
        manifest.save(dir / "manifest.json");
        return manifest;
    }

    runner.run(Stage::Generate, {"samples.arc", "samples.png"}, [&] {
        models::Generator gen = load_generator(dir / "generator.arc");
        const int k = gen.cfg.num_classes;
        const std::size_t cols = std::min<std::size_t>(10, config.samples_per_class);
        data::ImageBatch all;
        all.num_classes = k;
        all.pixels = Tensor({std::size_t(k) * config.samples_per_class, gen.cfg.image_hw,
                             gen.cfg.image_hw, gen.cfg.channels});
        const std::size_t px = all.pixels.numel() / all.pixels.dim(0);
        for (int c = 0; c < k; ++c) {
            data::ImageBatch s =
                gan::sample(gen, c, config.samples_per_class,
                            derive_seed(config.seed, "generate_class" + std::to_string(c)));
            std::copy_n(s.pixels.data(), s.pixels.numel(),
                        all.pixels.data() + std::size_t(c) * config.samples_per_class * px);
            all.labels.insert(all.labels.end(), s.labels.begin(), s.labels.end());
        }
        data::save_batch(all, dir / "samples.arc", config.name + "_samples");

        data::ImageBatch grid;
        grid.num_classes = k;
        grid.pixels = Tensor({std::size_t(k) * cols, gen.cfg.image_hw, gen.cfg.image_hw,
                              gen.cfg.channels});
        for (int c = 0; c < k; ++c)
            for (std::size_t i = 0; i < cols; ++i) {
                std::copy_n(
                    all.pixels.data() + (std::size_t(c) * config.samples_per_class + i) * px,
                    px, grid.pixels.data() + (std::size_t(c) * cols + i) * px);
                grid.labels.push_back(c);
            }
        data::render_grid(grid, std::size_t(k), cols, dir / "samples.png");
    });
    if (final_stage == Stage::Generate) {
        manifest.save(dir / "manifest.json");
        return manifest;
    }

    runner.run(Stage::Evaluate, {"report.csv", "report.json"}, [&] {
        const data::ImageBatch train = data::load_batch(dir / "train_data.arc");
        const data::ImageBatch test = data::load_batch(dir / "test_data.arc");
        models::Generator gen = load_generator(dir / "generator.arc");
        double oracle_acc = 0;
        metrics::FeatureEmbedder emb = make_embedder(config, train, test, &oracle_acc);
        metrics::EvalOptions opts;
        opts.samples_per_class = config.samples_per_class;
        opts.ssim_pairs = config.ssim_pairs;
        opts.seed = derive_seed(config.seed, "evaluate");
        opts.majority_class = config.imbalance.majority_class;
        metrics::MetricReport report = metrics::evaluate(gen, test, emb, opts);
        report.write_csv(dir / "report.csv");
        report.write_json(dir / "report.json");
        if (config.embedder == "classifier")
            std::cerr << "oracle embedder test accuracy: " << oracle_acc << "\n";
    });
    if (final_stage == Stage::Evaluate) {
        manifest.save(dir / "manifest.json");
        return manifest;
    }

    runner.run(Stage::Report, {"summary.txt"}, [&] {
        const metrics::MetricReport report =
            metrics::MetricReport::read_json(dir / "report.json");
        std::ofstream out(dir / "summary.txt");
        out << "experiment: " << config.name << "\n"
            << "config hash: " << hash << "\n"
            << "seed: " << config.seed << "\n"
            << "imbalance rate: " << config.imbalance.rate << " (majority class "
            << config.imbalance.majority_class << ")\n"
            << "embedder: " << config.embedder << "\n\n"
            << "class  frechet  ssim\n";
        for (const auto& r : report.per_class)
            out << r.class_id << "  " << r.fid << "  " << r.ssim << "\n";
        out << "avg(Minority)  " << report.minority_avg_fid << "  "
            << report.minority_avg_ssim << "\n"
            << "Majority  " << report.majority_fid << "  " << report.majority_ssim
            << "\n";
    });

    manifest.save(dir / "manifest.json");
    return manifest;
}

// -------------------------------------------------------------- ablation ----

std::vector<AblationVariant> default_ablation_variants() {
    std::vector<AblationVariant> v;
    for (const char* s : {"ros", "two_phase", "ensemble", "imbalanced"}) {
        v.push_back({std::string(s) + "_full", s, false});
        v.push_back({std::string(s) + "_mse_only", s, true});
    }
    v.push_back({"no_pretrain", "none", false});
    return v;
}

json run_ablation(const ExperimentConfig& base, const std::vector<AblationVariant>& variants) {
    if (variants.empty()) throw std::invalid_argument("run_ablation: no variants");
    const fs::path out_dir = base.resolved_output_dir();
    fs::create_directories(out_dir);

    json rows = json::array();
    std::vector<std::vector<double>> fids_per_variant;
    for (const auto& variant : variants) {
        ExperimentConfig cfg = base;
        cfg.name = base.name + "_" + variant.name;
        cfg.output_dir = base.output_dir / "ablation" / variant.name;
        if (variant.strategy == "none") {
            cfg.no_pretrain = true;
        } else {
            cfg.no_pretrain = false;
            cfg.pretrain.strategy = pretrain::strategy_from_string(variant.strategy);
        }
        if (variant.mse_only) {
            cfg.pretrain.w_kl = 0.0;
            cfg.pretrain.w_bce = 0.0;
            cfg.pretrain.w_mse = 1.0;
        }
        run_pipeline(cfg, Stage::Evaluate);
        const metrics::MetricReport report = metrics::MetricReport::read_json(
            cfg.resolved_output_dir() / "report.json");

        std::vector<double> fids;
        for (const auto& r : report.per_class) {
            rows.push_back({{"variant", variant.name},
                            {"class", r.class_id},
                            {"fid", r.fid},
                            {"ssim", r.ssim}});
            fids.push_back(r.fid);
        }
        rows.push_back({{"variant", variant.name},
                        {"class", "avg(Minority)"},
                        {"fid", report.minority_avg_fid},
                        {"ssim", report.minority_avg_ssim}});
        rows.push_back({{"variant", variant.name},
                        {"class", "Majority"},
                        {"fid", report.majority_fid},
                        {"ssim", report.majority_ssim}});
        fids_per_variant.push_back(std::move(fids));
    }

    // Significance of each variant's per-class Frechet distances against the
    // first (reference) variant.
    json tests = json::array();
    for (std::size_t i = 1; i < variants.size(); ++i) {
        if (fids_per_variant[i].size() < 2) continue;
        const metrics::TTestResult r =
            metrics::paired_t_test(fids_per_variant[i], fids_per_variant[0]);
        tests.push_back({{"variant", variants[i].name},
                         {"reference", variants[0].name},
                         {"t", r.t},
                         {"p", r.p},
                         {"df", r.df},
                         {"degenerate", r.degenerate}});
    }

    json report{{"rows", rows}, {"t_tests", tests}, {"reference", variants[0].name}};
    {
        std::ofstream out(out_dir / "ablation_report.json");
        out << report.dump(2) << "\n";
    }
    {
        std::ofstream out(out_dir / "ablation_report.csv");
        out << "variant,row,fid,ssim\n";
        for (const auto& r : rows) {
            out << r.at("variant").get<std::string>() << ',';
            if (r.at("class").is_number())
                out << "class_" << r.at("class").get<int>();
            else
                out << r.at("class").get<std::string>();
            out << ',' << r.at("fid").get<double>() << ',' << r.at("ssim").get<double>()
                << "\n";
        }
    }
    return report;
}

}  // namespace capgan::harness
