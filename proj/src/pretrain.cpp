#include "capgan/pretrain.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

namespace capgan::pretrain {

using ad::Var;

Strategy strategy_from_string(const std::string& s) {
    if (s == "ros") return Strategy::Ros;
    if (s == "two_phase") return Strategy::TwoPhase;
    if (s == "ensemble") return Strategy::Ensemble;
    if (s == "imbalanced") return Strategy::Imbalanced;
    throw std::invalid_argument("unknown pre-training strategy: " + s);
}

std::string to_string(Strategy s) {
    switch (s) {
        case Strategy::Ros: return "ros";
        case Strategy::TwoPhase: return "two_phase";
        case Strategy::Ensemble: return "ensemble";
        case Strategy::Imbalanced: return "imbalanced";
    }
    return "?";
}

void PretrainConfig::validate() const {
    if (epochs < 1) throw std::invalid_argument("PretrainConfig: epochs >= 1");
    if (batch_size < 1) throw std::invalid_argument("PretrainConfig: batch_size >= 1");
    if (learning_rate <= 0) throw std::invalid_argument("PretrainConfig: learning_rate > 0");
    if (strategy == Strategy::Ensemble && num_members < 2)
        throw std::invalid_argument("PretrainConfig: ensemble needs num_members >= 2");
    if (strategy == Strategy::TwoPhase && finetune_epochs < 0)
        throw std::invalid_argument("PretrainConfig: finetune_epochs >= 0");
}

Var kl_divergence(const Var& mu, const Var& logvar) {
    if (!mu.value().same_shape(logvar.value()))
        throw std::invalid_argument("kl_divergence: shape mismatch");
    if (!mu.value().all_finite() || !logvar.value().all_finite())
        throw std::domain_error("kl_divergence: non-finite input");
    const double n = double(mu.value().dim(0));
    // -0.5 * sum(1 + logvar - mu^2 - exp(logvar)), mean over batch.
    Var inner = ad::sub(ad::sub(ad::add_scalar(logvar, 1.0), ad::square(mu)),
                        ad::exp(logvar));
    return ad::scale(ad::sum_all(inner), -0.5 / n);
}

Var reconstruction_bce(const Var& x, const Var& x_hat) {
    if (!x.value().same_shape(x_hat.value()))
        throw std::invalid_argument("reconstruction_bce: shape mismatch");
    constexpr double eps = 1e-7;
    const double n = double(x.value().dim(0));
    Var p = ad::clamp(x_hat, eps, 1.0 - eps);
    Var pos = ad::mul(x, ad::log(p));
    Var neg = ad::mul(ad::add_scalar(ad::neg(x), 1.0),
                      ad::log(ad::add_scalar(ad::neg(p), 1.0)));
    return ad::scale(ad::sum_all(ad::add(pos, neg)), -1.0 / n);
}

Var reconstruction_mse(const Var& x, const Var& x_hat) {
    if (!x.value().same_shape(x_hat.value()))
        throw std::invalid_argument("reconstruction_mse: shape mismatch");
    return ad::mean_all(ad::square(ad::sub(x, x_hat)));
}

CvaeLossVars cvae_loss(const Var& x, const Var& x_hat, const Var& mu, const Var& logvar,
                       double w_kl, double w_bce, double w_mse) {
    CvaeLossVars out;
    out.kl = kl_divergence(mu, logvar);
    out.bce = reconstruction_bce(x, x_hat);
    out.mse = reconstruction_mse(x, x_hat);
    out.total = ad::add(ad::add(ad::scale(out.kl, w_kl), ad::scale(out.bce, w_bce)),
                        ad::scale(out.mse, w_mse));
    return out;
}

namespace {

// One pass over `batch` in seeded minibatch order; returns the epoch-mean
// loss breakdown (weighted by minibatch size).
CvaeLossBreakdown run_epoch(models::Cvae& model, nn::Adam& opt,
                            const data::ImageBatch& batch, const PretrainConfig& cfg,
                            Rng& rng, int epoch, const std::string& tag) {
    const std::size_t n = batch.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng.engine());

    const Tensor nchw = data::to_nchw(batch.pixels);
    const std::size_t px = model.cfg.channels * model.cfg.image_hw * model.cfg.image_hw;

    CvaeLossBreakdown mean;
    const auto params = model.params();
    std::vector<Var> param_vars;
    for (const auto& p : params) param_vars.push_back(p.var);

    std::size_t step = 0;
    for (std::size_t off = 0; off < n; off += cfg.batch_size, ++step) {
        const std::size_t bs = std::min(cfg.batch_size, n - off);
        Tensor xb({bs, model.cfg.channels, model.cfg.image_hw, model.cfg.image_hw});
        std::vector<int> yb(bs);
        for (std::size_t i = 0; i < bs; ++i) {
            std::copy_n(nchw.data() + order[off + i] * px, px, xb.data() + i * px);
            yb[i] = batch.labels[order[off + i]];
        }
        Var x = ad::constant(std::move(xb));
        Var noise = ad::constant(rng.normal_tensor({bs, model.cfg.latent_dim}));

        auto [mu, logvar] = model.encoder.encode(x);
        Var z = models::reparameterize(mu, logvar, noise);
        Var o = models::embed_and_combine(model.embedder, z, yb, model.cfg.num_classes);
        Var x_hat = model.decoder.decode(o);
        CvaeLossVars loss = cvae_loss(x, x_hat, mu, logvar, cfg.w_kl, cfg.w_bce, cfg.w_mse);

        const CvaeLossBreakdown v = loss.values();
        if (!std::isfinite(v.total))
            throw std::runtime_error("pretrain: non-finite loss at epoch " +
                                     std::to_string(epoch) + " step " +
                                     std::to_string(step) + " (" + tag + ")");
        mean.kl += v.kl * double(bs);
        mean.bce += v.bce * double(bs);
        mean.mse += v.mse * double(bs);
        mean.total += v.total * double(bs);

        opt.step(ad::gradients(loss.total, param_vars));
    }
    mean.kl /= double(n);
    mean.bce /= double(n);
    mean.mse /= double(n);
    mean.total /= double(n);
    return mean;
}

models::ModelConfig resolve_arch(const data::ImageBatch& batch,
                                 const models::ModelConfig& arch) {
    models::ModelConfig cfg = arch;
    cfg.image_hw = batch.height();
    cfg.channels = batch.channels();
    cfg.num_classes = batch.num_classes;
    cfg.validate();
    if (batch.height() != batch.width())
        throw std::invalid_argument("pretrain: images must be square");
    return cfg;
}

data::ImageBatch balanced_downsample(const data::ImageBatch& batch, std::uint64_t seed) {
    const auto counts = data::class_histogram(batch);
    const std::size_t min_count = *std::min_element(counts.begin(), counts.end());
    const std::size_t majority = std::size_t(
        std::max_element(counts.begin(), counts.end()) - counts.begin());
    // Reuse impose_imbalance with rate = majority/min, which keeps the
    // majority whole; then subsample it too.
    Rng rng(seed);
    std::vector<std::vector<std::size_t>> by_class(batch.num_classes);
    for (std::size_t i = 0; i < batch.size(); ++i)
        by_class[batch.labels[i]].push_back(i);
    std::vector<std::size_t> keep;
    for (auto& idx : by_class) {
        std::shuffle(idx.begin(), idx.end(), rng.engine());
        idx.resize(min_count);
        keep.insert(keep.end(), idx.begin(), idx.end());
    }
    (void)majority;
    std::shuffle(keep.begin(), keep.end(), rng.engine());
    const std::size_t H = batch.height(), W = batch.width(), C = batch.channels();
    const std::size_t px = H * W * C;
    data::ImageBatch out;
    out.num_classes = batch.num_classes;
    out.pixels = Tensor({keep.size(), H, W, C});
    for (std::size_t i = 0; i < keep.size(); ++i) {
        std::copy_n(batch.pixels.data() + keep[i] * px, px, out.pixels.data() + i * px);
        out.labels.push_back(batch.labels[keep[i]]);
    }
    return out;
}

}  // namespace

PretrainResult pretrain_ros(const data::ImageBatch& batch, const models::ModelConfig& arch,
                            const PretrainConfig& config) {
    config.validate();
    const models::ModelConfig cfg = resolve_arch(batch, arch);
    models::Cvae model = models::Cvae::init(cfg, derive_seed(config.seed, "cvae_init"));
    nn::Adam opt(model.params(), config.learning_rate, config.adam_beta1);
    Rng rng(derive_seed(config.seed, "cvae_train"));

    PretrainResult result;
    data::ImageBatch ros = data::random_oversample(batch, derive_seed(config.seed, "ros0"));
    for (int e = 1; e <= config.epochs; ++e) {
        if (config.redraw_ros_each_epoch && e > 1)
            ros = data::random_oversample(
                batch, derive_seed(config.seed, "ros" + std::to_string(e - 1)));
        result.history.push_back({e, "ros", run_epoch(model, opt, ros, config, rng, e, "ros")});
    }
    result.archive = model.to_archive(config.seed);
    return result;
}

PretrainResult pretrain_two_phase(const data::ImageBatch& batch,
                                  const models::ModelConfig& arch,
                                  const PretrainConfig& config) {
    config.validate();
    const models::ModelConfig cfg = resolve_arch(batch, arch);
    models::Cvae model = models::Cvae::init(cfg, derive_seed(config.seed, "cvae_init"));
    nn::Adam opt(model.params(), config.learning_rate, config.adam_beta1);
    Rng rng(derive_seed(config.seed, "cvae_train"));

    PretrainResult result;
    const data::ImageBatch balanced =
        balanced_downsample(batch, derive_seed(config.seed, "two_phase_balance"));
    for (int e = 1; e <= config.epochs; ++e)
        result.history.push_back(
            {e, "phase1", run_epoch(model, opt, balanced, config, rng, e, "phase1")});
    for (int e = 1; e <= config.finetune_epochs; ++e)
        result.history.push_back(
            {config.epochs + e, "phase2",
             run_epoch(model, opt, batch, config, rng, config.epochs + e, "phase2")});
    result.archive = model.to_archive(config.seed);
    return result;
}

std::vector<double> ensemble_weights(const std::vector<double>& final_losses) {
    std::vector<double> w(final_losses.size());
    double sum = 0;
    for (std::size_t i = 0; i < w.size(); ++i) {
        if (final_losses[i] <= 0)
            throw std::invalid_argument("ensemble_weights: losses must be positive");
        w[i] = 1.0 / final_losses[i];
        sum += w[i];
    }
    for (double& x : w) x /= sum;
    return w;
}

PretrainResult pretrain_ensemble(const data::ImageBatch& batch,
                                 const models::ModelConfig& arch,
                                 const PretrainConfig& config) {
    config.validate();
    if (config.num_members < 2)
        throw std::invalid_argument("pretrain_ensemble: num_members >= 2");
    const models::ModelConfig cfg = resolve_arch(batch, arch);

    const auto counts = data::class_histogram(batch);
    const int majority = int(std::max_element(counts.begin(), counts.end()) -
                             counts.begin());
    std::vector<std::size_t> majority_idx, minority_idx;
    for (std::size_t i = 0; i < batch.size(); ++i)
        (batch.labels[i] == majority ? majority_idx : minority_idx).push_back(i);
    if (majority_idx.size() < std::size_t(config.num_members))
        throw std::invalid_argument(
            "pretrain_ensemble: majority class too small to split across members");
    Rng split_rng(derive_seed(config.seed, "ensemble_split"));
    std::shuffle(majority_idx.begin(), majority_idx.end(), split_rng.engine());

    const std::size_t H = batch.height(), W = batch.width(), C = batch.channels();
    const std::size_t px = H * W * C;
    auto subset = [&](const std::vector<std::size_t>& idx) {
        data::ImageBatch out;
        out.num_classes = batch.num_classes;
        out.pixels = Tensor({idx.size(), H, W, C});
        for (std::size_t i = 0; i < idx.size(); ++i) {
            std::copy_n(batch.pixels.data() + idx[i] * px, px, out.pixels.data() + i * px);
            out.labels.push_back(batch.labels[idx[i]]);
        }
        return out;
    };

    // Members share one initialization so that weight averaging is meaningful.
    const std::uint64_t init_seed = derive_seed(config.seed, "cvae_init");
    PretrainResult result;
    std::vector<NamedArrayArchive> member_archives;
    std::vector<double> final_losses;
    for (int m = 0; m < config.num_members; ++m) {
        std::vector<std::size_t> idx = minority_idx;
        for (std::size_t i = std::size_t(m); i < majority_idx.size();
             i += std::size_t(config.num_members))
            idx.push_back(majority_idx[i]);
        data::ImageBatch member_data = subset(idx);

        models::Cvae model = models::Cvae::init(cfg, init_seed);
        nn::Adam opt(model.params(), config.learning_rate, config.adam_beta1);
        Rng rng(derive_seed(config.seed, "member" + std::to_string(m)));
        const std::string tag = "member" + std::to_string(m);
        CvaeLossBreakdown last;
        try {
            for (int e = 1; e <= config.epochs; ++e) {
                last = run_epoch(model, opt, member_data, config, rng, e, tag);
                result.history.push_back({e, tag, last});
            }
        } catch (const std::exception& ex) {
            throw std::runtime_error("pretrain_ensemble: member " + std::to_string(m) +
                                     " failed: " + ex.what());
        }
        member_archives.push_back(model.to_archive(config.seed));
        final_losses.push_back(last.total);
    }

    const std::vector<double> w = ensemble_weights(final_losses);
    NamedArrayArchive avg = member_archives[0];
    for (const auto& name : avg.names()) {
        Tensor acc = Tensor::zeros_like(avg.get(name));
        for (std::size_t m = 0; m < member_archives.size(); ++m) {
            const Tensor& t = member_archives[m].get(name);
            if (!t.same_shape(acc))
                throw std::runtime_error("pretrain_ensemble: member shape drift at " + name);
            for (std::size_t i = 0; i < acc.numel(); ++i) acc[i] += w[m] * t[i];
        }
        avg.put(name, std::move(acc));
    }
    result.archive = std::move(avg);
    return result;
}

PretrainResult pretrain_imbalanced(const data::ImageBatch& batch,
                                   const models::ModelConfig& arch,
                                   const PretrainConfig& config) {
    config.validate();
    const models::ModelConfig cfg = resolve_arch(batch, arch);
    models::Cvae model = models::Cvae::init(cfg, derive_seed(config.seed, "cvae_init"));
    nn::Adam opt(model.params(), config.learning_rate, config.adam_beta1);
    Rng rng(derive_seed(config.seed, "cvae_train"));

    PretrainResult result;
    for (int e = 1; e <= config.epochs; ++e)
        result.history.push_back(
            {e, "imbalanced", run_epoch(model, opt, batch, config, rng, e, "imbalanced")});
    result.archive = model.to_archive(config.seed);
    return result;
}

PretrainResult pretrain(const data::ImageBatch& batch, const models::ModelConfig& arch,
                        const PretrainConfig& config) {
    switch (config.strategy) {
        case Strategy::Ros: return pretrain_ros(batch, arch, config);
        case Strategy::TwoPhase: return pretrain_two_phase(batch, arch, config);
        case Strategy::Ensemble: return pretrain_ensemble(batch, arch, config);
        case Strategy::Imbalanced: return pretrain_imbalanced(batch, arch, config);
    }
    throw std::logic_error("pretrain: bad strategy");
}

double reconstruction_loss_on(const NamedArrayArchive& cvae_archive,
                              const data::ImageBatch& batch, std::uint64_t seed) {
    models::Cvae model = models::Cvae::from_archive(cvae_archive);
    Rng rng(seed);
    Var x = ad::constant(data::to_nchw(batch.pixels));
    Var noise = ad::constant(rng.normal_tensor({batch.size(), model.cfg.latent_dim}));
    auto [mu, logvar] = model.encoder.encode(x);
    Var z = models::reparameterize(mu, logvar, noise);
    Var o = models::embed_and_combine(model.embedder, z, batch.labels,
                                      model.cfg.num_classes);
    Var x_hat = model.decoder.decode(o);
    return reconstruction_bce(x, x_hat).value()[0] +
           reconstruction_mse(x, x_hat).value()[0];
}

void write_history_csv(const std::filesystem::path& path,
                       const std::vector<LossRecord>& history) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << "epoch,tag,kl,bce,mse,total\n";
    for (const auto& r : history)
        out << r.epoch << ',' << r.tag << ',' << r.loss.kl << ',' << r.loss.bce << ','
            << r.loss.mse << ',' << r.loss.total << "\n";
}

}  // namespace capgan::pretrain
