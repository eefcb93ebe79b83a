#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "capgan/autodiff.hpp"
#include "capgan/data.hpp"
#include "capgan/models.hpp"

namespace capgan::pretrain {

struct CvaeLossBreakdown {
    double kl = 0, bce = 0, mse = 0, total = 0;
};

struct CvaeLossVars {
    ad::Var kl, bce, mse, total;
    CvaeLossBreakdown values() const {
        return {kl.value()[0], bce.value()[0], mse.value()[0], total.value()[0]};
    }
};

enum class Strategy { Ros, TwoPhase, Ensemble, Imbalanced };

Strategy strategy_from_string(const std::string& s);
std::string to_string(Strategy s);

struct PretrainConfig {
    Strategy strategy = Strategy::Ros;
    int epochs = 30;
    double learning_rate = 0.0005;
    double adam_beta1 = 0.5;
    std::size_t batch_size = 64;
    std::uint64_t seed = 0;
    int finetune_epochs = 10;  // two-phase only
    int num_members = 2;       // ensemble only
    // Optional per-term weights; the composite objective itself is unweighted.
    double w_kl = 1.0, w_bce = 1.0, w_mse = 1.0;
    bool redraw_ros_each_epoch = true;

    void validate() const;
};

// KL( N(mu, diag(exp(logvar))) || N(0, I) ), summed over latent dims and
// averaged over the batch.
ad::Var kl_divergence(const ad::Var& mu, const ad::Var& logvar);

// Pixel-summed binary cross-entropy, mean over batch; x_hat clamped to
// [eps, 1-eps] with eps = 1e-7.
ad::Var reconstruction_bce(const ad::Var& x, const ad::Var& x_hat);

// Mean squared pixel error, averaged over pixels and batch.
ad::Var reconstruction_mse(const ad::Var& x, const ad::Var& x_hat);

CvaeLossVars cvae_loss(const ad::Var& x, const ad::Var& x_hat, const ad::Var& mu,
                       const ad::Var& logvar, double w_kl = 1.0, double w_bce = 1.0,
                       double w_mse = 1.0);

struct LossRecord {
    int epoch = 0;
    std::string tag;  // strategy / phase / member label
    CvaeLossBreakdown loss;
};

struct PretrainResult {
    NamedArrayArchive archive;
    std::vector<LossRecord> history;
};

PretrainResult pretrain_ros(const data::ImageBatch& batch, const models::ModelConfig& arch,
                            const PretrainConfig& config);
PretrainResult pretrain_two_phase(const data::ImageBatch& batch,
                                  const models::ModelConfig& arch,
                                  const PretrainConfig& config);
PretrainResult pretrain_ensemble(const data::ImageBatch& batch,
                                 const models::ModelConfig& arch,
                                 const PretrainConfig& config);
// Ablation baseline: train directly on the imbalanced batch.
PretrainResult pretrain_imbalanced(const data::ImageBatch& batch,
                                   const models::ModelConfig& arch,
                                   const PretrainConfig& config);

PretrainResult pretrain(const data::ImageBatch& batch, const models::ModelConfig& arch,
                        const PretrainConfig& config);

// Inverse-loss ensemble weights, normalized to sum 1.
std::vector<double> ensemble_weights(const std::vector<double>& final_losses);

// Mean per-sample CVAE reconstruction (bce+mse) of `batch` under the archived
// model; used by the directional pre-training comparison.
double reconstruction_loss_on(const NamedArrayArchive& cvae_archive,
                              const data::ImageBatch& batch, std::uint64_t seed);

void write_history_csv(const std::filesystem::path& path,
                       const std::vector<LossRecord>& history);

}  // namespace capgan::pretrain
