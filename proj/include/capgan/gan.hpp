#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "capgan/data.hpp"
#include "capgan/models.hpp"

namespace capgan::gan {

struct GanConfig {
    double lr_generator = 0.0002;
    double lr_discriminator = 0.0002;
    double gp_weight = 10.0;  // lambda
    int train_ratio = 5;      // discriminator steps per generator step
    std::size_t batch_size = 64;
    int epochs = 0;
    std::uint64_t seed = 0;
    double adam_beta1 = 0.5;
    // Interpolate real vs generated samples for the penalty; the alternative
    // perturbs real samples with noise instead.
    bool interpolate_real_fake = true;
    // Train on the original imbalanced data (default) or on an oversampled
    // balanced view of it.
    bool train_on_balanced = false;
    double logit_clamp = 20.0;

    void validate() const;
};

struct DiscLossBreakdown {
    double real_term = 0, fake_term = 0, wrong_label_term = 0, gp_term = 0, total = 0;
};

struct DiscLossVars {
    ad::Var real_term, fake_term, wrong_label_term, gp_term, total;
    DiscLossBreakdown values() const {
        return {real_term.value()[0], fake_term.value()[0], wrong_label_term.value()[0],
                gp_term.value()[0], total.value()[0]};
    }
};

struct StepRecord {
    std::int64_t step = 0;
    char kind = 'D';  // 'D' or 'G'
    DiscLossBreakdown d_loss;
    double g_loss = 0;
    double interp_grad_norm = 0;  // mean gradient norm on interpolates
};

using TrainingHistory = std::vector<StepRecord>;

// Any conditional critic x,y -> per-sample logits.
using Critic = std::function<ad::Var(const ad::Var& x, const std::vector<int>& y)>;

// BCE(sigmoid(logit), target) with logits clamped to +-clamp.
ad::Var bce_with_logits(const ad::Var& logits, double target, double clamp = 20.0);

// lambda * mean((||grad_xhat D(xhat,y)||_2 - 1)^2) over per-sample uniform
// interpolates xhat = a*x_real + (1-a)*x_fake. Differentiable with respect to
// the critic's parameters. Optionally reports the mean interpolate gradient
// norm through `out_grad_norm`.
ad::Var gradient_penalty(const Critic& critic, const Tensor& x_real, const Tensor& x_fake,
                         const std::vector<int>& y, double lambda, Rng& rng,
                         double* out_grad_norm = nullptr);

// Three-part discriminator loss + gradient penalty. Fake labels are drawn
// uniformly; wrong labels uniformly among the other classes per sample.
DiscLossVars discriminator_loss(const models::Discriminator& disc,
                                const models::Generator& gen, const Tensor& x_real,
                                const std::vector<int>& y_real, const Tensor& noise,
                                const GanConfig& config, Rng& rng,
                                double* out_grad_norm = nullptr);

ad::Var generator_loss(const models::Discriminator& disc, const models::Generator& gen,
                       const Tensor& noise, const std::vector<int>& y,
                       double logit_clamp = 20.0);

// Alternating adversarial loop; mutates gen/disc in place.
TrainingHistory train(models::Generator& gen, models::Discriminator& disc,
                      const data::ImageBatch& batch, const GanConfig& config);

data::ImageBatch sample(const models::Generator& gen, int class_id, std::size_t n,
                        std::uint64_t seed);

struct Checkpoint {
    models::Generator gen;
    models::Discriminator disc;
    NamedArrayArchive raw;  // includes optimizer moments + step counter
};

void save_checkpoint(const std::filesystem::path& path, const models::Generator& gen,
                     const models::Discriminator& disc, const nn::Adam& opt_g,
                     const nn::Adam& opt_d, std::int64_t step,
                     const std::string& config_hash);
Checkpoint load_checkpoint(const std::filesystem::path& path);

void write_history_csv(const std::filesystem::path& path, const TrainingHistory& history);

}  // namespace capgan::gan
