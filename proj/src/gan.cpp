#include "capgan/gan.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace capgan::gan {

using ad::Var;

void GanConfig::validate() const {
    if (train_ratio < 1) throw std::invalid_argument("GanConfig: train_ratio >= 1");
    if (gp_weight < 0) throw std::invalid_argument("GanConfig: gp_weight >= 0");
    if (batch_size < 1) throw std::invalid_argument("GanConfig: batch_size >= 1");
    if (epochs < 0) throw std::invalid_argument("GanConfig: epochs >= 0");
}

Var bce_with_logits(const Var& logits, double target, double clamp) {
    Var l = ad::clamp(logits, -clamp, clamp);
    // BCE(sigmoid(l), t) = softplus(l) - t*l
    return ad::mean_all(ad::sub(ad::softplus(l), ad::scale(l, target)));
}

Var gradient_penalty(const Critic& critic, const Tensor& x_real, const Tensor& x_fake,
                     const std::vector<int>& y, double lambda, Rng& rng,
                     double* out_grad_norm) {
    if (!x_real.same_shape(x_fake))
        throw std::invalid_argument("gradient_penalty: real/fake shape mismatch");
    if (lambda < 0) throw std::invalid_argument("gradient_penalty: lambda >= 0");
    const std::size_t n = x_real.dim(0);
    const std::size_t px = x_real.numel() / n;

    Tensor interp(x_real.shape());
    for (std::size_t i = 0; i < n; ++i) {
        const double a = rng.uniform();
        for (std::size_t j = 0; j < px; ++j)
            interp[i * px + j] = a * x_real[i * px + j] + (1.0 - a) * x_fake[i * px + j];
    }
    Var x_hat = ad::leaf(std::move(interp));
    Var logits = critic(x_hat, y);
    // Each logit depends only on its own sample, so the sum's input gradient
    // carries the per-sample gradients.
    Var g = ad::grad(ad::sum_all(logits), {x_hat})[0];
    if (!g.value().all_finite())
        throw std::domain_error("gradient_penalty: non-finite interpolate gradient");

    Var flat = ad::reshape(g, {n, px});
    // Tiny floor keeps sqrt differentiable at an exactly-zero gradient.
    Var norm = ad::sqrt(ad::add_scalar(ad::rowsum(ad::square(flat)), 1e-24));
    if (out_grad_norm) {
        double acc = 0;
        for (std::size_t i = 0; i < n; ++i) acc += norm.value()[i];
        *out_grad_norm = acc / double(n);
    }
    return ad::scale(ad::mean_all(ad::square(ad::add_scalar(norm, -1.0))), lambda);
}

namespace {
std::vector<int> draw_uniform_labels(std::size_t n, int num_classes, Rng& rng) {
    std::vector<int> y(n);
    for (auto& v : y) v = int(rng.index(std::size_t(num_classes)));
    return y;
}

std::vector<int> draw_wrong_labels(const std::vector<int>& y_real, int num_classes,
                                   Rng& rng) {
    std::vector<int> y(y_real.size());
    for (std::size_t i = 0; i < y.size(); ++i) {
        int w = int(rng.index(std::size_t(num_classes - 1)));
        if (w >= y_real[i]) ++w;
        y[i] = w;
    }
    return y;
}
}  // namespace

DiscLossVars discriminator_loss(const models::Discriminator& disc,
                                const models::Generator& gen, const Tensor& x_real,
                                const std::vector<int>& y_real, const Tensor& noise,
                                const GanConfig& config, Rng& rng,
                                double* out_grad_norm) {
    const int num_classes = disc.cfg.num_classes;
    if (num_classes < 2)
        throw std::invalid_argument(
            "discriminator_loss: wrong-label term undefined with a single class");
    const std::size_t n = x_real.dim(0);

    const std::vector<int> y_fake = draw_uniform_labels(n, num_classes, rng);
    const std::vector<int> y_wrong = draw_wrong_labels(y_real, num_classes, rng);
    // The generator is frozen during a discriminator step.
    const Tensor x_fake = gen.generate(ad::constant(noise), y_fake).value();

    Var xr = ad::constant(x_real);
    DiscLossVars out;
    out.real_term = bce_with_logits(disc.discriminate(xr, y_real), 1.0, config.logit_clamp);
    out.fake_term = bce_with_logits(disc.discriminate(ad::constant(x_fake), y_fake), 0.0,
                                    config.logit_clamp);
    out.wrong_label_term =
        bce_with_logits(disc.discriminate(xr, y_wrong), 0.0, config.logit_clamp);

    const Tensor& x_penalty_target =
        config.interpolate_real_fake ? x_fake : [&] {
            // DRAGAN-style alternative: perturb real samples with noise.
            Tensor t = x_real;
            for (std::size_t i = 0; i < t.numel(); ++i)
                t[i] = std::clamp(t[i] + rng.normal(0.0, 0.1), 0.0, 1.0);
            return t;
        }();
    Critic critic = [&disc](const Var& x, const std::vector<int>& y) {
        return disc.discriminate(x, y);
    };
    out.gp_term = gradient_penalty(critic, x_real, x_penalty_target, y_real,
                                   config.gp_weight, rng, out_grad_norm);

    out.total = ad::add(ad::add(out.real_term, out.fake_term),
                        ad::add(out.wrong_label_term, out.gp_term));
    return out;
}

Var generator_loss(const models::Discriminator& disc, const models::Generator& gen,
                   const Tensor& noise, const std::vector<int>& y, double logit_clamp) {
    Var fake = gen.generate(ad::constant(noise), y);
    return bce_with_logits(disc.discriminate(fake, y), 1.0, logit_clamp);
}

TrainingHistory train(models::Generator& gen, models::Discriminator& disc,
                      const data::ImageBatch& batch, const GanConfig& config) {
    config.validate();
    data::ImageBatch balanced;
    const data::ImageBatch* view_ptr = &batch;
    if (config.train_on_balanced) {
        balanced = data::random_oversample(batch, derive_seed(config.seed, "gan_balance"));
        view_ptr = &balanced;
    }
    const data::ImageBatch& view = *view_ptr;

    nn::Adam opt_d(disc.params(), config.lr_discriminator, config.adam_beta1);
    nn::Adam opt_g(gen.params(), config.lr_generator, config.adam_beta1);
    Rng rng(derive_seed(config.seed, "gan_train"));

    std::vector<Var> d_vars, g_vars;
    for (const auto& p : disc.params()) d_vars.push_back(p.var);
    for (const auto& p : gen.params()) g_vars.push_back(p.var);

    const Tensor nchw = data::to_nchw(view.pixels);
    const std::size_t px = nchw.numel() / view.size();
    const std::size_t latent = gen.cfg.latent_dim;

    TrainingHistory history;
    std::int64_t step = 0;
    std::int64_t d_steps = 0;
    for (int e = 0; e < config.epochs; ++e) {
        std::vector<std::size_t> order(view.size());
        std::iota(order.begin(), order.end(), 0);
        std::shuffle(order.begin(), order.end(), rng.engine());
        for (std::size_t off = 0; off < view.size(); off += config.batch_size) {
            const std::size_t bs = std::min(config.batch_size, view.size() - off);
            Tensor xb({bs, gen.cfg.channels, gen.cfg.image_hw, gen.cfg.image_hw});
            std::vector<int> yb(bs);
            for (std::size_t i = 0; i < bs; ++i) {
                std::copy_n(nchw.data() + order[off + i] * px, px, xb.data() + i * px);
                yb[i] = view.labels[order[off + i]];
            }

            StepRecord rec;
            rec.step = ++step;
            rec.kind = 'D';
            Tensor noise = rng.normal_tensor({bs, latent});
            DiscLossVars dl = discriminator_loss(disc, gen, xb, yb, noise, config, rng,
                                                 &rec.interp_grad_norm);
            rec.d_loss = dl.values();
            if (!std::isfinite(rec.d_loss.total))
                throw std::runtime_error("gan::train: non-finite discriminator loss at step " +
                                         std::to_string(step));
            opt_d.step(ad::gradients(dl.total, d_vars));
            history.push_back(rec);
            ++d_steps;

            if (d_steps % config.train_ratio == 0) {
                StepRecord grec;
                grec.step = ++step;
                grec.kind = 'G';
                Tensor gnoise = rng.normal_tensor({bs, latent});
                const std::vector<int> gy =
                    draw_uniform_labels(bs, gen.cfg.num_classes, rng);
                Var gl = generator_loss(disc, gen, gnoise, gy, config.logit_clamp);
                grec.g_loss = gl.value()[0];
                if (!std::isfinite(grec.g_loss))
                    throw std::runtime_error("gan::train: non-finite generator loss at step " +
                                             std::to_string(step));
                opt_g.step(ad::gradients(gl, g_vars));
                history.push_back(grec);
            }
        }
    }
    return history;
}

data::ImageBatch sample(const models::Generator& gen, int class_id, std::size_t n,
                        std::uint64_t seed) {
    if (class_id < 0 || class_id >= gen.cfg.num_classes)
        throw std::invalid_argument("sample: invalid class id");
    if (n < 1) throw std::invalid_argument("sample: n >= 1");
    Rng rng(seed);
    data::ImageBatch out;
    out.num_classes = gen.cfg.num_classes;
    out.labels.assign(n, class_id);
    out.pixels = Tensor({n, gen.cfg.image_hw, gen.cfg.image_hw, gen.cfg.channels});
    const std::size_t chunk = 128;
    const std::size_t px = out.pixels.numel() / n;
    for (std::size_t off = 0; off < n; off += chunk) {
        const std::size_t bs = std::min(chunk, n - off);
        Tensor z = rng.normal_tensor({bs, gen.cfg.latent_dim});
        const std::vector<int> y(bs, class_id);
        Tensor imgs = data::to_nhwc(gen.generate(ad::constant(z), y).value());
        std::copy_n(imgs.data(), bs * px, out.pixels.data() + off * px);
    }
    return out;
}

void save_checkpoint(const std::filesystem::path& path, const models::Generator& gen,
                     const models::Discriminator& disc, const nn::Adam& opt_g,
                     const nn::Adam& opt_d, std::int64_t step,
                     const std::string& config_hash) {
    NamedArrayArchive arc;
    nn::save_params(arc, gen.params());
    nn::save_params(arc, disc.params());
    opt_g.save_state(arc, "opt_g");
    opt_d.save_state(arc, "opt_d");
    arc.set_meta("kind", "gan_checkpoint");
    arc.set_meta("version", 1);
    arc.set_meta("model_config", gen.cfg.to_json());
    arc.set_meta("step", step);
    arc.set_meta("config_hash", config_hash);
    arc.save(path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    NamedArrayArchive arc = NamedArrayArchive::load(path);
    if (!arc.has_meta("kind") || arc.meta("kind").get<std::string>() != "gan_checkpoint")
        throw std::runtime_error("load_checkpoint: not a GAN checkpoint: " + path.string());
    if (arc.meta("version").get<int>() != 1)
        throw std::runtime_error("load_checkpoint: unsupported checkpoint version in " +
                                 path.string());
    const models::ModelConfig cfg = models::ModelConfig::from_json(arc.meta("model_config"));
    Checkpoint ck{models::Generator::init(cfg, 0), models::Discriminator::init(cfg, 0),
                  arc};
    nn::load_params(arc, ck.gen.params());
    nn::load_params(arc, ck.disc.params());
    return ck;
}

void write_history_csv(const std::filesystem::path& path, const TrainingHistory& history) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << "step,kind,d_real,d_fake,d_wrong,d_gp,d_total,g_loss,interp_grad_norm\n";
    for (const auto& r : history) {
        out << r.step << ',' << r.kind << ',' << r.d_loss.real_term << ','
            << r.d_loss.fake_term << ',' << r.d_loss.wrong_label_term << ','
            << r.d_loss.gp_term << ',' << r.d_loss.total << ',' << r.g_loss << ','
            << r.interp_grad_norm << "\n";
    }
}

}  // namespace capgan::gan
