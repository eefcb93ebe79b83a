#include "capgan/models.hpp"

#include <stdexcept>
#include <string>

#include <nlohmann/json.hpp>

namespace capgan::models {

using ad::Var;

void ModelConfig::validate() const {
    if (depth < 1) throw std::invalid_argument("ModelConfig: depth must be >= 1");
    if (image_hw % (std::size_t(1) << depth) != 0 || bottleneck_hw() < 1)
        throw std::invalid_argument(
            "ModelConfig: image size must be divisible by 2^depth with a nonzero "
            "bottleneck");
    if (num_classes < 1) throw std::invalid_argument("ModelConfig: num_classes >= 1");
    if (latent_dim < 1 || base_filters < 1)
        throw std::invalid_argument("ModelConfig: latent_dim and base_filters >= 1");
}

nlohmann::json ModelConfig::to_json() const {
    return {{"image_hw", image_hw},       {"channels", channels},
            {"num_classes", num_classes}, {"latent_dim", latent_dim},
            {"base_filters", base_filters}, {"depth", depth},
            {"leaky_slope", leaky_slope}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
    ModelConfig c;
    c.image_hw = j.at("image_hw").get<std::size_t>();
    c.channels = j.at("channels").get<std::size_t>();
    c.num_classes = j.at("num_classes").get<int>();
    c.latent_dim = j.at("latent_dim").get<std::size_t>();
    c.base_filters = j.at("base_filters").get<std::size_t>();
    c.depth = j.at("depth").get<std::size_t>();
    c.leaky_slope = j.at("leaky_slope").get<double>();
    c.validate();
    return c;
}

ConvTrunk ConvTrunk::init(const ModelConfig& cfg, Rng& rng) {
    ConvTrunk t;
    t.leaky_slope = cfg.leaky_slope;
    std::size_t in_c = cfg.channels;
    std::size_t hw = cfg.image_hw;
    for (std::size_t i = 0; i < cfg.depth; ++i) {
        const std::size_t out_c = cfg.base_filters << i;
        kernels::ConvGeom g{in_c, out_c, 4, 2, 1, hw, hw};
        t.convs.push_back(nn::Conv2d::init(g, rng));
        in_c = out_c;
        hw /= 2;
    }
    return t;
}

Var ConvTrunk::forward(const Var& x) const {
    Var h = x;
    for (const auto& conv : convs) h = ad::leaky_relu(conv.forward(h), leaky_slope);
    const auto& s = h.value().shape();
    return ad::reshape(h, {s[0], s[1] * s[2] * s[3]});
}

nn::ParamList ConvTrunk::params(const std::string& prefix) const {
    nn::ParamList out;
    for (std::size_t i = 0; i < convs.size(); ++i) {
        auto p = convs[i].params(prefix + ".conv" + std::to_string(i));
        out.insert(out.end(), p.begin(), p.end());
    }
    return out;
}

Encoder Encoder::init(const ModelConfig& cfg, Rng& rng) {
    Encoder e;
    e.trunk = ConvTrunk::init(cfg, rng);
    e.mu_head = nn::Dense::init(cfg.trunk_dim(), cfg.latent_dim, rng);
    e.logvar_head = nn::Dense::init(cfg.trunk_dim(), cfg.latent_dim, rng);
    return e;
}

std::pair<Var, Var> Encoder::encode(const Var& x) const {
    // Both heads consume the same trunk output.
    Var h = trunk.forward(x);
    return {mu_head.forward(h), logvar_head.forward(h)};
}

nn::ParamList Encoder::params() const {
    nn::ParamList out = trunk.params("encoder.trunk");
    auto mu = mu_head.params("encoder.mu_head");
    auto lv = logvar_head.params("encoder.logvar_head");
    out.insert(out.end(), mu.begin(), mu.end());
    out.insert(out.end(), lv.begin(), lv.end());
    return out;
}

LabelEmbedder LabelEmbedder::init(const ModelConfig& cfg, Rng& rng) {
    LabelEmbedder e;
    e.table = nn::Embedding::init(std::size_t(cfg.num_classes), cfg.latent_dim, rng);
    return e;
}

Var LabelEmbedder::embed(const std::vector<int>& labels, int num_classes) const {
    for (int y : labels)
        if (y < 0 || y >= num_classes)
            throw std::out_of_range("label " + std::to_string(y) + " out of range");
    return table.forward(labels);
}

nn::ParamList LabelEmbedder::params() const { return table.params("embedder"); }

Decoder Decoder::init(const ModelConfig& cfg, Rng& rng) {
    Decoder d;
    d.cfg = cfg;
    d.expand = nn::Dense::init(cfg.latent_dim, cfg.trunk_dim(), rng);
    std::size_t hw = cfg.bottleneck_hw();
    std::size_t in_c = cfg.top_filters();
    for (std::size_t i = 0; i < cfg.depth; ++i) {
        const std::size_t out_c =
            (i + 1 == cfg.depth) ? cfg.channels : (cfg.base_filters << (cfg.depth - 2 - i));
        // Virtual forward conv runs output -> input of this layer.
        kernels::ConvGeom g{out_c, in_c, 4, 2, 1, hw * 2, hw * 2};
        d.tconvs.push_back(nn::ConvTranspose2d::init(g, rng));
        in_c = out_c;
        hw *= 2;
    }
    return d;
}

Var Decoder::decode(const Var& o) const {
    if (o.value().ndim() != 2 || o.value().dim(1) != cfg.latent_dim)
        throw std::invalid_argument("decode: latent input must be [N," +
                                    std::to_string(cfg.latent_dim) + "]");
    Var h = ad::leaky_relu(expand.forward(o), cfg.leaky_slope);
    h = ad::reshape(h, {o.value().dim(0), cfg.top_filters(), cfg.bottleneck_hw(),
                        cfg.bottleneck_hw()});
    for (std::size_t i = 0; i < tconvs.size(); ++i) {
        h = tconvs[i].forward(h);
        if (i + 1 < tconvs.size()) h = ad::leaky_relu(h, cfg.leaky_slope);
    }
    return ad::sigmoid(h);
}

nn::ParamList Decoder::params() const {
    nn::ParamList out = expand.params("decoder.expand");
    for (std::size_t i = 0; i < tconvs.size(); ++i) {
        auto p = tconvs[i].params("decoder.tconv" + std::to_string(i));
        out.insert(out.end(), p.begin(), p.end());
    }
    return out;
}

Cvae Cvae::init(const ModelConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    Rng rng(seed);
    Cvae m;
    m.cfg = cfg;
    m.encoder = Encoder::init(cfg, rng);
    m.embedder = LabelEmbedder::init(cfg, rng);
    m.decoder = Decoder::init(cfg, rng);
    return m;
}

nn::ParamList Cvae::params() const {
    nn::ParamList out = encoder.params();
    auto e = embedder.params();
    auto d = decoder.params();
    out.insert(out.end(), e.begin(), e.end());
    out.insert(out.end(), d.begin(), d.end());
    return out;
}

NamedArrayArchive Cvae::to_archive(std::uint64_t seed) const {
    NamedArrayArchive arc;
    nn::save_params(arc, params());
    arc.set_meta("model_config", cfg.to_json());
    arc.set_meta("seed", seed);
    arc.set_meta("kind", "cvae");
    return arc;
}

Cvae Cvae::from_archive(const NamedArrayArchive& arc) {
    Cvae m = Cvae::init(ModelConfig::from_json(arc.meta("model_config")), 0);
    nn::load_params(arc, m.params());
    return m;
}

Generator Generator::init(const ModelConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    Rng rng(seed);
    Generator g;
    g.cfg = cfg;
    g.embedder = LabelEmbedder::init(cfg, rng);
    g.decoder = Decoder::init(cfg, rng);
    return g;
}

Var Generator::generate(const Var& z, const std::vector<int>& labels) const {
    return decoder.decode(embed_and_combine(embedder, z, labels, cfg.num_classes));
}

nn::ParamList Generator::params() const {
    nn::ParamList out = embedder.params();
    auto d = decoder.params();
    out.insert(out.end(), d.begin(), d.end());
    return out;
}

Discriminator Discriminator::init(const ModelConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    Rng rng(seed);
    Discriminator d;
    d.cfg = cfg;
    d.trunk = ConvTrunk::init(cfg, rng);
    d.label_emb = nn::Embedding::init(std::size_t(cfg.num_classes), cfg.latent_dim, rng);
    d.head = nn::Dense::init(cfg.trunk_dim() + cfg.latent_dim, 1, rng);
    return d;
}

Var Discriminator::trunk_features(const Var& x) const { return trunk.forward(x); }

Var Discriminator::discriminate(const Var& x, const std::vector<int>& labels) const {
    for (int y : labels)
        if (y < 0 || y >= cfg.num_classes)
            throw std::out_of_range("discriminate: label out of range");
    Var feats = trunk.forward(x);
    Var lab = label_emb.forward(labels);
    Var logits = head.forward(ad::concat_cols(feats, lab));  // [N,1]
    return ad::reshape(logits, {x.value().dim(0)});
}

nn::ParamList Discriminator::params() const {
    nn::ParamList out = trunk.params("disc.trunk");
    auto l = label_emb.params("disc.label");
    auto h = head.params("disc.head");
    out.insert(out.end(), l.begin(), l.end());
    out.insert(out.end(), h.begin(), h.end());
    return out;
}

Var reparameterize(const Var& mu, const Var& logvar, const Var& noise) {
    return ad::add(mu, ad::mul(ad::exp(ad::scale(logvar, 0.5)), noise));
}

Tensor reparameterize(const Tensor& mu, const Tensor& logvar, const Tensor& noise) {
    return reparameterize(ad::constant(mu), ad::constant(logvar), ad::constant(noise))
        .value();
}

Var embed_and_combine(const LabelEmbedder& embedder, const Var& z,
                      const std::vector<int>& labels, int num_classes) {
    return ad::mul(z, embedder.embed(labels, num_classes));
}

std::pair<Generator, Discriminator> transfer_weights(const NamedArrayArchive& cvae_archive,
                                                     std::uint64_t seed) {
    const ModelConfig cfg = ModelConfig::from_json(cvae_archive.meta("model_config"));

    Generator gen = Generator::init(cfg, seed);
    nn::load_params(cvae_archive, gen.params());  // embedder.* / decoder.* by name

    Discriminator disc = Discriminator::init(cfg, seed);
    // Trunk weights come from the encoder trunk; rebind the archive names.
    nn::ParamList trunk = disc.trunk.params("encoder.trunk");
    nn::load_params(cvae_archive, trunk);
    return {std::move(gen), std::move(disc)};
}

}  // namespace capgan::models
