#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "capgan/archive.hpp"
#include "capgan/autodiff.hpp"
#include "capgan/layers.hpp"
#include "capgan/rng.hpp"

namespace capgan::models {

struct ModelConfig {
    std::size_t image_hw = 32;
    std::size_t channels = 1;
    int num_classes = 10;
    std::size_t latent_dim = 128;
    std::size_t base_filters = 32;
    std::size_t depth = 3;  // strided conv layers; spatial reduction 2^depth
    double leaky_slope = 0.2;

    void validate() const;
    std::size_t bottleneck_hw() const { return image_hw >> depth; }
    std::size_t top_filters() const { return base_filters << (depth - 1); }
    std::size_t trunk_dim() const {
        return top_filters() * bottleneck_hw() * bottleneck_hw();
    }

    nlohmann::json to_json() const;
    static ModelConfig from_json(const nlohmann::json& j);
};

// Shared-topology convolutional trunk (encoder trunk == discriminator trunk).
struct ConvTrunk {
    std::vector<nn::Conv2d> convs;
    double leaky_slope = 0.2;

    static ConvTrunk init(const ModelConfig& cfg, Rng& rng);
    // [N,C,H,W] -> flattened [N, trunk_dim]
    ad::Var forward(const ad::Var& x) const;
    nn::ParamList params(const std::string& prefix) const;
};

struct Encoder {
    ConvTrunk trunk;
    nn::Dense mu_head;
    nn::Dense logvar_head;

    static Encoder init(const ModelConfig& cfg, Rng& rng);
    // x [N,C,H,W] -> (mu, logvar), both [N, latent_dim]
    std::pair<ad::Var, ad::Var> encode(const ad::Var& x) const;
    nn::ParamList params() const;
};

struct LabelEmbedder {
    nn::Embedding table;

    static LabelEmbedder init(const ModelConfig& cfg, Rng& rng);
    ad::Var embed(const std::vector<int>& labels, int num_classes) const;
    nn::ParamList params() const;
};

struct Decoder {
    nn::Dense expand;
    std::vector<nn::ConvTranspose2d> tconvs;
    ModelConfig cfg;

    static Decoder init(const ModelConfig& cfg, Rng& rng);
    // o [N, latent_dim] -> images [N,C,H,W] in [0,1]
    ad::Var decode(const ad::Var& o) const;
    nn::ParamList params() const;
};

struct Cvae {
    ModelConfig cfg;
    Encoder encoder;
    LabelEmbedder embedder;
    Decoder decoder;

    static Cvae init(const ModelConfig& cfg, std::uint64_t seed);
    nn::ParamList params() const;

    NamedArrayArchive to_archive(std::uint64_t seed) const;
    static Cvae from_archive(const NamedArrayArchive& arc);
};

struct Generator {
    ModelConfig cfg;
    LabelEmbedder embedder;
    Decoder decoder;

    static Generator init(const ModelConfig& cfg, std::uint64_t seed);
    // generate = decode(z * e(y))
    ad::Var generate(const ad::Var& z, const std::vector<int>& labels) const;
    nn::ParamList params() const;
};

struct Discriminator {
    ModelConfig cfg;
    ConvTrunk trunk;
    nn::Embedding label_emb;  // label pathway, concatenated to trunk features
    nn::Dense head;           // fresh scalar head

    static Discriminator init(const ModelConfig& cfg, std::uint64_t seed);
    // -> [N] logits
    ad::Var discriminate(const ad::Var& x, const std::vector<int>& labels) const;
    ad::Var trunk_features(const ad::Var& x) const;
    nn::ParamList params() const;
};

// z = mu + exp(0.5 * logvar) * noise, elementwise.
ad::Var reparameterize(const ad::Var& mu, const ad::Var& logvar, const ad::Var& noise);
Tensor reparameterize(const Tensor& mu, const Tensor& logvar, const Tensor& noise);

// o = z * e(y) elementwise.
ad::Var embed_and_combine(const LabelEmbedder& embedder, const ad::Var& z,
                          const std::vector<int>& labels, int num_classes);

// Generator inherits the CVAE embedder+decoder weights; the discriminator
// trunk inherits the encoder trunk, with the label pathway and scalar head
// freshly initialized from `seed`.
std::pair<Generator, Discriminator> transfer_weights(const NamedArrayArchive& cvae_archive,
                                                     std::uint64_t seed);

}  // namespace capgan::models
