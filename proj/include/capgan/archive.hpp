#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "capgan/tensor.hpp"

namespace capgan {

// Flat archive of named arrays with a JSON metadata header. Backs the weight
// archives used for CVAE -> GAN transfer, training checkpoints, and prepared
// dataset snapshots. Round-trips bit-exactly.
class NamedArrayArchive {
public:
    void put(const std::string& name, Tensor t);
    void put_ints(const std::string& name, std::vector<std::int64_t> v);

    bool has(const std::string& name) const;
    const Tensor& get(const std::string& name) const;
    const std::vector<std::int64_t>& get_ints(const std::string& name) const;

    std::vector<std::string> names() const;  // insertion order

    // Free-form metadata (latent_dim, resolution, seed, ...).
    void set_meta(const std::string& key, const nlohmann::json& v);
    nlohmann::json meta(const std::string& key) const;
    bool has_meta(const std::string& key) const;

    void save(const std::filesystem::path& path) const;
    static NamedArrayArchive load(const std::filesystem::path& path);

    bool operator==(const NamedArrayArchive& o) const;

private:
    std::vector<std::string> order_;
    std::map<std::string, Tensor> tensors_;
    std::map<std::string, std::vector<std::int64_t>> ints_;
    std::map<std::string, std::string> meta_;  // serialized JSON values
};

}  // namespace capgan
