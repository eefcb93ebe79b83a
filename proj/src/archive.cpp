#include "capgan/archive.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace capgan {

namespace {
constexpr char kMagic[8] = {'C', 'A', 'P', 'G', 'A', 'R', 'C', '1'};
}

void NamedArrayArchive::put(const std::string& name, Tensor t) {
    if (!tensors_.count(name) && !ints_.count(name)) order_.push_back(name);
    tensors_[name] = std::move(t);
}

void NamedArrayArchive::put_ints(const std::string& name, std::vector<std::int64_t> v) {
    if (!tensors_.count(name) && !ints_.count(name)) order_.push_back(name);
    ints_[name] = std::move(v);
}

bool NamedArrayArchive::has(const std::string& name) const {
    return tensors_.count(name) || ints_.count(name);
}

const Tensor& NamedArrayArchive::get(const std::string& name) const {
    auto it = tensors_.find(name);
    if (it == tensors_.end())
        throw std::out_of_range("archive: no tensor named '" + name + "'");
    return it->second;
}

const std::vector<std::int64_t>& NamedArrayArchive::get_ints(const std::string& name) const {
    auto it = ints_.find(name);
    if (it == ints_.end())
        throw std::out_of_range("archive: no int array named '" + name + "'");
    return it->second;
}

std::vector<std::string> NamedArrayArchive::names() const { return order_; }

void NamedArrayArchive::set_meta(const std::string& key, const nlohmann::json& v) {
    meta_[key] = v.dump();
}

nlohmann::json NamedArrayArchive::meta(const std::string& key) const {
    auto it = meta_.find(key);
    if (it == meta_.end()) throw std::out_of_range("archive: no metadata '" + key + "'");
    return nlohmann::json::parse(it->second);
}

bool NamedArrayArchive::has_meta(const std::string& key) const { return meta_.count(key); }

void NamedArrayArchive::save(const std::filesystem::path& path) const {
    if (path.empty()) throw std::invalid_argument("archive: empty path");
    nlohmann::json header;
    header["version"] = 1;
    nlohmann::json arrays = nlohmann::json::array();
    std::uint64_t offset = 0;
    for (const auto& name : order_) {
        nlohmann::json a;
        a["name"] = name;
        if (auto it = tensors_.find(name); it != tensors_.end()) {
            a["dtype"] = "f64";
            a["shape"] = it->second.shape();
            a["offset"] = offset;
            offset += it->second.numel() * sizeof(double);
        } else {
            const auto& v = ints_.at(name);
            a["dtype"] = "i64";
            a["shape"] = std::vector<std::size_t>{v.size()};
            a["offset"] = offset;
            offset += v.size() * sizeof(std::int64_t);
        }
        arrays.push_back(std::move(a));
    }
    header["arrays"] = std::move(arrays);
    nlohmann::json meta = nlohmann::json::object();
    for (const auto& [k, v] : meta_) meta[k] = nlohmann::json::parse(v);
    header["metadata"] = std::move(meta);

    const std::string hs = header.dump();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("archive: cannot open for write: " + path.string());
    out.write(kMagic, sizeof(kMagic));
    const std::uint64_t hlen = hs.size();
    out.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
    out.write(hs.data(), std::streamsize(hs.size()));
    for (const auto& name : order_) {
        if (auto it = tensors_.find(name); it != tensors_.end()) {
            out.write(reinterpret_cast<const char*>(it->second.data()),
                      std::streamsize(it->second.numel() * sizeof(double)));
        } else {
            const auto& v = ints_.at(name);
            out.write(reinterpret_cast<const char*>(v.data()),
                      std::streamsize(v.size() * sizeof(std::int64_t)));
        }
    }
    if (!out) throw std::runtime_error("archive: write failed: " + path.string());
}

NamedArrayArchive NamedArrayArchive::load(const std::filesystem::path& path) {
    if (path.empty()) throw std::invalid_argument("archive: empty path");
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("archive: cannot open: " + path.string());
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw std::runtime_error("archive: bad magic or version in " + path.string());
    std::uint64_t hlen = 0;
    in.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
    std::string hs(hlen, '\0');
    in.read(hs.data(), std::streamsize(hlen));
    if (!in) throw std::runtime_error("archive: truncated header in " + path.string());
    nlohmann::json header = nlohmann::json::parse(hs);
    if (header.at("version").get<int>() != 1)
        throw std::runtime_error("archive: unsupported version in " + path.string());

    NamedArrayArchive arc;
    for (const auto& a : header.at("arrays")) {
        const std::string name = a.at("name").get<std::string>();
        const std::string dtype = a.at("dtype").get<std::string>();
        const auto shape = a.at("shape").get<std::vector<std::size_t>>();
        const std::size_t n = Tensor::numel_of(shape);
        if (dtype == "f64") {
            std::vector<double> data(n);
            in.read(reinterpret_cast<char*>(data.data()),
                    std::streamsize(n * sizeof(double)));
            arc.put(name, Tensor(shape, std::move(data)));
        } else if (dtype == "i64") {
            std::vector<std::int64_t> data(n);
            in.read(reinterpret_cast<char*>(data.data()),
                    std::streamsize(n * sizeof(std::int64_t)));
            arc.put_ints(name, std::move(data));
        } else {
            throw std::runtime_error("archive: unknown dtype '" + dtype + "'");
        }
        if (!in) throw std::runtime_error("archive: truncated data in " + path.string());
    }
    for (const auto& [k, v] : header.at("metadata").items()) arc.set_meta(k, v);
    return arc;
}

bool NamedArrayArchive::operator==(const NamedArrayArchive& o) const {
    if (order_ != o.order_ || meta_ != o.meta_ || ints_ != o.ints_) return false;
    if (tensors_.size() != o.tensors_.size()) return false;
    for (const auto& [name, t] : tensors_) {
        auto it = o.tensors_.find(name);
        if (it == o.tensors_.end() || !t.same_shape(it->second)) return false;
        if (std::memcmp(t.data(), it->second.data(), t.numel() * sizeof(double)) != 0)
            return false;
    }
    return true;
}

}  // namespace capgan
