#ifndef VOX2SEG_CHECKPOINT_HPP
#define VOX2SEG_CHECKPOINT_HPP

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "vox2seg/nn.hpp"
#include "vox2seg/tensor.hpp"

namespace vox2seg {

#ifndef VOX2SEG_GIT_REV
#define VOX2SEG_GIT_REV "unknown"
#endif

inline const char* git_revision() { return VOX2SEG_GIT_REV; }

namespace ckpt_detail {

inline constexpr char kMagic[4] = {'V', 'X', 'C', 'K'};
inline constexpr std::uint32_t kVersion = 1;

template <typename T>
constexpr std::uint8_t scalar_tag() {
    if constexpr (std::is_same_v<T, float>) return 0;
    else if constexpr (std::is_same_v<T, double>) return 1;
    else static_assert(!sizeof(T), "unsupported checkpoint scalar type");
}

template <typename V>
void put(std::ostream& os, const V& v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename V>
V take(std::istream& is, const std::string& path) {
    V v;
    is.read(reinterpret_cast<char*>(&v), sizeof v);
    if (!is) throw std::runtime_error("truncated checkpoint: " + path);
    return v;
}

}  // namespace ckpt_detail

/// Binary named-tensor checkpoint: every parameter's current value, keyed by
/// its name. Gradients and optimizer state are not persisted.
template <typename T>
void save_checkpoint(const std::string& path, const std::vector<nn::Parameter<T>*>& params) {
    using namespace ckpt_detail;
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write checkpoint: " + path);
    os.write(kMagic, 4);
    put(os, kVersion);
    put(os, static_cast<std::uint32_t>(params.size()));
    for (const auto* p : params) {
        put(os, static_cast<std::uint32_t>(p->name.size()));
        os.write(p->name.data(), static_cast<std::streamsize>(p->name.size()));
        put(os, scalar_tag<T>());
        put(os, static_cast<std::uint32_t>(p->value.rank()));
        for (std::size_t d = 0; d < p->value.rank(); ++d)
            put(os, static_cast<std::int64_t>(p->value.dim(static_cast<int>(d))));
        os.write(reinterpret_cast<const char*>(p->value.data()),
                 static_cast<std::streamsize>(p->value.numel() * sizeof(T)));
    }
    if (!os) throw std::runtime_error("checkpoint write failed: " + path);
}

/// Restore parameter values by name; every registered parameter must be
/// present with a matching shape and scalar type.
template <typename T>
void load_checkpoint(const std::string& path, const std::vector<nn::Parameter<T>*>& params) {
    using namespace ckpt_detail;
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open checkpoint: " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kMagic, 4) != 0)
        throw std::runtime_error("not a checkpoint file: " + path);
    const auto version = take<std::uint32_t>(is, path);
    if (version != kVersion)
        throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
    const auto count = take<std::uint32_t>(is, path);

    std::map<std::string, std::pair<Shape, std::vector<T>>> loaded;
    for (std::uint32_t i = 0; i < count; ++i) {
        const auto name_len = take<std::uint32_t>(is, path);
        std::string name(name_len, '\0');
        is.read(name.data(), name_len);
        const auto tag = take<std::uint8_t>(is, path);
        if (tag != scalar_tag<T>())
            throw std::runtime_error("checkpoint scalar type mismatch for " + name);
        const auto rank = take<std::uint32_t>(is, path);
        Shape shape(rank);
        std::int64_t numel = 1;
        for (auto& d : shape) {
            d = take<std::int64_t>(is, path);
            numel *= d;
        }
        std::vector<T> data(static_cast<std::size_t>(numel));
        is.read(reinterpret_cast<char*>(data.data()),
                static_cast<std::streamsize>(data.size() * sizeof(T)));
        if (!is) throw std::runtime_error("truncated checkpoint: " + path);
        loaded.emplace(std::move(name), std::make_pair(std::move(shape), std::move(data)));
    }

    for (auto* p : params) {
        auto it = loaded.find(p->name);
        if (it == loaded.end())
            throw std::runtime_error("checkpoint missing parameter " + p->name + ": " + path);
        if (it->second.first != p->value.shape())
            throw std::runtime_error("checkpoint shape mismatch for " + p->name + ": " + path);
        std::copy(it->second.second.begin(), it->second.second.end(), p->value.data());
    }
}

/// Plain-text key-value sidecar ("key = value" per line) recording run
/// provenance: config, seed, epoch, git revision.
inline void write_metadata(const std::string& path,
                           const std::map<std::string, std::string>& kv) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write metadata: " + path);
    for (const auto& [k, v] : kv) {
        if (k.find('\n') != std::string::npos || v.find('\n') != std::string::npos ||
            k.find('=') != std::string::npos)
            throw std::invalid_argument("metadata keys/values must be single-line, '='-free keys");
        os << k << " = " << v << '\n';
    }
}

inline std::map<std::string, std::string> read_metadata(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open metadata: " + path);
    std::map<std::string, std::string> kv;
    std::string line;
    while (std::getline(is, line)) {
        const auto pos = line.find(" = ");
        if (pos == std::string::npos) continue;
        kv[line.substr(0, pos)] = line.substr(pos + 3);
    }
    return kv;
}

}  // namespace vox2seg

#endif  // VOX2SEG_CHECKPOINT_HPP
