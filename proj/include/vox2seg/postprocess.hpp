#ifndef VOX2SEG_POSTPROCESS_HPP
#define VOX2SEG_POSTPROCESS_HPP

#include <array>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "vox2seg/volume.hpp"

namespace vox2seg {

/// Global enhancing-tumor sanity rule: if the whole map holds strictly fewer
/// than `th` label-4 voxels, demote them all to NCR/NET (label 1). Leaves the
/// WT and TC region masks unchanged by construction.
inline LabelMap relabel_small_et(const LabelMap& m, std::int64_t th = 1000) {
    std::int64_t et = 0;
    for (std::int64_t i = 0; i < m.numel(); ++i) et += m[i] == 4;
    if (et >= th) return m;
    LabelMap out = m;
    for (std::int64_t i = 0; i < out.numel(); ++i)
        if (out[i] == 4) out[i] = 1;
    return out;
}

namespace postprocess_detail {

inline std::vector<std::array<int, 3>> neighbor_offsets(int connectivity) {
    if (connectivity != 6 && connectivity != 18 && connectivity != 26)
        throw std::invalid_argument("connectivity must be 6, 18 or 26");
    std::vector<std::array<int, 3>> offs;
    for (int dx = -1; dx <= 1; ++dx)
        for (int dy = -1; dy <= 1; ++dy)
            for (int dz = -1; dz <= 1; ++dz) {
                const int manhattan = std::abs(dx) + std::abs(dy) + std::abs(dz);
                if (manhattan == 0) continue;
                if (connectivity == 6 && manhattan > 1) continue;
                if (connectivity == 18 && manhattan > 2) continue;
                offs.push_back({dx, dy, dz});
            }
    return offs;
}

class UnionFind {
public:
    explicit UnionFind(std::size_t n) : parent_(n) {
        std::iota(parent_.begin(), parent_.end(), std::size_t{0});
    }
    std::size_t find(std::size_t a) {
        while (parent_[a] != a) {
            parent_[a] = parent_[parent_[a]];
            a = parent_[a];
        }
        return a;
    }
    void merge(std::size_t a, std::size_t b) {
        a = find(a);
        b = find(b);
        if (a != b) parent_[b] = a;
    }

private:
    std::vector<std::size_t> parent_;
};

}  // namespace postprocess_detail

/// Relabel connected components of `label` smaller than `min_volume` voxels
/// to `replacement`; components are defined by 6/18/26-neighborhood adjacency.
inline LabelMap remove_small_clusters(const LabelMap& m, std::uint8_t label,
                                      std::int64_t min_volume, std::uint8_t replacement,
                                      int connectivity = 26) {
    label_to_channel(label);
    label_to_channel(replacement);
    const auto offs = postprocess_detail::neighbor_offsets(connectivity);
    const std::int64_t X = m.dim(0), Y = m.dim(1), Z = m.dim(2);
    const std::int64_t n = m.numel();

    postprocess_detail::UnionFind uf(static_cast<std::size_t>(n));
    std::int64_t i = 0;
    for (std::int64_t x = 0; x < X; ++x)
        for (std::int64_t y = 0; y < Y; ++y)
            for (std::int64_t z = 0; z < Z; ++z, ++i) {
                if (m[i] != label) continue;
                for (const auto& o : offs) {
                    // scanning forward: link only to already-visited neighbors
                    if (o[0] > 0 || (o[0] == 0 && (o[1] > 0 || (o[1] == 0 && o[2] > 0)))) continue;
                    const std::int64_t nx = x + o[0], ny = y + o[1], nz = z + o[2];
                    if (nx < 0 || nx >= X || ny < 0 || ny >= Y || nz < 0 || nz >= Z) continue;
                    const std::int64_t j = (nx * Y + ny) * Z + nz;
                    if (m[j] == label)
                        uf.merge(static_cast<std::size_t>(i), static_cast<std::size_t>(j));
                }
            }

    std::vector<std::int64_t> size(static_cast<std::size_t>(n), 0);
    for (std::int64_t k = 0; k < n; ++k)
        if (m[k] == label) ++size[uf.find(static_cast<std::size_t>(k))];

    LabelMap out = m;
    for (std::int64_t k = 0; k < n; ++k)
        if (m[k] == label && size[uf.find(static_cast<std::size_t>(k))] < min_volume)
            out[k] = replacement;
    return out;
}

}  // namespace vox2seg

#endif  // VOX2SEG_POSTPROCESS_HPP
