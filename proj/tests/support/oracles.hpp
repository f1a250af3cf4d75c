#ifndef VOX2SEG_TEST_ORACLES_HPP
#define VOX2SEG_TEST_ORACLES_HPP

// Independent reference implementations used only by tests. Everything here
// is deliberately naive: explicit loops, double precision, no shared code
// with the library under test.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <vector>

#include "vox2seg/tensor.hpp"
#include "vox2seg/volume.hpp"

namespace oracles {

/// Generalized dice loss, scalar arithmetic straight from the formula:
/// 1 - 2 (sum_l w_l sum_n y ŷ) / (sum_l w_l sum_n (y + ŷ)), w_l = 1/((sum_n y)^2 + eps).
/// Sums run over every sample and voxel jointly. den == 0 -> 0 by convention.
template <typename T>
double ref_gdl(const vox2seg::Tensor<T>& y, const vox2seg::Tensor<T>& yhat, double eps) {
    const std::int64_t classes = y.rank() == 5 ? y.dim(1) : y.dim(0);
    const std::int64_t samples = y.rank() == 5 ? y.dim(0) : 1;
    const std::int64_t voxels = y.numel() / (classes * samples);
    double num = 0.0, den = 0.0;
    for (std::int64_t c = 0; c < classes; ++c) {
        double vol = 0.0;
        for (std::int64_t n = 0; n < samples; ++n)
            for (std::int64_t i = 0; i < voxels; ++i)
                vol += static_cast<double>(y[(n * classes + c) * voxels + i]);
        const double w = 1.0 / (vol * vol + eps);
        double inter = 0.0, total = 0.0;
        for (std::int64_t n = 0; n < samples; ++n)
            for (std::int64_t i = 0; i < voxels; ++i) {
                const double a = static_cast<double>(y[(n * classes + c) * voxels + i]);
                const double b = static_cast<double>(yhat[(n * classes + c) * voxels + i]);
                inter += a * b;
                total += a + b;
            }
        num += w * inter;
        den += w * total;
    }
    if (den == 0.0) return 0.0;
    return 1.0 - 2.0 * num / den;
}

template <typename T>
double ref_discriminator_loss(const vox2seg::Tensor<T>& real, const vox2seg::Tensor<T>& fake) {
    double a = 0.0, b = 0.0;
    for (std::int64_t i = 0; i < real.numel(); ++i) {
        a += (static_cast<double>(real[i]) - 1.0) * (static_cast<double>(real[i]) - 1.0);
        b += static_cast<double>(fake[i]) * static_cast<double>(fake[i]);
    }
    return a / static_cast<double>(real.numel()) + b / static_cast<double>(fake.numel());
}

template <typename T>
double ref_adversarial(const vox2seg::Tensor<T>& fake) {
    double a = 0.0;
    for (std::int64_t i = 0; i < fake.numel(); ++i)
        a += (static_cast<double>(fake[i]) - 1.0) * (static_cast<double>(fake[i]) - 1.0);
    return a / static_cast<double>(fake.numel());
}

/// Voxel-wise binary dice with explicit counters.
inline double ref_dice(const vox2seg::Tensor<std::uint8_t>& a,
                       const vox2seg::Tensor<std::uint8_t>& b) {
    std::int64_t inter = 0, na = 0, nb = 0;
    for (std::int64_t i = 0; i < a.numel(); ++i) {
        na += a[i] != 0;
        nb += b[i] != 0;
        inter += (a[i] != 0) && (b[i] != 0);
    }
    if (na + nb == 0) return 1.0;
    return 2.0 * static_cast<double>(inter) / static_cast<double>(na + nb);
}

/// All-pairs 95th-percentile Hausdorff distance: collect both voxel sets,
/// compute every pairwise distance, take the max of the two directed P95s.
inline double ref_hd95(const vox2seg::Tensor<std::uint8_t>& a,
                       const vox2seg::Tensor<std::uint8_t>& b,
                       const std::array<double, 3>& spacing, double sentinel = 373.13) {
    using P = std::array<double, 3>;
    auto points = [&spacing](const vox2seg::Tensor<std::uint8_t>& m) {
        std::vector<P> pts;
        std::int64_t idx = 0;
        for (std::int64_t x = 0; x < m.dim(0); ++x)
            for (std::int64_t y = 0; y < m.dim(1); ++y)
                for (std::int64_t z = 0; z < m.dim(2); ++z, ++idx)
                    if (m[idx] != 0)
                        pts.push_back({static_cast<double>(x) * spacing[0],
                                       static_cast<double>(y) * spacing[1],
                                       static_cast<double>(z) * spacing[2]});
        return pts;
    };
    const auto pa = points(a), pb = points(b);
    if (pa.empty() && pb.empty()) return 0.0;
    if (pa.empty() || pb.empty()) return sentinel;
    auto percentile95 = [](std::vector<double> xs) {
        std::sort(xs.begin(), xs.end());
        const double h = static_cast<double>(xs.size() - 1) * 0.95;
        const std::size_t lo = static_cast<std::size_t>(std::floor(h));
        const std::size_t hi = std::min(lo + 1, xs.size() - 1);
        const double frac = h - std::floor(h);
        return xs[lo] * (1.0 - frac) + xs[hi] * frac;
    };
    auto directed = [&percentile95](const std::vector<P>& from, const std::vector<P>& to) {
        std::vector<double> dists;
        dists.reserve(from.size());
        for (const auto& p : from) {
            double best = std::numeric_limits<double>::infinity();
            for (const auto& q : to) {
                const double dx = p[0] - q[0], dy = p[1] - q[1], dz = p[2] - q[2];
                best = std::min(best, dx * dx + dy * dy + dz * dz);
            }
            dists.push_back(std::sqrt(best));
        }
        return percentile95(std::move(dists));
    };
    return std::max(directed(pa, pb), directed(pb, pa));
}

/// Brute-force squared Euclidean distance transform (nearest set voxel).
inline std::vector<double> ref_squared_edt(const vox2seg::Tensor<std::uint8_t>& m,
                                           const std::array<double, 3>& spacing) {
    std::vector<std::array<std::int64_t, 3>> pts;
    std::int64_t idx = 0;
    for (std::int64_t x = 0; x < m.dim(0); ++x)
        for (std::int64_t y = 0; y < m.dim(1); ++y)
            for (std::int64_t z = 0; z < m.dim(2); ++z, ++idx)
                if (m[idx] != 0) pts.push_back({x, y, z});
    std::vector<double> out(static_cast<std::size_t>(m.numel()),
                            std::numeric_limits<double>::infinity());
    idx = 0;
    for (std::int64_t x = 0; x < m.dim(0); ++x)
        for (std::int64_t y = 0; y < m.dim(1); ++y)
            for (std::int64_t z = 0; z < m.dim(2); ++z, ++idx)
                for (const auto& p : pts) {
                    const double dx = static_cast<double>(x - p[0]) * spacing[0];
                    const double dy = static_cast<double>(y - p[1]) * spacing[1];
                    const double dz = static_cast<double>(z - p[2]) * spacing[2];
                    out[static_cast<std::size_t>(idx)] =
                        std::min(out[static_cast<std::size_t>(idx)], dx * dx + dy * dy + dz * dz);
                }
    return out;
}

/// Central finite difference of a scalar function at every element of x.
template <typename T>
vox2seg::Tensor<T> finite_diff(vox2seg::Tensor<T> x,
                               const std::function<double(const vox2seg::Tensor<T>&)>& f,
                               double h = 1e-5) {
    vox2seg::Tensor<T> g = vox2seg::Tensor<T>::zeros_like(x);
    for (std::int64_t i = 0; i < x.numel(); ++i) {
        const T keep = x[i];
        x[i] = static_cast<T>(static_cast<double>(keep) + h);
        const double up = f(x);
        x[i] = static_cast<T>(static_cast<double>(keep) - h);
        const double down = f(x);
        x[i] = keep;
        g[i] = static_cast<T>((up - down) / (2.0 * h));
    }
    return g;
}

/// Random one-hot reference field (N,C,X,Y,Z) and a random probability field
/// of the same shape (positive, normalized over channels).
template <typename T>
vox2seg::Tensor<T> random_onehot(const vox2seg::Shape& shape, std::mt19937_64& gen) {
    vox2seg::Tensor<T> y(shape);
    const std::int64_t n = shape[0], c = shape[1];
    const std::int64_t v = shape[2] * shape[3] * shape[4];
    std::uniform_int_distribution<std::int64_t> pick(0, c - 1);
    for (std::int64_t b = 0; b < n; ++b)
        for (std::int64_t i = 0; i < v; ++i) y[(b * c + pick(gen)) * v + i] = T{1};
    return y;
}

template <typename T>
vox2seg::Tensor<T> random_probs(const vox2seg::Shape& shape, std::mt19937_64& gen) {
    vox2seg::Tensor<T> p(shape);
    const std::int64_t n = shape[0], c = shape[1];
    const std::int64_t v = shape[2] * shape[3] * shape[4];
    std::uniform_real_distribution<double> u(0.01, 1.0);
    for (std::int64_t b = 0; b < n; ++b)
        for (std::int64_t i = 0; i < v; ++i) {
            double sum = 0.0;
            for (std::int64_t ch = 0; ch < c; ++ch) {
                const double x = u(gen);
                p[(b * c + ch) * v + i] = static_cast<T>(x);
                sum += x;
            }
            for (std::int64_t ch = 0; ch < c; ++ch)
                p[(b * c + ch) * v + i] = static_cast<T>(static_cast<double>(p[(b * c + ch) * v + i]) / sum);
        }
    return p;
}

inline vox2seg::Tensor<std::uint8_t> random_mask(const vox2seg::Vec3i& size, double density,
                                                 std::mt19937_64& gen) {
    vox2seg::Tensor<std::uint8_t> m({size[0], size[1], size[2]});
    std::bernoulli_distribution coin(density);
    for (std::int64_t i = 0; i < m.numel(); ++i) m[i] = coin(gen) ? 1 : 0;
    return m;
}

inline vox2seg::LabelMap random_label_map(const vox2seg::Vec3i& size, std::mt19937_64& gen) {
    vox2seg::LabelMap m({size[0], size[1], size[2]});
    constexpr std::array<std::uint8_t, 4> values{0, 1, 2, 4};
    std::uniform_int_distribution<int> pick(0, 3);
    for (std::int64_t i = 0; i < m.numel(); ++i) m[i] = values[static_cast<std::size_t>(pick(gen))];
    return m;
}

/// Connected components by breadth-first flood fill; returns the component id
/// per voxel (-1 outside the label) and the component sizes.
inline std::pair<std::vector<std::int64_t>, std::vector<std::int64_t>> ref_components(
    const vox2seg::LabelMap& m, std::uint8_t label, int connectivity) {
    const std::int64_t sx = m.dim(0), sy = m.dim(1), sz = m.dim(2);
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
    std::vector<std::int64_t> comp(static_cast<std::size_t>(m.numel()), -1);
    std::vector<std::int64_t> sizes;
    for (std::int64_t start = 0; start < m.numel(); ++start) {
        if (m[start] != label || comp[static_cast<std::size_t>(start)] >= 0) continue;
        const std::int64_t id = static_cast<std::int64_t>(sizes.size());
        sizes.push_back(0);
        std::vector<std::int64_t> stack{start};
        comp[static_cast<std::size_t>(start)] = id;
        while (!stack.empty()) {
            const std::int64_t cur = stack.back();
            stack.pop_back();
            ++sizes[static_cast<std::size_t>(id)];
            const std::int64_t x = cur / (sy * sz), y = (cur / sz) % sy, z = cur % sz;
            for (const auto& o : offs) {
                const std::int64_t nx = x + o[0], ny = y + o[1], nz = z + o[2];
                if (nx < 0 || nx >= sx || ny < 0 || ny >= sy || nz < 0 || nz >= sz) continue;
                const std::int64_t ni = (nx * sy + ny) * sz + nz;
                if (m[ni] != label || comp[static_cast<std::size_t>(ni)] >= 0) continue;
                comp[static_cast<std::size_t>(ni)] = id;
                stack.push_back(ni);
            }
        }
    }
    return {std::move(comp), std::move(sizes)};
}

}  // namespace oracles

#endif  // VOX2SEG_TEST_ORACLES_HPP
