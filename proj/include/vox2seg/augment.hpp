#ifndef VOX2SEG_AUGMENT_HPP
#define VOX2SEG_AUGMENT_HPP

#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <utility>

#include "vox2seg/rng.hpp"
#include "vox2seg/tensor.hpp"
#include "vox2seg/volume.hpp"

namespace vox2seg {

struct AugmentationConfig {
    Vec3i patch_size{32, 32, 32};
    double rotation_max_deg = 30.0;
    std::array<double, 2> gamma_gain{0.8, 1.2};
    std::array<double, 2> gamma_exponent{0.8, 1.2};
    double elastic_stddev = 5.0;
    std::int64_t elastic_spacing = 32;
    double probability = 0.5;
};

namespace augment_detail {

template <typename T>
double sample_trilinear(const T* vol, const Vec3i& s, double x, double y, double z) {
    const auto fx = std::floor(x), fy = std::floor(y), fz = std::floor(z);
    const auto x0 = static_cast<std::int64_t>(fx), y0 = static_cast<std::int64_t>(fy),
               z0 = static_cast<std::int64_t>(fz);
    const double wx = x - fx, wy = y - fy, wz = z - fz;
    double acc = 0.0;
    for (int dx = 0; dx < 2; ++dx)
        for (int dy = 0; dy < 2; ++dy)
            for (int dz = 0; dz < 2; ++dz) {
                const std::int64_t cx = x0 + dx, cy = y0 + dy, cz = z0 + dz;
                const double w = (dx ? wx : 1.0 - wx) * (dy ? wy : 1.0 - wy) * (dz ? wz : 1.0 - wz);
                if (w == 0.0) continue;
                if (cx < 0 || cx >= s[0] || cy < 0 || cy >= s[1] || cz < 0 || cz >= s[2])
                    continue;  // outside samples as 0
                acc += w * static_cast<double>(vol[(cx * s[1] + cy) * s[2] + cz]);
            }
    return acc;
}

inline std::uint8_t sample_nearest(const std::uint8_t* vol, const Vec3i& s, double x, double y,
                                   double z) {
    const std::int64_t cx = std::llround(x), cy = std::llround(y), cz = std::llround(z);
    if (cx < 0 || cx >= s[0] || cy < 0 || cy >= s[1] || cz < 0 || cz >= s[2]) return 0;
    return vol[(cx * s[1] + cy) * s[2] + cz];
}

/// Warp an image/label pair through an arbitrary target->source coordinate
/// map: trilinear for intensities, nearest-neighbor for labels, 0 outside.
template <typename T, typename MapFn>
std::pair<MultiModalVolume<T>, LabelMap> warp(const MultiModalVolume<T>& v, const LabelMap& m,
                                              MapFn&& source_of) {
    const Vec3i s{m.dim(0), m.dim(1), m.dim(2)};
    const std::int64_t n = m.numel(), c = v.dim(0);
    MultiModalVolume<T> vo({c, s[0], s[1], s[2]});
    LabelMap mo({s[0], s[1], s[2]});
    std::int64_t i = 0;
    for (std::int64_t x = 0; x < s[0]; ++x)
        for (std::int64_t y = 0; y < s[1]; ++y)
            for (std::int64_t z = 0; z < s[2]; ++z, ++i) {
                const std::array<double, 3> q = source_of(x, y, z);
                for (std::int64_t ch = 0; ch < c; ++ch)
                    vo[ch * n + i] =
                        static_cast<T>(sample_trilinear(v.data() + ch * n, s, q[0], q[1], q[2]));
                mo[i] = sample_nearest(m.data(), s, q[0], q[1], q[2]);
            }
    return {std::move(vo), std::move(mo)};
}

/// Rodrigues rotation matrix for a unit axis and angle.
inline std::array<std::array<double, 3>, 3> rotation_matrix(const std::array<double, 3>& axis,
                                                            double angle) {
    const double c = std::cos(angle), s = std::sin(angle), t = 1.0 - c;
    const double ux = axis[0], uy = axis[1], uz = axis[2];
    return {{{c + ux * ux * t, ux * uy * t - uz * s, ux * uz * t + uy * s},
             {uy * ux * t + uz * s, c + uy * uy * t, uy * uz * t - ux * s},
             {uz * ux * t - uy * s, uz * uy * t + ux * s, c + uz * uz * t}}};
}

}  // namespace augment_detail

/// Crop the same window from all channels and the label map; corner chosen
/// uniformly over valid positions.
template <typename T>
std::pair<MultiModalVolume<T>, LabelMap> extract_patch(const MultiModalVolume<T>& v,
                                                       const LabelMap& m, const Vec3i& size,
                                                       RngStream& rng) {
    const Vec3i s{m.dim(0), m.dim(1), m.dim(2)};
    Vec3i corner{};
    for (int a = 0; a < 3; ++a) {
        if (size[a] > s[a])
            throw std::invalid_argument("extract_patch: patch exceeds volume on axis " +
                                        std::to_string(a));
        corner[a] = rng.uniform_int(0, s[a] - size[a]);
    }
    const std::int64_t c = v.dim(0), n = m.numel();
    const std::int64_t pn = size[0] * size[1] * size[2];
    MultiModalVolume<T> vo({c, size[0], size[1], size[2]});
    LabelMap mo({size[0], size[1], size[2]});
    for (std::int64_t x = 0; x < size[0]; ++x)
        for (std::int64_t y = 0; y < size[1]; ++y) {
            const std::int64_t src = ((x + corner[0]) * s[1] + (y + corner[1])) * s[2] + corner[2];
            const std::int64_t dst = (x * size[1] + y) * size[2];
            std::copy_n(m.data() + src, size[2], mo.data() + dst);
            for (std::int64_t ch = 0; ch < c; ++ch)
                std::copy_n(v.data() + ch * n + src, size[2], vo.data() + ch * pn + dst);
        }
    return {std::move(vo), std::move(mo)};
}

/// Flip the chosen spatial axes of image and label identically.
template <typename T>
std::pair<MultiModalVolume<T>, LabelMap> flip_axes(const MultiModalVolume<T>& v, const LabelMap& m,
                                                   const std::array<bool, 3>& axes) {
    const Vec3i s{m.dim(0), m.dim(1), m.dim(2)};
    const std::int64_t c = v.dim(0), n = m.numel();
    MultiModalVolume<T> vo = Tensor<T>::zeros_like(v);
    LabelMap mo = Tensor<std::uint8_t>::zeros_like(m);
    std::int64_t i = 0;
    for (std::int64_t x = 0; x < s[0]; ++x)
        for (std::int64_t y = 0; y < s[1]; ++y)
            for (std::int64_t z = 0; z < s[2]; ++z, ++i) {
                const std::int64_t sx = axes[0] ? s[0] - 1 - x : x;
                const std::int64_t sy = axes[1] ? s[1] - 1 - y : y;
                const std::int64_t sz = axes[2] ? s[2] - 1 - z : z;
                const std::int64_t src = (sx * s[1] + sy) * s[2] + sz;
                mo[i] = m[src];
                for (std::int64_t ch = 0; ch < c; ++ch) vo[ch * n + i] = v[ch * n + src];
            }
    return {std::move(vo), std::move(mo)};
}

template <typename T>
std::pair<MultiModalVolume<T>, LabelMap> random_flip(const MultiModalVolume<T>& v, const LabelMap& m,
                                                     RngStream& rng) {
    std::array<bool, 3> axes{};
    for (int a = 0; a < 3; ++a) axes[static_cast<std::size_t>(a)] = rng.bernoulli(0.5);
    return flip_axes(v, m, axes);
}

/// Rotate about the volume center by `angle_rad` around `axis` (need not be
/// normalized). Trilinear image resampling, nearest-neighbor labels, zeros
/// outside the original grid.
template <typename T>
std::pair<MultiModalVolume<T>, LabelMap> rotate(const MultiModalVolume<T>& v, const LabelMap& m,
                                                double angle_rad, std::array<double, 3> axis) {
    const double an = std::sqrt(axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]);
    if (an < 1e-12) throw std::invalid_argument("rotate: zero axis");
    for (auto& a : axis) a /= an;
    // inverse rotation = transpose
    const auto r = augment_detail::rotation_matrix(axis, angle_rad);
    const Vec3i s{m.dim(0), m.dim(1), m.dim(2)};
    const std::array<double, 3> c{(s[0] - 1) / 2.0, (s[1] - 1) / 2.0, (s[2] - 1) / 2.0};
    return augment_detail::warp(v, m, [&](std::int64_t x, std::int64_t y, std::int64_t z) {
        const double dx = x - c[0], dy = y - c[1], dz = z - c[2];
        return std::array<double, 3>{c[0] + r[0][0] * dx + r[1][0] * dy + r[2][0] * dz,
                                     c[1] + r[0][1] * dx + r[1][1] * dy + r[2][1] * dz,
                                     c[2] + r[0][2] * dx + r[1][2] * dy + r[2][2] * dz};
    });
}

template <typename T>
std::pair<MultiModalVolume<T>, LabelMap> random_rotate(const MultiModalVolume<T>& v,
                                                       const LabelMap& m, RngStream& rng,
                                                       double max_deg = 30.0) {
    const double angle = rng.uniform(0.0, max_deg) * std::acos(-1.0) / 180.0;
    std::array<double, 3> axis{rng.normal(), rng.normal(), rng.normal()};
    const double an = std::sqrt(axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]);
    if (an < 1e-12) axis = {1.0, 0.0, 0.0};
    return rotate(v, m, angle, axis);
}

/// Power-law intensity transform with explicit gain/exponent: per channel,
/// nonzero intensities are mapped to [0,1] over their own range, g·t^gamma is
/// applied, and the result is mapped back through the original range.
/// Channels with (near-)constant nonzero intensities are left untouched.
template <typename T>
MultiModalVolume<T> gamma_apply(const MultiModalVolume<T>& v, double gain, double exponent) {
    MultiModalVolume<T> out = v;
    const std::int64_t c = v.dim(0);
    const std::int64_t n = v.dim(1) * v.dim(2) * v.dim(3);
    for (std::int64_t ch = 0; ch < c; ++ch) {
        T* p = out.data() + ch * n;
        double lo = 0.0, hi = 0.0;
        bool any = false;
        for (std::int64_t i = 0; i < n; ++i) {
            if (p[i] == T{}) continue;
            const double x = static_cast<double>(p[i]);
            if (!any) {
                lo = hi = x;
                any = true;
            } else {
                lo = std::min(lo, x);
                hi = std::max(hi, x);
            }
        }
        if (!any || hi - lo < 1e-12) continue;
        const double range = hi - lo;
        for (std::int64_t i = 0; i < n; ++i) {
            if (p[i] == T{}) continue;
            const double t = (static_cast<double>(p[i]) - lo) / range;
            p[i] = static_cast<T>(lo + gain * std::pow(t, exponent) * range);
        }
    }
    return out;
}

template <typename T>
MultiModalVolume<T> gamma_transform(const MultiModalVolume<T>& v, RngStream& rng,
                                    std::array<double, 2> gain_range = {0.8, 1.2},
                                    std::array<double, 2> exponent_range = {0.8, 1.2}) {
    const double g = rng.uniform(gain_range[0], gain_range[1]);
    const double e = rng.uniform(exponent_range[0], exponent_range[1]);
    return gamma_apply(v, g, e);
}

/// Warp by a displacement field given at control points on a regular grid
/// with the stated spacing (controls: (3, GX, GY, GZ), components in voxels).
/// The dense field is the trilinear interpolation of the control values and
/// the sample source is target + displacement.
template <typename T>
std::pair<MultiModalVolume<T>, LabelMap> elastic_from_controls(const MultiModalVolume<T>& v,
                                                               const LabelMap& m,
                                                               const Tensor<double>& controls,
                                                               std::int64_t spacing) {
    if (controls.rank() != 4 || controls.dim(0) != 3)
        throw std::invalid_argument("elastic_from_controls: controls must be (3,GX,GY,GZ)");
    if (spacing < 1) throw std::invalid_argument("elastic_from_controls: spacing must be >= 1");
    const Vec3i g{controls.dim(1), controls.dim(2), controls.dim(3)};
    const std::int64_t gn = g[0] * g[1] * g[2];
    auto displacement = [&](int comp, std::int64_t x, std::int64_t y, std::int64_t z) {
        const double ux = static_cast<double>(x) / static_cast<double>(spacing);
        const double uy = static_cast<double>(y) / static_cast<double>(spacing);
        const double uz = static_cast<double>(z) / static_cast<double>(spacing);
        // clamp to the last control cell so border voxels extrapolate flat
        auto cell = [](double u, std::int64_t extent) {
            std::int64_t i0 = static_cast<std::int64_t>(std::floor(u));
            i0 = std::clamp<std::int64_t>(i0, 0, std::max<std::int64_t>(extent - 2, 0));
            const double w = extent == 1 ? 0.0 : std::clamp(u - static_cast<double>(i0), 0.0, 1.0);
            return std::pair<std::int64_t, double>(i0, w);
        };
        const auto [x0, wx] = cell(ux, g[0]);
        const auto [y0, wy] = cell(uy, g[1]);
        const auto [z0, wz] = cell(uz, g[2]);
        const double* d = controls.data() + comp * gn;
        double acc = 0.0;
        for (int dx = 0; dx < 2; ++dx)
            for (int dy = 0; dy < 2; ++dy)
                for (int dz = 0; dz < 2; ++dz) {
                    const std::int64_t cx = std::min<std::int64_t>(x0 + dx, g[0] - 1);
                    const std::int64_t cy = std::min<std::int64_t>(y0 + dy, g[1] - 1);
                    const std::int64_t cz = std::min<std::int64_t>(z0 + dz, g[2] - 1);
                    const double w =
                        (dx ? wx : 1.0 - wx) * (dy ? wy : 1.0 - wy) * (dz ? wz : 1.0 - wz);
                    acc += w * d[(cx * g[1] + cy) * g[2] + cz];
                }
        return acc;
    };
    return augment_detail::warp(v, m, [&](std::int64_t x, std::int64_t y, std::int64_t z) {
        return std::array<double, 3>{x + displacement(0, x, y, z), y + displacement(1, x, y, z),
                                     z + displacement(2, x, y, z)};
    });
}

inline Vec3i elastic_grid_dims(const Vec3i& vol, std::int64_t spacing) {
    Vec3i g{};
    for (int a = 0; a < 3; ++a)
        g[a] = (vol[a] - 1 + spacing - 1) / spacing + 1;  // nodes covering [0, S-1]
    return g;
}

template <typename T>
std::pair<MultiModalVolume<T>, LabelMap> elastic_deform(const MultiModalVolume<T>& v,
                                                        const LabelMap& m, RngStream& rng,
                                                        double stddev = 5.0,
                                                        std::int64_t spacing = 32) {
    const Vec3i g = elastic_grid_dims({m.dim(0), m.dim(1), m.dim(2)}, spacing);
    Tensor<double> controls({3, g[0], g[1], g[2]});
    const std::int64_t gn = g[0] * g[1] * g[2];
    for (std::int64_t i = 0; i < gn; ++i)
        for (int comp = 0; comp < 3; ++comp) controls[comp * gn + i] = rng.normal(0.0, stddev);
    return elastic_from_controls(v, m, controls, spacing);
}

/// Combined augmentation: with probability cfg.probability apply
/// a uniformly drawn nonempty subset of {flip, rotate, elastic, gamma} in the
/// fixed order flip -> rotate -> elastic -> gamma; otherwise pass through.
template <typename T>
std::pair<MultiModalVolume<T>, LabelMap> augment(const MultiModalVolume<T>& v, const LabelMap& m,
                                                 const AugmentationConfig& cfg, RngStream& rng) {
    if (!rng.bernoulli(cfg.probability)) return {v, m};
    const std::int64_t subset = rng.uniform_int(1, 15);  // bit 0 flip, 1 rotate, 2 elastic, 3 gamma
    MultiModalVolume<T> vo = v;
    LabelMap mo = m;
    if (subset & 1) std::tie(vo, mo) = random_flip(vo, mo, rng);
    if (subset & 2) std::tie(vo, mo) = random_rotate(vo, mo, rng, cfg.rotation_max_deg);
    if (subset & 4) std::tie(vo, mo) = elastic_deform(vo, mo, rng, cfg.elastic_stddev, cfg.elastic_spacing);
    if (subset & 8) vo = gamma_transform(vo, rng, cfg.gamma_gain, cfg.gamma_exponent);
    return {std::move(vo), std::move(mo)};
}

}  // namespace vox2seg

#endif  // VOX2SEG_AUGMENT_HPP
