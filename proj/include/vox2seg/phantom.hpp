#ifndef VOX2SEG_PHANTOM_HPP
#define VOX2SEG_PHANTOM_HPP

#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <utility>

#include "vox2seg/rng.hpp"
#include "vox2seg/tensor.hpp"
#include "vox2seg/volume.hpp"

namespace vox2seg {

/// Synthetic subject: nested tumor ellipsoids (ET within NCR/NET within ED)
/// inside an ellipsoidal brain, rendered into four channels with additive
/// noise. Default contrast table is chosen so that no single channel
/// separates all classes — T1 and FLAIR hide ET against brain tissue, T1Gd
/// hides ED, T2 hides ET against NCR — forcing multi-channel cues.
struct PhantomSpec {
    Vec3i size{64, 64, 64};
    std::uint64_t seed = 0;

    /// contrast[region][channel]; regions (brain, NCR/NET, ED, ET),
    /// channels (T1, T1Gd, T2, FLAIR).
    std::array<std::array<double, 4>, 4> contrast{{
        {0.60, 0.45, 0.35, 0.40},  // brain
        {0.35, 0.30, 0.70, 0.55},  // NCR/NET
        {0.45, 0.45, 0.55, 0.85},  // ED
        {0.60, 0.95, 0.70, 0.40},  // ET
    }};
    double noise_stddev = 0.05;

    double brain_radius_frac = 0.38;          // of grid extent, per axis
    double brain_radius_jitter = 0.08;        // relative radius variation
    double center_jitter_frac = 0.04;         // brain center jitter, of extent
    // Compartment radii keep every class a few voxels across even on small
    // grids; at 32^3 the enhancing core still spans a ~3-5 voxel radius, so
    // the classes stay resolvable by a narrow network rather than degenerating
    // into single-voxel specks.
    std::array<double, 2> ed_frac{0.62, 0.75};   // ED radius / brain radius
    std::array<double, 2> ncr_frac{0.66, 0.74};  // NCR radius / ED radius
    std::array<double, 2> et_frac{0.62, 0.72};   // ET radius / NCR radius
    double no_et_fraction = 0.07;             // subjects rendered without ET
};

namespace detail {
inline double draw(RngStream& rng, const std::array<double, 2>& range) {
    return rng.uniform(range[0], range[1]);
}
}  // namespace detail

template <typename T = float>
std::pair<MultiModalVolume<T>, LabelMap> generate_phantom(const PhantomSpec& spec) {
    const Vec3i s = spec.size;
    RngStream rng(spec.seed);

    std::array<double, 3> brain_c{}, brain_r{};
    for (int a = 0; a < 3; ++a) {
        const double extent = static_cast<double>(s[a]);
        brain_c[a] = 0.5 * extent +
                     rng.uniform(-spec.center_jitter_frac, spec.center_jitter_frac) * extent;
        brain_r[a] = spec.brain_radius_frac * extent *
                     rng.uniform(1.0 - spec.brain_radius_jitter, 1.0 + spec.brain_radius_jitter);
        if (brain_c[a] - brain_r[a] < 0.0 || brain_c[a] + brain_r[a] > extent - 1.0)
            throw std::invalid_argument("generate_phantom: brain ellipsoid does not fit in the grid");
        if (brain_r[a] < 4.0)
            throw std::invalid_argument("generate_phantom: grid too small for the requested geometry");
    }

    // Tumor radii as shared per-axis fractions of the brain radii, so the
    // nesting ET within NCR within ED within brain holds by construction.
    const double f_ed = detail::draw(rng, spec.ed_frac);
    const double f_ncr = detail::draw(rng, spec.ncr_frac);
    double f_et = detail::draw(rng, spec.et_frac);
    const bool no_et = rng.bernoulli(spec.no_et_fraction);
    if (no_et) f_et = 0.0;

    // Tumor center offset, bounded in the brain-scaled norm so that the whole
    // ED ellipsoid stays strictly inside the brain ellipsoid.
    std::array<double, 3> dir{rng.normal(), rng.normal(), rng.normal()};
    double dn = std::sqrt(dir[0] * dir[0] + dir[1] * dir[1] + dir[2] * dir[2]);
    if (dn < 1e-12) {
        dir = {1.0, 0.0, 0.0};
        dn = 1.0;
    }
    const double mag = rng.uniform(0.0, 0.9 * (1.0 - f_ed));
    std::array<double, 3> tumor_c{};
    std::array<double, 3> ed_r{}, ncr_r{}, et_r{};
    for (int a = 0; a < 3; ++a) {
        tumor_c[a] = brain_c[a] + brain_r[a] * dir[a] / dn * mag;
        ed_r[a] = f_ed * brain_r[a];
        ncr_r[a] = f_ncr * ed_r[a];
        et_r[a] = f_et * ncr_r[a];
    }

    LabelMap labels({s[0], s[1], s[2]});
    Tensor<std::uint8_t> region({s[0], s[1], s[2]});  // 0 bg, 1 brain, 2 NCR, 3 ED, 4 ET
    auto inside = [](double x, double y, double z, const std::array<double, 3>& c,
                     const std::array<double, 3>& r) {
        if (r[0] <= 0.0 || r[1] <= 0.0 || r[2] <= 0.0) return false;
        const double dx = (x - c[0]) / r[0], dy = (y - c[1]) / r[1], dz = (z - c[2]) / r[2];
        return dx * dx + dy * dy + dz * dz <= 1.0;
    };
    std::int64_t idx = 0;
    for (std::int64_t x = 0; x < s[0]; ++x)
        for (std::int64_t y = 0; y < s[1]; ++y)
            for (std::int64_t z = 0; z < s[2]; ++z, ++idx) {
                const double px = static_cast<double>(x), py = static_cast<double>(y),
                             pz = static_cast<double>(z);
                std::uint8_t lab = 0, reg = 0;
                if (inside(px, py, pz, tumor_c, et_r)) {
                    lab = 4;
                    reg = 4;
                } else if (inside(px, py, pz, tumor_c, ncr_r)) {
                    lab = 1;
                    reg = 2;
                } else if (inside(px, py, pz, tumor_c, ed_r)) {
                    lab = 2;
                    reg = 3;
                } else if (inside(px, py, pz, brain_c, brain_r)) {
                    lab = 0;
                    reg = 1;
                }
                labels[idx] = lab;
                region[idx] = reg;
            }

    // Region index -> contrast table row (brain, NCR, ED, ET).
    constexpr std::array<int, 5> region_row{-1, 0, 1, 2, 3};
    MultiModalVolume<T> vol({kNumChannels, s[0], s[1], s[2]});
    const std::int64_t n = labels.numel();
    for (std::int64_t i = 0; i < n; ++i) {
        const int row = region_row[region[i]];
        if (row < 0) continue;  // background stays exactly 0
        for (int ch = 0; ch < kNumChannels; ++ch) {
            const double v =
                spec.contrast[static_cast<std::size_t>(row)][static_cast<std::size_t>(ch)] +
                rng.normal(0.0, spec.noise_stddev);
            // keep tissue strictly positive so it never reads as background
            vol[ch * n + i] = static_cast<T>(std::max(v, 0.02));
        }
    }
    return {std::move(vol), std::move(labels)};
}

}  // namespace vox2seg

#endif  // VOX2SEG_PHANTOM_HPP
