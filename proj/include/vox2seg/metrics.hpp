#ifndef VOX2SEG_METRICS_HPP
#define VOX2SEG_METRICS_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <limits>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "vox2seg/tensor.hpp"
#include "vox2seg/volume.hpp"

namespace vox2seg {

using BinaryMask = Tensor<std::uint8_t>;

/// HD95 when exactly one mask is empty (BraTS evaluation convention).
inline constexpr double kHd95Sentinel = 373.13;

struct RegionMasks {
    BinaryMask wt;  // labels {1,2,4}
    BinaryMask tc;  // labels {1,4}
    BinaryMask et;  // label {4}
};

inline RegionMasks remap_regions(const LabelMap& m) {
    RegionMasks r{BinaryMask::zeros_like(m), BinaryMask::zeros_like(m), BinaryMask::zeros_like(m)};
    for (std::int64_t i = 0; i < m.numel(); ++i) {
        const std::uint8_t v = m[i];
        r.wt[i] = v == 1 || v == 2 || v == 4;
        r.tc[i] = v == 1 || v == 4;
        r.et[i] = v == 4;
    }
    return r;
}

inline double dice(const BinaryMask& a, const BinaryMask& b) {
    check_same_shape(a, b, "dice");
    std::int64_t na = 0, nb = 0, inter = 0;
    for (std::int64_t i = 0; i < a.numel(); ++i) {
        na += a[i] != 0;
        nb += b[i] != 0;
        inter += (a[i] != 0) && (b[i] != 0);
    }
    if (na + nb == 0) return 1.0;  // both empty: perfect agreement by convention
    return 2.0 * static_cast<double>(inter) / static_cast<double>(na + nb);
}

namespace metrics_detail {

/// 1D squared-distance transform (lower envelope of parabolas) with sample
/// pitch `step`: out[i] = min_j (step*(i-j))^2 + f[j]. Entries with f = inf
/// contribute no parabola; a line with no finite entry stays all-inf.
inline void dt1d(const std::vector<double>& f, std::vector<double>& out, double step) {
    const std::int64_t n = static_cast<std::int64_t>(f.size());
    constexpr double inf = std::numeric_limits<double>::infinity();
    static thread_local std::vector<std::int64_t> v;  // candidate parabola centers
    static thread_local std::vector<double> z;        // v[j] optimal on [z[j], z[j+1])
    v.clear();
    z.clear();
    const double s2 = step * step;
    for (std::int64_t q = 0; q < n; ++q) {
        if (f[static_cast<std::size_t>(q)] == inf) continue;
        double s = -inf;
        while (!v.empty()) {
            const std::int64_t p = v.back();
            s = (f[static_cast<std::size_t>(q)] - f[static_cast<std::size_t>(p)] +
                 s2 * static_cast<double>(q * q - p * p)) /
                (2.0 * s2 * static_cast<double>(q - p));
            if (s <= z.back()) {
                v.pop_back();
                z.pop_back();
                s = -inf;
            } else {
                break;
            }
        }
        v.push_back(q);
        z.push_back(v.size() == 1 ? -inf : s);
    }
    if (v.empty()) {
        std::fill(out.begin(), out.begin() + n, inf);
        return;
    }
    std::size_t j = 0;
    for (std::int64_t i = 0; i < n; ++i) {
        while (j + 1 < v.size() && z[j + 1] < static_cast<double>(i)) ++j;
        const double d = step * static_cast<double>(i - v[j]);
        out[static_cast<std::size_t>(i)] = d * d + f[static_cast<std::size_t>(v[j])];
    }
}

/// Exact squared Euclidean distance (mm^2) from every voxel to the mask.
inline std::vector<double> squared_edt(const BinaryMask& mask, const std::array<double, 3>& spacing) {
    const std::int64_t X = mask.dim(0), Y = mask.dim(1), Z = mask.dim(2);
    std::vector<double> d(static_cast<std::size_t>(mask.numel()));
    for (std::int64_t i = 0; i < mask.numel(); ++i)
        d[static_cast<std::size_t>(i)] = mask[i] ? 0.0 : std::numeric_limits<double>::infinity();

    std::vector<double> line, out;
    // axis 2 (z, contiguous)
    line.resize(static_cast<std::size_t>(Z));
    out.resize(static_cast<std::size_t>(Z));
    for (std::int64_t x = 0; x < X; ++x)
        for (std::int64_t y = 0; y < Y; ++y) {
            double* base = d.data() + (x * Y + y) * Z;
            std::copy_n(base, Z, line.data());
            dt1d(line, out, spacing[2]);
            std::copy_n(out.data(), Z, base);
        }
    // axis 1 (y)
    line.resize(static_cast<std::size_t>(Y));
    out.resize(static_cast<std::size_t>(Y));
    for (std::int64_t x = 0; x < X; ++x)
        for (std::int64_t z = 0; z < Z; ++z) {
            for (std::int64_t y = 0; y < Y; ++y)
                line[static_cast<std::size_t>(y)] = d[static_cast<std::size_t>((x * Y + y) * Z + z)];
            dt1d(line, out, spacing[1]);
            for (std::int64_t y = 0; y < Y; ++y)
                d[static_cast<std::size_t>((x * Y + y) * Z + z)] = out[static_cast<std::size_t>(y)];
        }
    // axis 0 (x)
    line.resize(static_cast<std::size_t>(X));
    out.resize(static_cast<std::size_t>(X));
    for (std::int64_t y = 0; y < Y; ++y)
        for (std::int64_t z = 0; z < Z; ++z) {
            for (std::int64_t x = 0; x < X; ++x)
                line[static_cast<std::size_t>(x)] = d[static_cast<std::size_t>((x * Y + y) * Z + z)];
            dt1d(line, out, spacing[0]);
            for (std::int64_t x = 0; x < X; ++x)
                d[static_cast<std::size_t>((x * Y + y) * Z + z)] = out[static_cast<std::size_t>(x)];
        }
    return d;
}

/// 95th percentile with linear interpolation between order statistics.
inline double percentile95(std::vector<double>& values) {
    std::sort(values.begin(), values.end());
    const std::size_t n = values.size();
    const double h = static_cast<double>(n - 1) * 0.95;
    const auto lo = static_cast<std::size_t>(h);
    if (lo + 1 >= n) return values.back();
    const double frac = h - static_cast<double>(lo);
    return values[lo] + frac * (values[lo + 1] - values[lo]);
}

inline double directed_p95(const BinaryMask& from, const std::vector<double>& sqdist_to) {
    std::vector<double> ds;
    for (std::int64_t i = 0; i < from.numel(); ++i)
        if (from[i]) ds.push_back(std::sqrt(sqdist_to[static_cast<std::size_t>(i)]));
    return percentile95(ds);
}

}  // namespace metrics_detail

/// 95th-percentile Hausdorff distance in mm between full mask voxel sets:
/// max of the two directed 95th percentiles of voxel-to-set Euclidean
/// distances. Both masks empty -> 0; exactly one empty -> 373.13 sentinel.
inline double hd95(const BinaryMask& a, const BinaryMask& b,
                   const std::array<double, 3>& spacing = {1.0, 1.0, 1.0}) {
    check_same_shape(a, b, "hd95");
    std::int64_t na = 0, nb = 0;
    for (std::int64_t i = 0; i < a.numel(); ++i) {
        na += a[i] != 0;
        nb += b[i] != 0;
    }
    if (na == 0 && nb == 0) return 0.0;
    if (na == 0 || nb == 0) return kHd95Sentinel;
    const auto da = metrics_detail::squared_edt(a, spacing);
    const auto db = metrics_detail::squared_edt(b, spacing);
    return std::max(metrics_detail::directed_p95(a, db), metrics_detail::directed_p95(b, da));
}

struct SubjectMetrics {
    std::string subject;
    double dice_wt = 0, dice_tc = 0, dice_et = 0;
    double hd95_wt = 0, hd95_tc = 0, hd95_et = 0;
};

inline SubjectMetrics evaluate(const LabelMap& pred, const LabelMap& gt,
                               const std::array<double, 3>& spacing = {1.0, 1.0, 1.0},
                               std::string subject = {}) {
    check_same_shape(pred, gt, "evaluate");
    const RegionMasks p = remap_regions(pred);
    const RegionMasks g = remap_regions(gt);
    SubjectMetrics r;
    r.subject = std::move(subject);
    r.dice_wt = dice(p.wt, g.wt);
    r.dice_tc = dice(p.tc, g.tc);
    r.dice_et = dice(p.et, g.et);
    r.hd95_wt = hd95(p.wt, g.wt, spacing);
    r.hd95_tc = hd95(p.tc, g.tc, spacing);
    r.hd95_et = hd95(p.et, g.et, spacing);
    return r;
}

struct AggregateStats {
    double mean = 0, stddev = 0, median = 0;
};

struct MetricsReport {
    std::vector<SubjectMetrics> subjects;
    AggregateStats dice_wt, dice_tc, dice_et, hd95_wt, hd95_tc, hd95_et;
};

namespace metrics_detail {

inline AggregateStats stats_of(std::vector<double> xs) {
    AggregateStats s;
    const std::size_t n = xs.size();
    double sum = 0.0;
    for (double x : xs) sum += x;
    s.mean = sum / static_cast<double>(n);
    if (n > 1) {
        double ss = 0.0;
        for (double x : xs) ss += (x - s.mean) * (x - s.mean);
        s.stddev = std::sqrt(ss / static_cast<double>(n - 1));  // sample stddev
    }
    std::sort(xs.begin(), xs.end());
    s.median = n % 2 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
    return s;
}

}  // namespace metrics_detail

inline MetricsReport aggregate(std::vector<SubjectMetrics> records) {
    if (records.empty()) throw std::invalid_argument("aggregate: no records");
    MetricsReport rep;
    auto collect = [&records](auto field) {
        std::vector<double> xs;
        xs.reserve(records.size());
        for (const auto& r : records) xs.push_back(r.*field);
        return metrics_detail::stats_of(std::move(xs));
    };
    rep.dice_wt = collect(&SubjectMetrics::dice_wt);
    rep.dice_tc = collect(&SubjectMetrics::dice_tc);
    rep.dice_et = collect(&SubjectMetrics::dice_et);
    rep.hd95_wt = collect(&SubjectMetrics::hd95_wt);
    rep.hd95_tc = collect(&SubjectMetrics::hd95_tc);
    rep.hd95_et = collect(&SubjectMetrics::hd95_et);
    rep.subjects = std::move(records);
    return rep;
}

/// Summary table (Mean/StdDev/Median rows over Dice and HD95 per region).
inline void print_summary(std::ostream& os, const MetricsReport& rep) {
    auto row = [&os, &rep](const char* name, auto pick) {
        os << std::left << std::setw(8) << name << std::right << std::fixed
           << std::setprecision(4);
        for (const AggregateStats* s :
             {&rep.dice_wt, &rep.dice_tc, &rep.dice_et, &rep.hd95_wt, &rep.hd95_tc, &rep.hd95_et})
            os << std::setw(10) << pick(*s);
        os << '\n';
    };
    os << std::left << std::setw(8) << "" << std::right << std::setw(10) << "DiceWT"
       << std::setw(10) << "DiceTC" << std::setw(10) << "DiceET" << std::setw(10) << "HD95WT"
       << std::setw(10) << "HD95TC" << std::setw(10) << "HD95ET" << '\n';
    row("Mean", [](const AggregateStats& s) { return s.mean; });
    row("StdDev", [](const AggregateStats& s) { return s.stddev; });
    row("Median", [](const AggregateStats& s) { return s.median; });
}

/// Structured text report: one record per subject plus an aggregate block.
inline void write_report(const std::string& path, const MetricsReport& rep) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write report: " + path);
    os << "subject dice_wt dice_tc dice_et hd95_wt hd95_tc hd95_et\n"
       << std::fixed << std::setprecision(6);
    for (const auto& s : rep.subjects)
        os << s.subject << ' ' << s.dice_wt << ' ' << s.dice_tc << ' ' << s.dice_et << ' '
           << s.hd95_wt << ' ' << s.hd95_tc << ' ' << s.hd95_et << '\n';
    os << "aggregate\n";
    auto block = [&os](const char* name, const AggregateStats& s) {
        os << name << " mean " << s.mean << " stddev " << s.stddev << " median " << s.median
           << '\n';
    };
    block("dice_wt", rep.dice_wt);
    block("dice_tc", rep.dice_tc);
    block("dice_et", rep.dice_et);
    block("hd95_wt", rep.hd95_wt);
    block("hd95_tc", rep.hd95_tc);
    block("hd95_et", rep.hd95_et);
}

}  // namespace vox2seg

#endif  // VOX2SEG_METRICS_HPP
