#ifndef VOX2SEG_VOLUME_HPP
#define VOX2SEG_VOLUME_HPP

#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

#include "vox2seg/tensor.hpp"

namespace vox2seg {

/// Segmentation label values: background, NCR/NET, ED, ET. Channel c of a
/// one-hot encoding corresponds to kLabelValues[c].
inline constexpr std::array<std::uint8_t, 4> kLabelValues{0, 1, 2, 4};
inline constexpr int kNumClasses = 4;
inline constexpr std::array<const char*, 4> kChannelNames{"t1", "t1gd", "t2", "flair"};
inline constexpr int kNumChannels = 4;

/// (C, X, Y, Z) intensity volume, channels ordered (T1, T1Gd, T2, FLAIR).
template <typename T>
using MultiModalVolume = Tensor<T>;
/// (X, Y, Z) integer labels drawn from {0, 1, 2, 4}.
using LabelMap = Tensor<std::uint8_t>;
/// (4, X, Y, Z) per-voxel class probabilities (or exact indicators).
template <typename T>
using OneHotSegmentation = Tensor<T>;

inline int label_to_channel(std::uint8_t label) {
    switch (label) {
        case 0: return 0;
        case 1: return 1;
        case 2: return 2;
        case 4: return 3;
        default:
            throw std::invalid_argument("invalid label value " + std::to_string(int(label)) +
                                        " (expected one of 0, 1, 2, 4)");
    }
}

inline std::uint8_t channel_to_label(int channel) {
    if (channel < 0 || channel >= kNumClasses)
        throw std::invalid_argument("invalid class channel " + std::to_string(channel));
    return kLabelValues[static_cast<std::size_t>(channel)];
}

inline void validate_label_map(const LabelMap& m) {
    if (m.rank() != 3) throw std::invalid_argument("label map must be rank 3");
    for (std::int64_t i = 0; i < m.numel(); ++i) label_to_channel(m[i]);
}

/// Per-channel z-score over that channel's nonzero voxels (population
/// statistics); zero voxels stay exactly zero so the background is preserved.
template <typename T>
MultiModalVolume<T> normalize(const MultiModalVolume<T>& v) {
    if (v.rank() != 4) throw std::invalid_argument("normalize: expected (C,X,Y,Z) volume");
    MultiModalVolume<T> out = v;
    const std::int64_t c = v.dim(0);
    const std::int64_t n = v.dim(1) * v.dim(2) * v.dim(3);
    for (std::int64_t ch = 0; ch < c; ++ch) {
        T* p = out.data() + ch * n;
        double sum = 0.0;
        std::int64_t count = 0;
        for (std::int64_t i = 0; i < n; ++i) {
            if (p[i] != T{}) {
                sum += static_cast<double>(p[i]);
                ++count;
            }
        }
        if (count < 2)
            throw std::invalid_argument("normalize: channel " + std::to_string(ch) +
                                        " has fewer than 2 nonzero voxels");
        const double mean = sum / static_cast<double>(count);
        double ss = 0.0;
        for (std::int64_t i = 0; i < n; ++i) {
            if (p[i] != T{}) {
                const double d = static_cast<double>(p[i]) - mean;
                ss += d * d;
            }
        }
        const double stddev = std::sqrt(ss / static_cast<double>(count));
        if (stddev == 0.0)
            throw std::invalid_argument("normalize: channel " + std::to_string(ch) +
                                        " has constant nonzero intensities");
        for (std::int64_t i = 0; i < n; ++i) {
            if (p[i] != T{}) p[i] = static_cast<T>((static_cast<double>(p[i]) - mean) / stddev);
        }
    }
    return out;
}

template <typename T>
OneHotSegmentation<T> to_categorical(const LabelMap& m) {
    if (m.rank() != 3) throw std::invalid_argument("to_categorical: expected (X,Y,Z) label map");
    const std::int64_t n = m.numel();
    OneHotSegmentation<T> s({kNumClasses, m.dim(0), m.dim(1), m.dim(2)});
    for (std::int64_t i = 0; i < n; ++i) s[label_to_channel(m[i]) * n + i] = T{1};
    return s;
}

/// Per-voxel argmax decoded back to label values; ties go to the lowest
/// channel index.
template <typename T>
LabelMap from_categorical(const OneHotSegmentation<T>& s) {
    if (s.rank() != 4 || s.dim(0) != kNumClasses)
        throw std::invalid_argument("from_categorical: expected (4,X,Y,Z) segmentation");
    const std::int64_t n = s.dim(1) * s.dim(2) * s.dim(3);
    LabelMap m({s.dim(1), s.dim(2), s.dim(3)});
    for (std::int64_t i = 0; i < n; ++i) {
        int best = 0;
        T best_v = s[i];
        for (int ch = 1; ch < kNumClasses; ++ch) {
            if (s[ch * n + i] > best_v) {
                best_v = s[ch * n + i];
                best = ch;
            }
        }
        m[i] = channel_to_label(best);
    }
    return m;
}

/// Centered spatial crop of a rank-3 (X,Y,Z) or rank-4 (C,X,Y,Z) tensor.
/// When source−target is odd the extra source voxel is dropped high, i.e. the
/// window starts at floor((source−target)/2).
template <typename S>
Tensor<S> center_crop(const Tensor<S>& t, const Vec3i& target) {
    const int sp = t.rank() == 4 ? 1 : 0;
    if (t.rank() != 3 && t.rank() != 4)
        throw std::invalid_argument("center_crop: expected rank-3 or rank-4 tensor");
    Vec3i src{t.dim(sp), t.dim(sp + 1), t.dim(sp + 2)};
    Vec3i off{};
    for (int a = 0; a < 3; ++a) {
        if (target[a] > src[a])
            throw std::invalid_argument("center_crop: target axis " + std::to_string(a) + " (" +
                                        std::to_string(target[a]) + ") exceeds source (" +
                                        std::to_string(src[a]) + ")");
        off[a] = (src[a] - target[a]) / 2;
    }
    const std::int64_t c = sp ? t.dim(0) : 1;
    Shape out_shape = sp ? Shape{c, target[0], target[1], target[2]}
                         : Shape{target[0], target[1], target[2]};
    Tensor<S> out(out_shape);
    for (std::int64_t ch = 0; ch < c; ++ch) {
        const S* src_c = t.data() + ch * src[0] * src[1] * src[2];
        S* dst_c = out.data() + ch * target[0] * target[1] * target[2];
        for (std::int64_t x = 0; x < target[0]; ++x)
            for (std::int64_t y = 0; y < target[1]; ++y) {
                const S* srow = src_c + ((x + off[0]) * src[1] + (y + off[1])) * src[2] + off[2];
                S* drow = dst_c + (x * target[1] + y) * target[2];
                std::copy_n(srow, target[2], drow);
            }
    }
    return out;
}

}  // namespace vox2seg

#endif  // VOX2SEG_VOLUME_HPP
