#ifndef VOX2SEG_NN_HPP
#define VOX2SEG_NN_HPP

#include <Eigen/Core>
#include <algorithm>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "vox2seg/rng.hpp"
#include "vox2seg/tensor.hpp"

namespace vox2seg::nn {

using std::int64_t;

template <typename T>
struct Parameter {
    std::string name;
    Tensor<T> value;
    Tensor<T> grad;

    void init_shape(Shape s) {
        value = Tensor<T>(s);
        grad = Tensor<T>(std::move(s));
    }
    void zero_grad() { grad.fill(T{}); }
};

/// Per-axis sampling geometry shared by conv3d and conv_transpose3d.
/// The "small" grid is the stride-subsampled side (conv output / tconv input),
/// the "big" grid the dense side. TensorFlow-style SAME padding.
struct ConvGeom {
    int64_t kernel = 0;
    int64_t stride = 0;
    Vec3i big{};    // dense grid extents
    Vec3i small{};  // subsampled grid extents
    Vec3i pad{};    // padding applied at the low edge of the big grid

    static ConvGeom same(int64_t kernel, int64_t stride, const Vec3i& big) {
        ConvGeom g;
        g.kernel = kernel;
        g.stride = stride;
        g.big = big;
        for (int a = 0; a < 3; ++a) {
            g.small[a] = (big[a] + stride - 1) / stride;
            int64_t total = std::max<int64_t>((g.small[a] - 1) * stride + kernel - big[a], 0);
            g.pad[a] = total / 2;
        }
        return g;
    }

    /// Geometry for a transposed convolution upsampling `small` by `stride`.
    static ConvGeom same_transposed(int64_t kernel, int64_t stride, const Vec3i& small) {
        Vec3i big{small[0] * stride, small[1] * stride, small[2] * stride};
        return same(kernel, stride, big);
    }

    int64_t small_count() const { return small[0] * small[1] * small[2]; }
    int64_t big_count() const { return big[0] * big[1] * big[2]; }
};

namespace detail {

template <typename T>
using MatMapRM = Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
template <typename T>
using CMatMapRM = Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
template <typename T>
using MatMapCM = Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>>;
template <typename T>
using CMatMapCM = Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>>;
template <typename T>
using StridedMapRM =
    Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>, 0,
               Eigen::OuterStride<Eigen::Dynamic>>;
template <typename T>
using CStridedMapRM =
    Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>, 0,
               Eigen::OuterStride<Eigen::Dynamic>>;

/// Gather patches of `big` (channels x big grid) into a column-major column
/// buffer covering small-grid voxels [p0,p1). Row r = (c, kx, ky, kz).
template <typename T>
void im2col_chunk(const T* big, int64_t channels, const ConvGeom& g, int64_t p0, int64_t p1, T* col) {
    const int64_t k = g.kernel, s = g.stride;
    const int64_t BX = g.big[0], BY = g.big[1], BZ = g.big[2];
    const int64_t SY = g.small[1], SZ = g.small[2];
    const int64_t rows = channels * k * k * k;
    for (int64_t p = p0; p < p1; ++p) {
        T* column = col + (p - p0) * rows;
        const int64_t oz = p % SZ, oy = (p / SZ) % SY, ox = p / (SZ * SY);
        const int64_t bx0 = ox * s - g.pad[0], by0 = oy * s - g.pad[1], bz0 = oz * s - g.pad[2];
        int64_t r = 0;
        for (int64_t c = 0; c < channels; ++c) {
            const T* cbase = big + c * BX * BY * BZ;
            for (int64_t kx = 0; kx < k; ++kx) {
                const int64_t bx = bx0 + kx;
                const bool xok = bx >= 0 && bx < BX;
                for (int64_t ky = 0; ky < k; ++ky) {
                    const int64_t by = by0 + ky;
                    const bool yok = by >= 0 && by < BY;
                    if (!xok || !yok) {
                        for (int64_t kz = 0; kz < k; ++kz) column[r++] = T{};
                        continue;
                    }
                    const T* row = cbase + (bx * BY + by) * BZ;
                    for (int64_t kz = 0; kz < k; ++kz) {
                        const int64_t bz = bz0 + kz;
                        column[r++] = (bz >= 0 && bz < BZ) ? row[bz] : T{};
                    }
                }
            }
        }
    }
}

/// Adjoint of im2col_chunk: scatter-add columns back into the big grid.
template <typename T>
void col2im_add_chunk(const T* col, int64_t channels, const ConvGeom& g, int64_t p0, int64_t p1, T* big) {
    const int64_t k = g.kernel, s = g.stride;
    const int64_t BX = g.big[0], BY = g.big[1], BZ = g.big[2];
    const int64_t SY = g.small[1], SZ = g.small[2];
    const int64_t rows = channels * k * k * k;
    for (int64_t p = p0; p < p1; ++p) {
        const T* column = col + (p - p0) * rows;
        const int64_t oz = p % SZ, oy = (p / SZ) % SY, ox = p / (SZ * SY);
        const int64_t bx0 = ox * s - g.pad[0], by0 = oy * s - g.pad[1], bz0 = oz * s - g.pad[2];
        int64_t r = 0;
        for (int64_t c = 0; c < channels; ++c) {
            T* cbase = big + c * BX * BY * BZ;
            for (int64_t kx = 0; kx < k; ++kx) {
                const int64_t bx = bx0 + kx;
                const bool xok = bx >= 0 && bx < BX;
                for (int64_t ky = 0; ky < k; ++ky) {
                    const int64_t by = by0 + ky;
                    if (!xok || !(by >= 0 && by < BY)) {
                        r += k;
                        continue;
                    }
                    T* row = cbase + (bx * BY + by) * BZ;
                    for (int64_t kz = 0; kz < k; ++kz) {
                        const int64_t bz = bz0 + kz;
                        if (bz >= 0 && bz < BZ) row[bz] += column[r];
                        ++r;
                    }
                }
            }
        }
    }
}

/// Column chunk length keeping the im2col buffer around 32 MB.
inline int64_t chunk_columns(int64_t rows, std::size_t scalar_size) {
    const int64_t budget = static_cast<int64_t>((32u << 20) / scalar_size);
    return std::max<int64_t>(budget / std::max<int64_t>(rows, 1), 16);
}

inline Vec3i spatial_of(const Shape& s) { return Vec3i{s[2], s[3], s[4]}; }

}  // namespace detail

template <typename T>
void he_normal_init(Parameter<T>& w, int64_t fan_in, RngStream& rng) {
    const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
    for (int64_t i = 0; i < w.value.numel(); ++i) w.value[i] = static_cast<T>(rng.normal(0.0, stddev));
}

/// 3D convolution with SAME padding. Weight layout (out_ch, in_ch, k, k, k);
/// activations (N, C, X, Y, Z).
template <typename T>
class Conv3d {
public:
    Conv3d(std::string name, int64_t in_ch, int64_t out_ch, int64_t kernel, int64_t stride)
        : in_ch_(in_ch), out_ch_(out_ch), kernel_(kernel), stride_(stride) {
        weight.name = name + ".weight";
        bias.name = name + ".bias";
        weight.init_shape({out_ch, in_ch, kernel, kernel, kernel});
        bias.init_shape({out_ch});
    }

    void init_he(RngStream& rng) { he_normal_init(weight, in_ch_ * kernel_ * kernel_ * kernel_, rng); }

    Tensor<T> forward(const Tensor<T>& x, bool cache) {
        const int64_t n = x.dim(0);
        if (x.dim(1) != in_ch_)
            throw std::invalid_argument(weight.name + ": expected " + std::to_string(in_ch_) +
                                        " input channels, got " + std::to_string(x.dim(1)));
        geom_ = ConvGeom::same(kernel_, stride_, detail::spatial_of(x.shape()));
        Tensor<T> y({n, out_ch_, geom_.small[0], geom_.small[1], geom_.small[2]});
        const int64_t rows = in_ch_ * kernel_ * kernel_ * kernel_;
        const int64_t cols = geom_.small_count();
        const int64_t chunk = detail::chunk_columns(rows, sizeof(T));
        std::vector<T> col(static_cast<std::size_t>(rows * std::min(chunk, cols)));
        detail::CMatMapRM<T> wmat(weight.value.data(), out_ch_, rows);
        for (int64_t i = 0; i < n; ++i) {
            const T* xin = x.data() + i * in_ch_ * geom_.big_count();
            T* yout = y.data() + i * out_ch_ * cols;
            for (int64_t p0 = 0; p0 < cols; p0 += chunk) {
                const int64_t p1 = std::min(p0 + chunk, cols);
                detail::im2col_chunk(xin, in_ch_, geom_, p0, p1, col.data());
                detail::CMatMapCM<T> cmat(col.data(), rows, p1 - p0);
                detail::StridedMapRM<T> ymat(yout + p0, out_ch_, p1 - p0,
                                             Eigen::OuterStride<Eigen::Dynamic>(cols));
                ymat.noalias() = wmat * cmat;
            }
            for (int64_t c = 0; c < out_ch_; ++c) {
                T* row = yout + c * cols;
                const T b = bias.value[c];
                for (int64_t p = 0; p < cols; ++p) row[p] += b;
            }
        }
        if (cache) x_cache_ = x;
        return y;
    }

    /// Accumulates weight/bias gradients; returns gradient w.r.t. the input.
    Tensor<T> backward(const Tensor<T>& dy) {
        const Tensor<T>& x = x_cache_;
        const int64_t n = x.dim(0);
        Tensor<T> dx = Tensor<T>::zeros_like(x);
        const int64_t rows = in_ch_ * kernel_ * kernel_ * kernel_;
        const int64_t cols = geom_.small_count();
        const int64_t chunk = detail::chunk_columns(rows, sizeof(T));
        std::vector<T> col(static_cast<std::size_t>(rows * std::min(chunk, cols)));
        std::vector<T> dcol(col.size());
        detail::CMatMapRM<T> wmat(weight.value.data(), out_ch_, rows);
        detail::MatMapRM<T> dwmat(weight.grad.data(), out_ch_, rows);
        for (int64_t i = 0; i < n; ++i) {
            const T* xin = x.data() + i * in_ch_ * geom_.big_count();
            T* dxout = dx.data() + i * in_ch_ * geom_.big_count();
            const T* dyin = dy.data() + i * out_ch_ * cols;
            for (int64_t p0 = 0; p0 < cols; p0 += chunk) {
                const int64_t p1 = std::min(p0 + chunk, cols);
                detail::im2col_chunk(xin, in_ch_, geom_, p0, p1, col.data());
                detail::CMatMapCM<T> cmat(col.data(), rows, p1 - p0);
                detail::CStridedMapRM<T> dymat(dyin + p0, out_ch_, p1 - p0,
                                               Eigen::OuterStride<Eigen::Dynamic>(cols));
                dwmat.noalias() += dymat * cmat.transpose();
                detail::MatMapCM<T> dcmat(dcol.data(), rows, p1 - p0);
                dcmat.noalias() = wmat.transpose() * dymat;
                detail::col2im_add_chunk(dcol.data(), in_ch_, geom_, p0, p1, dxout);
            }
            for (int64_t c = 0; c < out_ch_; ++c) {
                const T* row = dyin + c * cols;
                T acc{};
                for (int64_t p = 0; p < cols; ++p) acc += row[p];
                bias.grad[c] += acc;
            }
        }
        return dx;
    }

    void release_cache() { x_cache_ = Tensor<T>(); }

    int64_t in_channels() const { return in_ch_; }
    int64_t out_channels() const { return out_ch_; }

    Parameter<T> weight;
    Parameter<T> bias;

private:
    int64_t in_ch_, out_ch_, kernel_, stride_;
    ConvGeom geom_{};
    Tensor<T> x_cache_;
};

/// 3D transposed convolution (SAME, output = input * stride). Implemented as
/// the adjoint of Conv3d. Weight layout (in_ch, out_ch, k, k, k).
template <typename T>
class ConvTranspose3d {
public:
    ConvTranspose3d(std::string name, int64_t in_ch, int64_t out_ch, int64_t kernel, int64_t stride)
        : in_ch_(in_ch), out_ch_(out_ch), kernel_(kernel), stride_(stride) {
        weight.name = name + ".weight";
        bias.name = name + ".bias";
        weight.init_shape({in_ch, out_ch, kernel, kernel, kernel});
        bias.init_shape({out_ch});
    }

    void init_he(RngStream& rng) { he_normal_init(weight, in_ch_ * kernel_ * kernel_ * kernel_, rng); }

    Tensor<T> forward(const Tensor<T>& x, bool cache) {
        const int64_t n = x.dim(0);
        if (x.dim(1) != in_ch_)
            throw std::invalid_argument(weight.name + ": expected " + std::to_string(in_ch_) +
                                        " input channels, got " + std::to_string(x.dim(1)));
        geom_ = ConvGeom::same_transposed(kernel_, stride_, detail::spatial_of(x.shape()));
        Tensor<T> y({n, out_ch_, geom_.big[0], geom_.big[1], geom_.big[2]});
        const int64_t rows = out_ch_ * kernel_ * kernel_ * kernel_;
        const int64_t cols = geom_.small_count();  // == input voxels
        const int64_t bigv = geom_.big_count();
        const int64_t chunk = detail::chunk_columns(rows, sizeof(T));
        std::vector<T> col(static_cast<std::size_t>(rows * std::min(chunk, cols)));
        detail::CMatMapRM<T> wmat(weight.value.data(), in_ch_, rows);
        for (int64_t i = 0; i < n; ++i) {
            const T* xin = x.data() + i * in_ch_ * cols;
            T* yout = y.data() + i * out_ch_ * bigv;
            for (int64_t p0 = 0; p0 < cols; p0 += chunk) {
                const int64_t p1 = std::min(p0 + chunk, cols);
                detail::CStridedMapRM<T> xmat(xin + p0, in_ch_, p1 - p0,
                                              Eigen::OuterStride<Eigen::Dynamic>(cols));
                detail::MatMapCM<T> cmat(col.data(), rows, p1 - p0);
                cmat.noalias() = wmat.transpose() * xmat;
                detail::col2im_add_chunk(col.data(), out_ch_, geom_, p0, p1, yout);
            }
            for (int64_t c = 0; c < out_ch_; ++c) {
                T* row = yout + c * bigv;
                const T b = bias.value[c];
                for (int64_t p = 0; p < bigv; ++p) row[p] += b;
            }
        }
        if (cache) x_cache_ = x;
        return y;
    }

    Tensor<T> backward(const Tensor<T>& dy) {
        const Tensor<T>& x = x_cache_;
        const int64_t n = x.dim(0);
        Tensor<T> dx = Tensor<T>::zeros_like(x);
        const int64_t rows = out_ch_ * kernel_ * kernel_ * kernel_;
        const int64_t cols = geom_.small_count();
        const int64_t bigv = geom_.big_count();
        const int64_t chunk = detail::chunk_columns(rows, sizeof(T));
        std::vector<T> col(static_cast<std::size_t>(rows * std::min(chunk, cols)));
        detail::CMatMapRM<T> wmat(weight.value.data(), in_ch_, rows);
        detail::MatMapRM<T> dwmat(weight.grad.data(), in_ch_, rows);
        for (int64_t i = 0; i < n; ++i) {
            const T* xin = x.data() + i * in_ch_ * cols;
            T* dxout = dx.data() + i * in_ch_ * cols;
            const T* dyin = dy.data() + i * out_ch_ * bigv;
            for (int64_t p0 = 0; p0 < cols; p0 += chunk) {
                const int64_t p1 = std::min(p0 + chunk, cols);
                detail::im2col_chunk(dyin, out_ch_, geom_, p0, p1, col.data());
                detail::CMatMapCM<T> cmat(col.data(), rows, p1 - p0);
                detail::StridedMapRM<T> dxmat(dxout + p0, in_ch_, p1 - p0,
                                              Eigen::OuterStride<Eigen::Dynamic>(cols));
                dxmat.noalias() = wmat * cmat;
                detail::CStridedMapRM<T> xmat(xin + p0, in_ch_, p1 - p0,
                                              Eigen::OuterStride<Eigen::Dynamic>(cols));
                dwmat.noalias() += xmat * cmat.transpose();
            }
            for (int64_t c = 0; c < out_ch_; ++c) {
                const T* row = dyin + c * bigv;
                T acc{};
                for (int64_t p = 0; p < bigv; ++p) acc += row[p];
                bias.grad[c] += acc;
            }
        }
        return dx;
    }

    void release_cache() { x_cache_ = Tensor<T>(); }

    int64_t in_channels() const { return in_ch_; }
    int64_t out_channels() const { return out_ch_; }

    Parameter<T> weight;
    Parameter<T> bias;

private:
    int64_t in_ch_, out_ch_, kernel_, stride_;
    ConvGeom geom_{};
    Tensor<T> x_cache_;
};

/// Instance normalization: per sample and channel over spatial dims, with
/// learnable affine scale/shift.
template <typename T>
class InstanceNorm3d {
public:
    InstanceNorm3d(std::string name, int64_t channels, double eps = 1e-5)
        : channels_(channels), eps_(eps) {
        gamma.name = name + ".gamma";
        beta.name = name + ".beta";
        gamma.init_shape({channels});
        beta.init_shape({channels});
        gamma.value.fill(T{1});
    }

    Tensor<T> forward(const Tensor<T>& x, bool cache) {
        const int64_t n = x.dim(0), c = x.dim(1);
        const int64_t v = x.dim(2) * x.dim(3) * x.dim(4);
        Tensor<T> y = Tensor<T>::zeros_like(x);
        if (cache) {
            xhat_ = Tensor<T>::zeros_like(x);
            inv_std_.assign(static_cast<std::size_t>(n * c), 0.0);
        }
        for (int64_t i = 0; i < n; ++i) {
            for (int64_t ch = 0; ch < c; ++ch) {
                const T* xp = x.data() + (i * c + ch) * v;
                T* yp = y.data() + (i * c + ch) * v;
                double mean = 0.0;
                for (int64_t p = 0; p < v; ++p) mean += static_cast<double>(xp[p]);
                mean /= static_cast<double>(v);
                double var = 0.0;
                for (int64_t p = 0; p < v; ++p) {
                    const double d = static_cast<double>(xp[p]) - mean;
                    var += d * d;
                }
                var /= static_cast<double>(v);
                const double inv_std = 1.0 / std::sqrt(var + eps_);
                const double g = static_cast<double>(gamma.value[ch]);
                const double b = static_cast<double>(beta.value[ch]);
                T* xh = cache ? xhat_.data() + (i * c + ch) * v : nullptr;
                for (int64_t p = 0; p < v; ++p) {
                    const double h = (static_cast<double>(xp[p]) - mean) * inv_std;
                    if (xh) xh[p] = static_cast<T>(h);
                    yp[p] = static_cast<T>(g * h + b);
                }
                if (cache) inv_std_[static_cast<std::size_t>(i * c + ch)] = inv_std;
            }
        }
        return y;
    }

    Tensor<T> backward(const Tensor<T>& dy) {
        const int64_t n = dy.dim(0), c = dy.dim(1);
        const int64_t v = dy.dim(2) * dy.dim(3) * dy.dim(4);
        Tensor<T> dx = Tensor<T>::zeros_like(dy);
        for (int64_t i = 0; i < n; ++i) {
            for (int64_t ch = 0; ch < c; ++ch) {
                const T* dyp = dy.data() + (i * c + ch) * v;
                const T* xh = xhat_.data() + (i * c + ch) * v;
                T* dxp = dx.data() + (i * c + ch) * v;
                double sum_dy = 0.0, sum_dyxh = 0.0;
                for (int64_t p = 0; p < v; ++p) {
                    sum_dy += static_cast<double>(dyp[p]);
                    sum_dyxh += static_cast<double>(dyp[p]) * static_cast<double>(xh[p]);
                }
                gamma.grad[ch] += static_cast<T>(sum_dyxh);
                beta.grad[ch] += static_cast<T>(sum_dy);
                const double g = static_cast<double>(gamma.value[ch]);
                const double inv_std = inv_std_[static_cast<std::size_t>(i * c + ch)];
                const double mean_dy = sum_dy / static_cast<double>(v);
                const double mean_dyxh = sum_dyxh / static_cast<double>(v);
                for (int64_t p = 0; p < v; ++p) {
                    const double t = static_cast<double>(dyp[p]) - mean_dy -
                                     static_cast<double>(xh[p]) * mean_dyxh;
                    dxp[p] = static_cast<T>(g * inv_std * t);
                }
            }
        }
        return dx;
    }

    void release_cache() {
        xhat_ = Tensor<T>();
        inv_std_.clear();
    }

    Parameter<T> gamma;
    Parameter<T> beta;

private:
    int64_t channels_;
    double eps_;
    Tensor<T> xhat_;
    std::vector<double> inv_std_;
};

/// Leaky ReLU; slope 0 gives plain ReLU.
template <typename T>
class LeakyReLU {
public:
    explicit LeakyReLU(double slope) : slope_(static_cast<T>(slope)) {}

    Tensor<T> forward(const Tensor<T>& x, bool cache) {
        Tensor<T> y = Tensor<T>::zeros_like(x);
        if (cache) mask_.assign(static_cast<std::size_t>(x.numel()), 0);
        for (int64_t i = 0; i < x.numel(); ++i) {
            const bool pos = x[i] > T{};
            y[i] = pos ? x[i] : slope_ * x[i];
            if (cache) mask_[static_cast<std::size_t>(i)] = pos;
        }
        return y;
    }

    Tensor<T> backward(const Tensor<T>& dy) {
        Tensor<T> dx = Tensor<T>::zeros_like(dy);
        for (int64_t i = 0; i < dy.numel(); ++i)
            dx[i] = mask_[static_cast<std::size_t>(i)] ? dy[i] : slope_ * dy[i];
        return dx;
    }

    void release_cache() { mask_.clear(); }

private:
    T slope_;
    std::vector<std::uint8_t> mask_;
};

/// Inverted dropout; identity outside training.
template <typename T>
class Dropout {
public:
    explicit Dropout(double p) : p_(p) {}

    Tensor<T> forward(const Tensor<T>& x, bool train, RngStream* rng) {
        if (!train || p_ <= 0.0) return x;
        const T scale = static_cast<T>(1.0 / (1.0 - p_));
        mask_.assign(static_cast<std::size_t>(x.numel()), 0);
        Tensor<T> y = Tensor<T>::zeros_like(x);
        for (int64_t i = 0; i < x.numel(); ++i) {
            const bool keep = !rng->bernoulli(p_);
            mask_[static_cast<std::size_t>(i)] = keep;
            y[i] = keep ? x[i] * scale : T{};
        }
        return y;
    }

    Tensor<T> backward(const Tensor<T>& dy) {
        if (p_ <= 0.0) return dy;
        const T scale = static_cast<T>(1.0 / (1.0 - p_));
        Tensor<T> dx = Tensor<T>::zeros_like(dy);
        for (int64_t i = 0; i < dy.numel(); ++i)
            dx[i] = mask_[static_cast<std::size_t>(i)] ? dy[i] * scale : T{};
        return dx;
    }

    void release_cache() { mask_.clear(); }

    double rate() const { return p_; }

private:
    double p_;
    std::vector<std::uint8_t> mask_;
};

/// Per-voxel softmax over the channel axis of an (N,C,X,Y,Z) tensor.
template <typename T>
class ChannelSoftmax {
public:
    Tensor<T> forward(const Tensor<T>& x, bool cache) {
        const int64_t n = x.dim(0), c = x.dim(1);
        const int64_t v = x.dim(2) * x.dim(3) * x.dim(4);
        Tensor<T> y = Tensor<T>::zeros_like(x);
        for (int64_t i = 0; i < n; ++i) {
            const T* xb = x.data() + i * c * v;
            T* yb = y.data() + i * c * v;
            for (int64_t p = 0; p < v; ++p) {
                double mx = -1e300;
                for (int64_t ch = 0; ch < c; ++ch)
                    mx = std::max(mx, static_cast<double>(xb[ch * v + p]));
                double denom = 0.0;
                for (int64_t ch = 0; ch < c; ++ch)
                    denom += std::exp(static_cast<double>(xb[ch * v + p]) - mx);
                for (int64_t ch = 0; ch < c; ++ch)
                    yb[ch * v + p] =
                        static_cast<T>(std::exp(static_cast<double>(xb[ch * v + p]) - mx) / denom);
            }
        }
        if (cache) y_cache_ = y;
        return y;
    }

    Tensor<T> backward(const Tensor<T>& dy) {
        const Tensor<T>& y = y_cache_;
        const int64_t n = dy.dim(0), c = dy.dim(1);
        const int64_t v = dy.dim(2) * dy.dim(3) * dy.dim(4);
        Tensor<T> dx = Tensor<T>::zeros_like(dy);
        for (int64_t i = 0; i < n; ++i) {
            const T* dyb = dy.data() + i * c * v;
            const T* yb = y.data() + i * c * v;
            T* dxb = dx.data() + i * c * v;
            for (int64_t p = 0; p < v; ++p) {
                double dot = 0.0;
                for (int64_t ch = 0; ch < c; ++ch)
                    dot += static_cast<double>(dyb[ch * v + p]) * static_cast<double>(yb[ch * v + p]);
                for (int64_t ch = 0; ch < c; ++ch)
                    dxb[ch * v + p] = static_cast<T>(static_cast<double>(yb[ch * v + p]) *
                                                     (static_cast<double>(dyb[ch * v + p]) - dot));
            }
        }
        return dx;
    }

    void release_cache() { y_cache_ = Tensor<T>(); }

private:
    Tensor<T> y_cache_;
};

/// Concatenate (N,C,X,Y,Z) tensors along the channel axis.
template <typename T>
Tensor<T> concat_channels(const std::vector<const Tensor<T>*>& parts) {
    const Shape& s0 = parts.front()->shape();
    int64_t ctotal = 0;
    for (const auto* p : parts) ctotal += p->dim(1);
    Tensor<T> out({s0[0], ctotal, s0[2], s0[3], s0[4]});
    const int64_t v = s0[2] * s0[3] * s0[4];
    const int64_t n = s0[0];
    for (int64_t i = 0; i < n; ++i) {
        int64_t coff = 0;
        for (const auto* p : parts) {
            const int64_t pc = p->dim(1);
            std::copy_n(p->data() + i * pc * v, pc * v, out.data() + (i * ctotal + coff) * v);
            coff += pc;
        }
    }
    return out;
}

template <typename T>
Tensor<T> slice_channels(const Tensor<T>& x, int64_t c0, int64_t len) {
    const Shape& s = x.shape();
    Tensor<T> out({s[0], len, s[2], s[3], s[4]});
    const int64_t v = s[2] * s[3] * s[4];
    for (int64_t i = 0; i < s[0]; ++i)
        std::copy_n(x.data() + (i * s[1] + c0) * v, len * v, out.data() + i * len * v);
    return out;
}

/// dst += src[:, c0:c0+dst_channels]; used to route concat gradients.
template <typename T>
void add_channel_slice(Tensor<T>& dst, const Tensor<T>& src, int64_t c0) {
    const int64_t n = dst.dim(0), dc = dst.dim(1), sc = src.dim(1);
    const int64_t v = dst.dim(2) * dst.dim(3) * dst.dim(4);
    for (int64_t i = 0; i < n; ++i) {
        T* d = dst.data() + i * dc * v;
        const T* s = src.data() + (i * sc + c0) * v;
        for (int64_t j = 0; j < dc * v; ++j) d[j] += s[j];
    }
}

}  // namespace vox2seg::nn

#endif  // VOX2SEG_NN_HPP
