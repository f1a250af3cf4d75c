#ifndef VOX2SEG_LOSSES_HPP
#define VOX2SEG_LOSSES_HPP

#include <cstdint>
#include <stdexcept>
#include <utility>
#include <vector>

#include "vox2seg/tensor.hpp"

namespace vox2seg {

struct LossConfig {
    double alpha = 5.0;  // GDL weight in the generator objective
    double gdl_eps = 1e-6;
};

namespace loss_detail {

/// Per-class sums over the whole batch for (C,X,Y,Z) or (N,C,X,Y,Z) fields.
/// Returns {classes, per-class voxel count, per-class base offsets}.
template <typename T>
struct ClassView {
    std::int64_t classes;
    std::int64_t samples;
    std::int64_t voxels;  // spatial voxels per (sample, class) block
    const Tensor<T>* t;

    const T* block(std::int64_t n, std::int64_t c) const {
        return t->data() + (n * classes + c) * voxels;
    }
};

template <typename T>
ClassView<T> class_view(const Tensor<T>& t) {
    if (t.rank() == 4) return {t.dim(0), 1, t.dim(1) * t.dim(2) * t.dim(3), &t};
    if (t.rank() == 5) return {t.dim(1), t.dim(0), t.dim(2) * t.dim(3) * t.dim(4), &t};
    throw std::invalid_argument("loss: expected (C,X,Y,Z) or (N,C,X,Y,Z) tensor");
}

template <typename T>
void check_finite_pair(const Tensor<T>& y, const Tensor<T>& yhat, const char* what) {
    check_same_shape(y, yhat, what);
    if (!y.all_finite() || !yhat.all_finite())
        throw std::invalid_argument(std::string(what) + ": non-finite input");
}

/// Shared accumulators for the generalized dice loss and its gradient.
template <typename T>
struct GdlSums {
    std::vector<double> w, inter, total;  // per class
    double num = 0.0, den = 0.0;
};

template <typename T>
GdlSums<T> gdl_sums(const Tensor<T>& y, const Tensor<T>& yhat, double eps) {
    const auto yv = class_view(y);
    GdlSums<T> s;
    s.w.assign(static_cast<std::size_t>(yv.classes), 0.0);
    s.inter.assign(static_cast<std::size_t>(yv.classes), 0.0);
    s.total.assign(static_cast<std::size_t>(yv.classes), 0.0);
    const auto hv = class_view(yhat);
    for (std::int64_t c = 0; c < yv.classes; ++c) {
        double vol = 0.0, inter = 0.0, total = 0.0;
        for (std::int64_t n = 0; n < yv.samples; ++n) {
            const T* yp = yv.block(n, c);
            const T* hp = hv.block(n, c);
            for (std::int64_t i = 0; i < yv.voxels; ++i) {
                const double a = static_cast<double>(yp[i]), b = static_cast<double>(hp[i]);
                vol += a;
                inter += a * b;
                total += a + b;
            }
        }
        const double w = 1.0 / (vol * vol + eps);
        s.w[static_cast<std::size_t>(c)] = w;
        s.inter[static_cast<std::size_t>(c)] = inter;
        s.total[static_cast<std::size_t>(c)] = total;
        s.num += w * inter;
        s.den += w * total;
    }
    return s;
}

}  // namespace loss_detail

/// Generalized dice loss over the whole batch jointly, background class
/// included; class weights are inverse squared ground-truth volumes.
template <typename T>
double generalized_dice_loss(const Tensor<T>& y, const Tensor<T>& yhat, double eps = 1e-6) {
    loss_detail::check_finite_pair(y, yhat, "generalized_dice_loss");
    const auto s = loss_detail::gdl_sums(y, yhat, eps);
    return s.den == 0.0 ? 0.0 : 1.0 - 2.0 * s.num / s.den;
}

/// d GDL / d yhat, same shape as yhat.
template <typename T>
Tensor<T> generalized_dice_loss_grad(const Tensor<T>& y, const Tensor<T>& yhat, double eps = 1e-6) {
    loss_detail::check_finite_pair(y, yhat, "generalized_dice_loss");
    const auto s = loss_detail::gdl_sums(y, yhat, eps);
    Tensor<T> g = Tensor<T>::zeros_like(yhat);
    if (s.den == 0.0) return g;
    const auto yv = loss_detail::class_view(y);
    const double den2 = s.den * s.den;
    for (std::int64_t c = 0; c < yv.classes; ++c) {
        const double w = s.w[static_cast<std::size_t>(c)];
        for (std::int64_t n = 0; n < yv.samples; ++n) {
            const T* yp = yv.block(n, c);
            T* gp = g.data() + (n * yv.classes + c) * yv.voxels;
            for (std::int64_t i = 0; i < yv.voxels; ++i) {
                const double dnum = w * static_cast<double>(yp[i]);
                gp[i] = static_cast<T>(-2.0 * (dnum * s.den - s.num * w) / den2);
            }
        }
    }
    return g;
}

/// Least-squares critic objective: mean((d_real-1)^2) + mean(d_fake^2).
template <typename T>
double discriminator_loss(const Tensor<T>& d_real, const Tensor<T>& d_fake) {
    check_same_shape(d_real, d_fake, "discriminator_loss");
    const std::int64_t n = d_real.numel();
    double real = 0.0, fake = 0.0;
    for (std::int64_t i = 0; i < n; ++i) {
        const double r = static_cast<double>(d_real[i]) - 1.0;
        const double f = static_cast<double>(d_fake[i]);
        real += r * r;
        fake += f * f;
    }
    return real / static_cast<double>(n) + fake / static_cast<double>(n);
}

/// Gradients of discriminator_loss w.r.t. (d_real, d_fake).
template <typename T>
std::pair<Tensor<T>, Tensor<T>> discriminator_loss_grad(const Tensor<T>& d_real,
                                                        const Tensor<T>& d_fake) {
    check_same_shape(d_real, d_fake, "discriminator_loss");
    const std::int64_t n = d_real.numel();
    Tensor<T> gr = Tensor<T>::zeros_like(d_real);
    Tensor<T> gf = Tensor<T>::zeros_like(d_fake);
    const double inv = 1.0 / static_cast<double>(n);
    for (std::int64_t i = 0; i < n; ++i) {
        gr[i] = static_cast<T>(2.0 * (static_cast<double>(d_real[i]) - 1.0) * inv);
        gf[i] = static_cast<T>(2.0 * static_cast<double>(d_fake[i]) * inv);
    }
    return {std::move(gr), std::move(gf)};
}

struct GeneratorLossParts {
    double total = 0.0;
    double adversarial = 0.0;
    double gdl = 0.0;
};

/// Generator objective: mean((d_fake-1)^2) + alpha * GDL(y, yhat).
template <typename T>
GeneratorLossParts generator_loss(const Tensor<T>& d_fake, const Tensor<T>& y,
                                  const Tensor<T>& yhat, const LossConfig& cfg = {}) {
    if (cfg.alpha < 0.0) throw std::invalid_argument("generator_loss: negative alpha");
    GeneratorLossParts parts;
    const std::int64_t n = d_fake.numel();
    double adv = 0.0;
    for (std::int64_t i = 0; i < n; ++i) {
        const double d = static_cast<double>(d_fake[i]) - 1.0;
        adv += d * d;
    }
    parts.adversarial = adv / static_cast<double>(n);
    parts.gdl = generalized_dice_loss(y, yhat, cfg.gdl_eps);
    parts.total = parts.adversarial + cfg.alpha * parts.gdl;
    return parts;
}

/// d mean((d_fake-1)^2) / d d_fake — the adversarial part of the generator
/// objective (the GDL part comes from generalized_dice_loss_grad).
template <typename T>
Tensor<T> generator_adversarial_grad(const Tensor<T>& d_fake) {
    const std::int64_t n = d_fake.numel();
    Tensor<T> g = Tensor<T>::zeros_like(d_fake);
    const double inv = 1.0 / static_cast<double>(n);
    for (std::int64_t i = 0; i < n; ++i)
        g[i] = static_cast<T>(2.0 * (static_cast<double>(d_fake[i]) - 1.0) * inv);
    return g;
}

}  // namespace vox2seg

#endif  // VOX2SEG_LOSSES_HPP
