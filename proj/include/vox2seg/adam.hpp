#ifndef VOX2SEG_ADAM_HPP
#define VOX2SEG_ADAM_HPP

#include <cmath>
#include <cstdint>
#include <vector>

#include "vox2seg/nn.hpp"
#include "vox2seg/tensor.hpp"

namespace vox2seg::nn {

struct AdamConfig {
    double lr = 2e-4;
    double beta1 = 0.5;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Adam with bias correction over a fixed set of parameters. Moment buffers
/// are indexed by registration order, so register parameters once, up front.
template <typename T>
class Adam {
public:
    explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

    void register_params(const std::vector<Parameter<T>*>& params) {
        params_ = params;
        m_.clear();
        v_.clear();
        for (auto* p : params_) {
            m_.emplace_back(std::vector<double>(static_cast<std::size_t>(p->value.numel()), 0.0));
            v_.emplace_back(std::vector<double>(static_cast<std::size_t>(p->value.numel()), 0.0));
        }
        t_ = 0;
    }

    void zero_grad() {
        for (auto* p : params_) p->zero_grad();
    }

    void step() {
        ++t_;
        const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
        for (std::size_t i = 0; i < params_.size(); ++i) {
            Parameter<T>& p = *params_[i];
            auto& m = m_[i];
            auto& v = v_[i];
            for (std::int64_t j = 0; j < p.value.numel(); ++j) {
                const double g = static_cast<double>(p.grad[j]);
                m[static_cast<std::size_t>(j)] =
                    cfg_.beta1 * m[static_cast<std::size_t>(j)] + (1.0 - cfg_.beta1) * g;
                v[static_cast<std::size_t>(j)] =
                    cfg_.beta2 * v[static_cast<std::size_t>(j)] + (1.0 - cfg_.beta2) * g * g;
                const double mhat = m[static_cast<std::size_t>(j)] / bc1;
                const double vhat = v[static_cast<std::size_t>(j)] / bc2;
                p.value[j] = static_cast<T>(static_cast<double>(p.value[j]) -
                                            cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps));
            }
        }
    }

    std::int64_t steps_taken() const { return t_; }
    const AdamConfig& config() const { return cfg_; }

private:
    AdamConfig cfg_;
    std::vector<Parameter<T>*> params_;
    std::vector<std::vector<double>> m_;
    std::vector<std::vector<double>> v_;
    std::int64_t t_ = 0;
};

}  // namespace vox2seg::nn

#endif  // VOX2SEG_ADAM_HPP
