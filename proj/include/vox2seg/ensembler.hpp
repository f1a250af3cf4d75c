#ifndef VOX2SEG_ENSEMBLER_HPP
#define VOX2SEG_ENSEMBLER_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "vox2seg/adam.hpp"
#include "vox2seg/dataset.hpp"
#include "vox2seg/losses.hpp"
#include "vox2seg/nn.hpp"
#include "vox2seg/rng.hpp"
#include "vox2seg/trainer.hpp"
#include "vox2seg/volume.hpp"

namespace vox2seg {

struct EnsemblerConfig {
    std::int64_t models = 3;  // M: number of per-fold generators being fused
    std::int64_t kernel = 3;
    std::int64_t epochs = 100;
    std::int64_t patience = 10;  // epochs without validation improvement before stopping
    double center = 0.5;         // subtracted from stacked probabilities
    nn::AdamConfig adam{};
    double gdl_eps = 1e-6;
};

/// Concatenate the M per-fold class-probability maps (fold order) into one
/// (1, 4M, X, Y, Z) tensor and center them around zero.
template <typename T>
Tensor<T> stack_predictions(const std::vector<OneHotSegmentation<T>>& probs, double center = 0.5) {
    if (probs.empty()) throw std::invalid_argument("stack_predictions: no inputs");
    for (const auto& p : probs) {
        if (p.rank() != 4 || p.dim(0) != kNumClasses)
            throw std::invalid_argument("stack_predictions: expected (4,X,Y,Z) probability maps");
        check_same_shape(p, probs.front(), "stack_predictions");
    }
    const std::int64_t m = static_cast<std::int64_t>(probs.size());
    const std::int64_t per = probs.front().numel();
    Tensor<T> out({1, m * kNumClasses, probs.front().dim(1), probs.front().dim(2), probs.front().dim(3)});
    for (std::int64_t k = 0; k < m; ++k) {
        const Tensor<T>& p = probs[static_cast<std::size_t>(k)];
        T* dst = out.data() + k * per;
        for (std::int64_t i = 0; i < per; ++i) dst[i] = p[i] - static_cast<T>(center);
    }
    return out;
}

/// Voxel-wise fusion head: a single 3x3x3 convolution from the M stacked
/// probability maps to 4 class scores, followed by a channel softmax.
template <typename T = float>
class Ensembler {
public:
    explicit Ensembler(const EnsemblerConfig& cfg = {})
        : cfg_(cfg), conv_("ensembler.fuse", cfg.models * kNumClasses, kNumClasses, cfg.kernel, 1) {
        if (cfg.models < 1) throw std::invalid_argument("Ensembler: need at least one model");
    }

    /// Starts the head at the plain model average: the center tap copies each
    /// class channel with weight 1/M, everything else is zero. Softmax is
    /// shift-invariant, so the initial argmax equals mean-probability voting
    /// and training only has to refine that baseline. The per-model inputs
    /// already differ, so no random symmetry breaking is needed; the seed
    /// steers the training schedule, not the starting point.
    void init(std::uint64_t /*seed*/) {
        const std::int64_t k = cfg_.kernel, in = cfg_.models * kNumClasses;
        const std::int64_t center = (k / 2) * (k * k + k + 1);
        auto& w = conv_.weight.value;
        w.fill(T{});
        for (std::int64_t c = 0; c < kNumClasses; ++c)
            for (std::int64_t m = 0; m < cfg_.models; ++m)
                w[(c * in + m * kNumClasses + c) * k * k * k + center] =
                    static_cast<T>(1.0 / static_cast<double>(cfg_.models));
        conv_.bias.value.fill(T{});
    }

    /// x: (1, 4M, X, Y, Z) centered stacked probabilities -> (1, 4, X, Y, Z).
    Tensor<T> forward(const Tensor<T>& x, bool train = false) {
        if (x.rank() != 5 || x.dim(1) != cfg_.models * kNumClasses)
            throw std::invalid_argument("Ensembler: expected (N," +
                                        std::to_string(cfg_.models * kNumClasses) +
                                        ",X,Y,Z) input");
        Tensor<T> scores = conv_.forward(x, train);
        Tensor<T> probs = softmax_.forward(scores, train);
        if (!train) release_activations();
        return probs;
    }

    Tensor<T> backward(const Tensor<T>& dprobs) {
        Tensor<T> dscores = softmax_.backward(dprobs);
        return conv_.backward(dscores);
    }

    std::vector<nn::Parameter<T>*> parameters() { return {&conv_.weight, &conv_.bias}; }

    std::int64_t count_parameters() const {
        return conv_.weight.value.numel() + conv_.bias.value.numel();
    }

    void release_activations() {
        conv_.release_cache();
        softmax_.release_cache();
    }

    const EnsemblerConfig& config() const { return cfg_; }

private:
    EnsemblerConfig cfg_;
    nn::Conv3d<T> conv_;
    nn::ChannelSoftmax<T> softmax_;
};

template <typename T>
struct EnsembleTrainResult {
    Ensembler<T> ensembler;
    std::vector<double> train_loss;  // mean GDL per epoch
    std::vector<double> val_loss;
    double best_val = std::numeric_limits<double>::infinity();
    std::int64_t best_epoch = -1;
    std::int64_t epochs_run = 0;
};

namespace ensemble_detail {

template <typename T>
struct StackedSample {
    Tensor<T> x;  // (1, 4M, X, Y, Z)
    Tensor<T> y;  // (1, 4, X, Y, Z)
};

/// Run every fold generator over a subject and bundle the centered stack with
/// the one-hot reference.
template <typename T>
StackedSample<T> make_sample(std::vector<Generator<T>>& generators, const Subject<T>& subject,
                             double center) {
    std::vector<OneHotSegmentation<T>> probs;
    probs.reserve(generators.size());
    for (auto& g : generators) probs.push_back(predict(g, subject.image, FitMode::pad));
    StackedSample<T> s;
    s.x = stack_predictions(probs, center);
    const auto onehot = to_categorical<T>(subject.labels);
    s.y = onehot.reshaped({1, kNumClasses, onehot.dim(1), onehot.dim(2), onehot.dim(3)});
    return s;
}

}  // namespace ensemble_detail

/// Fit the fusion head on frozen fold generators, minimizing generalized
/// Dice, one subject per optimization step. Stops early after `patience`
/// epochs without validation improvement and restores the best weights.
template <typename T>
EnsembleTrainResult<T> train_ensembler(std::vector<Generator<T>>& generators,
                                       const std::vector<Subject<T>>& train_subjects,
                                       const std::vector<Subject<T>>& val_subjects,
                                       const EnsemblerConfig& cfg, std::uint64_t seed) {
    if (static_cast<std::int64_t>(generators.size()) != cfg.models)
        throw std::invalid_argument("train_ensembler: generator count does not match cfg.models");
    if (train_subjects.empty()) throw std::invalid_argument("train_ensembler: empty training split");
    if (val_subjects.empty()) throw std::invalid_argument("train_ensembler: empty validation split");

    // the generators are frozen, so every stacked input can be computed once
    std::vector<ensemble_detail::StackedSample<T>> train_set, val_set;
    for (const auto& s : train_subjects)
        train_set.push_back(ensemble_detail::make_sample(generators, s, cfg.center));
    for (const auto& s : val_subjects)
        val_set.push_back(ensemble_detail::make_sample(generators, s, cfg.center));

    EnsembleTrainResult<T> result{Ensembler<T>(cfg), {}, {}, std::numeric_limits<double>::infinity(), -1, 0};
    result.ensembler.init(derive_seed(seed, 1));
    nn::Adam<T> adam(cfg.adam);
    adam.register_params(result.ensembler.parameters());

    std::vector<Tensor<T>> best_weights;
    std::int64_t stale = 0;
    for (std::int64_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        std::vector<std::size_t> order(train_set.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::mt19937_64 gen(derive_seed(seed, 2, static_cast<std::uint64_t>(epoch)));
        std::shuffle(order.begin(), order.end(), gen);

        double train_sum = 0;
        for (const std::size_t i : order) {
            const auto& sample = train_set[i];
            adam.zero_grad();
            Tensor<T> probs = result.ensembler.forward(sample.x, true);
            train_sum += generalized_dice_loss(sample.y, probs, cfg.gdl_eps);
            Tensor<T> dprobs = generalized_dice_loss_grad(sample.y, probs, cfg.gdl_eps);
            result.ensembler.backward(dprobs);
            adam.step();
        }
        result.ensembler.release_activations();
        result.train_loss.push_back(train_sum / static_cast<double>(train_set.size()));

        double val_sum = 0;
        for (const auto& sample : val_set) {
            Tensor<T> probs = result.ensembler.forward(sample.x, false);
            val_sum += generalized_dice_loss(sample.y, probs, cfg.gdl_eps);
        }
        const double val = val_sum / static_cast<double>(val_set.size());
        result.val_loss.push_back(val);
        result.epochs_run = epoch;

        if (val < result.best_val - 1e-9) {
            result.best_val = val;
            result.best_epoch = epoch;
            best_weights.clear();
            for (const auto* p : result.ensembler.parameters()) best_weights.push_back(p->value);
            stale = 0;
        } else if (++stale >= cfg.patience) {
            break;
        }
    }

    if (!best_weights.empty()) {
        auto params = result.ensembler.parameters();
        for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = best_weights[i];
    }
    return result;
}

/// Full-fusion inference: per-fold generator predictions, stacked and passed
/// through the trained head. Returns a (4,X,Y,Z) probability map.
template <typename T>
OneHotSegmentation<T> ensemble_predict(std::vector<Generator<T>>& generators,
                                       Ensembler<T>& ensembler, const MultiModalVolume<T>& image,
                                       double center = 0.5) {
    std::vector<OneHotSegmentation<T>> probs;
    probs.reserve(generators.size());
    for (auto& g : generators) probs.push_back(predict(g, image, FitMode::pad));
    Tensor<T> stacked = stack_predictions(probs, center);
    Tensor<T> fused = ensembler.forward(stacked, false);
    return fused.reshaped({kNumClasses, fused.dim(2), fused.dim(3), fused.dim(4)});
}

}  // namespace vox2seg

#endif  // VOX2SEG_ENSEMBLER_HPP
