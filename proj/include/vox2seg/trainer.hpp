#ifndef VOX2SEG_TRAINER_HPP
#define VOX2SEG_TRAINER_HPP

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "vox2seg/adam.hpp"
#include "vox2seg/augment.hpp"
#include "vox2seg/checkpoint.hpp"
#include "vox2seg/dataset.hpp"
#include "vox2seg/discriminator.hpp"
#include "vox2seg/generator.hpp"
#include "vox2seg/losses.hpp"
#include "vox2seg/metrics.hpp"
#include "vox2seg/rng.hpp"
#include "vox2seg/volume.hpp"

namespace vox2seg {

struct TrainConfig {
    nn::AdamConfig adam{};  // lr 2e-4, beta1 0.5, beta2 0.999
    std::int64_t batch_size = 2;
    std::int64_t epochs = 30;
    std::int64_t samples_per_subject = 1;  // patches drawn from each subject per epoch
    double alpha = 5.0;
    double gdl_eps = 1e-6;
    std::uint64_t seed = 0;
    std::int64_t folds = 3;  // M
    GeneratorConfig generator{};
    DiscriminatorConfig discriminator{};
    AugmentationConfig augmentation{};
};

struct StepRecord {
    double l_d = 0, l_g = 0, adversarial = 0, gdl = 0;
};

struct EpochRecord {
    std::int64_t fold = 0, epoch = 0, step = 0;  // step: cumulative batch count
    double l_d = 0, l_g = 0, adversarial = 0, gdl = 0;
    double val_dice_wt = 0, val_dice_tc = 0, val_dice_et = 0;
    double wall_time = 0;  // seconds spent in this epoch
};

struct FoldSplit {
    std::int64_t fold = 0;
    std::vector<std::string> train_ids;
    std::vector<std::string> val_ids;
};

/// Deterministic balanced partition: shuffle by seed, deal round-robin.
inline std::vector<FoldSplit> make_folds(std::vector<std::string> ids, std::int64_t m,
                                         std::uint64_t seed) {
    if (m < 2) throw std::invalid_argument("make_folds: need at least 2 folds");
    if (m > static_cast<std::int64_t>(ids.size()))
        throw std::invalid_argument("make_folds: more folds than subjects");
    std::mt19937_64 gen(derive_seed(seed, 0xf01d));
    std::shuffle(ids.begin(), ids.end(), gen);
    std::vector<FoldSplit> folds(static_cast<std::size_t>(m));
    for (std::int64_t k = 0; k < m; ++k) folds[static_cast<std::size_t>(k)].fold = k;
    for (std::size_t i = 0; i < ids.size(); ++i)
        folds[i % static_cast<std::size_t>(m)].val_ids.push_back(ids[i]);
    for (std::int64_t k = 0; k < m; ++k)
        for (std::size_t i = 0; i < ids.size(); ++i)
            if (i % static_cast<std::size_t>(m) != static_cast<std::size_t>(k))
                folds[static_cast<std::size_t>(k)].train_ids.push_back(ids[i]);
    return folds;
}

/// Newline-delimited structured log; one record per epoch plus event records
/// (e.g. the non-finite-loss diagnostic).
class TrainLogger {
public:
    TrainLogger() = default;
    explicit TrainLogger(const std::string& path) {
        if (!path.empty()) {
            os_.open(path);
            if (!os_) throw std::runtime_error("cannot write training log: " + path);
        }
    }

    void epoch(const EpochRecord& r) {
        if (!os_.is_open()) return;
        os_ << "{\"fold\":" << r.fold << ",\"epoch\":" << r.epoch << ",\"step\":" << r.step
            << num("L_D", r.l_d) << num("L_G", r.l_g) << num("adversarial", r.adversarial)
            << num("GDL", r.gdl) << num("val_dice_WT", r.val_dice_wt)
            << num("val_dice_TC", r.val_dice_tc) << num("val_dice_ET", r.val_dice_et)
            << num("wall_time", r.wall_time) << "}\n"
            << std::flush;
    }

    void event(std::int64_t fold, std::int64_t epoch, std::int64_t step, const std::string& kind,
               const StepRecord& r) {
        if (!os_.is_open()) return;
        os_ << "{\"fold\":" << fold << ",\"epoch\":" << epoch << ",\"step\":" << step
            << ",\"event\":\"" << kind << "\"" << num("L_D", r.l_d) << num("L_G", r.l_g)
            << num("adversarial", r.adversarial) << num("GDL", r.gdl) << "}\n"
            << std::flush;
    }

private:
    static std::string num(const char* key, double v) {
        std::ostringstream s;
        s << ",\"" << key << "\":";
        if (std::isfinite(v))
            s << std::setprecision(17) << v;
        else
            s << "\"" << (std::isnan(v) ? "nan" : (v > 0 ? "inf" : "-inf")) << "\"";
        return s.str();
    }
    std::ofstream os_;
};

/// One adversarial optimization step on a batch: a discriminator update with
/// the generator output held constant, then a generator update with the
/// (updated) discriminator held constant.
template <typename T>
StepRecord train_step(Generator<T>& gen, Discriminator<T>& disc, const Tensor<T>& x,
                      const Tensor<T>& y, const LossConfig& loss_cfg, nn::Adam<T>& adam_g,
                      nn::Adam<T>& adam_d, RngStream& rng) {
    StepRecord rec;

    Tensor<T> yhat = gen.forward(x, true, &rng);  // activations cached for the G update below

    // --- discriminator update: least-squares targets, real -> 1, fake -> 0
    adam_d.zero_grad();
    Tensor<T> d_real = disc.forward(x, y, true);
    double l_real = 0;
    {
        const std::int64_t n = d_real.numel();
        Tensor<T> grad = Tensor<T>::zeros_like(d_real);
        for (std::int64_t i = 0; i < n; ++i) {
            const double d = static_cast<double>(d_real[i]) - 1.0;
            l_real += d * d;
            grad[i] = static_cast<T>(2.0 * d / static_cast<double>(n));
        }
        l_real /= static_cast<double>(n);
        disc.backward(grad);
    }
    Tensor<T> d_fake = disc.forward(x, yhat, true);
    double l_fake = 0;
    {
        const std::int64_t n = d_fake.numel();
        Tensor<T> grad = Tensor<T>::zeros_like(d_fake);
        for (std::int64_t i = 0; i < n; ++i) {
            const double d = static_cast<double>(d_fake[i]);
            l_fake += d * d;
            grad[i] = static_cast<T>(2.0 * d / static_cast<double>(n));
        }
        l_fake /= static_cast<double>(n);
        disc.backward(grad);
    }
    rec.l_d = l_real + l_fake;
    adam_d.step();

    // --- generator update: fool the updated critic + alpha * GDL
    adam_g.zero_grad();
    adam_d.zero_grad();  // discard critic gradients from the pathway below
    Tensor<T> d_fake2 = disc.forward(x, yhat, true);
    rec.adversarial = 0;
    Tensor<T> dscores = Tensor<T>::zeros_like(d_fake2);
    {
        const std::int64_t n = d_fake2.numel();
        for (std::int64_t i = 0; i < n; ++i) {
            const double d = static_cast<double>(d_fake2[i]) - 1.0;
            rec.adversarial += d * d;
            dscores[i] = static_cast<T>(2.0 * d / static_cast<double>(n));
        }
        rec.adversarial /= static_cast<double>(n);
    }
    Tensor<T> dinput = disc.backward(dscores);
    Tensor<T> dyhat = disc.seg_grad(dinput);
    rec.gdl = generalized_dice_loss(y, yhat, loss_cfg.gdl_eps);
    if (loss_cfg.alpha != 0.0) {
        Tensor<T> dgdl = generalized_dice_loss_grad(y, yhat, loss_cfg.gdl_eps);
        for (std::int64_t i = 0; i < dyhat.numel(); ++i)
            dyhat[i] += static_cast<T>(loss_cfg.alpha) * dgdl[i];
    }
    rec.l_g = rec.adversarial + loss_cfg.alpha * rec.gdl;
    gen.backward(dyhat);
    adam_g.step();
    adam_d.zero_grad();

    gen.release_activations();
    disc.release_activations();
    return rec;
}

enum class FitMode { pad, crop };

/// Run the generator on an arbitrary-size volume: fit the grid to a multiple
/// of 2^depth (pad rounds up with zeros, crop takes a centered window, or an
/// explicit internal target overrides both), infer once, and restore the
/// original grid with background probability 1 in any margin.
template <typename T>
OneHotSegmentation<T> predict(Generator<T>& gen, const MultiModalVolume<T>& v,
                              FitMode mode = FitMode::pad,
                              const std::optional<Vec3i>& internal_target = std::nullopt) {
    if (v.rank() != 4) throw std::invalid_argument("predict: expected (C,X,Y,Z) volume");
    const std::int64_t div = std::int64_t{1} << gen.config().depth;
    const std::int64_t c = v.dim(0);
    const Vec3i src{v.dim(1), v.dim(2), v.dim(3)};
    Vec3i tgt{};
    for (int a = 0; a < 3; ++a) {
        if (src[a] < div)
            throw std::invalid_argument("predict: axis " + std::to_string(a) + " (" +
                                        std::to_string(src[a]) + ") smaller than " +
                                        std::to_string(div));
        if (internal_target) {
            tgt[a] = (*internal_target)[a];
            if (tgt[a] < div || tgt[a] % div != 0)
                throw std::invalid_argument("predict: internal target must be a positive multiple of " +
                                            std::to_string(div));
        } else if (mode == FitMode::pad) {
            tgt[a] = (src[a] + div - 1) / div * div;
        } else {
            tgt[a] = src[a] / div * div;
        }
    }

    // signed centered offset: source coordinate = target coordinate + off
    Vec3i off{};
    for (int a = 0; a < 3; ++a)
        off[a] = src[a] >= tgt[a] ? (src[a] - tgt[a]) / 2 : -((tgt[a] - src[a] + 1) / 2);

    Tensor<T> fitted({1, c, tgt[0], tgt[1], tgt[2]});
    for (std::int64_t ch = 0; ch < c; ++ch)
        for (std::int64_t x = 0; x < tgt[0]; ++x) {
            const std::int64_t sx = x + off[0];
            if (sx < 0 || sx >= src[0]) continue;
            for (std::int64_t y = 0; y < tgt[1]; ++y) {
                const std::int64_t sy = y + off[1];
                if (sy < 0 || sy >= src[1]) continue;
                const std::int64_t z0 = std::max<std::int64_t>(0, -off[2]);
                const std::int64_t z1 = std::min<std::int64_t>(tgt[2], src[2] - off[2]);
                if (z0 >= z1) continue;
                const T* s = v.data() + ((ch * src[0] + sx) * src[1] + sy) * src[2] + z0 + off[2];
                T* d = fitted.data() + ((ch * tgt[0] + x) * tgt[1] + y) * tgt[2] + z0;
                std::copy_n(s, z1 - z0, d);
            }
        }

    Tensor<T> probs = gen.forward(fitted, false, nullptr);

    OneHotSegmentation<T> out({kNumClasses, src[0], src[1], src[2]});
    // margins that the network never saw are background with probability 1
    for (std::int64_t i = 0; i < src[0] * src[1] * src[2]; ++i) out[i] = T{1};
    for (std::int64_t ch = 0; ch < kNumClasses; ++ch)
        for (std::int64_t x = 0; x < tgt[0]; ++x) {
            const std::int64_t sx = x + off[0];
            if (sx < 0 || sx >= src[0]) continue;
            for (std::int64_t y = 0; y < tgt[1]; ++y) {
                const std::int64_t sy = y + off[1];
                if (sy < 0 || sy >= src[1]) continue;
                const std::int64_t z0 = std::max<std::int64_t>(0, -off[2]);
                const std::int64_t z1 = std::min<std::int64_t>(tgt[2], src[2] - off[2]);
                if (z0 >= z1) continue;
                const T* s = probs.data() + ((ch * tgt[0] + x) * tgt[1] + y) * tgt[2] + z0;
                T* d = out.data() + ((ch * src[0] + sx) * src[1] + sy) * src[2] + z0 + off[2];
                std::copy_n(s, z1 - z0, d);
            }
        }
    return out;
}

template <typename T>
struct TrainResult {
    Generator<T> generator;          // best-validation weights
    Discriminator<T> discriminator;  // final weights
    std::vector<EpochRecord> log;
    double best_val_wt = -1.0;
    std::int64_t best_epoch = -1;
};

namespace trainer_detail {

template <typename T>
std::array<double, 3> validation_dice(Generator<T>& gen,
                                      const std::vector<Subject<T>>& val_subjects) {
    double wt = 0, tc = 0, et = 0;
    for (const auto& s : val_subjects) {
        const LabelMap pred = from_categorical(predict(gen, s.image, FitMode::pad));
        const RegionMasks p = remap_regions(pred), g = remap_regions(s.labels);
        wt += dice(p.wt, g.wt);
        tc += dice(p.tc, g.tc);
        et += dice(p.et, g.et);
    }
    const double n = static_cast<double>(val_subjects.size());
    return {wt / n, tc / n, et / n};
}

template <typename T>
std::vector<Tensor<T>> snapshot(const std::vector<nn::Parameter<T>*>& params) {
    std::vector<Tensor<T>> snap;
    snap.reserve(params.size());
    for (const auto* p : params) snap.push_back(p->value);
    return snap;
}

template <typename T>
void restore(const std::vector<nn::Parameter<T>*>& params, const std::vector<Tensor<T>>& snap) {
    for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = snap[i];
}

}  // namespace trainer_detail

/// Train one generator/discriminator pair. Per epoch, every training subject
/// contributes samples_per_subject independently augmented patches; validation
/// Dice is computed on full held-out volumes after each epoch and the best
/// whole-tumor weights are kept (and checkpointed under out_dir when given).
template <typename T>
TrainResult<T> train(const std::vector<Subject<T>>& train_subjects_raw,
                     const std::vector<Subject<T>>& val_subjects_raw, const TrainConfig& cfg,
                     std::int64_t fold_index = 0, const std::string& out_dir = {}) {
    if (train_subjects_raw.empty()) throw std::invalid_argument("train: empty training split");
    if (val_subjects_raw.empty()) throw std::invalid_argument("train: empty validation split");
    if (static_cast<std::int64_t>(train_subjects_raw.size()) < cfg.batch_size)
        throw std::invalid_argument("train: fewer training subjects than the batch size");
    if (cfg.samples_per_subject < 1)
        throw std::invalid_argument("train: samples_per_subject must be at least 1");

    const std::uint64_t base = derive_seed(cfg.seed, 0xBA5E, static_cast<std::uint64_t>(fold_index));

    std::vector<Subject<T>> train_subjects, val_subjects;
    for (const auto& s : train_subjects_raw)
        train_subjects.push_back({s.id, normalize(s.image), s.labels});
    for (const auto& s : val_subjects_raw) val_subjects.push_back({s.id, normalize(s.image), s.labels});

    TrainResult<T> result{Generator<T>(cfg.generator), Discriminator<T>(cfg.discriminator), {}, -1.0, -1};
    result.generator.init(derive_seed(base, 1));
    result.discriminator.init(derive_seed(base, 2));

    nn::Adam<T> adam_g(cfg.adam), adam_d(cfg.adam);
    adam_g.register_params(result.generator.parameters());
    adam_d.register_params(result.discriminator.parameters());
    const LossConfig loss_cfg{cfg.alpha, cfg.gdl_eps};

    TrainLogger logger(out_dir.empty() ? std::string{}
                                       : (std::filesystem::path(out_dir) / "train_log.ndjson").string());
    if (!out_dir.empty()) std::filesystem::create_directories(out_dir);

    std::vector<Tensor<T>> best_weights;
    std::int64_t global_step = 0;
    const Vec3i patch = cfg.augmentation.patch_size;
    const std::int64_t patch_voxels = patch[0] * patch[1] * patch[2];

    for (std::int64_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        std::vector<std::size_t> order;
        order.reserve(train_subjects.size() * static_cast<std::size_t>(cfg.samples_per_subject));
        for (std::int64_t rep = 0; rep < cfg.samples_per_subject; ++rep)
            for (std::size_t i = 0; i < train_subjects.size(); ++i) order.push_back(i);
        std::mt19937_64 shuffle_gen(derive_seed(base, 3, static_cast<std::uint64_t>(epoch)));
        std::shuffle(order.begin(), order.end(), shuffle_gen);

        StepRecord sums;
        std::int64_t steps_this_epoch = 0;
        std::vector<std::pair<MultiModalVolume<T>, LabelMap>> batch;
        auto flush_batch = [&]() {
            if (batch.empty()) return;
            const std::int64_t n = static_cast<std::int64_t>(batch.size());
            Tensor<T> x({n, kNumChannels, patch[0], patch[1], patch[2]});
            Tensor<T> y({n, kNumClasses, patch[0], patch[1], patch[2]});
            for (std::int64_t b = 0; b < n; ++b) {
                std::copy_n(batch[static_cast<std::size_t>(b)].first.data(),
                            kNumChannels * patch_voxels, x.data() + b * kNumChannels * patch_voxels);
                const auto onehot = to_categorical<T>(batch[static_cast<std::size_t>(b)].second);
                std::copy_n(onehot.data(), kNumClasses * patch_voxels,
                            y.data() + b * kNumClasses * patch_voxels);
            }
            batch.clear();
            RngStream step_rng(derive_seed(base, 4, static_cast<std::uint64_t>(global_step + 1)));
            const StepRecord rec =
                train_step(result.generator, result.discriminator, x, y, loss_cfg, adam_g, adam_d,
                           step_rng);
            ++global_step;
            ++steps_this_epoch;
            if (!(std::isfinite(rec.l_d) && std::isfinite(rec.l_g) && std::isfinite(rec.adversarial) &&
                  std::isfinite(rec.gdl))) {
                logger.event(fold_index, epoch, global_step, "non_finite_loss", rec);
                throw std::runtime_error("train: non-finite loss at fold " +
                                         std::to_string(fold_index) + ", epoch " +
                                         std::to_string(epoch) + ", step " +
                                         std::to_string(global_step));
            }
            sums.l_d += rec.l_d;
            sums.l_g += rec.l_g;
            sums.adversarial += rec.adversarial;
            sums.gdl += rec.gdl;
        };

        for (std::size_t k = 0; k < order.size(); ++k) {
            const auto& subj = train_subjects[order[k]];
            // keyed by position so repeated draws of a subject get distinct patches
            RngStream aug_rng(
                derive_seed(base, 5, static_cast<std::uint64_t>(epoch), static_cast<std::uint64_t>(k)));
            auto [av, am] = augment(subj.image, subj.labels, cfg.augmentation, aug_rng);
            batch.emplace_back(extract_patch(av, am, patch, aug_rng));
            if (static_cast<std::int64_t>(batch.size()) == cfg.batch_size) flush_batch();
        }
        flush_batch();  // final partial batch, if any

        const auto val = trainer_detail::validation_dice(result.generator, val_subjects);
        EpochRecord rec;
        rec.fold = fold_index;
        rec.epoch = epoch;
        rec.step = global_step;
        rec.l_d = sums.l_d / static_cast<double>(steps_this_epoch);
        rec.l_g = sums.l_g / static_cast<double>(steps_this_epoch);
        rec.adversarial = sums.adversarial / static_cast<double>(steps_this_epoch);
        rec.gdl = sums.gdl / static_cast<double>(steps_this_epoch);
        rec.val_dice_wt = val[0];
        rec.val_dice_tc = val[1];
        rec.val_dice_et = val[2];
        rec.wall_time =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        result.log.push_back(rec);
        logger.epoch(rec);

        if (val[0] > result.best_val_wt) {
            result.best_val_wt = val[0];
            result.best_epoch = epoch;
            best_weights = trainer_detail::snapshot(result.generator.parameters());
            if (!out_dir.empty()) {
                const auto dir = std::filesystem::path(out_dir);
                save_checkpoint((dir / "generator_best.ckpt").string(),
                                result.generator.parameters());
                std::map<std::string, std::string> meta{
                    {"epoch", std::to_string(epoch)},
                    {"fold", std::to_string(fold_index)},
                    {"val_dice_wt", std::to_string(val[0])},
                    {"seed", std::to_string(cfg.seed)},
                    {"alpha", std::to_string(cfg.alpha)},
                    {"base_filters", std::to_string(cfg.generator.base_filters)},
                    {"git_rev", git_revision()},
                };
                write_metadata((dir / "generator_best.meta").string(), meta);
            }
        }
    }

    if (!best_weights.empty())
        trainer_detail::restore(result.generator.parameters(), best_weights);
    return result;
}

template <typename T>
struct FoldResult {
    FoldSplit split;
    TrainResult<T> result;
};

/// Independent training run per fold; each fold's generator (best-validation
/// weights) is checkpointed under out_dir/fold_<k>/ together with the split.
template <typename T>
std::vector<FoldResult<T>> cross_validate(const std::vector<Subject<T>>& dataset,
                                          const TrainConfig& cfg, const std::string& out_dir = {}) {
    std::vector<std::string> ids;
    for (const auto& s : dataset) ids.push_back(s.id);
    const auto folds = make_folds(ids, cfg.folds, cfg.seed);

    std::vector<FoldResult<T>> results;
    for (const auto& split : folds) {
        std::vector<Subject<T>> train_set, val_set;
        for (const auto& s : dataset) {
            const bool in_val =
                std::find(split.val_ids.begin(), split.val_ids.end(), s.id) != split.val_ids.end();
            (in_val ? val_set : train_set).push_back(s);
        }
        std::string fold_dir;
        if (!out_dir.empty()) {
            fold_dir = (std::filesystem::path(out_dir) / ("fold_" + std::to_string(split.fold)))
                           .string();
            std::filesystem::create_directories(fold_dir);
            std::ostringstream tr, va;
            for (const auto& id : split.train_ids) tr << (tr.tellp() > 0 ? "," : "") << id;
            for (const auto& id : split.val_ids) va << (va.tellp() > 0 ? "," : "") << id;
            write_metadata((std::filesystem::path(fold_dir) / "fold.meta").string(),
                           {{"fold", std::to_string(split.fold)},
                            {"train_ids", tr.str()},
                            {"val_ids", va.str()}});
        }
        results.push_back({split, train<T>(train_set, val_set, cfg, split.fold, fold_dir)});
    }
    return results;
}

}  // namespace vox2seg

#endif  // VOX2SEG_TRAINER_HPP
