#ifndef VOX2SEG_RUN_CONFIG_HPP
#define VOX2SEG_RUN_CONFIG_HPP

#include <array>
#include <cstdint>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>

#include "json.hpp"
#include "vox2seg/ensembler.hpp"
#include "vox2seg/phantom.hpp"
#include "vox2seg/trainer.hpp"

namespace vox2seg {

/// Everything one pipeline run needs: training hyperparameters, fusion-head
/// hyperparameters, synthetic-data geometry, and evaluation/post-processing
/// settings. JSON round-trips losslessly; absent keys keep their defaults.
struct RunConfig {
    TrainConfig train{};
    EnsemblerConfig ensemble{};
    PhantomSpec phantom{};
    std::int64_t num_phantoms = 16;
    std::array<double, 3> spacing{1.0, 1.0, 1.0};
    std::int64_t et_threshold = 1000;  // enhancing-tumor relabel threshold (voxels)
    std::int64_t min_cluster = 0;      // 0 disables small-component removal
    int connectivity = 26;
    FitMode fit = FitMode::pad;
    std::optional<Vec3i> internal_target;  // explicit inference grid, overrides fit

    /// Small-scale profile: base width 8, 32^3 phantoms, 3 folds. Each subject
    /// is sampled four times per epoch so the tiny corpus still yields a usable
    /// optimizer step count, and the elastic field scales with the grid (same
    /// 5^3 control lattice, displacement shrunk with the voxel extent).
    static RunConfig desk() {
        RunConfig c;
        c.train.generator = GeneratorConfig::desk();
        c.train.discriminator = DiscriminatorConfig::desk();
        c.train.augmentation.patch_size = {32, 32, 32};
        c.train.augmentation.elastic_spacing = 8;
        c.train.augmentation.elastic_stddev = 1.25;
        c.train.epochs = 30;
        c.train.samples_per_subject = 4;
        c.train.folds = 3;
        c.phantom.size = {32, 32, 32};
        c.num_phantoms = 16;
        c.ensemble.models = c.train.folds;
        return c;
    }

    /// Full-scale profile: base width 64, 128^3 patches, 10 folds, and a
    /// fixed 160x192x128 internal inference grid.
    static RunConfig paper() {
        RunConfig c;
        c.train.generator = GeneratorConfig::paper();
        c.train.discriminator = DiscriminatorConfig::paper();
        c.train.augmentation.patch_size = {128, 128, 128};
        c.train.epochs = 200;
        c.train.folds = 10;
        c.ensemble.models = c.train.folds;
        c.internal_target = Vec3i{160, 192, 128};
        return c;
    }
};

namespace config_detail {

template <typename T>
void get_if(const nlohmann::json& j, const char* key, T& out) {
    if (j.contains(key)) j.at(key).get_to(out);
}

}  // namespace config_detail

namespace nn {

inline void to_json(nlohmann::json& j, const AdamConfig& c) {
    j = {{"lr", c.lr}, {"beta1", c.beta1}, {"beta2", c.beta2}, {"eps", c.eps}};
}
inline void from_json(const nlohmann::json& j, AdamConfig& c) {
    using config_detail::get_if;
    get_if(j, "lr", c.lr);
    get_if(j, "beta1", c.beta1);
    get_if(j, "beta2", c.beta2);
    get_if(j, "eps", c.eps);
}

}  // namespace nn

inline void to_json(nlohmann::json& j, const AugmentationConfig& c) {
    j = {{"patch_size", c.patch_size},
         {"rotation_max_deg", c.rotation_max_deg},
         {"gamma_gain", c.gamma_gain},
         {"gamma_exponent", c.gamma_exponent},
         {"elastic_stddev", c.elastic_stddev},
         {"elastic_spacing", c.elastic_spacing},
         {"probability", c.probability}};
}
inline void from_json(const nlohmann::json& j, AugmentationConfig& c) {
    using config_detail::get_if;
    get_if(j, "patch_size", c.patch_size);
    get_if(j, "rotation_max_deg", c.rotation_max_deg);
    get_if(j, "gamma_gain", c.gamma_gain);
    get_if(j, "gamma_exponent", c.gamma_exponent);
    get_if(j, "elastic_stddev", c.elastic_stddev);
    get_if(j, "elastic_spacing", c.elastic_spacing);
    get_if(j, "probability", c.probability);
}

inline void to_json(nlohmann::json& j, const GeneratorConfig& c) {
    j = {{"input_channels", c.input_channels}, {"num_classes", c.num_classes},
         {"depth", c.depth},                   {"base_filters", c.base_filters},
         {"bottleneck_blocks", c.bottleneck_blocks}, {"kernel", c.kernel},
         {"leaky_slope", c.leaky_slope},       {"dropout", c.dropout},
         {"norm_eps", c.norm_eps}};
}
inline void from_json(const nlohmann::json& j, GeneratorConfig& c) {
    using config_detail::get_if;
    get_if(j, "input_channels", c.input_channels);
    get_if(j, "num_classes", c.num_classes);
    get_if(j, "depth", c.depth);
    get_if(j, "base_filters", c.base_filters);
    get_if(j, "bottleneck_blocks", c.bottleneck_blocks);
    get_if(j, "kernel", c.kernel);
    get_if(j, "leaky_slope", c.leaky_slope);
    get_if(j, "dropout", c.dropout);
    get_if(j, "norm_eps", c.norm_eps);
}

inline void to_json(nlohmann::json& j, const DiscriminatorConfig& c) {
    j = {{"image_channels", c.image_channels}, {"seg_channels", c.seg_channels},
         {"depth", c.depth},                   {"base_filters", c.base_filters},
         {"kernel", c.kernel},                 {"leaky_slope", c.leaky_slope},
         {"norm_eps", c.norm_eps}};
}
inline void from_json(const nlohmann::json& j, DiscriminatorConfig& c) {
    using config_detail::get_if;
    get_if(j, "image_channels", c.image_channels);
    get_if(j, "seg_channels", c.seg_channels);
    get_if(j, "depth", c.depth);
    get_if(j, "base_filters", c.base_filters);
    get_if(j, "kernel", c.kernel);
    get_if(j, "leaky_slope", c.leaky_slope);
    get_if(j, "norm_eps", c.norm_eps);
}

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
    j = {{"adam", c.adam},
         {"batch_size", c.batch_size},
         {"epochs", c.epochs},
         {"samples_per_subject", c.samples_per_subject},
         {"alpha", c.alpha},
         {"gdl_eps", c.gdl_eps},
         {"seed", c.seed},
         {"folds", c.folds},
         {"generator", c.generator},
         {"discriminator", c.discriminator},
         {"augmentation", c.augmentation}};
}
inline void from_json(const nlohmann::json& j, TrainConfig& c) {
    using config_detail::get_if;
    get_if(j, "adam", c.adam);
    get_if(j, "batch_size", c.batch_size);
    get_if(j, "epochs", c.epochs);
    get_if(j, "samples_per_subject", c.samples_per_subject);
    get_if(j, "alpha", c.alpha);
    get_if(j, "gdl_eps", c.gdl_eps);
    get_if(j, "seed", c.seed);
    get_if(j, "folds", c.folds);
    get_if(j, "generator", c.generator);
    get_if(j, "discriminator", c.discriminator);
    get_if(j, "augmentation", c.augmentation);
}

inline void to_json(nlohmann::json& j, const EnsemblerConfig& c) {
    j = {{"models", c.models},   {"kernel", c.kernel}, {"epochs", c.epochs},
         {"patience", c.patience}, {"center", c.center}, {"adam", c.adam},
         {"gdl_eps", c.gdl_eps}};
}
inline void from_json(const nlohmann::json& j, EnsemblerConfig& c) {
    using config_detail::get_if;
    get_if(j, "models", c.models);
    get_if(j, "kernel", c.kernel);
    get_if(j, "epochs", c.epochs);
    get_if(j, "patience", c.patience);
    get_if(j, "center", c.center);
    get_if(j, "adam", c.adam);
    get_if(j, "gdl_eps", c.gdl_eps);
}

inline void to_json(nlohmann::json& j, const PhantomSpec& c) {
    j = {{"size", c.size},
         {"seed", c.seed},
         {"contrast", c.contrast},
         {"noise_stddev", c.noise_stddev},
         {"brain_radius_frac", c.brain_radius_frac},
         {"brain_radius_jitter", c.brain_radius_jitter},
         {"center_jitter_frac", c.center_jitter_frac},
         {"ed_frac", c.ed_frac},
         {"ncr_frac", c.ncr_frac},
         {"et_frac", c.et_frac},
         {"no_et_fraction", c.no_et_fraction}};
}
inline void from_json(const nlohmann::json& j, PhantomSpec& c) {
    using config_detail::get_if;
    get_if(j, "size", c.size);
    get_if(j, "seed", c.seed);
    get_if(j, "contrast", c.contrast);
    get_if(j, "noise_stddev", c.noise_stddev);
    get_if(j, "brain_radius_frac", c.brain_radius_frac);
    get_if(j, "brain_radius_jitter", c.brain_radius_jitter);
    get_if(j, "center_jitter_frac", c.center_jitter_frac);
    get_if(j, "ed_frac", c.ed_frac);
    get_if(j, "ncr_frac", c.ncr_frac);
    get_if(j, "et_frac", c.et_frac);
    get_if(j, "no_et_fraction", c.no_et_fraction);
}

inline void to_json(nlohmann::json& j, const RunConfig& c) {
    j = {{"train", c.train},
         {"ensemble", c.ensemble},
         {"phantom", c.phantom},
         {"num_phantoms", c.num_phantoms},
         {"spacing", c.spacing},
         {"et_threshold", c.et_threshold},
         {"min_cluster", c.min_cluster},
         {"connectivity", c.connectivity},
         {"fit", c.fit == FitMode::pad ? "pad" : "crop"}};
    if (c.internal_target)
        j["internal_target"] = *c.internal_target;
    else
        j["internal_target"] = nullptr;
}
inline void from_json(const nlohmann::json& j, RunConfig& c) {
    using config_detail::get_if;
    if (j.contains("profile")) {
        const auto name = j.at("profile").get<std::string>();
        if (name == "desk")
            c = RunConfig::desk();
        else if (name == "paper")
            c = RunConfig::paper();
        else
            throw std::invalid_argument("unknown profile: " + name);
    }
    get_if(j, "train", c.train);
    get_if(j, "ensemble", c.ensemble);
    get_if(j, "phantom", c.phantom);
    get_if(j, "num_phantoms", c.num_phantoms);
    get_if(j, "spacing", c.spacing);
    get_if(j, "et_threshold", c.et_threshold);
    get_if(j, "min_cluster", c.min_cluster);
    get_if(j, "connectivity", c.connectivity);
    if (j.contains("fit")) {
        const auto mode = j.at("fit").get<std::string>();
        if (mode == "pad")
            c.fit = FitMode::pad;
        else if (mode == "crop")
            c.fit = FitMode::crop;
        else
            throw std::invalid_argument("fit must be \"pad\" or \"crop\", got \"" + mode + "\"");
    }
    if (j.contains("internal_target") && !j.at("internal_target").is_null())
        c.internal_target = j.at("internal_target").get<Vec3i>();
}

inline RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file: " + path);
    nlohmann::json j;
    in >> j;
    RunConfig c = RunConfig::desk();
    from_json(j, c);
    return c;
}

inline void save_run_config(const std::string& path, const RunConfig& c) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write config file: " + path);
    nlohmann::json j = c;
    out << j.dump(2) << "\n";
}

}  // namespace vox2seg

#endif  // VOX2SEG_RUN_CONFIG_HPP
