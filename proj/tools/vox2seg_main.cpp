// vox2seg command-line front end: synth | train | cv | ensemble | predict | evaluate.
//
// Option precedence: built-in desk defaults < --config file < explicit flags.
// Every command that takes --out freezes the effective configuration as
// <out>/config.json so a run can be reproduced from its artifacts alone.

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "vox2seg/vox2seg.hpp"

namespace fs = std::filesystem;
using namespace vox2seg;

namespace {

struct CommonOptions {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string device;
    std::string out;
};

struct PostOverrides {
    std::optional<std::int64_t> et_threshold;
    std::optional<std::int64_t> min_cluster;
    std::optional<int> connectivity;

    void apply(RunConfig& cfg) const {
        if (et_threshold) cfg.et_threshold = *et_threshold;
        if (min_cluster) cfg.min_cluster = *min_cluster;
        if (connectivity) cfg.connectivity = *connectivity;
    }
};

void add_common(CLI::App* cmd, CommonOptions& opt, bool out_required) {
    cmd->add_option("--config", opt.config_path, "JSON run configuration (see README)")
        ->check(CLI::ExistingFile);
    cmd->add_option("--seed", opt.seed, "override the run seed");
    cmd->add_option("--device", opt.device, "compute device; only \"cpu\" is supported");
    auto* out = cmd->add_option("--out", opt.out, "output directory for run artifacts");
    if (out_required) out->required();
}

RunConfig effective_config(const CommonOptions& opt) {
    RunConfig cfg = opt.config_path.empty() ? RunConfig::desk() : load_run_config(opt.config_path);
    if (opt.seed) {
        cfg.train.seed = *opt.seed;
        cfg.phantom.seed = *opt.seed;
    }
    std::string device = opt.device;
    if (device.empty()) {
        const char* env = std::getenv("VOX2SEG_DEVICE");
        device = env ? env : "cpu";
    }
    if (device != "cpu")
        throw std::runtime_error("device \"" + device + "\" is not available; only \"cpu\" is supported");
    return cfg;
}

void snapshot_config(const RunConfig& cfg, const std::string& out_dir) {
    if (out_dir.empty()) return;
    fs::create_directories(out_dir);
    save_run_config((fs::path(out_dir) / "config.json").string(), cfg);
}

std::array<float, 3> spacing_f(const RunConfig& cfg) {
    return {static_cast<float>(cfg.spacing[0]), static_cast<float>(cfg.spacing[1]),
            static_cast<float>(cfg.spacing[2])};
}

LabelMap postprocess_labels(const LabelMap& m, const RunConfig& cfg) {
    LabelMap out = relabel_small_et(m, cfg.et_threshold);
    if (cfg.min_cluster > 0)
        for (std::uint8_t label : {std::uint8_t{1}, std::uint8_t{2}, std::uint8_t{4}})
            out = remove_small_clusters(out, label, cfg.min_cluster, 0, cfg.connectivity);
    return out;
}

std::vector<Generator<float>> load_fold_generators(const RunConfig& cfg, const fs::path& run_dir) {
    std::vector<Generator<float>> gens;
    for (std::int64_t k = 0; k < cfg.train.folds; ++k) {
        const fs::path ckpt = run_dir / ("fold_" + std::to_string(k)) / "generator_best.ckpt";
        if (!fs::exists(ckpt))
            throw std::runtime_error("missing fold checkpoint: " + ckpt.string() +
                                     " (run `vox2seg cv` first)");
        Generator<float> g(cfg.train.generator);
        auto params = g.parameters();
        load_checkpoint(ckpt.string(), params);
        gens.push_back(std::move(g));
    }
    return gens;
}

int cmd_synth(const CommonOptions& opt, std::int64_t count, std::optional<std::int64_t> size) {
    RunConfig cfg = effective_config(opt);
    if (count == 0) throw std::runtime_error("empty dataset requested");
    if (count < 0) throw std::runtime_error("subject count must be positive");
    if (size) cfg.phantom.size = {*size, *size, *size};
    cfg.num_phantoms = count;
    snapshot_config(cfg, opt.out);
    const auto ids =
        write_phantom_dataset(opt.out, static_cast<int>(count), cfg.phantom, cfg.phantom.seed);
    std::cout << "wrote " << ids.size() << " subjects under " << opt.out << "\n";
    return 0;
}

int cmd_train(const CommonOptions& opt, const std::string& data, std::int64_t fold,
              std::optional<double> alpha, std::optional<std::int64_t> epochs) {
    RunConfig cfg = effective_config(opt);
    if (alpha) cfg.train.alpha = *alpha;
    if (epochs) cfg.train.epochs = *epochs;
    snapshot_config(cfg, opt.out);

    const auto dataset = load_dataset<float>(data);
    std::vector<std::string> ids;
    for (const auto& s : dataset) ids.push_back(s.id);
    const auto folds = make_folds(ids, cfg.train.folds, cfg.train.seed);
    if (fold < 0 || fold >= cfg.train.folds)
        throw std::runtime_error("fold index out of range: " + std::to_string(fold));
    const auto& split = folds[static_cast<std::size_t>(fold)];

    std::vector<Subject<float>> train_set, val_set;
    for (const auto& s : dataset) {
        const bool in_val =
            std::find(split.val_ids.begin(), split.val_ids.end(), s.id) != split.val_ids.end();
        (in_val ? val_set : train_set).push_back(s);
    }
    const auto result = train(train_set, val_set, cfg.train, fold, opt.out);
    std::cout << "fold " << fold << ": best val Dice(WT) " << result.best_val_wt << " at epoch "
              << result.best_epoch << "\n";
    return 0;
}

int cmd_cv(const CommonOptions& opt, const std::string& data, std::optional<double> alpha,
           std::optional<std::int64_t> epochs) {
    RunConfig cfg = effective_config(opt);
    if (alpha) cfg.train.alpha = *alpha;
    if (epochs) cfg.train.epochs = *epochs;
    snapshot_config(cfg, opt.out);

    const auto dataset = load_dataset<float>(data);
    const auto results = cross_validate(dataset, cfg.train, opt.out);
    for (const auto& r : results)
        std::cout << "fold " << r.split.fold << ": best val Dice(WT) " << r.result.best_val_wt
                  << " at epoch " << r.result.best_epoch << "\n";
    return 0;
}

int cmd_ensemble(const CommonOptions& opt, const std::string& data, const std::string& run_dir,
                 const PostOverrides& post) {
    RunConfig cfg = effective_config(opt);
    cfg.ensemble.models = cfg.train.folds;
    post.apply(cfg);
    snapshot_config(cfg, opt.out);

    auto generators = load_fold_generators(cfg, run_dir);
    auto dataset = load_dataset<float>(data);
    for (auto& s : dataset) s.image = normalize(s.image);

    std::vector<std::string> ids;
    for (const auto& s : dataset) ids.push_back(s.id);
    const auto folds = make_folds(ids, cfg.train.folds, cfg.train.seed);
    std::vector<Subject<float>> head_train, head_val;
    for (const auto& s : dataset) {
        const bool in_val = std::find(folds[0].val_ids.begin(), folds[0].val_ids.end(), s.id) !=
                            folds[0].val_ids.end();
        (in_val ? head_val : head_train).push_back(s);
    }

    auto result =
        train_ensembler(generators, head_train, head_val, cfg.ensemble, derive_seed(cfg.train.seed, 0xE45));
    std::cout << "fusion head: best val GDL " << result.best_val << " at epoch "
              << result.best_epoch << " (" << result.epochs_run << " epochs run)\n";

    const fs::path out(opt.out);
    {
        auto params = result.ensembler.parameters();
        save_checkpoint((out / "ensembler.ckpt").string(), params);
        write_metadata((out / "ensembler.meta").string(),
                       {{"models", std::to_string(cfg.ensemble.models)},
                        {"best_epoch", std::to_string(result.best_epoch)},
                        {"epochs_run", std::to_string(result.epochs_run)},
                        {"git_rev", git_revision()}});
    }

    const fs::path pred_dir = out / "predictions";
    fs::create_directories(pred_dir);
    for (const auto& s : dataset) {
        const auto fused = ensemble_predict(generators, result.ensembler, s.image,
                                            cfg.ensemble.center);
        const LabelMap labels = postprocess_labels(from_categorical(fused), cfg);
        write_nifti((pred_dir / (s.id + ".nii.gz")).string(), labels, spacing_f(cfg));
    }
    std::cout << "wrote fused predictions under " << pred_dir.string() << "\n";
    return 0;
}

int cmd_predict(const CommonOptions& opt, const std::string& checkpoint, const std::string& input,
                const std::string& output, const PostOverrides& post) {
    RunConfig cfg = effective_config(opt);
    post.apply(cfg);
    if (!opt.out.empty()) snapshot_config(cfg, opt.out);

    Generator<float> gen(cfg.train.generator);
    auto params = gen.parameters();
    load_checkpoint(checkpoint, params);

    MultiModalVolume<float> image = normalize(load_volume<float>(input));
    const auto probs = predict(gen, image, cfg.fit, cfg.internal_target);
    const LabelMap labels = postprocess_labels(from_categorical(probs), cfg);
    if (const fs::path parent = fs::path(output).parent_path(); !parent.empty())
        fs::create_directories(parent);
    write_nifti(output, labels, spacing_f(cfg));
    std::cout << "wrote " << output << "\n";
    return 0;
}

int cmd_evaluate(const CommonOptions& opt, const std::string& pred, const std::string& gt,
                 const std::string& report_path) {
    RunConfig cfg = effective_config(opt);

    std::vector<SubjectMetrics> records;
    auto eval_pair = [&](const LabelMap& p, const LabelMap& g, const std::string& id) {
        if (!p.same_shape(g))
            throw std::runtime_error("prediction/reference shape mismatch for \"" + id + "\": " +
                                     shape_str(p.shape()) + " vs " + shape_str(g.shape()));
        records.push_back(evaluate(p, g, cfg.spacing, id));
    };

    if (fs::is_directory(gt)) {
        for (const auto& id : list_subjects(gt)) {
            fs::path pred_file = fs::path(pred) / (id + ".nii.gz");
            if (!fs::exists(pred_file)) pred_file = fs::path(pred) / (id + ".nii");
            if (!fs::exists(pred_file))
                throw std::runtime_error("no prediction found for subject \"" + id + "\" under " +
                                         pred);
            eval_pair(load_label_map(pred_file), load_label_map(fs::path(gt) / id / "seg.nii.gz"),
                      id);
        }
    } else {
        eval_pair(load_label_map(pred), load_label_map(gt), fs::path(pred).stem().string());
    }

    const MetricsReport rep = aggregate(std::move(records));
    print_summary(std::cout, rep);
    if (!report_path.empty()) {
        if (const fs::path parent = fs::path(report_path).parent_path(); !parent.empty())
            fs::create_directories(parent);
        write_report(report_path, rep);
        std::cout << "report written to " << report_path << "\n";
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"volumetric adversarial segmentation: synthesize, train, fuse, evaluate"};
    app.require_subcommand(1);

    CommonOptions synth_opt, train_opt, cv_opt, ens_opt, pred_opt, eval_opt;

    auto* synth = app.add_subcommand("synth", "generate a synthetic phantom dataset");
    add_common(synth, synth_opt, true);
    std::int64_t synth_count = 16;
    std::optional<std::int64_t> synth_size;
    synth->add_option("-n,--subjects", synth_count, "number of subjects to generate");
    synth->add_option("--size", synth_size, "cubic volume edge length in voxels");

    auto* train_cmd = app.add_subcommand("train", "train one fold of the adversarial model");
    add_common(train_cmd, train_opt, true);
    std::string train_data;
    std::int64_t train_fold = 0;
    std::optional<double> train_alpha;
    std::optional<std::int64_t> train_epochs;
    train_cmd->add_option("--data", train_data, "dataset root directory")
        ->required()
        ->check(CLI::ExistingDirectory);
    train_cmd->add_option("--fold", train_fold, "fold index to train");
    train_cmd->add_option("--alpha", train_alpha, "segmentation-loss weight override");
    train_cmd->add_option("--epochs", train_epochs, "epoch count override");

    auto* cv = app.add_subcommand("cv", "run full M-fold cross-validated training");
    add_common(cv, cv_opt, true);
    std::string cv_data;
    std::optional<double> cv_alpha;
    std::optional<std::int64_t> cv_epochs;
    cv->add_option("--data", cv_data, "dataset root directory")
        ->required()
        ->check(CLI::ExistingDirectory);
    cv->add_option("--alpha", cv_alpha, "segmentation-loss weight override");
    cv->add_option("--epochs", cv_epochs, "epoch count override");

    auto* ens = app.add_subcommand("ensemble",
                                   "train the fusion head on fold checkpoints and write fused predictions");
    add_common(ens, ens_opt, true);
    std::string ens_data, ens_run;
    ens->add_option("--data", ens_data, "dataset root directory")
        ->required()
        ->check(CLI::ExistingDirectory);
    ens->add_option("--run", ens_run, "cross-validation output directory with fold_<k> checkpoints")
        ->required()
        ->check(CLI::ExistingDirectory);

    auto* pred = app.add_subcommand("predict", "segment one subject with a trained generator");
    add_common(pred, pred_opt, false);
    std::string pred_ckpt, pred_input, pred_output;
    pred->add_option("--checkpoint", pred_ckpt, "generator checkpoint file")
        ->required()
        ->check(CLI::ExistingFile);
    pred->add_option("--input", pred_input, "subject directory or 4-channel volume file")
        ->required();
    pred->add_option("--output", pred_output, "output label volume (.nii or .nii.gz)")->required();

    auto* eval = app.add_subcommand("evaluate", "score predictions against reference labels");
    add_common(eval, eval_opt, false);
    std::string eval_pred, eval_gt, eval_report;
    eval->add_option("--pred", eval_pred, "prediction directory (or one label file)")->required();
    eval->add_option("--gt", eval_gt, "dataset root (or one label file)")->required();
    eval->add_option("--report", eval_report, "write the full per-subject report here");

    // post-processing knobs for commands that emit label maps
    PostOverrides post;
    for (CLI::App* cmd : {ens, pred}) {
        cmd->add_option("--et-threshold", post.et_threshold,
                        "relabel enhancing tumor below this voxel count as necrotic core");
        cmd->add_option("--min-cluster", post.min_cluster,
                        "drop connected tumor components smaller than this many voxels");
        cmd->add_option("--connectivity", post.connectivity, "component connectivity: 6, 18 or 26");
    }

    CLI11_PARSE(app, argc, argv);

    try {
        if (synth->parsed()) return cmd_synth(synth_opt, synth_count, synth_size);
        if (train_cmd->parsed())
            return cmd_train(train_opt, train_data, train_fold, train_alpha, train_epochs);
        if (cv->parsed()) return cmd_cv(cv_opt, cv_data, cv_alpha, cv_epochs);
        if (ens->parsed()) return cmd_ensemble(ens_opt, ens_data, ens_run, post);
        if (pred->parsed()) return cmd_predict(pred_opt, pred_ckpt, pred_input, pred_output, post);
        if (eval->parsed()) return cmd_evaluate(eval_opt, eval_pred, eval_gt, eval_report);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
