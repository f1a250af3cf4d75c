#include <algorithm>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>

#include "catch2/catch_amalgamated.hpp"
#include "nlohmann/json.hpp"
#include "support/oracles.hpp"
#include "vox2seg/checkpoint.hpp"
#include "vox2seg/trainer.hpp"

using namespace vox2seg;

namespace {

struct TempDir {
    std::filesystem::path path;
    TempDir() {
        std::mt19937_64 gen(std::random_device{}());
        path = std::filesystem::temp_directory_path() /
               ("vox2seg_train_" + std::to_string(gen()));
        std::filesystem::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path, ec);
    }
};

std::vector<Subject<float>> micro_dataset(int count, std::uint64_t seed,
                                          const Vec3i& size = {12, 12, 12}) {
    std::vector<Subject<float>> out;
    std::mt19937_64 gen(seed);
    std::uniform_real_distribution<float> u(0.1f, 2.0f);
    std::bernoulli_distribution bg(0.25);
    for (int i = 0; i < count; ++i) {
        Subject<float> s;
        s.id = "case" + std::to_string(i);
        s.image = MultiModalVolume<float>({4, size[0], size[1], size[2]});
        for (std::int64_t k = 0; k < s.image.numel(); ++k) s.image[k] = bg(gen) ? 0.0f : u(gen);
        s.labels = oracles::random_label_map(size, gen);
        out.push_back(std::move(s));
    }
    return out;
}

TrainConfig micro_config() {
    TrainConfig cfg;
    cfg.generator.base_filters = 2;
    cfg.generator.depth = 2;
    cfg.generator.bottleneck_blocks = 2;
    cfg.discriminator.base_filters = 2;
    cfg.discriminator.depth = 2;
    cfg.augmentation.patch_size = {8, 8, 8};
    cfg.batch_size = 2;
    cfg.epochs = 2;
    cfg.seed = 7;
    return cfg;
}

bool same_weights(Generator<float>& a, Generator<float>& b) {
    const auto pa = a.parameters(), pb = b.parameters();
    if (pa.size() != pb.size()) return false;
    for (std::size_t k = 0; k < pa.size(); ++k) {
        if (pa[k]->value.shape() != pb[k]->value.shape()) return false;
        for (std::int64_t i = 0; i < pa[k]->value.numel(); ++i)
            if (pa[k]->value[i] != pb[k]->value[i]) return false;
    }
    return true;
}

}  // namespace

TEST_CASE("fold assignment is a balanced deterministic partition") {
    std::vector<std::string> ids;
    for (int i = 0; i < 10; ++i) ids.push_back("s" + std::to_string(i));

    const auto folds = make_folds(ids, 3, 42);
    REQUIRE(folds.size() == 3);
    std::set<std::string> seen;
    for (const auto& f : folds) {
        // balanced: 10 subjects over 3 folds -> val sizes within one of each other
        REQUIRE(f.val_ids.size() >= 3);
        REQUIRE(f.val_ids.size() <= 4);
        REQUIRE(f.train_ids.size() + f.val_ids.size() == ids.size());
        for (const auto& id : f.val_ids) {
            REQUIRE(seen.insert(id).second);  // held out exactly once
            REQUIRE(std::find(f.train_ids.begin(), f.train_ids.end(), id) == f.train_ids.end());
        }
    }
    REQUIRE(seen.size() == ids.size());

    const auto again = make_folds(ids, 3, 42);
    for (std::size_t k = 0; k < folds.size(); ++k) {
        REQUIRE(folds[k].val_ids == again[k].val_ids);
        REQUIRE(folds[k].train_ids == again[k].train_ids);
    }
    const auto other = make_folds(ids, 3, 43);
    bool differs = false;
    for (std::size_t k = 0; k < folds.size(); ++k) differs |= folds[k].val_ids != other[k].val_ids;
    REQUIRE(differs);

    REQUIRE_THROWS_AS(make_folds(ids, 1, 0), std::invalid_argument);
    REQUIRE_THROWS_AS(make_folds(ids, 11, 0), std::invalid_argument);
}

TEST_CASE("training runs, logs every epoch, and tracks the best epoch") {
    TempDir tmp;
    const auto data = micro_dataset(4, 1);
    const std::vector<Subject<float>> train_split(data.begin(), data.begin() + 3);
    const std::vector<Subject<float>> val_split(data.begin() + 3, data.end());
    const auto cfg = micro_config();

    auto result = train(train_split, val_split, cfg, 0, tmp.path.string());

    REQUIRE(result.log.size() == 2);
    double best = -1.0;
    std::int64_t best_epoch = -1;
    for (const auto& rec : result.log) {
        REQUIRE(std::isfinite(rec.l_d));
        REQUIRE(std::isfinite(rec.l_g));
        REQUIRE(std::isfinite(rec.adversarial));
        REQUIRE(std::isfinite(rec.gdl));
        REQUIRE(rec.gdl >= 0.0);
        REQUIRE(rec.gdl <= 1.0);
        REQUIRE(rec.val_dice_wt >= 0.0);
        REQUIRE(rec.val_dice_wt <= 1.0);
        if (rec.val_dice_wt > best) {
            best = rec.val_dice_wt;
            best_epoch = rec.epoch;
        }
    }
    REQUIRE(result.best_val_wt == best);
    REQUIRE(result.best_epoch == best_epoch);

    // the returned generator carries the best-epoch weights: re-evaluating it
    // on the validation split must reproduce the reported score
    std::vector<Subject<float>> val_norm;
    for (const auto& s : val_split) val_norm.push_back({s.id, normalize(s.image), s.labels});
    const auto rescored = trainer_detail::validation_dice(result.generator, val_norm);
    REQUIRE_THAT(rescored[0], Catch::Matchers::WithinAbs(result.best_val_wt, 1e-12));

    // artifacts: NDJSON log plus best-generator checkpoint and metadata
    REQUIRE(std::filesystem::exists(tmp.path / "train_log.ndjson"));
    REQUIRE(std::filesystem::exists(tmp.path / "generator_best.ckpt"));
    REQUIRE(std::filesystem::exists(tmp.path / "generator_best.meta"));

    Generator<float> reloaded(cfg.generator);
    auto params = reloaded.parameters();
    load_checkpoint((tmp.path / "generator_best.ckpt").string(), params);
    REQUIRE(same_weights(reloaded, result.generator));

    const auto meta = read_metadata((tmp.path / "generator_best.meta").string());
    REQUIRE(meta.count("epoch") == 1);
    REQUIRE(meta.at("epoch") == std::to_string(best_epoch));
}

TEST_CASE("training log lines are one JSON object per epoch") {
    TempDir tmp;
    const auto data = micro_dataset(3, 2);
    const std::vector<Subject<float>> train_split(data.begin(), data.begin() + 2);
    const std::vector<Subject<float>> val_split(data.begin() + 2, data.end());
    auto cfg = micro_config();
    cfg.epochs = 2;
    cfg.alpha = 0.0;  // adversarial-only training still reports the overlap loss

    train(train_split, val_split, cfg, 0, tmp.path.string());

    std::ifstream in(tmp.path / "train_log.ndjson");
    REQUIRE(in.good());
    std::string line;
    int rows = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto rec = nlohmann::json::parse(line);
        if (rec.contains("event")) continue;
        ++rows;
        for (const char* key : {"fold", "epoch", "step", "L_D", "L_G", "adversarial", "GDL",
                                "val_dice_WT", "val_dice_TC", "val_dice_ET", "wall_time"}) {
            INFO(key);
            REQUIRE(rec.contains(key));
        }
        REQUIRE(rec["GDL"].get<double>() > 0.0);
        // with alpha = 0 the generator objective is purely adversarial
        REQUIRE_THAT(rec["L_G"].get<double>(),
                     Catch::Matchers::WithinAbs(rec["adversarial"].get<double>(), 1e-12));
    }
    REQUIRE(rows == 2);
}

TEST_CASE("training is bitwise repeatable for a fixed seed") {
    const auto data = micro_dataset(4, 3);
    const std::vector<Subject<float>> train_split(data.begin(), data.begin() + 3);
    const std::vector<Subject<float>> val_split(data.begin() + 3, data.end());
    const auto cfg = micro_config();

    auto a = train(train_split, val_split, cfg);
    auto b = train(train_split, val_split, cfg);

    REQUIRE(a.log.size() == b.log.size());
    for (std::size_t k = 0; k < a.log.size(); ++k) {
        REQUIRE(a.log[k].l_d == b.log[k].l_d);
        REQUIRE(a.log[k].l_g == b.log[k].l_g);
        REQUIRE(a.log[k].adversarial == b.log[k].adversarial);
        REQUIRE(a.log[k].gdl == b.log[k].gdl);
        REQUIRE(a.log[k].val_dice_wt == b.log[k].val_dice_wt);
    }
    REQUIRE(same_weights(a.generator, b.generator));

    auto cfg2 = cfg;
    cfg2.seed = cfg.seed + 1;
    auto c = train(train_split, val_split, cfg2);
    REQUIRE(!same_weights(a.generator, c.generator));
}

TEST_CASE("fold index decorrelates otherwise identical runs") {
    const auto data = micro_dataset(4, 4);
    const std::vector<Subject<float>> train_split(data.begin(), data.begin() + 3);
    const std::vector<Subject<float>> val_split(data.begin() + 3, data.end());
    const auto cfg = micro_config();
    auto a = train(train_split, val_split, cfg, 0);
    auto b = train(train_split, val_split, cfg, 1);
    REQUIRE(!same_weights(a.generator, b.generator));
}

TEST_CASE("training rejects degenerate splits") {
    const auto data = micro_dataset(3, 5);
    const std::vector<Subject<float>> two(data.begin(), data.begin() + 2);
    const std::vector<Subject<float>> one(data.begin() + 2, data.end());
    const std::vector<Subject<float>> none;
    const auto cfg = micro_config();
    REQUIRE_THROWS_AS(train(none, one, cfg), std::invalid_argument);
    REQUIRE_THROWS_AS(train(two, none, cfg), std::invalid_argument);
    // fewer training subjects than one batch
    REQUIRE_THROWS_AS(train(one, two, cfg), std::invalid_argument);
}

TEST_CASE("each subject can contribute several patches per epoch") {
    const auto data = micro_dataset(4, 6);
    const std::vector<Subject<float>> train_split(data.begin(), data.begin() + 3);
    const std::vector<Subject<float>> val_split(data.begin() + 3, data.end());
    auto cfg = micro_config();
    cfg.samples_per_subject = 2;

    // 3 subjects x 2 draws = 6 patches -> 3 batches of 2 per epoch
    auto a = train(train_split, val_split, cfg);
    REQUIRE(a.log.size() == static_cast<std::size_t>(cfg.epochs));
    REQUIRE(a.log.back().step == cfg.epochs * 3);

    // the repeated draws are real extra steps, not replays of the single-draw run
    auto single = cfg;
    single.samples_per_subject = 1;
    auto b = train(train_split, val_split, single);
    REQUIRE(b.log.back().step == cfg.epochs * 2);
    REQUIRE(!same_weights(a.generator, b.generator));

    auto bad = cfg;
    bad.samples_per_subject = 0;
    REQUIRE_THROWS_AS(train(train_split, val_split, bad), std::invalid_argument);
}

TEST_CASE("cross-validation trains one model per fold") {
    TempDir tmp;
    const auto data = micro_dataset(4, 6);
    auto cfg = micro_config();
    cfg.folds = 2;
    cfg.epochs = 1;

    const auto folds = cross_validate(data, cfg, tmp.path.string());
    REQUIRE(folds.size() == 2);
    std::set<std::string> held_out;
    for (const auto& f : folds) {
        REQUIRE(f.result.log.size() == 1);
        for (const auto& id : f.split.val_ids) REQUIRE(held_out.insert(id).second);
        const auto dir = tmp.path / ("fold_" + std::to_string(f.split.fold));
        REQUIRE(std::filesystem::exists(dir / "generator_best.ckpt"));
        REQUIRE(std::filesystem::exists(dir / "fold.meta"));
    }
    REQUIRE(held_out.size() == 4);
}

TEST_CASE("inference pads odd grids and restores them intact") {
    auto cfg = micro_config();  // depth 2: internal grid must divide by 4
    Generator<float> gen(cfg.generator);
    gen.init(17);

    std::mt19937_64 rnd(7);
    std::uniform_real_distribution<float> u(-1.0f, 1.0f);
    MultiModalVolume<float> v({4, 10, 11, 13});
    for (std::int64_t i = 0; i < v.numel(); ++i) v[i] = u(rnd);

    const auto probs = predict(gen, v);  // pad is the default
    REQUIRE(probs.shape() == Shape{4, 10, 11, 13});
    REQUIRE(probs.all_finite());
    const std::int64_t n = 10 * 11 * 13;
    for (std::int64_t i = 0; i < n; i += 11) {
        double sum = 0.0;
        for (int ch = 0; ch < 4; ++ch) sum += probs[ch * n + i];
        REQUIRE_THAT(sum, Catch::Matchers::WithinAbs(1.0, 1e-5));
    }
}

TEST_CASE("inference crop mode marks the outer margin as background") {
    auto cfg = micro_config();
    Generator<float> gen(cfg.generator);
    gen.init(18);

    std::mt19937_64 rnd(8);
    std::uniform_real_distribution<float> u(-1.0f, 1.0f);
    MultiModalVolume<float> v({4, 10, 10, 10});
    for (std::int64_t i = 0; i < v.numel(); ++i) v[i] = u(rnd);

    const auto probs = predict(gen, v, FitMode::crop);  // internal grid 8^3, offset 1
    REQUIRE(probs.shape() == Shape{4, 10, 10, 10});
    const std::int64_t n = 1000;
    std::int64_t idx = 0;
    for (std::int64_t x = 0; x < 10; ++x)
        for (std::int64_t y = 0; y < 10; ++y)
            for (std::int64_t z = 0; z < 10; ++z, ++idx) {
                const bool margin = x < 1 || x > 8 || y < 1 || y > 8 || z < 1 || z > 8;
                if (margin) {
                    REQUIRE(probs[0 * n + idx] == 1.0f);
                    REQUIRE(probs[1 * n + idx] == 0.0f);
                    REQUIRE(probs[2 * n + idx] == 0.0f);
                    REQUIRE(probs[3 * n + idx] == 0.0f);
                } else {
                    double sum = 0.0;
                    for (int ch = 0; ch < 4; ++ch) sum += probs[ch * n + idx];
                    REQUIRE_THAT(sum, Catch::Matchers::WithinAbs(1.0, 1e-5));
                }
            }
}

TEST_CASE("inference honors an explicit internal grid") {
    auto cfg = micro_config();
    Generator<float> gen(cfg.generator);
    gen.init(19);
    MultiModalVolume<float> v({4, 10, 10, 10});
    for (std::int64_t i = 0; i < v.numel(); ++i) v[i] = 0.5f;

    const auto probs = predict(gen, v, FitMode::pad, Vec3i{12, 12, 12});
    REQUIRE(probs.shape() == Shape{4, 10, 10, 10});

    REQUIRE_THROWS_AS(predict(gen, v, FitMode::pad, Vec3i{13, 12, 12}), std::invalid_argument);
    REQUIRE_THROWS_AS(predict(gen, v, FitMode::pad, Vec3i{0, 12, 12}), std::invalid_argument);

    MultiModalVolume<float> tiny({4, 3, 8, 8});
    REQUIRE_THROWS_AS(predict(gen, tiny), std::invalid_argument);
}

TEST_CASE("checkpoints restore by name and reject foreign files") {
    TempDir tmp;
    auto cfg = micro_config();
    Generator<float> a(cfg.generator), b(cfg.generator);
    a.init(100);
    b.init(200);
    REQUIRE(!same_weights(a, b));

    const auto path = (tmp.path / "g.ckpt").string();
    auto pa = a.parameters();
    save_checkpoint(path, pa);
    auto pb = b.parameters();
    load_checkpoint(path, pb);
    REQUIRE(same_weights(a, b));

    // scalar type is part of the contract
    Generator<double> d(cfg.generator);
    auto pd = d.parameters();
    REQUIRE_THROWS_WITH(load_checkpoint(path, pd),
                        Catch::Matchers::ContainsSubstring("scalar type"));

    // a model with different shapes cannot load the file
    auto wide_cfg = cfg.generator;
    wide_cfg.base_filters = 3;
    Generator<float> wide(wide_cfg);
    auto pw = wide.parameters();
    REQUIRE_THROWS_WITH(load_checkpoint(path, pw),
                        Catch::Matchers::ContainsSubstring("shape mismatch"));

    // not a checkpoint at all
    const auto junk = (tmp.path / "junk.ckpt").string();
    std::ofstream(junk) << "definitely not binary weights";
    REQUIRE_THROWS_WITH(load_checkpoint(junk, pb),
                        Catch::Matchers::ContainsSubstring("not a checkpoint"));
    REQUIRE_THROWS_AS(load_checkpoint((tmp.path / "absent.ckpt").string(), pb),
                      std::runtime_error);
}

TEST_CASE("metadata sidecars round-trip") {
    TempDir tmp;
    const auto path = (tmp.path / "run.meta").string();
    write_metadata(path, {{"epoch", "3"}, {"seed", "17"}, {"note", "hello world"}});
    const auto kv = read_metadata(path);
    REQUIRE(kv.at("epoch") == "3");
    REQUIRE(kv.at("seed") == "17");
    REQUIRE(kv.at("note") == "hello world");
    REQUIRE_THROWS_AS(write_metadata(path, {{"bad=key", "v"}}), std::invalid_argument);
    REQUIRE_THROWS_AS(write_metadata(path, {{"k", "two\nlines"}}), std::invalid_argument);
}
