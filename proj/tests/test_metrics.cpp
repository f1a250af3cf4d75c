#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "catch2/catch_amalgamated.hpp"
#include "support/oracles.hpp"
#include "vox2seg/metrics.hpp"

using namespace vox2seg;

namespace {

BinaryMask make_mask(const Vec3i& size, std::initializer_list<std::array<std::int64_t, 3>> on) {
    BinaryMask m({size[0], size[1], size[2]});
    for (const auto& p : on) m.at3(p[0], p[1], p[2]) = 1;
    return m;
}

}  // namespace

TEST_CASE("dice agrees with direct counting on random masks") {
    std::mt19937_64 gen(1);
    for (int trial = 0; trial < 100; ++trial) {
        std::uniform_int_distribution<std::int64_t> d(1, 8);
        const Vec3i size{d(gen), d(gen), d(gen)};
        std::uniform_real_distribution<double> dens(0.0, 0.9);
        const auto a = oracles::random_mask(size, dens(gen), gen);
        const auto b = oracles::random_mask(size, dens(gen), gen);
        REQUIRE_THAT(dice(a, b), Catch::Matchers::WithinAbs(oracles::ref_dice(a, b), 1e-12));
    }
}

TEST_CASE("dice conventions at the boundaries") {
    const BinaryMask empty({4, 4, 4});
    REQUIRE(dice(empty, empty) == 1.0);  // both empty: agreement
    const auto one = make_mask({4, 4, 4}, {{1, 2, 3}});
    REQUIRE(dice(one, empty) == 0.0);
    REQUIRE(dice(one, one) == 1.0);
    // half overlap: |A|=2, |B|=1, |A∩B|=1 -> 2/3
    const auto two = make_mask({4, 4, 4}, {{1, 2, 3}, {0, 0, 0}});
    REQUIRE_THAT(dice(two, one), Catch::Matchers::WithinAbs(2.0 / 3.0, 1e-15));
    REQUIRE_THROWS_AS(dice(empty, BinaryMask({4, 4, 5})), std::invalid_argument);
}

TEST_CASE("squared distance transform matches brute force") {
    std::mt19937_64 gen(2);
    for (int trial = 0; trial < 60; ++trial) {
        std::uniform_int_distribution<std::int64_t> d(1, 6);
        const Vec3i size{d(gen), d(gen), d(gen)};
        auto m = oracles::random_mask(size, 0.25, gen);
        if (trial == 0) m.fill(0);  // no parabola anywhere
        std::array<double, 3> sp{1.0, 1.0, 1.0};
        if (trial % 3 == 1) sp = {1.0, 1.5, 2.25};  // anisotropic pitch
        const auto fast = metrics_detail::squared_edt(m, sp);
        const auto slow = oracles::ref_squared_edt(m, sp);
        REQUIRE(fast.size() == slow.size());
        for (std::size_t i = 0; i < fast.size(); ++i) {
            if (std::isinf(slow[i])) {
                REQUIRE(std::isinf(fast[i]));
            } else {
                REQUIRE_THAT(fast[i], Catch::Matchers::WithinAbs(slow[i], 1e-9));
            }
        }
    }
}

TEST_CASE("hd95 agrees with the all-pairs oracle") {
    std::mt19937_64 gen(3);
    int nonempty_pairs = 0;
    for (int trial = 0; trial < 60; ++trial) {
        std::uniform_int_distribution<std::int64_t> d(2, 8);
        const Vec3i size{d(gen), d(gen), d(gen)};
        const auto a = oracles::random_mask(size, 0.3, gen);
        const auto b = oracles::random_mask(size, 0.3, gen);
        std::array<double, 3> sp{1.0, 1.0, 1.0};
        if (trial % 2) sp = {0.5, 1.0, 3.0};
        const double got = hd95(a, b, sp);
        const double want = oracles::ref_hd95(a, b, sp);
        REQUIRE_THAT(got, Catch::Matchers::WithinAbs(want, 1e-9));
        bool ae = true, be = true;
        for (std::int64_t i = 0; i < a.numel(); ++i) {
            ae &= a[i] == 0;
            be &= b[i] == 0;
        }
        nonempty_pairs += !ae && !be;
    }
    REQUIRE(nonempty_pairs > 30);  // the sweep must exercise the nontrivial path
}

TEST_CASE("hd95 empty-mask conventions") {
    const BinaryMask empty({5, 5, 5});
    const auto solo = make_mask({5, 5, 5}, {{2, 2, 2}});
    REQUIRE(hd95(empty, empty) == 0.0);
    REQUIRE(hd95(solo, empty) == 373.13);
    REQUIRE(hd95(empty, solo) == 373.13);
    REQUIRE(hd95(solo, solo) == 0.0);
}

TEST_CASE("hd95 on hand-checked pairs") {
    // two single voxels 3 apart along y with 2mm pitch: distance 6mm both ways
    const auto a = make_mask({1, 5, 1}, {{0, 0, 0}});
    const auto b = make_mask({1, 5, 1}, {{0, 3, 0}});
    REQUIRE_THAT(hd95(a, b, {1.0, 2.0, 1.0}), Catch::Matchers::WithinAbs(6.0, 1e-12));
    // identical masks: zero
    const auto c = make_mask({3, 3, 3}, {{0, 0, 0}, {2, 2, 2}});
    REQUIRE(hd95(c, c) == 0.0);
}

TEST_CASE("region remap composes nested masks from raw labels") {
    LabelMap m({2, 2, 1});
    m[0] = 0;
    m[1] = 1;
    m[2] = 2;
    m[3] = 4;
    const auto r = remap_regions(m);
    REQUIRE((r.wt[0] == 0 && r.wt[1] == 1 && r.wt[2] == 1 && r.wt[3] == 1));
    REQUIRE((r.tc[0] == 0 && r.tc[1] == 1 && r.tc[2] == 0 && r.tc[3] == 1));
    REQUIRE((r.et[0] == 0 && r.et[1] == 0 && r.et[2] == 0 && r.et[3] == 1));
}

TEST_CASE("region masks nest for any label map") {
    std::mt19937_64 gen(4);
    for (int trial = 0; trial < 100; ++trial) {
        const auto m = oracles::random_label_map({6, 6, 6}, gen);
        const auto r = remap_regions(m);
        for (std::int64_t i = 0; i < m.numel(); ++i) {
            REQUIRE(r.et[i] <= r.tc[i]);
            REQUIRE(r.tc[i] <= r.wt[i]);
        }
    }
}

TEST_CASE("subject evaluation wires regions to both metrics") {
    std::mt19937_64 gen(5);
    const auto pred = oracles::random_label_map({7, 6, 5}, gen);
    const auto gt = oracles::random_label_map({7, 6, 5}, gen);
    const std::array<double, 3> sp{1.0, 1.25, 0.8};
    const auto s = evaluate(pred, gt, sp, "case0");
    REQUIRE(s.subject == "case0");
    const auto p = remap_regions(pred), g = remap_regions(gt);
    REQUIRE(s.dice_wt == dice(p.wt, g.wt));
    REQUIRE(s.dice_tc == dice(p.tc, g.tc));
    REQUIRE(s.dice_et == dice(p.et, g.et));
    REQUIRE(s.hd95_wt == hd95(p.wt, g.wt, sp));
    REQUIRE(s.hd95_tc == hd95(p.tc, g.tc, sp));
    REQUIRE(s.hd95_et == hd95(p.et, g.et, sp));
}

TEST_CASE("aggregate statistics are pinned") {
    SubjectMetrics a, b;
    a.dice_wt = 0.8;
    b.dice_wt = 0.9;
    a.hd95_wt = 1.0;
    b.hd95_wt = 3.0;
    const auto rep = aggregate({a, b});
    REQUIRE_THAT(rep.dice_wt.mean, Catch::Matchers::WithinAbs(0.85, 1e-15));
    REQUIRE_THAT(rep.dice_wt.stddev,
                 Catch::Matchers::WithinAbs(0.07071067811865475, 1e-15));  // sample stddev
    REQUIRE_THAT(rep.dice_wt.median, Catch::Matchers::WithinAbs(0.85, 1e-15));
    REQUIRE_THAT(rep.hd95_wt.mean, Catch::Matchers::WithinAbs(2.0, 1e-15));

    SubjectMetrics c;
    c.dice_wt = 0.1;
    const auto rep3 = aggregate({a, b, c});  // odd count: median is the middle value
    REQUIRE(rep3.dice_wt.median == 0.8);
    const auto rep1 = aggregate({a});
    REQUIRE(rep1.dice_wt.stddev == 0.0);
    REQUIRE_THROWS_AS(aggregate({}), std::invalid_argument);
}

TEST_CASE("report files round-trip the aggregate block") {
    SubjectMetrics a, b;
    a.subject = "s1";
    b.subject = "s2";
    a.dice_wt = 0.75;
    b.dice_wt = 0.85;
    const auto rep = aggregate({a, b});
    const auto path = (std::filesystem::temp_directory_path() / "vox2seg_report_test.txt").string();
    write_report(path, rep);
    std::ifstream in(path);
    REQUIRE(in.good());
    std::string header;
    std::getline(in, header);
    REQUIRE(header == "subject dice_wt dice_tc dice_et hd95_wt hd95_tc hd95_et");
    std::string s1line;
    std::getline(in, s1line);
    REQUIRE(s1line.rfind("s1 0.750000", 0) == 0);
    std::string rest((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    REQUIRE(rest.find("aggregate") != std::string::npos);
    REQUIRE(rest.find("dice_wt mean 0.800000") != std::string::npos);
    std::remove(path.c_str());

    std::ostringstream os;
    print_summary(os, rep);
    REQUIRE(os.str().find("DiceWT") != std::string::npos);
    REQUIRE(os.str().find("Mean") != std::string::npos);
    REQUIRE(os.str().find("0.8000") != std::string::npos);
}
