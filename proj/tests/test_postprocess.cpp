#include <map>
#include <random>

#include "catch2/catch_amalgamated.hpp"
#include "support/oracles.hpp"
#include "vox2seg/metrics.hpp"
#include "vox2seg/postprocess.hpp"

using namespace vox2seg;

namespace {

LabelMap with_et_count(std::int64_t count, const Vec3i& size) {
    LabelMap m({size[0], size[1], size[2]});
    for (std::int64_t i = 0; i < m.numel(); ++i) {
        if (i < count)
            m[i] = 4;
        else if (i < count + 50)
            m[i] = 2;
        else if (i < count + 80)
            m[i] = 1;
    }
    return m;
}

std::int64_t count_label(const LabelMap& m, std::uint8_t v) {
    std::int64_t n = 0;
    for (std::int64_t i = 0; i < m.numel(); ++i) n += m[i] == v;
    return n;
}

}  // namespace

TEST_CASE("sparse enhancing tumor is demoted below the threshold") {
    const Vec3i size{12, 12, 12};
    const auto at999 = relabel_small_et(with_et_count(999, size), 1000);
    REQUIRE(count_label(at999, 4) == 0);
    REQUIRE(count_label(at999, 1) == 999 + 30);

    const auto at1000 = relabel_small_et(with_et_count(1000, size), 1000);
    REQUIRE(count_label(at1000, 4) == 1000);  // at the threshold: untouched

    // strict comparison and the default threshold coincide
    const auto def999 = relabel_small_et(with_et_count(999, size));
    REQUIRE(count_label(def999, 4) == 0);
    const auto def1000 = relabel_small_et(with_et_count(1000, size));
    REQUIRE(count_label(def1000, 4) == 1000);
}

TEST_CASE("enhancing-tumor demotion preserves the coarser regions") {
    std::mt19937_64 gen(1);
    for (int trial = 0; trial < 30; ++trial) {
        const auto m = oracles::random_label_map({8, 8, 8}, gen);
        std::uniform_int_distribution<std::int64_t> th(0, 300);
        const auto out = relabel_small_et(m, th(gen));
        const auto before = remap_regions(m);
        const auto after = remap_regions(out);
        for (std::int64_t i = 0; i < m.numel(); ++i) {
            REQUIRE(after.wt[i] == before.wt[i]);
            REQUIRE(after.tc[i] == before.tc[i]);
            // only 4 -> 1 moves are allowed
            if (out[i] != m[i]) {
                REQUIRE(m[i] == 4);
                REQUIRE(out[i] == 1);
            }
        }
    }
}

TEST_CASE("small-cluster removal matches the flood-fill oracle") {
    std::mt19937_64 gen(2);
    for (const int connectivity : {6, 18, 26}) {
        for (int trial = 0; trial < 25; ++trial) {
            const auto m = oracles::random_label_map({7, 7, 7}, gen);
            std::uniform_int_distribution<std::int64_t> mv(1, 20);
            const std::int64_t min_volume = mv(gen);
            const std::uint8_t label = trial % 2 ? 4 : 2;
            const auto out = remove_small_clusters(m, label, min_volume, 0, connectivity);
            const auto [comp, sizes] = oracles::ref_components(m, label, connectivity);
            for (std::int64_t i = 0; i < m.numel(); ++i) {
                if (m[i] != label) {
                    REQUIRE(out[i] == m[i]);  // other labels untouched
                } else if (sizes[static_cast<std::size_t>(comp[static_cast<std::size_t>(i)])] <
                           min_volume) {
                    REQUIRE(out[i] == 0);
                } else {
                    REQUIRE(out[i] == label);
                }
            }
        }
    }
}

TEST_CASE("connectivity changes which clusters merge") {
    // two voxels touching only at a corner: one 26-component, two 6-components
    LabelMap m({2, 2, 2});
    m.at3(0, 0, 0) = 4;
    m.at3(1, 1, 1) = 4;
    const auto kept26 = remove_small_clusters(m, 4, 2, 0, 26);
    REQUIRE(count_label(kept26, 4) == 2);  // one component of size 2 survives
    const auto kept6 = remove_small_clusters(m, 4, 2, 0, 6);
    REQUIRE(count_label(kept6, 4) == 0);  // two singletons, both removed

    // edge-touching pair: merged under 18 and 26, split under 6
    LabelMap e({2, 2, 1});
    e.at3(0, 0, 0) = 4;
    e.at3(1, 1, 0) = 4;
    REQUIRE(count_label(remove_small_clusters(e, 4, 2, 0, 18), 4) == 2);
    REQUIRE(count_label(remove_small_clusters(e, 4, 2, 0, 6), 4) == 0);
}

TEST_CASE("replacement label is applied verbatim") {
    LabelMap m({3, 1, 1});
    m[0] = 4;  // singleton
    const auto out = remove_small_clusters(m, 4, 2, 1, 26);
    REQUIRE(out[0] == 1);
    REQUIRE(out[1] == 0);
}

TEST_CASE("cluster removal validates its arguments") {
    LabelMap m({2, 2, 2});
    REQUIRE_THROWS_AS(remove_small_clusters(m, 4, 2, 0, 7), std::invalid_argument);
    REQUIRE_THROWS_AS(remove_small_clusters(m, 3, 2, 0, 26), std::invalid_argument);
    REQUIRE_THROWS_AS(remove_small_clusters(m, 4, 2, 3, 26), std::invalid_argument);
}
