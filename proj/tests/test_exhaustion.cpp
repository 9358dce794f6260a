#include <doctest.h>

#include <cmath>
#include <map>
#include <set>

#include "fiid/errors.hpp"
#include "fiid/exhaustion.hpp"

using namespace fiid;

namespace {
ExhaustionSchedule schedule(std::vector<int> caps) {
    ExhaustionSchedule s;
    s.caps = std::move(caps);
    return s;
}
}  // namespace

TEST_CASE("levels are nested and cells are connected and capped") {
    auto g = Substrate::grid({12, 12}, {false, false});
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        Tape tape(seed);
        auto ex = build_exhaustion(g, tape, schedule({4, 16, 64}));
        REQUIRE(ex.level_count() >= 2);
        for (int l = 0; l < ex.level_count(); ++l) {
            const auto& L = ex.levels[l];
            for (const auto& c : L.cells) {
                CHECK(static_cast<int>(c.size()) <= L.cap);
                CHECK(induced(g, c).connected());
            }
            if (l + 1 < ex.level_count()) {
                const auto& U = ex.levels[l + 1];
                // Clusters coarsen from one level to the next.
                for (const auto& e : g.edges())
                    if (L.cluster_of[e.u] == L.cluster_of[e.v])
                        CHECK(U.cluster_of[e.u] == U.cluster_of[e.v]);
                // Every cell sits inside a single cell of the next level.
                for (const auto& c : L.cells)
                    for (int v : c) CHECK(U.cell_of[v] == U.cell_of[c[0]]);
            }
        }
        const auto& top = ex.levels.back();
        CHECK(top.cells.size() == 1);
        CHECK(static_cast<int>(top.cells[0].size()) == g.vertex_count());
    }
}

TEST_CASE("excluded vertices raise NotIncluded") {
    auto g = Substrate::grid({8, 8}, {false, false});
    Tape tape(2);
    auto ex = build_exhaustion(g, tape, schedule({4}));
    bool saw = false;
    for (int v = 0; v < g.vertex_count(); ++v)
        if (!ex.levels[0].included(v)) {
            CHECK_THROWS_AS(ex.cell_of(0, v), NotIncluded);
            saw = true;
        }
    CHECK(saw);
}

TEST_CASE("forced top when the schedule is short") {
    auto g = Substrate::grid({10, 10}, {false, false});
    Tape tape(4);
    auto ex = build_exhaustion(g, tape, schedule({4}));
    CHECK(ex.forced_top);
    CHECK(ex.level_count() == 2);
}

TEST_CASE("schedule validation") {
    CHECK_THROWS(schedule({}).validate());
    CHECK_THROWS(schedule({4, 4}).validate());
    CHECK_THROWS(schedule({1}).validate());
}

TEST_CASE("thinning keeps the top level") {
    auto g = Substrate::grid({12, 12}, {false, false});
    Tape tape(9);
    auto ex = build_exhaustion(g, tape, schedule({4, 16, 64}));
    auto th = ex.thinned({0});
    CHECK(th.level_count() == 2);
    CHECK(th.levels.back().cells.size() == 1);
}

TEST_CASE("locality radius is certified") {
    auto g = Substrate::grid({10, 10}, {false, false});
    Tape tape(6);
    auto s = schedule({4, 16});
    auto ex = build_exhaustion(g, tape, s);
    int r = locality_radius_certificate(g, tape, s, ex, 0, 6, 2);
    CHECK(r >= 1);
    CHECK(r <= g.diameter());
}

TEST_CASE("cell membership is translation-equivariant in law on the torus") {
    // The probability that a vertex is included at level 1 is the same for every vertex.
    auto g = Substrate::grid({6, 6}, {true, true});
    auto s = schedule({4});
    std::vector<int> hits(g.vertex_count(), 0);
    const int seeds = 2000;
    for (int seed = 1; seed <= seeds; ++seed) {
        Tape tape(seed);
        auto ex = build_exhaustion(g, tape, s);
        for (int v = 0; v < g.vertex_count(); ++v) hits[v] += ex.levels[0].included(v);
    }
    double mean = 0;
    for (int h : hits) mean += h;
    mean /= g.vertex_count();
    for (int h : hits) CHECK(std::abs(h - mean) / seeds < 0.05);
}
