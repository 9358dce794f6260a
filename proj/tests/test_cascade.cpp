#include <doctest.h>

#include <cmath>
#include <map>
#include <numeric>

#include "fiid/cascade.hpp"
#include "fiid/coupling.hpp"
#include "fiid/errors.hpp"
#include "fiid/kernels.hpp"

using namespace fiid;

namespace {
ExhaustionSchedule caps(std::vector<int> c) {
    ExhaustionSchedule s;
    s.caps = std::move(c);
    return s;
}

std::vector<int> all_vertices(const Substrate& g) {
    std::vector<int> v(g.vertex_count());
    std::iota(v.begin(), v.end(), 0);
    return v;
}

bool is_spanning_tree(const Substrate& g, const Config& c) {
    if (static_cast<int>(c.members.size()) != g.vertex_count() - 1) return false;
    std::vector<int> p(g.vertex_count());
    std::iota(p.begin(), p.end(), 0);
    auto find = [&](int x) {
        while (p[x] != x) x = p[x] = p[p[x]];
        return x;
    };
    for (int e : c.members) {
        int a = find(g.edge(e).u), b = find(g.edge(e).v);
        if (a == b) return false;
        p[a] = b;
    }
    return true;
}

// Empirical law of the final configuration against the exact table.
double tv_against_exact(const Substrate& g, const ModelSpec& m, const ExhaustionSchedule& s,
                        int runs, Mode mode) {
    auto exact = enumerate_exact(m, induced(g, all_vertices(g)));
    std::map<Mask, int> counts;
    for (int seed = 1; seed <= runs; ++seed) {
        Tape tape(seed);
        auto ex = build_exhaustion(g, tape, s);
        CascadeOptions opt;
        opt.mode = mode;
        auto t = cascade_run(g, ex, m, tape, opt);
        ++counts[exact.mask_of(t.final_config())];
    }
    double tv = 0;
    for (const auto& [k, p] : exact.mass) {
        auto it = counts.find(k);
        tv += std::abs(p - (it == counts.end() ? 0 : it->second) / double(runs));
    }
    for (const auto& [k, c] : counts)
        if (!exact.mass.count(k)) tv += c / double(runs);
    return tv / 2;
}
}  // namespace

TEST_CASE("a single whole-graph level is exact sampling") {
    auto g = Substrate::grid({3, 3}, {false, false});
    for (int seed = 1; seed <= 20; ++seed) {
        Tape a(seed), b(seed);
        auto ex = build_exhaustion(g, a, caps({9}));
        REQUIRE(ex.level_count() == 1);
        auto t = cascade_run(g, ex, ModelSpec::ust_free(), a);
        auto direct = sample_exact(ModelSpec::ust_free(), induced(g, all_vertices(g)), b,
                                   "cascade.L1.sample");
        CHECK(t.final_config() == direct);
    }
}

TEST_CASE("free UST cascade on the 3x3 box ends in a spanning tree") {
    auto g = Substrate::grid({3, 3}, {false, false});
    for (int seed = 1; seed <= 200; ++seed) {
        Tape tape(seed);
        auto ex = build_exhaustion(g, tape, caps({3, 9}));
        auto t = cascade_run(g, ex, ModelSpec::ust_free(), tape);
        CHECK(is_spanning_tree(g, t.final_config()));
    }
}

TEST_CASE("change counts stay at most two on the 4x4 torus") {
    auto g = Substrate::grid({4, 4}, {true, true});
    for (int seed = 1; seed <= 500; ++seed) {
        Tape tape(seed);
        auto ex = build_exhaustion(g, tape, caps({2, 16}));
        auto t = cascade_run(g, ex, ModelSpec::ust_free(), tape);
        for (int c : t.change_count) CHECK(c <= 2);
        CHECK(is_spanning_tree(g, t.final_config()));
    }
}

TEST_CASE("cascade law matches enumeration on the 2x3 box") {
    auto g = Substrate::grid({2, 3}, {false, false});
    CHECK(tv_against_exact(g, ModelSpec::ust_free(), caps({3, 6}), 20000, Mode::Exact) < 0.02);
    CHECK(tv_against_exact(g, ModelSpec::ust_wired(), caps({3, 6}), 20000, Mode::Exact) < 0.02);
    auto gv = Substrate::grid({2, 3}, {false, false}, Percolation::Vertex);
    auto ising = ModelSpec::ising(0.4, Boundary::Plus);
    CHECK(tv_against_exact(gv, ising, caps({3, 6}), 20000, Mode::Exact) < 0.03);
    CHECK(tv_against_exact(gv, ising, caps({3, 6}), 20000, Mode::MonteCarlo) < 0.03);
}

TEST_CASE("FK cascades run in the verified orientation") {
    auto g = Substrate::grid({3, 3}, {false, false});
    for (auto b : {Boundary::Wired, Boundary::Free}) {
        auto m = ModelSpec::fk(0.5, 2.0, b);
        for (int seed = 1; seed <= 20; ++seed) {
            Tape tape(seed);
            auto ex = build_exhaustion(g, tape, caps({3, 9}));
            CHECK_NOTHROW(cascade_run(g, ex, m, tape));
        }
    }
}

TEST_CASE("parallel and sequential runs are identical") {
    auto g = Substrate::grid({4, 4}, {true, true});
    for (int seed = 1; seed <= 10; ++seed) {
        Tape a(seed), b(seed);
        auto ex = build_exhaustion(g, a, caps({2, 16}));
        Tape c(seed);
        build_exhaustion(g, c, caps({2, 16}));
        CascadeOptions par;
        par.threads = 3;
        auto t1 = cascade_run(g, ex, ModelSpec::ust_free(), b);
        auto t2 = cascade_run(g, ex, ModelSpec::ust_free(), c, par);
        CHECK(t1.state == t2.state);
    }
}

TEST_CASE("flipped coupling arcs abort the cascade") {
    auto g = Substrate::grid({3, 3}, {false, false});
    clear_kernel_caches();
    set_coupling_mutation(true);
    bool failed = false;
    for (int seed = 1; seed <= 5 && !failed; ++seed) {
        Tape tape(seed);
        auto ex = build_exhaustion(g, tape, caps({3, 9}));
        try {
            cascade_run(g, ex, ModelSpec::ust_free(), tape);
        } catch (const DominationFails&) {
            failed = true;
        }
    }
    set_coupling_mutation(false);
    clear_kernel_caches();
    CHECK(failed);
}

TEST_CASE("sandwich at beta = 0 resolves everything at level 1") {
    auto g = Substrate::grid({4, 4}, {false, false}, Percolation::Vertex);
    for (int seed = 1; seed <= 10; ++seed) {
        Tape tape(seed);
        auto ex = build_exhaustion(g, tape, caps({3, 16}));
        auto t = sandwich_run(g, ex, ModelSpec::ising(0.0, Boundary::Plus), tape);
        for (int v : ex.levels[0].included_vertices()) CHECK(t.stopping_level[v] == 1);
        auto p = stopping_profile(t);
        CHECK(p.unresolved_fraction == 0);
    }
}

TEST_CASE("USF sandwich on the 4x4 torus resolves at the top") {
    auto g = Substrate::grid({4, 4}, {true, true});
    for (int seed = 1; seed <= 30; ++seed) {
        Tape tape(seed);
        auto ex = build_exhaustion(g, tape, caps({2, 16}));
        auto t = sandwich_run(g, ex, ModelSpec::ust_free(), tape);
        auto p = stopping_profile(t);
        CHECK(p.unresolved_fraction == 0);
        Config resolved;
        for (int e = 0; e < t.site_total; ++e)
            if (t.value[e] == 1) resolved.members.push_back(e);
        CHECK(is_spanning_tree(g, resolved));
    }
}

TEST_CASE("three-level USF sandwich on the 4x4 torus") {
    // Symmetric sub-cells (4-cycles) are reached through different canonical
    // labellings; the pair law must not depend on the route.
    auto g = Substrate::grid({4, 4}, {true, true});
    for (auto c : {std::vector<int>{2, 4, 16}, std::vector<int>{2, 8, 16}, std::vector<int>{3, 8, 16}})
        for (int seed = 7000; seed < 7040; ++seed) {
            Tape tape(seed);
            auto ex = build_exhaustion(g, tape, caps(c));
            auto t = sandwich_run(g, ex, ModelSpec::ust_free(), tape);
            CHECK(stopping_profile(t).unresolved_fraction == 0);
        }
}

TEST_CASE("Ising sandwich in exact and mc mode on a small box") {
    auto g = Substrate::grid({3, 3}, {false, false}, Percolation::Vertex);
    for (auto mode : {Mode::Exact, Mode::MonteCarlo}) {
        for (int seed = 1; seed <= 20; ++seed) {
            Tape tape(seed);
            auto ex = build_exhaustion(g, tape, caps({3, 9}));
            CascadeOptions opt;
            opt.mode = mode;
            auto t = sandwich_run(g, ex, ModelSpec::ising(0.5, Boundary::Plus), tape, opt);
            CHECK_NOTHROW(t.check_invariants());
        }
    }
}
