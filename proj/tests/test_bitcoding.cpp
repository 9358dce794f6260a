#include <doctest.h>

#include <bit>
#include <cmath>
#include <map>
#include <numeric>
#include <random>

#include "fiid/bitcoding.hpp"
#include "fiid/coupling.hpp"
#include "fiid/errors.hpp"

using namespace fiid;

namespace {

DistTable law(std::vector<int> ground, MaskTable mass) {
    DistTable d;
    d.ground = std::move(ground);
    d.mass = std::move(mass);
    return d;
}

DistTable random_small_law(std::mt19937_64& rng, int H, int d, int atoms) {
    std::vector<Mask> pool;
    for (Mask m = 0; m < (Mask{1} << H); ++m)
        if (std::popcount(m) <= d) pool.push_back(m);
    std::shuffle(pool.begin(), pool.end(), rng);
    std::uniform_real_distribution<double> u(0.01, 1.0);
    DistTable t;
    for (int i = 0; i < H; ++i) t.ground.push_back(i);
    for (int i = 0; i < atoms && i < static_cast<int>(pool.size()); ++i) t.mass[pool[i]] = u(rng);
    t.normalize();
    return t;
}

ExhaustionSchedule caps(std::vector<int> c) {
    ExhaustionSchedule s;
    s.caps = std::move(c);
    return s;
}

}  // namespace

TEST_CASE("tv map: exact floors give zero distance") {
    auto mu = law({0}, {{0, 0.7}, {1, 0.3}});
    auto m = build_tv_map(mu, 10, false);
    CHECK(m.counts == std::vector<std::uint64_t>{7, 3});
    CHECK(m.padding() == 0);
    CHECK(m.tv == doctest::Approx(0).epsilon(1e-12));
}

TEST_CASE("tv map: padding to the last atom") {
    auto mu = law({0}, {{0, 2.0 / 3}, {1, 1.0 / 3}});
    auto m = build_tv_map(mu, 4, false);
    CHECK(m.counts == std::vector<std::uint64_t>{2, 1});
    CHECK(m.padding() == 1);
    CHECK(m.codomain[m.pad] == 1);
    CHECK(m.tv == doctest::Approx(1.0 / 6));
    CHECK(m.lookup(0) == 0);
    CHECK(m.lookup(2) == 1);
    CHECK(m.lookup(3) == 1);
}

TEST_CASE("tv map: point mass and errors") {
    auto mu = law({0, 1}, {{2, 1.0}});
    for (std::uint64_t N : {1, 7, 64}) CHECK(build_tv_map(mu, N, true).tv == doctest::Approx(0));
    CHECK_THROWS_AS(build_tv_map(mu, 0, false), std::invalid_argument);
}

TEST_CASE("tv map: bound and subset inequality on random laws") {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 200; ++trial) {
        int H = 1 + trial % 4;
        int atoms = 1 + static_cast<int>(rng() % (Mask{1} << H));
        auto mu = random_small_law(rng, H, H, atoms);
        std::uint64_t N = mu.mass.size() + rng() % 200;
        bool dom = trial % 2 == 0;
        auto m = build_tv_map(mu, N, dom);
        const double slack = static_cast<double>(m.codomain.size()) / N;
        CHECK(m.tv < slack);
        auto nu = m.pushforward();
        // ν∘φ^{-1}(M') >= μ(M') - |M|/N on every subset of the codomain.
        const int M = static_cast<int>(m.codomain.size());
        REQUIRE(M <= 16);
        for (int sub = 1; sub < (1 << M); ++sub) {
            double a = 0, b = 0;
            for (int k = 0; k < M; ++k)
                if (sub >> k & 1) {
                    a += nu.prob(m.codomain[k]);
                    b += m.mu[k];
                }
            CHECK(a >= b - slack - 1e-12);
        }
        if (dom) CHECK(check_domination(nu, mu).dominates);
    }
}

TEST_CASE("generation: worked instance |H|=8, delta=1/4, eps=1/16") {
    CHECK(count_small_subsets(8, 2) == 37);
    CHECK(generation_bound(8, 0.25, 1.0 / 16) == doctest::Approx(4 + 2 * std::log2(4 * std::exp(1.0))));
    CHECK(generation_bound(8, 0.25, 1.0 / 16) == doctest::Approx(10.885).epsilon(1e-3));
    std::vector<int> ground(8);
    std::iota(ground.begin(), ground.end(), 0);
    auto mu = law(ground, {{0, 0.5}, {0b11, 0.25}, {0b10000000, 0.25}});
    auto m = dominating_map(mu, 0.25, 1.0 / 16);
    CHECK(m.alpha == 10);
    CHECK(m.N == 1024);
    CHECK(m.tv < 1.0 / 16);
    auto big = law(ground, {{0, 0.5}, {0b111, 0.5}});
    CHECK_THROWS_AS(dominating_map(big, 0.25, 1.0 / 16), SupportCapViolated);
}

TEST_CASE("generation: point mass needs no bits") {
    auto mu = law({3, 4, 5}, {{0, 1.0}});
    auto m = dominating_map(mu, 0.5, 1.0 / 64);
    CHECK(m.alpha == 0);
    CHECK(m.tv == doctest::Approx(0));
}

TEST_CASE("generation: 50 random laws on |H|=6, delta=1/3, eps=1/32") {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 50; ++trial) {
        auto mu = random_small_law(rng, 6, 2, 2 + trial % 20);
        auto m = dominating_map(mu, 1.0 / 3, 1.0 / 32);
        CHECK(m.tv < 1.0 / 32);
        CHECK(m.alpha <= generation_bound(6, 1.0 / 3, 1.0 / 32));
        CHECK(check_domination(m.pushforward(), mu).dominates);
    }
}

TEST_CASE("generation: bit count within the bound over a parameter sweep") {
    for (int H = 1; H <= 40; ++H)
        for (int d = 1; d <= H; ++d)
            for (int k = 1; k <= 8; ++k) {
                const double eps = std::ldexp(1.0, -2 * k);
                const double delta = static_cast<double>(d) / H;
                const long double need = count_small_subsets(H, d) / eps;
                int alpha = 0;
                while (std::ldexp(1.0L, alpha) < need) ++alpha;
                CHECK(alpha <= generation_bound(H, delta, eps) + 1e-9);
            }
}

TEST_CASE("dominating sampler reads alpha bits at the cell's minimum vertex") {
    auto g = Substrate::grid({4, 2}, {false, false});
    auto cell = induced(g, {0, 1, 4, 5});
    auto mu = law({0, 1, 4, 5}, {{0, 0.6}, {1, 0.3}, {2, 0.1}});
    Tape tape(3);
    auto d = dominating_sampler(cell, mu, 0.25, 1.0 / 16, tape, "gen");
    CHECK(d.alpha == dominating_map(mu, 0.25, 1.0 / 16).alpha);
    CHECK(tape.bits_used(0) == static_cast<std::uint64_t>(d.alpha));
    CHECK(tape.bits_used(1) == 0);
    CHECK(tape.locality_violations() == 0);
    CHECK(mu.mass.count(d.value) + (d.value == 0b1111) == 1);
}

TEST_CASE("stable matching: trivial cases and infeasibility") {
    auto g = Substrate::grid({5}, {false});
    CHECK(stable_match_bits(g, {}, {1, 2}, {}).pairs.empty());
    auto m = stable_match_bits(g, {0}, {4}, {});
    REQUIRE(m.pairs.size() == 1);
    CHECK(m.pairs[0] == std::pair{0, 4});
    CHECK(m.radius == 4);
    CHECK_THROWS_AS(stable_match_bits(g, {0, 1}, {4}, {}), Infeasible);
}

TEST_CASE("stable matching: labels break distance ties") {
    auto g = Substrate::grid({5}, {false});
    CHECK(*stable_match_bits(g, {2}, {1, 3}, {}).partner(2) == 1);
    CHECK(*stable_match_bits(g, {2}, {1, 3}, {0, 9, 0, 1, 0}).partner(2) == 3);
}

TEST_CASE("stable matching: random marks on a 32x32 torus") {
    auto g = Substrate::grid({32, 32}, {true, true});
    std::mt19937_64 rng(21);
    for (int trial = 0; trial < 3; ++trial) {
        std::vector<int> minus, plus;
        std::vector<std::uint64_t> labels(g.vertex_count());
        for (int v = 0; v < g.vertex_count(); ++v) {
            double u = std::uniform_real_distribution<double>(0, 1)(rng);
            if (u < 0.1) minus.push_back(v);
            else if (u < 0.3) plus.push_back(v);
            labels[v] = rng() & 15;
        }
        auto m = stable_match_bits(g, minus, plus, labels);
        CHECK(m.pairs.size() == minus.size());
        CHECK(matching_is_stable(g, minus, plus, m));
        CHECK(m.radius >= 1);
        auto again = stable_match_bits(g, minus, plus, labels);
        CHECK(again.pairs == m.pairs);
    }
}

TEST_CASE("bit pool: reallocation routes deficits to partners") {
    auto g = Substrate::grid({4}, {false});
    BitPool pool(4, BitBudget{10, 2});
    pool.charge(0, 9);  // vertex 0 has 1 unused <= c
    pool.rebalance(g, {});
    REQUIRE(pool.matching().pairs.size() == 1);
    CHECK(pool.matching().pairs[0] == std::pair{0, 1});
    CHECK(pool.charge(0, 3) == 1);
    CHECK(pool.used(1) == 3);
    CHECK_THROWS_AS(pool.charge(2, 11), BudgetExceeded);
    BitPool free_pool(4, std::nullopt);
    free_pool.charge(0, 1000);
    free_pool.rebalance(g, {});
    CHECK(!free_pool.unused(0));
}

TEST_CASE("bit budget from the pilot mean") {
    auto b = BitBudget::from_mean(7.94);
    CHECK(b.cap == 80);
    CHECK(b.c == 1);
    CHECK(BitBudget::from_mean(16).c == 2);
}

TEST_CASE("fv cascade, exact mode: spanning trees of a ladder agree with the paired chain") {
    auto g = Substrate::grid({4, 2}, {false, false});
    FvOptions o;
    o.paired = true;
    for (std::uint64_t seed = 1; seed <= 40; ++seed) {
        Tape tape(seed);
        auto ex = build_exhaustion(g, tape, caps({2, 4, 8}));
        auto t = fv_cascade_run(g, ex, ModelSpec::ust_free(), tape, o);
        CHECK(t.level_count() == ex.level_count());
        int on = 0;
        for (int e = 0; e < g.edge_count(); ++e) on += t.levels.back().state[e];
        CHECK(on == g.vertex_count() - 1);
        for (const auto& L : t.levels) {
            CHECK(L.disagreement == 0);
            CHECK(L.padded == 0);
        }
    }
}

TEST_CASE("fv cascade, exact mode: paired exact chain keeps the exact law") {
    // 2x3 box, plus-boundary Ising at beta 0.3: the paired chain must follow
    // the cell law on the full box whatever the fv chain does.
    auto g = Substrate::grid({3, 2}, {false, false});
    auto model = ModelSpec::ising(0.3, Boundary::Plus);
    auto oracle = enumerate_exact(model, induced(g, {0, 1, 2, 3, 4, 5}));
    FvOptions o;
    o.paired = true;
    const int seeds = 20000;
    std::map<Mask, int> fv_hits, exact_hits;
    int padded = 0;
    for (int seed = 1; seed <= seeds; ++seed) {
        Tape tape(seed);
        auto ex = build_exhaustion(g, tape, caps({3, 6}));
        auto t = fv_cascade_run(g, ex, model, tape, o);
        Mask a = 0, b = 0;
        for (int v = 0; v < 6; ++v) {
            if (t.levels.back().exact[v]) a |= Mask{1} << v;
            if (t.levels.back().state[v]) b |= Mask{1} << v;
        }
        ++exact_hits[a];
        ++fv_hits[b];
        for (const auto& L : t.levels) padded += L.padded;
    }
    double tv_exact = 0, tv_fv = 0;
    for (Mask m = 0; m < 64; ++m) {
        double p = oracle.prob(m);
        tv_exact += std::fabs(exact_hits[m] / double(seeds) - p);
        tv_fv += std::fabs(fv_hits[m] / double(seeds) - p);
    }
    CHECK(tv_exact / 2 < 0.03);
    CHECK(padded > 0);
    // fv errors are at most ε_1 + ε_2 in total variation.
    CHECK(tv_fv / 2 < 0.25 + 0.0625 + 0.03);
}

TEST_CASE("fv cascade, mc mode: 8x8 torus Ising under a pilot budget") {
    auto g = Substrate::grid({8, 8}, {true, true});
    auto model = ModelSpec::ising(0.2, Boundary::Plus);
    auto sched = caps({2, 4, 8, 16, 32});
    FvOptions o;
    o.mode = Mode::MonteCarlo;
    o.paired = true;
    std::vector<FvTrace> pilot;
    for (std::uint64_t seed = 900; seed < 910; ++seed) {
        Tape tape(seed);
        auto ex = build_exhaustion(g, tape, sched);
        pilot.push_back(fv_cascade_run(g, ex, model, tape, o));
    }
    o.budget = BitBudget::from_mean(mean_total_bits(pilot));
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        Tape tape(seed);
        auto ex = build_exhaustion(g, tape, sched);
        FvTrace t;
        CHECK_NOTHROW(t = fv_cascade_run(g, ex, model, tape, o));
        for (const auto& L : t.levels) {
            CHECK(L.disagreement <= std::ldexp(1.0, -2 * L.level));
            CHECK(L.precision <= 52);
        }
        for (auto b : t.bits_per_vertex) CHECK(b <= o.budget->cap);
    }
}

TEST_CASE("fv cascade: deterministic and thread-independent") {
    auto g = Substrate::grid({4, 4}, {false, false});
    auto model = ModelSpec::ising(0.3, Boundary::Plus);
    for (Mode mode : {Mode::Exact, Mode::MonteCarlo}) {
        FvOptions a;
        a.mode = mode;
        a.paired = true;
        FvOptions b = a;
        b.threads = 4;
        for (std::uint64_t seed = 1; seed <= 5; ++seed) {
            Tape t1(seed), t2(seed), t3(seed);
            auto ex = build_exhaustion(g, t1, caps({2, 4, 8, 16}));
            build_exhaustion(g, t2, caps({2, 4, 8, 16}));
            build_exhaustion(g, t3, caps({2, 4, 8, 16}));
            auto r1 = fv_cascade_run(g, ex, model, t1, a);
            auto r2 = fv_cascade_run(g, ex, model, t2, a);
            auto r3 = fv_cascade_run(g, ex, model, t3, b);
            CHECK(r1.to_json() == r2.to_json());
            CHECK(r1.to_json() == r3.to_json());
        }
    }
}

TEST_CASE("fv cascade: refuses increasing families and mc outside plus Ising") {
    auto g = Substrate::grid({2, 2}, {false, false});
    Tape tape(1);
    auto ex = build_exhaustion(g, tape, caps({4}));
    CHECK_THROWS_AS(fv_cascade_run(g, ex, ModelSpec::ust_wired(), tape), std::invalid_argument);
    FvOptions o;
    o.mode = Mode::MonteCarlo;
    CHECK_THROWS_AS(fv_cascade_run(g, ex, ModelSpec::ust_free(), tape, o), std::invalid_argument);
}

TEST_CASE("level thinning keeps levels meeting the 4^-n proxy") {
    CascadeTrace t;
    t.site_total = 4;
    t.ground = {{0, 1}, {0, 1, 2, 3}, {0, 1, 2, 3}};
    // level 1: sites 2,3 implicitly on; top has site 3 off -> proxy 1/4.
    // level 2: sites 0..3 with site 3 on -> proxy 1/4 > 1/16 once level 1 is kept.
    t.state = {{1, 1, 0, 0}, {1, 1, 1, 1}, {1, 1, 1, 0}};
    auto th = thin_levels({t});
    CHECK(th.proxy[0] == doctest::Approx(0.25));
    CHECK(th.proxy[1] == doctest::Approx(0.25));
    CHECK(th.proxy[2] == doctest::Approx(0));
    CHECK(th.keep == std::vector<int>{0, 2});
}

TEST_CASE("spend summary recovers an exact C n 2^-n series") {
    std::vector<double> y;
    for (int n = 1; n <= 10; ++n) y.push_back(3.0 * n * std::ldexp(1.0, -n));
    auto s = analyze_spend(y);
    CHECK(s.fit_c == doctest::Approx(3.0));
    CHECK(s.fit_rss < 1e-20);
    CHECK(s.partial.back() == doctest::Approx(3.0 * (2 - 12.0 / 1024)));
    CHECK(s.tail_estimate == doctest::Approx(3.0 * 12.0 / 1024));
    CHECK(s.summable());
}
