#include <doctest.h>

#include <cmath>
#include <random>

#include "fiid/coupling.hpp"
#include "fiid/errors.hpp"

using namespace fiid;

namespace {
DistTable table(std::vector<int> ground, MaskTable mass) {
    DistTable d{std::move(ground), std::move(mass)};
    d.normalize();
    return d;
}

// Strassen's criterion by brute force over every non-trivial up-set of the cube.
double min_upset_gap(const MaskTable& upper, const MaskTable& lower, int k) {
    const int cube = 1 << k;
    double best = INFINITY;
    const std::uint64_t full = (std::uint64_t{1} << cube) - 1;
    for (std::uint64_t set = 1; set < full; ++set) {
        bool closed = true;
        for (int a = 0; a < cube && closed; ++a)
            if (set >> a & 1)
                for (int b = 0; b < cube; ++b)
                    if ((a & ~b) == 0 && !(set >> b & 1)) {
                        closed = false;
                        break;
                    }
        if (!closed) continue;
        double gap = 0;
        for (const auto& [m, p] : upper)
            if (set >> m & 1) gap += p;
        for (const auto& [m, p] : lower)
            if (set >> m & 1) gap -= p;
        best = std::min(best, gap);
    }
    return best;
}

MaskTable random_table(std::mt19937_64& rng, int k) {
    std::uniform_real_distribution<double> u(0, 1);
    MaskTable t;
    double z = 0;
    for (Mask m = 0; m < (Mask{1} << k); ++m)
        if (u(rng) < 0.6) z += t[m] = u(rng);
    if (t.empty()) z = t[0] = 1;
    for (auto& [m, p] : t) p /= z;
    return t;
}

// Pushes `t` down by removing each present site with probability r.
MaskTable thinned(const MaskTable& t, int k, double r) {
    MaskTable out;
    for (const auto& [m, p] : t)
        for (Mask y = m;; y = (y - 1) & m) {
            int kept = std::popcount(y), removed = std::popcount(m) - kept;
            out[y] += p * std::pow(1 - r, kept) * std::pow(r, removed);
            if (y == 0) break;
        }
    (void)k;
    return out;
}
}  // namespace

TEST_CASE("point masses and product measures") {
    auto bottom = table({0, 1}, {{0, 1}});
    auto any = table({0, 1}, {{0, 0.1}, {1, 0.2}, {2, 0.3}, {3, 0.4}});
    CHECK(check_domination(any, bottom).dominates);

    auto bern = [](double p) {
        return table({0, 1}, {{0, (1 - p) * (1 - p)}, {1, p * (1 - p)}, {2, p * (1 - p)}, {3, p * p}});
    };
    CHECK(check_domination(bern(0.6), bern(0.4)).dominates);
    CHECK_FALSE(check_domination(bern(0.4), bern(0.6)).dominates);

    auto e1 = table({0, 1}, {{1, 1}}), e2 = table({0, 1}, {{2, 1}});
    auto r = check_domination(e1, e2);
    REQUIRE_FALSE(r.dominates);
    CHECK(r.witness == std::vector<Mask>{2});
    CHECK(r.upper_mass < r.lower_mass);
}

TEST_CASE("ground mismatch is an error") {
    auto a = table({0, 1}, {{0, 1}}), b = table({0, 2}, {{0, 1}});
    CHECK_THROWS_AS(check_domination(a, b), std::invalid_argument);
}

TEST_CASE("diagonal and forced couplings") {
    auto d = table({3}, {{0, 0.3}, {1, 0.7}});
    auto c = build_coupling(d, d);
    CHECK(c.joint.size() == 2);
    CHECK(c.joint.at({1, 1}) == doctest::Approx(0.7));

    auto up = table({5}, {{0, 0.5}, {1, 0.5}});
    auto lo = table({5}, {{0, 1}});
    auto f = build_coupling(up, lo);
    CHECK(f.joint.at({0, 0}) == doctest::Approx(0.5));
    CHECK(f.joint.at({1, 0}) == doctest::Approx(0.5));

    // Given lower = ∅ the upper side is a fair coin.
    const int n = 100000;
    int ones = 0;
    Tape tape(17);
    for (int i = 0; i < n; ++i)
        ones += conditional_sample(f.joint, Side::Lower, 0, tape.peek_uniform(0, "c", i)) == 1;
    CHECK(std::abs(ones / double(n) - 0.5) < 0.01);
    // Given upper = x the lower side lies below x.
    for (int i = 0; i < 100; ++i)
        CHECK(conditional_sample(f.joint, Side::Upper, 1, tape.peek_uniform(1, "c", i)) == 0);
    CHECK_THROWS_AS(conditional_sample(f.joint, Side::Lower, 1, 0.5), ZeroMassCondition);
}

TEST_CASE("flow decisions agree with Strassen's up-set criterion") {
    std::mt19937_64 rng(2024);
    int yes = 0, no = 0;
    for (int trial = 0; trial < 200; ++trial) {
        int k = 2 + trial % 3;
        MaskTable upper = random_table(rng, k), lower;
        if (trial % 2 == 0) {
            lower = thinned(upper, k, 0.3);
            // Occasionally nudge the pushed-down law upward.
            if (trial % 4 == 0) {
                double eps = 0.05;
                Mask top = (Mask{1} << k) - 1;
                for (auto& [m, p] : lower) p *= 1 - eps;
                lower[top] += eps;
            }
        } else {
            lower = random_table(rng, k);
        }
        double gap = min_upset_gap(upper, lower, k);
        if (std::abs(gap) < 1e-7) continue;
        auto r = check_domination(upper, lower);
        CHECK(r.dominates == (gap > 0));
        if (r.dominates) {
            ++yes;
            DistTable u{{}, upper}, l{{}, lower};
            for (int i = 0; i < k; ++i) u.ground.push_back(i), l.ground.push_back(i);
            CHECK_NOTHROW(build_coupling(u, l));
        } else {
            ++no;
            CHECK(r.upper_mass < r.lower_mass);
            // The witness is an up-set by construction; check its masses independently.
            double um = 0, lm = 0;
            for (const auto& [m, p] : upper) um += r.in_witness(m) ? p : 0;
            for (const auto& [m, p] : lower) lm += r.in_witness(m) ? p : 0;
            CHECK(um == doctest::Approx(r.upper_mass));
            CHECK(lm == doctest::Approx(r.lower_mass));
        }
    }
    CHECK(yes > 20);
    CHECK(no > 20);
}

TEST_CASE("flipped arcs are caught by the audit") {
    auto up = table({0, 1}, {{3, 0.5}, {1, 0.5}});
    auto lo = table({0, 1}, {{0, 0.5}, {1, 0.5}});
    CHECK_NOTHROW(build_coupling(up, lo));
    set_coupling_mutation(true);
    CHECK_THROWS_AS(build_coupling(up, lo), DominationFails);
    set_coupling_mutation(false);
}

TEST_CASE("restrict_extend orientation") {
    SUBCASE("path a-b-c, sub-cell {a,b}") {
        auto g = Substrate::from_edges(3, {{0, 1}, {1, 2}});
        auto big = induced(g, {0, 1, 2});
        auto re = restrict_extend(ModelSpec::ust_free(), big, {induced(g, {0, 1})});
        CHECK(re.upper.mass.size() == 1);
        CHECK(re.upper.prob(1) == doctest::Approx(1));
        CHECK(re.lower.prob(1) == doctest::Approx(1));
    }
    SUBCASE("k = 1 with the sub-cell equal to the cell") {
        auto g = Substrate::grid({2, 2}, {false, false});
        auto big = induced(g, {0, 1, 2, 3});
        auto re = restrict_extend(ModelSpec::ust_free(), big, {big});
        for (const auto& [m, p] : re.upper.mass) CHECK(re.lower.prob(m) == doctest::Approx(p));
        auto c = build_coupling(re.upper, re.lower);
        for (const auto& [k, p] : c.joint) CHECK(k.first == k.second);
    }
    SUBCASE("Ising 1x3 with plus boundary, end vertices as sub-cells") {
        auto g = Substrate::grid({5, 1}, {false, false}, Percolation::Vertex);
        auto big = induced(g, {1, 2, 3});
        auto re = restrict_extend(ModelSpec::ising(0.5, Boundary::Plus), big,
                                  {induced(g, {1}), induced(g, {3})});
        CHECK(check_domination(re.upper, re.lower).dominates);
        CHECK_NOTHROW(build_coupling(re.upper, re.lower));
    }
    SUBCASE("adjacent sub-cells are rejected") {
        auto g = Substrate::grid({3, 1}, {false, false});
        CHECK_THROWS_AS(restrict_extend(ModelSpec::ust_free(), induced(g, {0, 1, 2}),
                                        {induced(g, {0}), induced(g, {1})}),
                        std::invalid_argument);
    }
}

TEST_CASE("wired UST: two dominoes in a 3x4 box") {
    // Wired UST on the box restricted to the dominoes dominates the product
    // of the dominoes' own wired trees.
    auto g = Substrate::grid({3, 4}, {false, false});
    std::vector<int> all(12);
    for (int i = 0; i < 12; ++i) all[i] = i;
    auto big = induced(g, all);
    auto re = restrict_extend(ModelSpec::ust_wired(), big, {induced(g, {0, 1}), induced(g, {9, 10})});
    CHECK(check_domination(re.restricted, re.product).dominates);
    auto c = build_coupling(re.upper, re.lower);
    CHECK(c.joint.size() >= 2);
}
