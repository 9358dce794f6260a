#include <doctest.h>

#include <bit>
#include <cmath>

#include "fiid/errors.hpp"
#include "fiid/models.hpp"

using namespace fiid;

namespace {
int edge_pos(const DistTable& d, const Substrate& g, int u, int v) {
    int e = *g.edge_between(u, v);
    for (std::size_t i = 0; i < d.ground.size(); ++i)
        if (d.ground[i] == e) return static_cast<int>(i);
    return -1;
}
double edge_marginal(const DistTable& d, int pos) {
    double s = 0;
    for (const auto& [m, p] : d.mass)
        if (m >> pos & 1) s += p;
    return s;
}
}  // namespace

TEST_CASE("free UST on the 3x3 grid is uniform on 192 trees") {
    auto g = Substrate::grid({3, 3}, {false, false});
    auto cell = induced(g, {0, 1, 2, 3, 4, 5, 6, 7, 8});
    auto d = enumerate_exact(ModelSpec::ust_free(), cell);
    CHECK(d.mass.size() == 192);
    for (const auto& [m, p] : d.mass) CHECK(p == doctest::Approx(1.0 / 192));
    d.check();
}

TEST_CASE("wired UST on a corner block") {
    // 36 wired trees; edge 0-1 lies in 2/3 of them, edge 1-5 in 1/2.
    auto g = Substrate::grid({4, 4}, {false, false});
    auto cell = induced(g, {0, 1, 4, 5});
    auto d = enumerate_exact(ModelSpec::ust_wired(), cell);
    CHECK(edge_marginal(d, edge_pos(d, g, 0, 1)) == doctest::Approx(2.0 / 3));
    CHECK(edge_marginal(d, edge_pos(d, g, 1, 5)) == doctest::Approx(0.5));
    // The determinant route agrees with enumeration on every sub-configuration.
    auto view = make_view(cell);
    std::vector<int> sites{0, 2};
    auto law = ust_restriction_law(view.shape, true, sites);
    auto full = exact_table(ModelSpec::ust_wired(), view.shape);
    MaskTable marg;
    for (const auto& [m, p] : full) marg[(m & 1) | ((m >> 2 & 1) << 1)] += p;
    for (const auto& [k, p] : marg) CHECK(law[k] == doctest::Approx(p));
}

TEST_CASE("wired UST without boundary is the free UST") {
    auto g = Substrate::grid({3, 3}, {false, false});
    auto cell = induced(g, {0, 1, 2, 3, 4, 5, 6, 7, 8});
    auto d = enumerate_exact(ModelSpec::ust_wired(), cell);
    CHECK(d.mass.size() == 192);
}

TEST_CASE("Ising closed forms") {
    const double beta = 0.7;
    auto g = Substrate::grid({2, 1}, {false, false});
    auto d = enumerate_exact(ModelSpec::ising(beta, Boundary::Free), induced(g, {0, 1}));
    double same = d.prob(0) + d.prob(3);
    CHECK(same == doctest::Approx(std::exp(beta) / (std::exp(beta) + std::exp(-beta))));
    // One vertex of the 3x3 grid with plus boundary (corner: two boundary edges).
    auto h = Substrate::grid({3, 3}, {false, false});
    auto e = enumerate_exact(ModelSpec::ising(beta, Boundary::Plus), induced(h, {0}));
    CHECK(e.prob(1) == doctest::Approx(1.0 / (1.0 + std::exp(-2 * beta * 2))));
}

TEST_CASE("FK on a triangle") {
    // q = 2, p = 1/2: P(empty) = 2/7, P(full) = 1/14.
    auto g = Substrate::from_edges(3, {{0, 1}, {1, 2}, {0, 2}});
    auto d = enumerate_exact(ModelSpec::fk(0.5, 2.0, Boundary::Free), induced(g, {0, 1, 2}));
    CHECK(d.prob(0) == doctest::Approx(2.0 / 7));
    CHECK(d.prob(7) == doctest::Approx(1.0 / 14));
}

TEST_CASE("enumeration refuses large cells") {
    auto g = Substrate::grid({5, 5}, {false, false});
    std::vector<int> all(25);
    for (int i = 0; i < 25; ++i) all[i] = i;
    CHECK_THROWS_AS(enumerate_exact(ModelSpec::ust_free(), induced(g, all)), RefuseTooLarge);
    auto g2 = Substrate::grid({5, 5}, {false, false}, Percolation::Vertex);
    CHECK_THROWS_AS(enumerate_exact(ModelSpec::ising(0.3, Boundary::Plus), induced(g2, all)),
                    RefuseTooLarge);
}

TEST_CASE("Wilson matches the exact edge marginals") {
    auto g = Substrate::grid({4, 4}, {false, false});
    auto cell = induced(g, {0, 1, 4, 5});
    auto d = enumerate_exact(ModelSpec::ust_wired(), cell);
    const int n = 6000;
    int hits01 = 0, hits15 = 0;
    int e01 = *g.edge_between(0, 1), e15 = *g.edge_between(1, 5);
    for (int s = 0; s < n; ++s) {
        Tape tape(1000 + s);
        auto c = wilson_ust(cell, Boundary::Wired, tape);
        CHECK(c.members.size() <= 3);
        hits01 += c.contains(e01);
        hits15 += c.contains(e15);
    }
    double se = std::sqrt(0.25 / n);
    CHECK(std::abs(hits01 / double(n) - 2.0 / 3) < 4 * se);
    CHECK(std::abs(hits15 / double(n) - 0.5) < 4 * se);
}

TEST_CASE("CFTP matches the exact magnetisation") {
    auto g = Substrate::grid({3, 3}, {false, false}, Percolation::Vertex);
    auto cell = induced(g, {0, 1, 2, 3, 4, 5, 6, 7, 8});
    const double beta = 0.4;
    auto d = enumerate_exact(ModelSpec::ising(beta, Boundary::Plus), cell);
    double exact = 0;
    for (const auto& [m, p] : d.mass) exact += p * (m >> 4 & 1);
    const int n = 4000;
    int hits = 0;
    for (int s = 0; s < n; ++s) {
        Tape tape(7 + s);
        hits += cftp_ising(cell, beta, Boundary::Plus, tape).contains(4);
    }
    CHECK(std::abs(hits / double(n) - exact) < 4 * std::sqrt(0.25 / n));
}

TEST_CASE("CFTP grand coupling orders plus above minus") {
    auto g = Substrate::grid({4, 4}, {false, false}, Percolation::Vertex);
    std::vector<int> all(16);
    for (int i = 0; i < 16; ++i) all[i] = i;
    auto cell = induced(g, all);
    for (int s = 0; s < 50; ++s) {
        Tape tape(s);
        auto plus = cftp_ising(cell, 0.5, Boundary::Plus, tape);
        auto minus = cftp_ising(cell, 0.5, Boundary::Minus, tape);
        for (int v : minus.members) CHECK(plus.contains(v));
    }
}

TEST_CASE("model directions and duals") {
    CHECK(ModelSpec::ust_free().direction() == Direction::Decreasing);
    CHECK(ModelSpec::ust_wired().direction() == Direction::Increasing);
    CHECK(ModelSpec::ising(0.3, Boundary::Plus).dual().boundary == Boundary::Minus);
    CHECK(ModelSpec::fk(0.5, 2, Boundary::Wired).direction() == Direction::Decreasing);
    CHECK_THROWS(ModelSpec::fk(1.5, 2, Boundary::Free).validate());
    auto m = ModelSpec::from_json(ModelSpec::ising(0.25, Boundary::Minus).to_json());
    CHECK(m.beta == 0.25);
    CHECK(m.boundary == Boundary::Minus);
}

TEST_CASE("FK single edge and the q = 1 reduction") {
    // One free edge, q = 2, p = 1/2: P(open) = p / (p + (1 - p) q) = 1/3.
    auto g = Substrate::from_edges(2, {{0, 1}});
    auto d = enumerate_exact(ModelSpec::fk(0.5, 2.0, Boundary::Free), induced(g, {0, 1}));
    CHECK(d.prob(1) == doctest::Approx(1.0 / 3));
    // q = 1 is Bernoulli(p) percolation.
    auto h = Substrate::grid({3, 2}, {false, false});
    auto cell = induced(h, {0, 1, 2, 3, 4, 5});
    const double p = 0.3;
    const int n = 100000;
    int open = 0, draws = 0;
    auto table = enumerate_exact(ModelSpec::fk(p, 1.0, Boundary::Free), cell);
    for (int s = 0; s < n; ++s) {
        Mask m = sample_table(table.mass, Tape(s).peek_uniform(0, "fk", 0));
        open += std::popcount(m);
        draws += static_cast<int>(table.ground.size());
    }
    CHECK(std::abs(open / double(draws) - p) < 0.01);
}
