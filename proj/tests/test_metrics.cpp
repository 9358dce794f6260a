#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "fiid/errors.hpp"
#include "fiid/exhaustion.hpp"
#include "fiid/metrics.hpp"

using namespace fiid;

namespace {

SubgraphRef whole(const Substrate& g) {
    std::vector<int> all(g.vertex_count());
    std::iota(all.begin(), all.end(), 0);
    return induced(g, all);
}

int find(std::vector<int>& p, int x) {
    while (p[x] != x) x = p[x] = p[p[x]];
    return x;
}

// Spanning-tree counts by brute force over (n-1)-edge subsets.
std::vector<double> enumerated_marginals(const Substrate& g) {
    const int n = g.vertex_count(), m = g.edge_count();
    std::vector<long> hits(m, 0);
    long trees = 0;
    for (std::uint32_t s = 0; s < (1u << m); ++s) {
        if (std::popcount(s) != n - 1) continue;
        std::vector<int> p(n);
        std::iota(p.begin(), p.end(), 0);
        bool ok = true;
        for (int e = 0; e < m && ok; ++e) {
            if (!(s >> e & 1)) continue;
            int a = find(p, g.edge(e).u), b = find(p, g.edge(e).v);
            if (a == b) ok = false;
            else p[a] = b;
        }
        if (!ok) continue;
        ++trees;
        for (int e = 0; e < m; ++e)
            if (s >> e & 1) ++hits[e];
    }
    std::vector<double> out(m);
    for (int e = 0; e < m; ++e) out[e] = static_cast<double>(hits[e]) / trees;
    return out;
}

Substrate random_connected(std::mt19937_64& rng, int n, int extra) {
    std::vector<Edge> edges;
    for (int v = 1; v < n; ++v)
        edges.push_back({static_cast<int>(rng() % v), v});
    for (int k = 0; k < extra; ++k) {
        int a = rng() % n, b = rng() % n;
        if (a == b) continue;
        if (a > b) std::swap(a, b);
        bool dup = false;
        for (const auto& e : edges)
            dup |= (std::min(e.u, e.v) == a && std::max(e.u, e.v) == b);
        if (!dup) edges.push_back({a, b});
    }
    return Substrate::from_edges(n, edges);
}

DistTable full_support_law(std::mt19937_64& rng) {
    DistTable t;
    t.ground = {0, 1, 2, 3};
    std::uniform_real_distribution<double> u(0.2, 1.0);
    for (Mask m = 0; m < 16; ++m) t.mass[m] = u(rng);
    t.normalize();
    return t;
}

std::vector<Config> draw(const DistTable& t, std::size_t n, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0, 1);
    std::vector<Config> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) out.push_back(t.config_of(sample_table(t.mass, u(rng))));
    return out;
}

}  // namespace

TEST_CASE("kirchhoff: cycle, tree and torus values") {
    auto c4 = Substrate::grid({4}, {true});
    for (double p : kirchhoff_marginals(whole(c4)).p) CHECK(p == doctest::Approx(0.75).epsilon(1e-12));

    auto tree = Substrate::from_edges(5, {{0, 1}, {1, 2}, {1, 3}, {3, 4}});
    for (double p : kirchhoff_marginals(whole(tree)).p) CHECK(p == doctest::Approx(1.0).epsilon(1e-12));

    for (int L : {3, 4}) {
        auto t = Substrate::grid({L, L}, {true, true});
        auto m = kirchhoff_marginals(whole(t));
        const double want = (L * L - 1.0) / (2.0 * L * L);
        for (double p : m.p) CHECK(p == doctest::Approx(want).epsilon(1e-12));
        CHECK(m.checksum == doctest::Approx(L * L - 1).epsilon(1e-12));
    }
}

TEST_CASE("kirchhoff: agrees with spanning-tree enumeration on a 20-graph corpus") {
    std::mt19937_64 rng(20240611);
    for (int k = 0; k < 20; ++k) {
        int n = 3 + static_cast<int>(rng() % 6);
        auto g = random_connected(rng, n, static_cast<int>(rng() % 7));
        if (g.edge_count() > 16) continue;
        auto want = enumerated_marginals(g);
        auto got = kirchhoff_marginals(whole(g));
        for (int e = 0; e < g.edge_count(); ++e) CHECK(got.of(e) == doctest::Approx(want[e]).epsilon(1e-9));
    }
}

TEST_CASE("kirchhoff: sub-cells, refusals and csv") {
    auto g = Substrate::grid({5, 5}, {false, false});
    auto cell = induced(g, {0, 1, 5, 6});  // a 4-cycle
    auto m = kirchhoff_marginals(cell);
    REQUIRE(m.edges.size() == 4);
    for (double p : m.p) CHECK(p == doctest::Approx(0.75));
    CHECK_THROWS_AS(kirchhoff_marginals(induced(g, {0, 2})), NotConnected);
    auto big = Substrate::grid({21, 20}, {false, false});
    CHECK_THROWS_AS(kirchhoff_marginals(whole(big)), RefuseTooLarge);

    std::ostringstream os;
    m.write_csv(os);
    CHECK(os.str().rfind("edge,u,v,marginal\n", 0) == 0);
}

TEST_CASE("estimate_tv: oracle samples, degenerate samples and mismatches") {
    std::mt19937_64 rng(7);
    auto law = full_support_law(rng);
    auto e = estimate_tv(draw(law, 100000, rng), law);
    CHECK(e.estimate <= 0.02);
    CHECK(e.n == 100000);
    CHECK(e.stderr_ > 0);

    DistTable uniform;
    uniform.ground = {3, 8};
    for (Mask m = 0; m < 4; ++m) uniform.mass[m] = 0.25;
    std::vector<Config> same(1000, Config{{3}});
    CHECK(estimate_tv(same, uniform).estimate == doctest::Approx(0.75));

    CHECK_THROWS_AS(estimate_tv({Config{{5}}}, uniform), std::invalid_argument);
    CHECK_THROWS_AS(estimate_tv(same, DistTable{}), std::invalid_argument);

    std::ostringstream os;
    e.write_csv(os);
    CHECK(os.str().rfind("tv_estimate,stderr,n_samples\n", 0) == 0);
}

TEST_CASE("estimate_tv: shrinks over doublings of the sample size") {
    std::mt19937_64 rng(11);
    auto law = full_support_law(rng);
    double prev = 1;
    for (std::size_t n = 500; n <= 8000; n *= 2) {
        double mean = 0;
        for (int rep = 0; rep < 40; ++rep) mean += estimate_tv(draw(law, n, rng), law).estimate;
        mean /= 40;
        CHECK(mean < prev);
        prev = mean;
    }
}

TEST_CASE("mass transport: right-neighbour flow balances") {
    auto g = Substrate::grid({6}, {true});
    auto r = mass_transport_check(g, [](int x, int y) { return y == (x + 1) % 6 ? 1.0 : 0.0; });
    CHECK(r.balanced);
    CHECK(static_cast<double>(r.forward) == 6);
    for (int v = 0; v < 6; ++v) {
        CHECK(r.sent[v] == 1);
        CHECK(r.received[v] == 1);
    }
}

TEST_CASE("mass transport: 1/k over exhaustion cells on the 8x8 torus") {
    auto g = Substrate::grid({8, 8}, {true, true});
    ExhaustionSchedule s;
    s.caps = {4, 16};
    std::vector<TransportReport> reports;
    for (std::uint64_t seed = 1; seed <= 300; ++seed) {
        Tape tape(seed);
        auto ex = build_exhaustion(g, tape, s);
        const auto& L = ex.levels[1];
        std::vector<char> marked(64);
        for (int v = 0; v < 64; ++v) marked[v] = L.included(v) && !ex.levels[0].included(v);
        auto r = mass_transport_check(g, component_transport(L.cell_of, L.cells, marked));
        CHECK(r.balanced);
        double sent = std::accumulate(r.sent.begin(), r.sent.end(), 0.0);
        CHECK(sent == doctest::Approx(std::count(marked.begin(), marked.end(), 1)));
        reports.push_back(std::move(r));
    }
    for (int root : {0, 27, 63}) CHECK(root_balance(reports, root).consistent());
}
