#include <doctest.h>

#include "fiid/errors.hpp"
#include "fiid/substrate.hpp"

using namespace fiid;

TEST_CASE("grid layout is row-major with axis 0 fastest") {
    auto g = Substrate::grid({4, 3}, {false, false});
    CHECK(g.vertex_count() == 12);
    CHECK(g.edge_count() == 3 * 3 + 4 * 2);
    CHECK(g.edge_between(0, 1).has_value());
    CHECK(g.edge_between(0, 4).has_value());
    CHECK_FALSE(g.edge_between(3, 4).has_value());
    CHECK(g.diameter() == 5);
}

TEST_CASE("torus wraps and rejects short cycles") {
    auto t = Substrate::grid({4, 4}, {true, true});
    CHECK(t.edge_count() == 32);
    for (int v = 0; v < 16; ++v) CHECK(t.degree(v) == 4);
    CHECK_THROWS_AS(Substrate::grid({2, 4}, {true, false}), std::invalid_argument);
}

TEST_CASE("construction rejects bad graphs") {
    CHECK_THROWS_AS(Substrate::from_edges(3, {{0, 1}}), NotConnected);
    CHECK_THROWS(Substrate::from_edges(2, {{0, 0}, {0, 1}}));
    CHECK_THROWS(Substrate::from_edges(2, {{0, 1}, {1, 0}}));
}

TEST_CASE("json round trip") {
    auto g = Substrate::grid({3, 3}, {false, false}, Percolation::Vertex);
    auto h = Substrate::from_json(g.to_json());
    CHECK(h.vertex_count() == 9);
    CHECK(h.edges() == g.edges());
    CHECK(h.mode() == Percolation::Vertex);
}

TEST_CASE("induced subgraph and boundary") {
    auto g = Substrate::grid({4, 4}, {false, false});
    auto s = induced(g, {0, 1, 4, 5});
    CHECK(s.edges.size() == 4);
    CHECK(s.boundary_edges().size() == 4);
    CHECK(s.connected());
    CHECK(s.complement_connected());
    auto w = wire(s);
    CHECK(w.total_wire_weight() == 4);
    auto broken = induced(g, {0, 5});
    CHECK_FALSE(broken.connected());
    CHECK_THROWS_AS(induced(g, {0, 99}), std::out_of_range);
}

TEST_CASE("canonical keys identify isomorphic cells") {
    auto g = Substrate::grid({6, 6}, {false, false});
    // Two interior 2x2 blocks are isomorphic with equal boundary counts.
    auto a = canonicalize(make_view(induced(g, {7, 8, 13, 14})));
    auto b = canonicalize(make_view(induced(g, {21, 22, 27, 28})));
    CHECK(a.key == b.key);
    // A corner block differs in its boundary counts.
    auto c = canonicalize(make_view(induced(g, {0, 1, 6, 7})));
    CHECK(a.key != c.key);
    // Mark bits participate in the key.
    std::vector<char> mark(36, 0);
    mark[7] = 1;
    auto d = canonicalize(make_view(induced(g, {7, 8, 13, 14}), mark));
    CHECK(d.key != a.key);
    mark[7] = 0;
    mark[14] = 1;
    auto e = canonicalize(make_view(induced(g, {7, 8, 13, 14}), mark));
    CHECK(d.key == e.key);
}

TEST_CASE("automorphism groups of small shapes") {
    auto torus = Substrate::grid({6, 6}, {true, true});
    // An interior 2x2 block: all four vertices have two outside edges, so the
    // dihedral group of the square survives.
    CHECK(automorphisms(make_view(induced(torus, {7, 8, 13, 14})).shape).size() == 8);
    auto box = Substrate::grid({6, 6}, {false, false});
    // A corner block: the corner vertex is fixed, leaving one reflection.
    CHECK(automorphisms(make_view(induced(box, {0, 1, 6, 7})).shape).size() == 2);
    auto path = Substrate::grid({3}, {false});
    CHECK(automorphisms(make_view(induced(path, {0, 1, 2})).shape).size() == 2);
    for (const auto& a : automorphisms(make_view(induced(torus, {7, 8, 13, 14})).shape)) {
        auto s = make_view(induced(torus, {7, 8, 13, 14})).shape;
        for (auto [u, v] : s.edges) CHECK(s.edge_index(a[u], a[v]) >= 0);
    }
}
