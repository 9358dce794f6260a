// Exact canonical labelling of small cell shapes by colour refinement with
// full individualisation backtracking.  Cells here have at most a few dozen
// vertices, so no automorphism pruning is attempted; the unpruned leaves also
// yield the automorphism group.
#include <algorithm>
#include <map>
#include <sstream>

#include "fiid/substrate.hpp"

namespace fiid {
namespace {

using Colors = std::vector<int>;

// Re-rank arbitrary comparable keys into dense colours 0..k-1.
template <class Key>
Colors rank(const std::vector<Key>& keys) {
    std::vector<Key> sorted = keys;
    std::sort(sorted.begin(), sorted.end());
    sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
    Colors out(keys.size());
    for (std::size_t i = 0; i < keys.size(); ++i)
        out[i] = static_cast<int>(std::lower_bound(sorted.begin(), sorted.end(), keys[i]) -
                                  sorted.begin());
    return out;
}

int count_colors(const Colors& c) {
    return c.empty() ? 0 : *std::max_element(c.begin(), c.end()) + 1;
}

Colors refine(Colors c, const std::vector<std::vector<int>>& adj) {
    int k = count_colors(c);
    while (true) {
        std::vector<std::pair<int, std::vector<int>>> keys(c.size());
        for (std::size_t v = 0; v < c.size(); ++v) {
            std::vector<int> nb;
            for (int u : adj[v]) nb.push_back(c[u]);
            std::sort(nb.begin(), nb.end());
            keys[v] = {c[v], std::move(nb)};
        }
        Colors next = rank(keys);
        int k2 = count_colors(next);
        if (k2 == k) return next;
        c = std::move(next);
        k = k2;
    }
}

std::vector<int> certificate(const CellShape& s, const Colors& perm) {
    std::vector<int> cert{s.n};
    std::vector<int> attrs(2 * s.n);
    for (int v = 0; v < s.n; ++v) {
        attrs[2 * perm[v]] = s.boundary[v];
        attrs[2 * perm[v] + 1] = s.mark[v];
    }
    cert.insert(cert.end(), attrs.begin(), attrs.end());
    std::vector<std::pair<int, int>> es;
    for (auto [u, v] : s.edges) es.push_back(std::minmax(perm[u], perm[v]));
    std::sort(es.begin(), es.end());
    for (auto [u, v] : es) {
        cert.push_back(u);
        cert.push_back(v);
    }
    return cert;
}

struct Search {
    const CellShape& shape;
    std::vector<std::vector<int>> adj;
    std::vector<int> best_cert;
    Colors best_perm;
    bool collect = false;
    std::vector<Colors> ties;  // every leaf reaching best_cert, when collecting

    void run(const Colors& c) {
        int k = count_colors(c);
        if (k == shape.n) {
            auto cert = certificate(shape, c);
            if (best_perm.empty() || cert < best_cert) {
                best_cert = std::move(cert);
                best_perm = c;
                ties.clear();
                if (collect) ties.push_back(c);
            } else if (collect && cert == best_cert) {
                ties.push_back(c);
            }
            return;
        }
        // First non-singleton colour class.
        std::vector<int> sizes(k, 0);
        for (int x : c) ++sizes[x];
        int target = 0;
        while (sizes[target] < 2) ++target;
        for (int v = 0; v < shape.n; ++v) {
            if (c[v] != target) continue;
            std::vector<std::pair<int, int>> keys(c.size());
            for (int u = 0; u < shape.n; ++u) keys[u] = {c[u], (u == v || c[u] != target) ? 0 : 1};
            run(refine(rank(keys), adj));
        }
    }
};

}  // namespace

namespace {
Search searched(const CellShape& s, bool collect) {
    Search search{s, s.adjacency(), {}, {}, collect, {}};
    std::vector<std::tuple<int, int, int>> init(s.n);
    for (int v = 0; v < s.n; ++v)
        init[v] = {s.boundary[v], s.mark[v], static_cast<int>(search.adj[v].size())};
    search.run(refine(rank(init), search.adj));
    return search;
}
}  // namespace

std::vector<std::vector<int>> automorphisms(const CellShape& s) {
    if (s.n == 0) return {{}};
    // Every optimal leaf maps s onto the same labelled shape; composing with
    // the inverse of one of them gives the automorphism group of s.
    auto search = searched(s, true);
    std::vector<int> inv0(s.n);
    for (int v = 0; v < s.n; ++v) inv0[search.ties.front()[v]] = v;
    std::vector<std::vector<int>> out;
    for (const auto& p : search.ties) {
        std::vector<int> a(s.n);
        for (int v = 0; v < s.n; ++v) a[v] = inv0[p[v]];
        out.push_back(std::move(a));
    }
    std::sort(out.begin(), out.end());
    return out;
}

Canonical canonicalize(const CellView& view) {
    const auto& s = view.shape;
    Canonical out;
    if (s.n == 0) {
        out.view = view;
        out.key = "0";
        return out;
    }
    auto search = searched(s, false);
    const auto& perm = search.best_perm;

    auto& cv = out.view;
    cv.shape.n = s.n;
    cv.shape.boundary.assign(s.n, 0);
    cv.shape.mark.assign(s.n, 0);
    cv.parent_vertex.assign(s.n, -1);
    for (int v = 0; v < s.n; ++v) {
        cv.shape.boundary[perm[v]] = s.boundary[v];
        cv.shape.mark[perm[v]] = s.mark[v];
        cv.parent_vertex[perm[v]] = view.parent_vertex[v];
    }
    std::vector<std::pair<std::pair<int, int>, int>> es;
    for (std::size_t i = 0; i < s.edges.size(); ++i) {
        auto [u, v] = s.edges[i];
        es.push_back({std::minmax(perm[u], perm[v]),
                      view.parent_edge.empty() ? -1 : view.parent_edge[i]});
    }
    std::sort(es.begin(), es.end());
    for (auto& [p, id] : es) {
        cv.shape.edges.push_back(p);
        cv.parent_edge.push_back(id);
    }
    std::ostringstream key;
    for (int x : search.best_cert) key << x << ',';
    out.key = key.str();
    return out;
}

}  // namespace fiid
