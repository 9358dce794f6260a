#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/Dense>

#include "fiid/errors.hpp"
#include "fiid/models.hpp"

namespace fiid {

namespace {

struct Dsu {
    std::vector<int> p;
    explicit Dsu(int n) : p(n) { std::iota(p.begin(), p.end(), 0); }
    int find(int x) { return p[x] == x ? x : p[x] = find(p[x]); }
    bool unite(int a, int b) {
        a = find(a);
        b = find(b);
        if (a == b) return false;
        p[std::max(a, b)] = std::min(a, b);
        return true;
    }
};

// Weighted multigraph on contracted classes.  Node `root` is the walk target.
struct ClassGraph {
    int nodes = 0;
    int root = 0;
    std::vector<int> class_of;  // local vertex -> node
    struct Arc {
        int to;
        double weight;
        int edge;  // local edge id, -1 for wire edges
    };
    std::vector<std::vector<Arc>> arcs;
};

ClassGraph contract(const CellShape& s, bool wired, const EdgeConstraint& c) {
    Dsu dsu(s.n);
    const int m = static_cast<int>(s.edges.size());
    for (int i = 0; i < m; ++i)
        if (!c.empty() && c[i] > 0 && !dsu.unite(s.edges[i].first, s.edges[i].second))
            throw Infeasible("forced edges contain a cycle");
    ClassGraph g;
    g.class_of.assign(s.n, -1);
    std::vector<int> id(s.n, -1);
    for (int v = 0; v < s.n; ++v) {
        int r = dsu.find(v);
        if (id[r] < 0) id[r] = g.nodes++;
        g.class_of[v] = id[r];
    }
    const bool has_wire = wired && !s.boundary_empty();
    const int w = has_wire ? g.nodes++ : -1;
    g.arcs.resize(g.nodes);
    for (int i = 0; i < m; ++i) {
        if (!c.empty() && c[i] != 0) continue;
        int a = g.class_of[s.edges[i].first], b = g.class_of[s.edges[i].second];
        if (a == b) continue;
        g.arcs[a].push_back({b, 1.0, i});
        g.arcs[b].push_back({a, 1.0, i});
    }
    if (has_wire) {
        std::vector<double> wt(g.nodes, 0.0);
        for (int v = 0; v < s.n; ++v) wt[g.class_of[v]] += s.boundary[v];
        for (int a = 0; a < w; ++a)
            if (wt[a] > 0) {
                g.arcs[a].push_back({w, wt[a], -1});
                g.arcs[w].push_back({a, wt[a], -1});
            }
        g.root = w;
    } else {
        g.root = g.class_of[0];
    }
    return g;
}

bool spans(const ClassGraph& g) {
    std::vector<char> seen(g.nodes, 0);
    std::vector<int> stack{g.root};
    seen[g.root] = 1;
    int count = 1;
    while (!stack.empty()) {
        int x = stack.back();
        stack.pop_back();
        for (const auto& a : g.arcs[x])
            if (!seen[a.to]) {
                seen[a.to] = 1;
                ++count;
                stack.push_back(a.to);
            }
    }
    return count == g.nodes;
}

// log of the weighted spanning-tree count; -inf when the graph does not span.
double log_tree_count(const ClassGraph& g) {
    if (!spans(g)) return -INFINITY;
    if (g.nodes == 1) return 0.0;
    // Reduced Laplacian with the root row/column removed.
    std::vector<int> idx(g.nodes, -1);
    int k = 0;
    for (int x = 0; x < g.nodes; ++x)
        if (x != g.root) idx[x] = k++;
    Eigen::MatrixXd L = Eigen::MatrixXd::Zero(k, k);
    for (int x = 0; x < g.nodes; ++x)
        for (const auto& a : g.arcs[x]) {
            if (idx[x] >= 0) L(idx[x], idx[x]) += a.weight;
            if (idx[x] >= 0 && idx[a.to] >= 0) L(idx[x], idx[a.to]) -= a.weight;
        }
    Eigen::LLT<Eigen::MatrixXd> llt(L);
    if (llt.info() != Eigen::Success) return -INFINITY;
    double s = 0;
    for (int i = 0; i < k; ++i) s += 2.0 * std::log(llt.matrixL()(i, i));
    return s;
}

}  // namespace

MaskTable ust_restriction_law(const CellShape& s, bool wired, std::span<const int> sites) {
    if (static_cast<int>(sites.size()) > kMaxEnumSites)
        throw RefuseTooLarge("restriction law over " + std::to_string(sites.size()) + " sites");
    const int m = static_cast<int>(s.edges.size());
    std::vector<std::pair<Mask, double>> logs;
    EdgeConstraint c(m, 0);
    auto rec = [&](auto&& self, std::size_t j, Mask chosen) -> void {
        if (j == sites.size()) {
            double l = log_tree_count(contract(s, wired, c));
            if (std::isfinite(l)) logs.push_back({chosen, l});
            return;
        }
        int e = sites[j];
        c[e] = -1;
        self(self, j + 1, chosen);
        // Forced edges must stay acyclic.
        Dsu d(s.n);
        bool ok = true;
        for (int i = 0; i < m && ok; ++i)
            if (c[i] > 0) d.unite(s.edges[i].first, s.edges[i].second);
        ok = d.find(s.edges[e].first) != d.find(s.edges[e].second);
        if (ok) {
            c[e] = 1;
            self(self, j + 1, chosen | Mask{1} << j);
        }
        c[e] = 0;
    };
    rec(rec, 0, 0);
    if (logs.empty()) throw NotConnected("cell has no spanning tree");
    double mx = -INFINITY;
    for (const auto& [k, l] : logs) mx = std::max(mx, l);
    MaskTable t;
    double z = 0;
    for (const auto& [k, l] : logs) z += t[k] = std::exp(l - mx);
    for (auto& [k, p] : t) p /= z;
    return t;
}

std::vector<char> wilson_sample(const CellShape& s, bool wired,
                                const std::vector<int>& tape_vertex, TapeView& tape,
                                const EdgeConstraint& constraint) {
    const int m = static_cast<int>(s.edges.size());
    if (!constraint.empty() && static_cast<int>(constraint.size()) != m)
        throw std::invalid_argument("constraint size does not match the edge count");
    ClassGraph g = contract(s, wired, constraint);
    if (!spans(g)) throw ZeroMassCondition("constraints leave no spanning tree");

    // Each class draws at its member with the smallest parent id.
    std::vector<int> owner(g.nodes, -1);
    for (int v = 0; v < s.n; ++v) {
        int c = g.class_of[v];
        if (owner[c] < 0 || tape_vertex[v] < tape_vertex[owner[c]]) owner[c] = v;
    }
    std::vector<int> order;
    for (int c = 0; c < g.nodes; ++c)
        if (c != g.root) order.push_back(c);
    std::sort(order.begin(), order.end(),
              [&](int a, int b) { return tape_vertex[owner[a]] < tape_vertex[owner[b]]; });

    std::vector<char> in_tree(g.nodes, 0);
    std::vector<int> next(g.nodes, -1);
    in_tree[g.root] = 1;
    for (int start : order) {
        int u = start;
        while (!in_tree[u]) {
            const auto& arcs = g.arcs[u];
            double total = 0;
            for (const auto& a : arcs) total += a.weight;
            double x = tape.uniform(tape_vertex[owner[u]]) * total;
            int pick = static_cast<int>(arcs.size()) - 1;
            for (int i = 0; i < static_cast<int>(arcs.size()); ++i) {
                x -= arcs[i].weight;
                if (x < 0) {
                    pick = i;
                    break;
                }
            }
            next[u] = pick;
            u = arcs[pick].to;
        }
        for (u = start; !in_tree[u]; u = g.arcs[u][next[u]].to) in_tree[u] = 1;
    }

    std::vector<char> out(m, 0);
    for (int i = 0; i < m; ++i)
        if (!constraint.empty() && constraint[i] > 0) out[i] = 1;
    for (int c = 0; c < g.nodes; ++c)
        if (c != g.root && g.arcs[c][next[c]].edge >= 0) out[g.arcs[c][next[c]].edge] = 1;
    return out;
}

HeatBathDecider tape_decider(TapeView& tape) {
    return [&tape](int v, std::uint64_t t, double p) { return tape.uniform_at(v, t) < p; };
}

CftpResult cftp_ising(const CellShape& s, double beta, int field,
                      const std::vector<int>& tape_vertex, const HeatBathDecider& decide,
                      std::span<const signed char> clamp, std::uint64_t max_epoch) {
    const auto adj = s.adjacency();
    std::vector<int> order(s.n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](int a, int b) { return tape_vertex[a] < tape_vertex[b]; });
    auto clamped = [&](int v) { return !clamp.empty() && clamp[v] != 0; };

    auto init = [&](int fill) {
        std::vector<int> x(s.n, fill);
        for (int v = 0; v < s.n; ++v)
            if (clamped(v)) x[v] = clamp[v];
        return x;
    };
    auto sweep = [&](std::vector<int>& x, std::uint64_t t) {
        for (int v : order) {
            if (clamped(v)) continue;
            double h = field * s.boundary[v];
            for (int u : adj[v]) h += x[u];
            double p = 1.0 / (1.0 + std::exp(-2.0 * beta * h));
            x[v] = decide(tape_vertex[v], t, p) ? 1 : -1;
        }
    };

    for (std::uint64_t T = 1; T <= max_epoch; T *= 2) {
        auto top = init(1), bottom = init(-1);
        for (std::uint64_t t = T; t >= 1; --t) {
            sweep(top, t - 1);
            sweep(bottom, t - 1);
        }
        if (top == bottom) {
            CftpResult r;
            r.plus.resize(s.n);
            for (int v = 0; v < s.n; ++v) r.plus[v] = top[v] > 0;
            r.epoch = T;
            return r;
        }
    }
    throw Error("CFTP did not coalesce within " + std::to_string(max_epoch) +
                " sweeps; restart with a longer epoch");
}

std::vector<char> sample_shape(const ModelSpec& m, const CellView& view, TapeView& tape) {
    const auto& s = view.shape;
    switch (m.family) {
        case Family::UstFree: return wilson_sample(s, false, view.parent_vertex, tape);
        case Family::UstWired: return wilson_sample(s, true, view.parent_vertex, tape);
        case Family::Ising: {
            int field = m.boundary == Boundary::Plus ? 1 : m.boundary == Boundary::Minus ? -1 : 0;
            return cftp_ising(s, m.beta, field, view.parent_vertex, tape_decider(tape)).plus;
        }
        case Family::FK: {
            auto t = exact_table(m, s);
            int anchor = *std::min_element(view.parent_vertex.begin(), view.parent_vertex.end());
            Mask w = sample_table(t, tape.uniform(anchor));
            std::vector<char> out(s.edges.size());
            for (std::size_t i = 0; i < out.size(); ++i) out[i] = w >> i & 1;
            return out;
        }
    }
    return {};
}

namespace {
Config to_config(const std::vector<char>& local, const std::vector<int>& parent_ids) {
    Config c;
    for (std::size_t i = 0; i < local.size(); ++i)
        if (local[i]) c.members.push_back(parent_ids[i]);
    std::sort(c.members.begin(), c.members.end());
    return c;
}
}  // namespace

Config sample_exact(const ModelSpec& m, const SubgraphRef& cell, Tape& tape,
                    const std::string& phase) {
    m.validate();
    if (!cell.connected()) throw NotConnected("cell is not connected");
    auto view = make_view(cell);
    TapeView tv(tape, phase, cell.vertices);
    auto local = sample_shape(m, view, tv);
    return to_config(local, m.edge_model() ? view.parent_edge : view.parent_vertex);
}

Config wilson_ust(const SubgraphRef& cell, Boundary boundary, Tape& tape,
                  const std::string& phase) {
    if (boundary != Boundary::Free && boundary != Boundary::Wired)
        throw std::invalid_argument("UST boundary is free or wired");
    return sample_exact(boundary == Boundary::Wired ? ModelSpec::ust_wired() : ModelSpec::ust_free(),
                        cell, tape, phase);
}

Config cftp_ising(const SubgraphRef& cell, double beta, Boundary boundary, Tape& tape,
                  const std::string& phase) {
    return sample_exact(ModelSpec::ising(beta, boundary), cell, tape, phase);
}

}  // namespace fiid
