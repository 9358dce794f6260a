#include "fiid/kernels.hpp"

#include <algorithm>
#include <numeric>

#include "fiid/errors.hpp"

namespace fiid {

namespace {

bool is_ust(const ModelSpec& m) {
    return m.family == Family::UstFree || m.family == Family::UstWired;
}

void require_small(std::size_t sites, const char* what) {
    if (sites > static_cast<std::size_t>(kMaxEnumSites))
        throw RefuseTooLarge(std::string(what) + " over " + std::to_string(sites) +
                             " sites exceeds the exact cap; use mc mode");
}

// Maps bit i of `m` to bit pos[i].
Mask scatter(Mask m, const std::vector<int>& pos) {
    Mask out = 0;
    for (std::size_t i = 0; i < pos.size(); ++i)
        if (m >> i & 1) out |= Mask{1} << pos[i];
    return out;
}

// Collects bits at positions pos into a dense mask.
Mask gather(Mask m, const std::vector<int>& pos) {
    Mask out = 0;
    for (std::size_t i = 0; i < pos.size(); ++i)
        if (m >> pos[i] & 1) out |= Mask{1} << i;
    return out;
}

std::vector<int> positions_in(const std::vector<int>& sites, const std::vector<int>& S) {
    std::vector<int> pos;
    for (int s : sites)
        pos.push_back(static_cast<int>(std::lower_bound(S.begin(), S.end(), s) - S.begin()));
    return pos;
}

CellShape unmarked(CellShape s) {
    std::fill(s.mark.begin(), s.mark.end(), 0);
    return s;
}

// Canonical labelling of an unmarked shape; site_of[j] is the shape-local
// site at canonical site j.
struct Relabel {
    CellShape canonical;
    std::string key;
    std::vector<int> site_of;
};

Relabel relabel(const ModelSpec& m, const CellShape& s) {
    CellView v;
    v.shape = unmarked(s);
    v.parent_vertex.resize(s.n);
    std::iota(v.parent_vertex.begin(), v.parent_vertex.end(), 0);
    v.parent_edge.resize(s.edges.size());
    std::iota(v.parent_edge.begin(), v.parent_edge.end(), 0);
    auto c = canonicalize(v);
    return {c.view.shape, c.key, m.edge_model() ? c.view.parent_edge : c.view.parent_vertex};
}

PairLaw pair_law_canonical(const ModelSpec& upper, const ModelSpec& lower, const CellShape& s) {
    PairLaw law;
    law.m = site_count(upper, s);
    law.diagonal = laws_coincide(upper, lower, s);
    if (law.diagonal && law.m > kMaxEnumSites) return law;  // too large to tabulate
    require_small(law.m, "pair law");
    auto up = exact_table(upper, s);
    if (law.diagonal) {
        for (const auto& [x, p] : up) law.table[encode_pair(x, x, law.m)] = p;
        return law;
    }
    auto lo = exact_table(lower, s);
    auto joint = monotone_flow(up, lo);
    audit_joint(up, lo, joint);
    // The flow depends on the labelling.  A sub-cell's pair law is reached
    // through different canonical routes that differ by an automorphism, so
    // the coupling is averaged over the automorphism group of the shape.
    const auto group = automorphisms(s);
    std::vector<std::vector<int>> site_perm;
    for (const auto& a : group) {
        std::vector<int> sp(law.m);
        if (upper.edge_model()) {
            for (int e = 0; e < law.m; ++e)
                sp[e] = s.edge_index(a[s.edges[e].first], a[s.edges[e].second]);
        } else {
            sp = a;
        }
        site_perm.push_back(std::move(sp));
    }
    auto permute = [&](Mask x, const std::vector<int>& sp) {
        Mask y = 0;
        for (int j = 0; j < law.m; ++j)
            if (x >> j & 1) y |= Mask{1} << sp[j];
        return y;
    };
    const double w = 1.0 / static_cast<double>(site_perm.size());
    std::map<std::pair<Mask, Mask>, double> sym;
    for (const auto& [k, p] : joint)
        for (const auto& sp : site_perm) sym[{permute(k.first, sp), permute(k.second, sp)}] += w * p;
    audit_joint(up, lo, sym);
    for (const auto& [k, p] : sym) law.table[encode_pair(k.first, k.second, law.m)] = p;
    return law;
}

}  // namespace

KernelCache<CascadeKernel>& cascade_kernel_cache() {
    static KernelCache<CascadeKernel> c;
    return c;
}

KernelCache<SandwichKernel>& sandwich_kernel_cache() {
    static KernelCache<SandwichKernel> c;
    return c;
}

KernelCache<PairLaw>& pair_law_cache() {
    static KernelCache<PairLaw> c;
    return c;
}

void clear_kernel_caches() {
    cascade_kernel_cache().clear();
    sandwich_kernel_cache().clear();
    pair_law_cache().clear();
}

bool laws_coincide(const ModelSpec& upper, const ModelSpec& lower, const CellShape& cell) {
    if (upper.family == Family::Ising && lower.family == Family::Ising)
        return upper.beta == lower.beta && (upper.beta == 0 || cell.boundary_empty());
    if (is_ust(upper) && is_ust(lower)) return cell.boundary_empty();
    if (upper.family == Family::FK && lower.family == Family::FK)
        return upper.p == lower.p && upper.q == lower.q && cell.boundary_empty();
    return false;
}

SubCells split_marked(const ModelSpec& m, const CellShape& cell) {
    SubCells out;
    const auto adj = cell.adjacency();
    std::vector<int> comp(cell.n, -1);
    for (int v = 0; v < cell.n; ++v) {
        if (!cell.mark[v] || comp[v] >= 0) continue;
        std::vector<int> members, stack{v};
        comp[v] = static_cast<int>(out.vertices.size());
        while (!stack.empty()) {
            int x = stack.back();
            stack.pop_back();
            members.push_back(x);
            for (int y : adj[x])
                if (cell.mark[y] && comp[y] < 0) {
                    comp[y] = comp[v];
                    stack.push_back(y);
                }
        }
        std::sort(members.begin(), members.end());
        out.vertices.push_back(std::move(members));
    }
    for (std::size_t c = 0; c < out.vertices.size(); ++c) {
        const auto& C = out.vertices[c];
        CellShape sh;
        sh.n = static_cast<int>(C.size());
        sh.mark.assign(sh.n, 0);
        sh.boundary.assign(sh.n, 0);
        auto pos = [&](int v) {
            return static_cast<int>(std::lower_bound(C.begin(), C.end(), v) - C.begin());
        };
        for (int i = 0; i < sh.n; ++i) {
            sh.boundary[i] = cell.boundary[C[i]];
            for (int y : adj[C[i]])
                if (comp[y] != static_cast<int>(c)) ++sh.boundary[i];
        }
        std::vector<int> sites;
        for (int e = 0; e < static_cast<int>(cell.edges.size()); ++e) {
            auto [u, v] = cell.edges[e];
            if (comp[u] == static_cast<int>(c) && comp[v] == static_cast<int>(c)) {
                sh.edges.push_back({pos(u), pos(v)});
                if (m.edge_model()) sites.push_back(e);
            }
        }
        if (!m.edge_model()) sites = C;
        out.shapes.push_back(std::move(sh));
        out.sites.push_back(std::move(sites));
    }
    return out;
}

std::vector<char> Extension::sample(const CellView& view, const std::vector<int>& S,
                                    Mask restriction, TapeView& tape) const {
    if (wilson) {
        EdgeConstraint c(view.shape.edges.size(), 0);
        for (std::size_t j = 0; j < S.size(); ++j) c[S[j]] = (restriction >> j & 1) ? 1 : -1;
        return wilson_sample(view.shape, wired, view.parent_vertex, tape, c);
    }
    auto it = table.find(restriction);
    if (it == table.end()) throw ZeroMassCondition("restriction has zero mass in the cell law");
    int anchor = *std::min_element(view.parent_vertex.begin(), view.parent_vertex.end());
    double z = 0;
    for (const auto& [full, p] : it->second) z += p;
    double x = tape.uniform(anchor) * z;
    Mask pick = it->second.back().first;
    for (const auto& [full, p] : it->second) {
        x -= p;
        if (x < 0) {
            pick = full;
            break;
        }
    }
    std::vector<char> out(sites);
    for (int i = 0; i < sites; ++i) out[i] = pick >> i & 1;
    return out;
}

CascadeKernel build_cascade_kernel(const ModelSpec& m, const CellShape& marked) {
    const Direction dir = m.direction();
    if (dir == Direction::None)
        throw std::invalid_argument(m.name() + " is not a monotone family");
    CascadeKernel k;
    auto subs = split_marked(m, marked);
    for (const auto& s : subs.sites) k.S.insert(k.S.end(), s.begin(), s.end());
    std::sort(k.S.begin(), k.S.end());
    require_small(k.S.size(), "restriction ground");

    k.product[0] = 1.0;
    for (std::size_t i = 0; i < subs.shapes.size(); ++i) {
        auto part = exact_table(m, subs.shapes[i]);
        auto pos = positions_in(subs.sites[i], k.S);
        MaskTable next;
        for (const auto& [a, pa] : k.product)
            for (const auto& [b, pb] : part) next[a | scatter(b, pos)] += pa * pb;
        k.product = std::move(next);
    }

    const int sites = site_count(m, marked);
    k.extension.sites = sites;
    if (sites <= kMaxEnumSites) {
        auto full = exact_table(m, marked);
        for (const auto& [x, p] : full) {
            Mask r = gather(x, k.S);
            k.restricted[r] += p;
            k.extension.table[r].push_back({x, p});
        }
    } else if (is_ust(m)) {
        k.restricted = ust_restriction_law(marked, m.family == Family::UstWired, k.S);
        k.extension.wilson = true;
        k.extension.wired = m.family == Family::UstWired;
    } else {
        require_small(sites, "cell law");
    }

    const MaskTable& upper = dir == Direction::Decreasing ? k.product : k.restricted;
    const MaskTable& lower = dir == Direction::Decreasing ? k.restricted : k.product;
    k.given = dir == Direction::Decreasing ? Side::Upper : Side::Lower;
    k.joint = monotone_flow(upper, lower);
    audit_joint(upper, lower, k.joint);
    return k;
}

PairLaw build_pair_law(const ModelSpec& upper, const ModelSpec& lower, const CellShape& cell) {
    auto rl = relabel(upper, cell);
    auto law = pair_law_cache().get(upper.to_json().dump() + "/" + lower.to_json().dump() + "/" + rl.key,
                                [&] { return pair_law_canonical(upper, lower, rl.canonical); });
    PairLaw out;
    out.m = law->m;
    out.diagonal = law->diagonal;
    for (const auto& [key, p] : law->table) {
        Mask plus = scatter(pair_plus(key, out.m), rl.site_of);
        Mask minus = scatter(pair_minus(key, out.m), rl.site_of);
        out.table[encode_pair(plus, minus, out.m)] = p;
    }
    return out;
}

SandwichKernel build_sandwich_kernel(const ModelSpec& upper, const ModelSpec& lower,
                                     const CellShape& marked) {
    SandwichKernel k;
    auto subs = split_marked(upper, marked);
    for (const auto& s : subs.sites) k.S.insert(k.S.end(), s.begin(), s.end());
    std::sort(k.S.begin(), k.S.end());
    require_small(k.S.size(), "restriction ground");
    const int ms = static_cast<int>(k.S.size());

    std::map<std::pair<Mask, Mask>, double> src{{{0, 0}, 1.0}};
    for (std::size_t i = 0; i < subs.shapes.size(); ++i) {
        auto part = build_pair_law(upper, lower, subs.shapes[i]);
        if (part.table.empty())
            throw RefuseTooLarge("sub-cell pair law over " + std::to_string(part.m) +
                                 " sites exceeds the exact cap; use mc mode");
        auto pos = positions_in(subs.sites[i], k.S);
        std::map<std::pair<Mask, Mask>, double> next;
        for (const auto& [a, pa] : src)
            for (const auto& [b, pb] : part.table)
                next[{a.first | scatter(pair_plus(b, part.m), pos),
                      a.second | scatter(pair_minus(b, part.m), pos)}] += pa * pb;
        src = std::move(next);
    }
    k.source.m = ms;
    for (const auto& [pm, p] : src) k.source.table[encode_pair(pm.first, pm.second, ms)] = p;

    k.target.m = ms;
    const int sites = site_count(upper, marked);
    if (sites <= kMaxEnumSites) {
        k.full = build_pair_law(upper, lower, marked);
        k.diagonal = k.full.diagonal;
        for (const auto& [key, p] : k.full.table) {
            Mask r = encode_pair(gather(pair_plus(key, sites), k.S),
                                 gather(pair_minus(key, sites), k.S), ms);
            k.target.table[r] += p;
            k.pair_extension[r].push_back({key, p});
        }
    } else if (is_ust(upper) && laws_coincide(upper, lower, marked)) {
        k.diagonal = true;
        k.full.m = sites;
        k.full.diagonal = true;
        auto law = ust_restriction_law(marked, false, k.S);
        for (const auto& [r, p] : law) k.target.table[encode_pair(r, r, ms)] = p;
        k.shared.sites = sites;
        k.shared.wilson = true;
    } else {
        require_small(sites, "cell pair law");
    }
    k.flow = monotone_flow(k.source.table, k.target.table);
    audit_joint(k.source.table, k.target.table, k.flow);
    return k;
}

}  // namespace fiid
