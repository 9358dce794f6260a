#include "fiid/exhaustion.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <optional>
#include <ostream>
#include <set>

#include "fiid/errors.hpp"

namespace fiid {

void ExhaustionSchedule::validate() const {
    if (caps.empty()) throw std::invalid_argument("schedule needs at least one cap");
    if (caps[0] < 2) throw std::invalid_argument("first cap must be >= 2");
    for (std::size_t i = 1; i < caps.size(); ++i)
        if (caps[i] <= caps[i - 1]) throw std::invalid_argument("caps must be strictly increasing");
    if (rounds < 1 || bits_per_round < 1 || bits_per_round > 62 || rank_bits < 0 ||
        rank_bits > 62)
        throw std::invalid_argument("invalid round/bit settings");
}

std::vector<int> ExhaustionLevel::included_vertices() const {
    std::vector<int> out;
    for (int v = 0; v < static_cast<int>(cell_of.size()); ++v)
        if (cell_of[v] >= 0) out.push_back(v);
    return out;
}

std::pair<int, const std::vector<int>&> Exhaustion::cell_of(int level, int v) const {
    const auto& L = levels.at(level);
    int c = L.cell_of.at(v);
    if (c < 0) throw NotIncluded(level + 1, v);
    return {c, L.cells[c]};
}

Exhaustion Exhaustion::thinned(const std::vector<int>& keep) const {
    Exhaustion out;
    out.forced_top = forced_top;
    int last = -1;
    for (int k : keep) {
        if (k <= last || k >= level_count())
            throw std::invalid_argument("thinning indices must be increasing and valid");
        out.levels.push_back(levels[k]);
        last = k;
    }
    if (last != top()) out.levels.push_back(levels.back());
    return out;
}

nlohmann::json Exhaustion::to_json() const {
    nlohmann::json j;
    j["forced_top"] = forced_top;
    auto arr = nlohmann::json::array();
    for (std::size_t i = 0; i < levels.size(); ++i) {
        nlohmann::json l;
        l["level"] = i + 1;
        l["cap"] = levels[i].cap;
        l["radius"] = levels[i].radius;
        l["cells"] = levels[i].cells;
        arr.push_back(l);
    }
    j["levels"] = arr;
    return j;
}

namespace {

using Key = std::pair<std::uint64_t, int>;

std::uint64_t read_word(Tape& tape, int v, const std::string& phase, std::uint64_t first,
                        int nbits) {
    std::uint64_t w = 0;
    for (int j = 0; j < nbits; ++j) w = (w << 1) | (tape.read_bit(v, phase, first + j) ? 1 : 0);
    return w;
}

// Clusters are identified by their minimum vertex id (the leader).
struct Clustering {
    std::vector<int> leader;  // per vertex
    std::map<int, std::vector<int>> members;

    int size(int c) const { return static_cast<int>(members.at(c).size()); }
    void merge(int a, int b) {
        int keep = std::min(a, b), gone = std::max(a, b);
        auto& dst = members[keep];
        for (int v : members[gone]) {
            leader[v] = keep;
            dst.push_back(v);
        }
        std::sort(dst.begin(), dst.end());
        members.erase(gone);
    }
};

std::map<int, std::set<int>> cluster_adjacency(const Substrate& g, const Clustering& cl) {
    std::map<int, std::set<int>> adj;
    for (const auto& e : g.edges()) {
        int a = cl.leader[e.u], b = cl.leader[e.v];
        if (a != b) {
            adj[a].insert(b);
            adj[b].insert(a);
        }
    }
    return adj;
}

void merge_level(const Substrate& g, Tape& tape, const ExhaustionSchedule& s, int level,
                 int cap, const std::vector<Key>& rank, Clustering& cl) {
    const std::string phase = "exhaust.L" + std::to_string(level + 1);
    std::set<int> touched;  // clusters that merged at this level
    for (int r = 0; r < s.rounds; ++r) {
        auto adj = cluster_adjacency(g, cl);
        std::map<int, Key> key;
        for (const auto& [c, nbrs] : adj) {
            bool feasible = std::any_of(nbrs.begin(), nbrs.end(),
                                        [&](int d) { return cl.size(c) + cl.size(d) <= cap; });
            if (feasible)
                key[c] = {read_word(tape, c, phase,
                                    static_cast<std::uint64_t>(r) * s.bits_per_round,
                                    s.bits_per_round),
                          c};
        }
        std::map<int, int> pref;
        for (const auto& [c, nbrs] : adj) {
            if (!key.count(c)) continue;
            const Key* best = nullptr;
            for (int d : nbrs) {
                if (cl.size(c) + cl.size(d) > cap) continue;
                if (!best || key.at(d) > *best) best = &key.at(d);
            }
            if (best) pref[c] = best->second;
        }
        for (const auto& [c, d] : pref) {
            if (c < d && pref.count(d) && pref.at(d) == c) {
                cl.merge(c, d);
                touched.insert(std::min(c, d));
            }
        }
    }
    // Leftover singletons join the smallest-rank merged neighbour when the cap allows.
    auto adj = cluster_adjacency(g, cl);
    std::map<int, std::vector<std::pair<Key, int>>> joins;
    for (const auto& [c, nbrs] : adj) {
        if (cl.size(c) != 1 || touched.count(c)) continue;
        const int leftover = c;
        std::optional<Key> best;
        for (int d : nbrs) {
            if (!touched.count(d) || cl.size(d) + 1 > cap) continue;
            if (!best || rank[d] < *best) best = rank[d];
        }
        if (best) {
            Key own = rank[leftover];
            joins[best->second].push_back({own, leftover});
        }
    }
    for (auto& [target, list] : joins) {
        std::sort(list.begin(), list.end());
        int t = target;
        for (const auto& [k, v] : list) {
            if (cl.size(t) + 1 > cap) break;
            cl.merge(t, v);
            t = std::min(t, v);
        }
    }
}

ExhaustionLevel make_level(const Substrate& g, const Clustering& cl,
                           const std::vector<Key>& rank, int cap) {
    const int n = g.vertex_count();
    ExhaustionLevel L;
    L.cap = cap;
    L.cluster_of = cl.leader;
    std::vector<char> excluded(n, 0);
    for (const auto& e : g.edges()) {
        if (cl.leader[e.u] == cl.leader[e.v]) continue;
        excluded[rank[e.u] < rank[e.v] ? e.u : e.v] = 1;
    }
    L.cell_of.assign(n, -1);
    for (int v = 0; v < n; ++v) {
        if (excluded[v] || L.cell_of[v] >= 0) continue;
        int id = static_cast<int>(L.cells.size());
        std::vector<int> comp;
        std::vector<int> stack{v};
        L.cell_of[v] = id;
        while (!stack.empty()) {
            int x = stack.back();
            stack.pop_back();
            comp.push_back(x);
            for (const auto& inc : g.neighbors(x))
                if (!excluded[inc.vertex] && L.cell_of[inc.vertex] < 0) {
                    L.cell_of[inc.vertex] = id;
                    stack.push_back(inc.vertex);
                }
        }
        std::sort(comp.begin(), comp.end());
        L.cells.push_back(std::move(comp));
    }
    return L;
}

}  // namespace

Exhaustion build_exhaustion(const Substrate& g, Tape& tape, const ExhaustionSchedule& schedule) {
    schedule.validate();
    const int n = g.vertex_count();
    std::vector<Key> rank(n);
    for (int v = 0; v < n; ++v)
        rank[v] = {read_word(tape, v, "exhaust.rank", 0, schedule.rank_bits), v};

    Clustering cl;
    cl.leader.resize(n);
    std::iota(cl.leader.begin(), cl.leader.end(), 0);
    for (int v = 0; v < n; ++v) cl.members[v] = {v};

    Exhaustion ex;
    for (std::size_t i = 0; i < schedule.caps.size(); ++i) {
        int cap = schedule.caps[i];
        if (cap >= n) {
            while (cl.members.size() > 1) {
                auto it = std::next(cl.members.begin());
                cl.merge(cl.members.begin()->first, it->first);
            }
        } else {
            merge_level(g, tape, schedule, static_cast<int>(i), cap, rank, cl);
        }
        ex.levels.push_back(make_level(g, cl, rank, cap));
        if (ex.levels.back().cells.size() == 1 &&
            static_cast<int>(ex.levels.back().cells[0].size()) == n)
            return ex;
    }
    while (cl.members.size() > 1) {
        auto it = std::next(cl.members.begin());
        cl.merge(cl.members.begin()->first, it->first);
    }
    ex.levels.push_back(make_level(g, cl, rank, n));
    ex.forced_top = true;
    return ex;
}

namespace {
std::vector<int> cell_signature(const Exhaustion& ex, int level, int v) {
    if (level >= ex.level_count()) return {-2};
    const auto& L = ex.levels[level];
    if (L.cell_of[v] < 0) return {-1};
    return L.cells[L.cell_of[v]];
}
}  // namespace

int locality_radius_certificate(const Substrate& g, const Tape& tape,
                                const ExhaustionSchedule& schedule, const Exhaustion& ex,
                                int level, int probes, int reseeds, std::uint64_t probe_seed) {
    if (level < 0 || level >= ex.level_count()) throw std::out_of_range("level out of range");
    const int n = g.vertex_count();
    const int diam = g.diameter();
    int worst = 0;
    for (int p = 0; p < probes; ++p) {
        int v = static_cast<int>(mix64(probe_seed * 1315423911ULL + p) % n);
        auto want = cell_signature(ex, level, v);
        auto dist = g.distances_from(v);
        int found = -1;
        for (int R = 0; R <= diam && found < 0; ++R) {
            std::vector<int> keep;
            for (int x = 0; x < n; ++x)
                if (dist[x] <= R) keep.push_back(x);
            bool ok = true;
            for (int s = 0; s < reseeds && ok; ++s) {
                Tape perturbed(tape, keep, mix64(tape.seed() ^ (0xabcdefULL + 977 * s + 31 * p)));
                auto other = build_exhaustion(g, perturbed, schedule);
                ok = cell_signature(other, level, v) == want;
            }
            if (ok) found = R;
        }
        if (found < 0)
            throw Error("locality certificate failed at level " + std::to_string(level + 1));
        worst = std::max(worst, found);
    }
    return worst;
}

void certify_radii(const Substrate& g, const Tape& tape, const ExhaustionSchedule& schedule,
                   Exhaustion& ex, int probes, int reseeds) {
    int running = 0;
    for (int l = 0; l < ex.level_count(); ++l) {
        running = std::max(running,
                           locality_radius_certificate(g, tape, schedule, ex, l, probes, reseeds));
        ex.levels[l].radius = running;
    }
}

void write_cell_histogram_csv(const Exhaustion& ex, std::ostream& os) {
    os << "level,cell_size,count\n";
    for (int l = 0; l < ex.level_count(); ++l) {
        std::map<int, int> hist;
        for (const auto& c : ex.levels[l].cells) ++hist[static_cast<int>(c.size())];
        for (auto [sz, cnt] : hist) os << l + 1 << ',' << sz << ',' << cnt << '\n';
    }
}

}  // namespace fiid
