#include "fiid/coupling.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <queue>

#include "fiid/errors.hpp"

namespace fiid {

namespace {

std::atomic<bool> g_flip_arcs{false};

constexpr double kResidualEps = 1e-15;
constexpr double kFlowTolerance = 1e-9;

// Dinic's algorithm; arcs are explored in insertion order, so the flow is a
// deterministic function of the input tables.
class MaxFlow {
public:
    explicit MaxFlow(int n) : head_(n, -1) {}

    int add(int u, int v, double cap) {
        arcs_.push_back({v, head_[u], cap});
        head_[u] = static_cast<int>(arcs_.size()) - 1;
        arcs_.push_back({u, head_[v], 0.0});
        head_[v] = static_cast<int>(arcs_.size()) - 1;
        return static_cast<int>(arcs_.size()) - 2;
    }

    double run(int s, int t) {
        // Adjacency lists are built by prepending; reverse them once so that
        // augmentation follows insertion order.
        order_.assign(head_.size(), {});
        for (std::size_t u = 0; u < head_.size(); ++u) {
            for (int a = head_[u]; a >= 0; a = arcs_[a].next) order_[u].push_back(a);
            std::reverse(order_[u].begin(), order_[u].end());
        }
        double total = 0;
        while (bfs(s, t)) {
            it_.assign(head_.size(), 0);
            while (double f = dfs(s, t, INFINITY)) total += f;
        }
        return total;
    }

    double flow_on(int arc) const { return arcs_[arc ^ 1].cap; }

    std::vector<char> reachable(int s) const {
        std::vector<char> seen(head_.size(), 0);
        std::vector<int> stack{s};
        seen[s] = 1;
        while (!stack.empty()) {
            int u = stack.back();
            stack.pop_back();
            for (int a = head_[u]; a >= 0; a = arcs_[a].next)
                if (arcs_[a].cap > kResidualEps * 100 && !seen[arcs_[a].to]) {
                    seen[arcs_[a].to] = 1;
                    stack.push_back(arcs_[a].to);
                }
        }
        return seen;
    }

private:
    struct Arc {
        int to;
        int next;
        double cap;
    };

    bool bfs(int s, int t) {
        level_.assign(head_.size(), -1);
        std::queue<int> q;
        level_[s] = 0;
        q.push(s);
        while (!q.empty()) {
            int u = q.front();
            q.pop();
            for (int a : order_[u])
                if (arcs_[a].cap > kResidualEps && level_[arcs_[a].to] < 0) {
                    level_[arcs_[a].to] = level_[u] + 1;
                    q.push(arcs_[a].to);
                }
        }
        return level_[t] >= 0;
    }

    double dfs(int u, int t, double pushed) {
        if (u == t) return pushed;
        for (auto& i = it_[u]; i < order_[u].size(); ++i) {
            int a = order_[u][i];
            int v = arcs_[a].to;
            if (arcs_[a].cap <= kResidualEps || level_[v] != level_[u] + 1) continue;
            double f = dfs(v, t, std::min(pushed, arcs_[a].cap));
            if (f > 0) {
                arcs_[a].cap -= f;
                arcs_[a ^ 1].cap += f;
                return f;
            }
        }
        return 0.0;
    }

    std::vector<int> head_;
    std::vector<Arc> arcs_;
    std::vector<std::vector<int>> order_;
    std::vector<int> level_;
    std::vector<std::size_t> it_;
};

bool below(Mask y, Mask x, bool flip) {
    return flip ? (x & ~y) == 0 : (y & ~x) == 0;
}

struct Network {
    std::vector<std::pair<Mask, double>> up, lo;
    MaxFlow flow{0};
    std::vector<std::tuple<int, int, int>> pair_arcs;  // (upper idx, lower idx, arc id)
    double value = 0;
};

std::vector<std::pair<Mask, double>> support(const MaskTable& t) {
    std::vector<std::pair<Mask, double>> out;
    for (const auto& [m, p] : t)
        if (p > kResidualEps) out.push_back({m, p});
    return out;
}

void solve(const MaskTable& upper, const MaskTable& lower, Network& net) {
    const bool flip = g_flip_arcs.load();
    net.up = support(upper);
    net.lo = support(lower);
    const int nu = static_cast<int>(net.up.size()), nl = static_cast<int>(net.lo.size());
    net.flow = MaxFlow(2 + nu + nl);
    const int s = 0, t = 1;
    for (int i = 0; i < nu; ++i) net.flow.add(s, 2 + i, net.up[i].second);

    // Pair arcs, found either by scanning all pairs or by enumerating submasks.
    std::size_t pair_cost = static_cast<std::size_t>(nu) * nl, sub_cost = 0;
    for (const auto& [x, p] : net.up) sub_cost += std::size_t{1} << std::popcount(x);
    std::map<Mask, int> lo_index;
    for (int j = 0; j < nl; ++j) lo_index[net.lo[j].first] = j;
    for (int i = 0; i < nu; ++i) {
        const Mask x = net.up[i].first;
        std::vector<int> targets;
        if (flip || pair_cost <= sub_cost) {
            for (int j = 0; j < nl; ++j)
                if (below(net.lo[j].first, x, flip)) targets.push_back(j);
        } else {
            for (Mask y = x;; y = (y - 1) & x) {
                auto it = lo_index.find(y);
                if (it != lo_index.end()) targets.push_back(it->second);
                if (y == 0) break;
            }
            std::sort(targets.begin(), targets.end());
        }
        for (int j : targets) {
            if (net.pair_arcs.size() >= kMaxCouplingArcs)
                throw RefuseTooLarge("coupling support exceeds " +
                                     std::to_string(kMaxCouplingArcs) + " pairs");
            net.pair_arcs.push_back({i, j, net.flow.add(2 + i, 2 + nu + j, 2.0)});
        }
    }
    for (int j = 0; j < nl; ++j) net.flow.add(2 + nu + j, t, net.lo[j].second);
    net.value = net.flow.run(s, t);
}

DominationResult extract(const Network& net, const MaskTable& upper, const MaskTable& lower) {
    DominationResult r;
    r.flow = net.value;
    double need = 0;
    for (const auto& [m, p] : net.lo) need += p;
    r.dominates = net.value >= need - kFlowTolerance;
    if (r.dominates) return r;
    const int nu = static_cast<int>(net.up.size());
    auto seen = net.flow.reachable(0);
    std::vector<Mask> out;
    for (int j = 0; j < static_cast<int>(net.lo.size()); ++j)
        if (!seen[2 + nu + j]) out.push_back(net.lo[j].first);
    // Keep minimal generators only.
    std::vector<Mask> gens;
    for (Mask a : out) {
        bool minimal = true;
        for (Mask b : out)
            if (b != a && (b & ~a) == 0) {
                minimal = false;
                break;
            }
        if (minimal) gens.push_back(a);
    }
    r.witness = gens;
    for (const auto& [m, p] : upper)
        if (r.in_witness(m)) r.upper_mass += p;
    for (const auto& [m, p] : lower)
        if (r.in_witness(m)) r.lower_mass += p;
    return r;
}

void check_same_ground(const DistTable& a, const DistTable& b) {
    if (a.ground != b.ground) throw std::invalid_argument("tables have different ground sets");
}

}  // namespace

bool DominationResult::in_witness(Mask m) const {
    return std::any_of(witness.begin(), witness.end(), [m](Mask g) { return (g & ~m) == 0; });
}

void set_coupling_mutation(bool flip) { g_flip_arcs.store(flip); }
bool coupling_mutation() { return g_flip_arcs.load(); }

DominationResult check_domination(const MaskTable& upper, const MaskTable& lower) {
    Network net;
    solve(upper, lower, net);
    return extract(net, upper, lower);
}

DominationResult check_domination(const DistTable& upper, const DistTable& lower) {
    check_same_ground(upper, lower);
    return check_domination(upper.mass, lower.mass);
}

std::map<std::pair<Mask, Mask>, double> monotone_flow(const MaskTable& upper,
                                                      const MaskTable& lower) {
    Network net;
    solve(upper, lower, net);
    auto r = extract(net, upper, lower);
    if (!r.dominates)
        throw DominationFails("no monotone coupling: witness up-set has upper mass " +
                                  std::to_string(r.upper_mass) + " < lower mass " +
                                  std::to_string(r.lower_mass),
                              r.witness, r.upper_mass, r.lower_mass);
    std::map<std::pair<Mask, Mask>, double> joint;
    for (const auto& [i, j, arc] : net.pair_arcs) {
        double f = net.flow.flow_on(arc);
        if (f > kResidualEps) joint[{net.up[i].first, net.lo[j].first}] = f;
    }
    return joint;
}

CouplingTable build_coupling(const DistTable& upper, const DistTable& lower) {
    check_same_ground(upper, lower);
    CouplingTable c{upper, lower, monotone_flow(upper.mass, lower.mass)};
    c.audit();
    return c;
}

void CouplingTable::audit() const { audit_joint(upper.mass, lower.mass, joint); }

void audit_joint(const MaskTable& upper, const MaskTable& lower,
                 const std::map<std::pair<Mask, Mask>, double>& joint) {
    std::map<Mask, double> mu, ml;
    double total = 0;
    for (const auto& [k, p] : joint) {
        if ((k.second & ~k.first) != 0)
            throw DominationFails("coupling support pair violates containment", {k.second},
                                  0.0, p);
        mu[k.first] += p;
        ml[k.second] += p;
        total += p;
    }
    if (std::abs(total - 1.0) > 1e-10) throw Error("coupling mass is not one");
    auto close = [](const MaskTable& want, const std::map<Mask, double>& got) {
        for (const auto& [m, p] : want) {
            auto it = got.find(m);
            if (std::abs(p - (it == got.end() ? 0.0 : it->second)) > 1e-10) return false;
        }
        for (const auto& [m, p] : got)
            if (!want.count(m) && p > 1e-10) return false;
        return true;
    };
    if (!close(upper, mu)) throw Error("coupling upper marginal mismatch");
    if (!close(lower, ml)) throw Error("coupling lower marginal mismatch");
}

nlohmann::json CouplingTable::to_json() const {
    nlohmann::json j;
    j["ground"] = upper.ground;
    auto arr = nlohmann::json::array();
    for (const auto& [k, p] : joint)
        arr.push_back({{"upper", upper.config_of(k.first).members},
                       {"lower", lower.config_of(k.second).members},
                       {"mass", p}});
    j["joint"] = arr;
    return j;
}

Mask conditional_sample(const std::map<std::pair<Mask, Mask>, double>& joint, Side given,
                        Mask value, double u) {
    std::vector<std::pair<Mask, double>> opts;
    if (given == Side::Upper) {
        for (auto it = joint.lower_bound({value, 0}); it != joint.end() && it->first.first == value;
             ++it)
            opts.push_back({it->first.second, it->second});
    } else {
        for (const auto& [k, p] : joint)
            if (k.second == value) opts.push_back({k.first, p});
    }
    double z = 0;
    for (const auto& [m, p] : opts) z += p;
    if (!(z > 0)) throw ZeroMassCondition("conditioning event has zero mass in the coupling");
    double x = u * z;
    for (const auto& [m, p] : opts) {
        x -= p;
        if (x < 0) return m;
    }
    return opts.back().first;
}

Config conditional_sample(const CouplingTable& c, Side given, const Config& value, Tape& tape,
                          const SubgraphRef& cell, const std::string& phase) {
    const DistTable& from = given == Side::Upper ? c.upper : c.lower;
    const DistTable& to = given == Side::Upper ? c.lower : c.upper;
    TapeView tv(tape, phase, cell.vertices);
    double u = tv.uniform(cell.vertices.front());
    return to.config_of(conditional_sample(c.joint, given, from.mask_of(value), u));
}

RestrictExtend restrict_extend(const ModelSpec& model, const SubgraphRef& big_cell,
                               const std::vector<SubgraphRef>& sub_cells) {
    const Substrate& g = *big_cell.parent;
    for (std::size_t a = 0; a < sub_cells.size(); ++a) {
        for (int v : sub_cells[a].vertices)
            if (!big_cell.contains(v)) throw std::invalid_argument("sub-cell leaves the big cell");
        for (std::size_t b = a + 1; b < sub_cells.size(); ++b)
            for (int v : sub_cells[a].vertices) {
                if (sub_cells[b].contains(v)) throw std::invalid_argument("sub-cells overlap");
                for (const auto& inc : g.neighbors(v))
                    if (sub_cells[b].contains(inc.vertex))
                        throw std::invalid_argument("sub-cells must be at distance >= 2");
            }
    }
    RestrictExtend out;
    out.full = enumerate_exact(model, big_cell);

    std::vector<int> ground;
    for (const auto& h : sub_cells)
        for (int s : h.sites()) ground.push_back(s);
    std::sort(ground.begin(), ground.end());

    DistTable prod;
    prod.ground = ground;
    prod.mass[0] = 1.0;
    for (const auto& h : sub_cells) {
        auto part = enumerate_exact(model, h);
        std::vector<int> pos;
        for (int s : part.ground)
            pos.push_back(static_cast<int>(std::lower_bound(ground.begin(), ground.end(), s) -
                                           ground.begin()));
        MaskTable next;
        for (const auto& [a, pa] : prod.mass)
            for (const auto& [b, pb] : part.mass) {
                Mask m = a;
                for (std::size_t i = 0; i < pos.size(); ++i)
                    if (b >> i & 1) m |= Mask{1} << pos[i];
                next[m] += pa * pb;
            }
        prod.mass = std::move(next);
    }
    out.product = prod;
    out.restricted = out.full.marginal(ground);
    if (model.direction() == Direction::Increasing) {
        out.upper = out.restricted;
        out.lower = out.product;
    } else {
        out.upper = out.product;
        out.lower = out.restricted;
    }
    return out;
}

}  // namespace fiid
