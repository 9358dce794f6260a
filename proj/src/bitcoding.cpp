#include "fiid/bitcoding.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <set>
#include <tuple>

#include "fiid/coupling.hpp"
#include "fiid/errors.hpp"

namespace fiid {

// --- MapTable ----------------------------------------------------------------

int MapTable::lookup(std::uint64_t slot) const {
    if (slot >= N) throw std::out_of_range("slot outside the map domain");
    std::uint64_t acc = 0;
    for (std::size_t k = 0; k < counts.size(); ++k) {
        acc += counts[k];
        if (slot < acc) return static_cast<int>(k);
    }
    return pad;
}

DistTable MapTable::pushforward() const {
    DistTable t;
    t.ground = ground;
    const long double n = static_cast<long double>(N);
    for (std::size_t k = 0; k < codomain.size(); ++k) {
        std::uint64_t c = counts[k] + (static_cast<int>(k) == pad ? padding() : 0);
        if (c) t.mass[codomain[k]] = static_cast<double>(c / n);
    }
    return t;
}

nlohmann::json MapTable::to_json() const {
    auto atoms = nlohmann::json::array();
    for (std::size_t k = 0; k < codomain.size(); ++k)
        atoms.push_back({{"mask", codomain[k]}, {"mu", mu[k]}, {"slots", counts[k]}});
    return {{"ground", ground},   {"alpha", alpha},       {"N", N},
            {"atoms", atoms},     {"pad", pad},           {"padding", padding()},
            {"dominate", dominate}, {"tv", tv}};
}

namespace {

Mask full_mask(std::size_t n) { return n >= 64 ? ~Mask{0} : (Mask{1} << n) - 1; }

// Explicit coupling of the pushforward over μ: each atom keeps its floor
// slots and sends its fractional remainder to the top.
void verify_padding_coupling(const MapTable& m, const DistTable& pushed, const DistTable& mu) {
    std::map<std::pair<Mask, Mask>, double> joint;
    const long double n = static_cast<long double>(m.N);
    const Mask top = m.codomain[m.pad];
    for (std::size_t k = 0; k < m.codomain.size(); ++k) {
        const long double kept = m.counts[k] / n;
        if (kept > 0) joint[{m.codomain[k], m.codomain[k]}] += static_cast<double>(kept);
        const long double rest = m.mu[k] - kept;
        if (rest > 0) joint[{top, m.codomain[k]}] += static_cast<double>(rest);
    }
    audit_joint(pushed.mass, mu.mass, joint);
}

}  // namespace

MapTable build_tv_map(const DistTable& mu, std::uint64_t N, bool dominate) {
    if (N == 0) throw std::invalid_argument("map domain must be non-empty");
    MapTable m;
    m.ground = mu.ground;
    m.N = N;
    m.alpha = std::has_single_bit(N) ? std::countr_zero(N) : -1;
    m.dominate = dominate;
    for (const auto& [x, p] : mu.mass)
        if (p > 0) {
            m.codomain.push_back(x);
            m.mu.push_back(p);
        }
    if (m.codomain.empty()) throw std::invalid_argument("map source law has no mass");
    if (N < m.codomain.size())
        throw std::invalid_argument("map domain smaller than the support");

    const long double n = static_cast<long double>(N);
    for (double p : m.mu) {
        // Relative slack so that decimal masses like 0.7 floor to their exact share.
        auto c = static_cast<std::uint64_t>(std::floor(n * p * (1 + 1e-12L)));
        m.counts.push_back(c);
        m.assigned += c;
    }
    while (m.assigned > N) {  // rounding slack in Σμ
        auto it = std::max_element(m.counts.begin(), m.counts.end());
        --*it;
        --m.assigned;
    }
    if (dominate) {
        const Mask top = full_mask(m.ground.size());
        auto it = std::find(m.codomain.begin(), m.codomain.end(), top);
        if (it == m.codomain.end()) {
            m.codomain.push_back(top);
            m.mu.push_back(0.0);
            m.counts.push_back(0);
            it = m.codomain.end() - 1;
        }
        m.pad = static_cast<int>(it - m.codomain.begin());
    } else {
        m.pad = static_cast<int>(m.codomain.size()) - 1;
    }

    long double tv = 0;
    for (std::size_t k = 0; k < m.codomain.size(); ++k) {
        long double c = m.counts[k] + (static_cast<int>(k) == m.pad ? m.padding() : 0);
        tv += std::fabs(c / n - static_cast<long double>(m.mu[k]));
    }
    m.tv = static_cast<double>(tv / 2);

    if (dominate) {
        auto pushed = m.pushforward();
        const std::size_t support = m.codomain.size();
        if (support * support <= kMaxCouplingArcs) {
            auto r = check_domination(pushed, mu);
            if (!r.dominates)
                throw DominationFails("padded map does not dominate its source law", r.witness,
                                      r.upper_mass, r.lower_mass);
        } else {
            verify_padding_coupling(m, pushed, mu);
        }
    }
    return m;
}

double count_small_subsets(int n, int d) {
    d = std::min(d, n);
    unsigned __int128 c = 1, sum = 0;
    for (int k = 0; k <= d; ++k) {
        sum += c;
        c = c * static_cast<unsigned>(n - k) / static_cast<unsigned>(k + 1);
    }
    return static_cast<double>(sum);
}

double generation_bound(int H, double delta, double eps) {
    delta = std::min(delta, 1.0);
    double b = std::log2(1.0 / eps);
    if (H > 0 && delta > 0) b += H * delta * std::log2(std::exp(1.0) / delta);
    return b;
}

MapTable dominating_map(const DistTable& mu, double delta, double eps) {
    if (!(eps > 0 && eps < 1)) throw std::invalid_argument("epsilon must lie in (0, 1)");
    const int H = static_cast<int>(mu.ground.size());
    const int d = static_cast<int>(std::floor(std::min(delta, 1.0) * H + 1e-9));
    int support = 0;
    for (const auto& [x, p] : mu.mass)
        if (p > 0) {
            ++support;
            if (std::popcount(x) > d)
                throw SupportCapViolated("removal set of size " + std::to_string(std::popcount(x)) +
                                         " exceeds the cap " + std::to_string(d) + " on " +
                                         std::to_string(H) + " sites");
        }
    if (support == 1) return build_tv_map(mu, 1, true);

    const long double need = static_cast<long double>(count_small_subsets(H, d)) / eps;
    int alpha = static_cast<int>(std::ceil(std::log2(need)));
    while (alpha > 0 && std::ldexp(1.0L, alpha - 1) >= need) --alpha;
    while (std::ldexp(1.0L, alpha) < need) ++alpha;
    const double bound = generation_bound(H, delta, eps);
    if (alpha > bound + 1e-9)
        throw Error("generation bound violated: alpha " + std::to_string(alpha) + " > " +
                    std::to_string(bound));
    if (alpha > 62) throw RefuseTooLarge("map domain of 2^" + std::to_string(alpha) + " slots");
    return build_tv_map(mu, std::uint64_t{1} << alpha, true);
}

DominatingDraw dominating_sampler(const SubgraphRef& cell, const DistTable& mu, double delta,
                                  double eps, Tape& tape, const std::string& phase) {
    auto map = dominating_map(mu, delta, eps);
    TapeView tv(tape, phase, cell.vertices);
    const int anchor = cell.vertices.front();
    DominatingDraw d;
    d.alpha = map.alpha;
    for (int i = 0; i < map.alpha; ++i) d.slot = d.slot << 1 | (tv.bit_at(anchor, i) ? 1 : 0);
    d.value = map.codomain[map.lookup(d.slot)];
    d.padded = d.slot >= map.assigned;
    return d;
}

// --- Stable matching ---------------------------------------------------------

std::optional<int> Matching::partner(int deficit) const {
    auto it = std::lower_bound(pairs.begin(), pairs.end(), std::pair{deficit, -1});
    if (it == pairs.end() || it->first != deficit) return std::nullopt;
    return it->second;
}

Matching stable_match_bits(const Substrate& g, const std::vector<int>& deficit,
                           const std::vector<int>& surplus,
                           const std::vector<std::uint64_t>& tie_labels) {
    if (deficit.size() > surplus.size())
        throw Infeasible("bit reallocation: " + std::to_string(deficit.size()) +
                         " vertices short of bits but only " + std::to_string(surplus.size()) +
                         " with a surplus");
    Matching out;
    if (deficit.empty()) return out;
    const int D = static_cast<int>(deficit.size()), S = static_cast<int>(surplus.size());
    auto label = [&](int v) { return tie_labels.empty() ? std::uint64_t{0} : tie_labels[v]; };
    constexpr int kInf = std::numeric_limits<int>::max();

    std::vector<std::vector<int>> dist(D);  // dist[i][j] from deficit i to surplus j
    for (int i = 0; i < D; ++i) {
        auto all = g.distances_from(deficit[i]);
        dist[i].resize(S);
        for (int j = 0; j < S; ++j) dist[i][j] = all[surplus[j]] < 0 ? kInf : all[surplus[j]];
    }
    // Strict preference keys.
    auto a_prefers = [&](int i, int j1, int j2) {
        return std::tuple(dist[i][j1], label(surplus[j1]), surplus[j1]) <
               std::tuple(dist[i][j2], label(surplus[j2]), surplus[j2]);
    };
    auto b_prefers = [&](int j, int i1, int i2) {
        return std::tuple(dist[i1][j], label(deficit[i1]), deficit[i1]) <
               std::tuple(dist[i2][j], label(deficit[i2]), deficit[i2]);
    };

    std::vector<int> match_a(D, -1), match_b(S, -1);
    int left = D;
    while (left > 0) {
        ++out.rounds;
        std::vector<int> best_a(D, -1);
        for (int i = 0; i < D; ++i) {
            if (match_a[i] >= 0) continue;
            for (int j = 0; j < S; ++j)
                if (match_b[j] < 0 && dist[i][j] < kInf && (best_a[i] < 0 || a_prefers(i, j, best_a[i])))
                    best_a[i] = j;
            if (best_a[i] < 0)
                throw Infeasible("bit reallocation: deficit vertex " + std::to_string(deficit[i]) +
                                 " cannot reach a surplus vertex");
        }
        int made = 0;
        for (int j = 0; j < S; ++j) {
            if (match_b[j] >= 0) continue;
            int best = -1;
            for (int i = 0; i < D; ++i)
                if (match_a[i] < 0 && dist[i][j] < kInf && (best < 0 || b_prefers(j, i, best)))
                    best = i;
            if (best >= 0 && best_a[best] == j) {
                match_a[best] = j;
                match_b[j] = best;
                out.radius = std::max(out.radius, dist[best][j]);
                ++made;
            }
        }
        left -= made;
        if (made == 0) throw Error("stable matching made no progress");
    }
    for (int i = 0; i < D; ++i) out.pairs.push_back({deficit[i], surplus[match_a[i]]});
    std::sort(out.pairs.begin(), out.pairs.end());
    return out;
}

bool matching_is_stable(const Substrate& g, const std::vector<int>& deficit,
                        const std::vector<int>& surplus, const Matching& m) {
    constexpr int kInf = std::numeric_limits<int>::max();
    std::map<int, int> of_b;
    std::set<int> seen;
    for (auto [a, b] : m.pairs) {
        if (!seen.insert(b).second) return false;  // not injective
        of_b[b] = a;
    }
    std::map<int, int> da;
    for (int a : deficit) {
        auto p = m.partner(a);
        da[a] = p ? g.distances_from(a)[*p] : kInf;
    }
    for (int a : deficit) {
        auto d = g.distances_from(a);
        for (int b : surplus) {
            int db = kInf;
            if (auto it = of_b.find(b); it != of_b.end()) db = g.distances_from(it->second)[b];
            if (d[b] >= 0 && d[b] < da[a] && d[b] < db) return false;
        }
    }
    return true;
}

// --- Bit pool ----------------------------------------------------------------

BitBudget BitBudget::from_mean(double m_hat) {
    BitBudget b;
    b.cap = static_cast<std::uint64_t>(std::ceil(10 * m_hat));
    b.c = static_cast<std::uint64_t>(std::ceil(m_hat / 8));
    return b;
}

BitPool::BitPool(int vertex_count, std::optional<BitBudget> budget)
    : budget_(budget), used_(vertex_count, 0), route_(vertex_count) {
    std::iota(route_.begin(), route_.end(), 0);
}

std::optional<std::uint64_t> BitPool::unused(int v) const {
    if (!budget_) return std::nullopt;
    return used_[v] >= budget_->cap ? 0 : budget_->cap - used_[v];
}

void BitPool::rebalance(const Substrate& g, const std::vector<std::uint64_t>& labels) {
    std::iota(route_.begin(), route_.end(), 0);
    matching_ = {};
    if (!budget_) return;
    const std::uint64_t lo = budget_->c, hi = std::max(2 * budget_->c, budget_->c + 1);
    std::vector<int> deficit, surplus;
    for (int v = 0; v < static_cast<int>(used_.size()); ++v) {
        auto u = *unused(v);
        if (u <= lo) deficit.push_back(v);
        else if (u >= hi) surplus.push_back(v);
    }
    matching_ = stable_match_bits(g, deficit, surplus, labels);
    for (auto [a, b] : matching_.pairs) route_[a] = b;
}

int BitPool::charge(int v, std::uint64_t k) {
    const int src = route_[v];
    if (budget_ && used_[src] + k > budget_->cap)
        throw BudgetExceeded(src, used_[src] + k, budget_->cap);
    used_[src] += k;
    return src;
}

// --- Calibration and summaries -----------------------------------------------

double FvTrace::total_bits_per_vertex() const {
    if (bits_per_vertex.empty()) return 0;
    long double s = 0;
    for (auto b : bits_per_vertex) s += b;
    return static_cast<double>(s / bits_per_vertex.size());
}

std::vector<double> delta_from_pilot(const std::vector<FvTrace>& pilot) {
    std::vector<std::vector<double>> per_level;
    for (const auto& t : pilot)
        for (int n = 0; n < t.level_count(); ++n) {
            if (static_cast<int>(per_level.size()) <= n) per_level.resize(n + 1);
            const auto& d = t.levels[n].removal_density;
            per_level[n].insert(per_level[n].end(), d.begin(), d.end());
        }
    std::vector<double> out;
    for (auto& v : per_level) {
        if (v.empty()) {
            out.push_back(1.0);
            continue;
        }
        std::sort(v.begin(), v.end());
        auto rank = static_cast<std::size_t>(std::ceil(0.99 * v.size()));
        double p99 = v[std::max<std::size_t>(rank, 1) - 1];
        out.push_back(std::min(1.0, 2 * p99));
    }
    return out;
}

double mean_total_bits(const std::vector<FvTrace>& runs) {
    if (runs.empty()) return 0;
    double s = 0;
    for (const auto& t : runs) s += t.total_bits_per_vertex();
    return s / runs.size();
}

Thinning thin_levels(const std::vector<CascadeTrace>& pilot) {
    Thinning th;
    if (pilot.empty()) return th;
    const int L = pilot.front().level_count();
    th.proxy.assign(L, 0.0);
    for (const auto& t : pilot) {
        if (t.level_count() != L) throw std::invalid_argument("pilot traces differ in depth");
        const auto& top = t.state.back();
        for (int n = 0; n < L; ++n) {
            std::vector<char> in(t.site_total, 0);
            for (int s : t.ground[n]) in[s] = 1;
            int hit = 0;
            for (int s = 0; s < t.site_total; ++s) {
                bool on = in[s] ? t.state[n][s] != 0 : true;  // ω_0 = everything
                if (on && !top[s]) ++hit;
            }
            th.proxy[n] += static_cast<double>(hit) / std::max(1, t.site_total);
        }
    }
    for (auto& p : th.proxy) p /= pilot.size();
    for (int n = 0; n + 1 < L; ++n)
        if (th.proxy[n] <= std::ldexp(1.0, -2 * static_cast<int>(th.keep.size() + 1)))
            th.keep.push_back(n);
    th.keep.push_back(L - 1);
    return th;
}

SpendSeries analyze_spend(const std::vector<double>& per_level) {
    SpendSeries s;
    s.per_level = per_level;
    double acc = 0, fy = 0, ff = 0;
    for (std::size_t i = 0; i < per_level.size(); ++i) {
        acc += per_level[i];
        s.partial.push_back(acc);
        double n = static_cast<double>(i + 1), f = n * std::ldexp(1.0, -static_cast<int>(i + 1));
        fy += f * per_level[i];
        ff += f * f;
    }
    s.last_share = acc > 0 && !per_level.empty() ? per_level.back() / acc : 0;
    s.fit_c = ff > 0 ? fy / ff : 0;
    for (std::size_t i = 0; i < per_level.size(); ++i) {
        double n = static_cast<double>(i + 1);
        double r = per_level[i] - s.fit_c * n * std::ldexp(1.0, -static_cast<int>(i + 1));
        s.fit_rss += r * r;
    }
    const int L = static_cast<int>(per_level.size());
    s.tail_estimate = s.fit_c * (L + 2) * std::ldexp(1.0, -L);
    return s;
}

nlohmann::json SpendSeries::to_json() const {
    return {{"per_level", per_level}, {"partial", partial},   {"last_share", last_share},
            {"fit_c", fit_c},         {"fit_rss", fit_rss}, {"tail_estimate", tail_estimate},
            {"summable", summable()}};
}

}  // namespace fiid
