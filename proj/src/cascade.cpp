#include "fiid/cascade.hpp"

#include <algorithm>

#include "fiid/coupling.hpp"
#include "fiid/errors.hpp"
#include "fiid/kernels.hpp"
#include "parallel.hpp"

namespace fiid {

Mode mode_from_string(const std::string& s) {
    if (s == "exact") return Mode::Exact;
    if (s == "mc") return Mode::MonteCarlo;
    throw std::invalid_argument("mode must be exact or mc, got '" + s + "'");
}

std::string to_string(Mode m) { return m == Mode::Exact ? "exact" : "mc"; }

std::vector<int> model_sites(const ModelSpec& m, const SubgraphRef& cell) {
    return m.edge_model() ? cell.edges : cell.vertices;
}

int model_site_total(const ModelSpec& m, const Substrate& g) {
    return m.edge_model() ? g.edge_count() : g.vertex_count();
}

namespace {

std::string model_key(const ModelSpec& m) { return m.to_json().dump(); }

const std::vector<int>& local_sites(const ModelSpec& m, const CellView& v) {
    return m.edge_model() ? v.parent_edge : v.parent_vertex;
}

int field_of(const ModelSpec& m) {
    return m.boundary == Boundary::Plus ? 1 : m.boundary == Boundary::Minus ? -1 : 0;
}

std::string level_phase(const char* engine, int level, const char* step) {
    return std::string(engine) + ".L" + std::to_string(level) + "." + step;
}

using detail::for_each_cell;

std::vector<char> marks_of(const Exhaustion& ex, int level, int n) {
    std::vector<char> marks(n, 0);
    for (int v = 0; v < n; ++v) marks[v] = ex.levels[level].included(v);
    return marks;
}

Mask sample_key(const std::vector<std::pair<Mask, double>>& opts, double u) {
    double z = 0;
    for (const auto& [k, p] : opts) z += p;
    double x = u * z;
    for (const auto& [k, p] : opts) {
        x -= p;
        if (x < 0) return k;
    }
    return opts.back().first;
}

std::vector<char> in_ground(const std::vector<int>& ground, int total) {
    std::vector<char> in(total, 0);
    for (int s : ground) in[s] = 1;
    return in;
}

std::vector<SubgraphRef> cells_of(const Substrate& g, const ExhaustionLevel& L) {
    std::vector<SubgraphRef> out;
    for (const auto& c : L.cells) out.push_back(induced(g, c));
    return out;
}

}  // namespace

// --- CascadeTrace ------------------------------------------------------------

Config CascadeTrace::config(int level) const {
    Config c;
    for (int s : ground.at(level))
        if (state[level][s]) c.members.push_back(s);
    return c;
}

void CascadeTrace::check_invariants() const {
    for (int s = 0; s < site_total; ++s)
        if (change_count[s] > 2)
            throw Error("site " + std::to_string(s) + " changed status " +
                        std::to_string(change_count[s]) + " times");
    for (int n = 0; n + 1 < level_count(); ++n) {
        auto next = in_ground(ground[n + 1], site_total);
        for (int s : ground[n]) {
            if (!next[s]) throw Error("ground sets are not nested at level " + std::to_string(n + 2));
            bool ok = direction == Direction::Decreasing ? state[n + 1][s] <= state[n][s]
                                                         : state[n + 1][s] >= state[n][s];
            if (!ok)
                throw Error("site " + std::to_string(s) + " moved against the family's direction");
        }
    }
}

nlohmann::json CascadeTrace::to_json() const {
    nlohmann::json j;
    j["model"] = model.to_json();
    j["direction"] = direction == Direction::Decreasing ? "decreasing" : "increasing";
    auto levels = nlohmann::json::array();
    for (int n = 0; n < level_count(); ++n)
        levels.push_back({{"level", n + 1}, {"ground", ground[n]}, {"on", config(n).members}});
    j["levels"] = levels;
    j["change_count"] = change_count;
    return j;
}

void CascadeTrace::write_csv(std::ostream& os) const {
    os << "site,change_count,change_levels\n";
    for (int s = 0; s < site_total; ++s) {
        os << s << ',' << change_count[s] << ',';
        for (std::size_t i = 0; i < change_levels[s].size(); ++i)
            os << (i ? ";" : "") << change_levels[s][i];
        os << '\n';
    }
}

// --- cascade_run -------------------------------------------------------------

CascadeTrace cascade_run(const Substrate& g, const Exhaustion& ex, const ModelSpec& model,
                         Tape& tape, const CascadeOptions& opt) {
    model.validate();
    const Direction dir = model.direction();
    if (dir == Direction::None)
        throw std::invalid_argument(model.name() + " is not a monotone family");
    if (opt.mode == Mode::MonteCarlo && model.family != Family::Ising)
        throw std::invalid_argument("mc mode is available for Ising only");
    int L = ex.level_count();
    if (opt.max_level > 0) L = std::min(L, opt.max_level);

    CascadeTrace t;
    t.model = model;
    t.direction = dir;
    t.site_total = model_site_total(model, g);
    t.change_count.assign(t.site_total, 0);
    t.change_levels.assign(t.site_total, {});
    std::vector<char> cur(t.site_total, dir == Direction::Decreasing ? 0 : 1);
    const std::string mkey = model_key(model);

    for (int n = 0; n < L; ++n) {
        auto cells = cells_of(g, ex.levels[n]);
        std::vector<char> marks;
        if (n > 0 && opt.mode == Mode::Exact) marks = marks_of(ex, n - 1, g.vertex_count());
        std::vector<char> next = cur;

        for_each_cell(static_cast<int>(cells.size()), opt.threads, [&](int i) {
            const SubgraphRef& K = cells[i];
            if (opt.mode == Mode::MonteCarlo) {
                auto view = make_view(K);
                TapeView tv(tape, "cascade.gc", K.vertices);
                auto r = cftp_ising(view.shape, model.beta, field_of(model), view.parent_vertex,
                                    tape_decider(tv));
                for (int v = 0; v < view.shape.n; ++v) next[view.parent_vertex[v]] = r.plus[v];
                return;
            }
            if (n == 0) {
                auto view = make_view(K);
                TapeView tv(tape, level_phase("cascade", 1, "sample"), K.vertices);
                auto local = sample_shape(model, view, tv);
                const auto& ids = local_sites(model, view);
                for (std::size_t s = 0; s < local.size(); ++s) next[ids[s]] = local[s];
                return;
            }
            auto canon = canonicalize(make_view(K, marks));
            auto kernel = cascade_kernel_cache().get(mkey + "#" + canon.key, [&] {
                return build_cascade_kernel(model, canon.view.shape);
            });
            const auto& ids = local_sites(model, canon.view);
            Mask x = 0;
            for (std::size_t j = 0; j < kernel->S.size(); ++j)
                if (cur[ids[kernel->S[j]]]) x |= Mask{1} << j;
            TapeView tc(tape, level_phase("cascade", n + 1, "couple"), K.vertices);
            Mask y = conditional_sample(kernel->joint, kernel->given, x, tc.uniform(K.vertices.front()));
            TapeView te(tape, level_phase("cascade", n + 1, "extend"), K.vertices);
            auto local = kernel->extension.sample(canon.view, kernel->S, y, te);
            for (std::size_t s = 0; s < local.size(); ++s) next[ids[s]] = local[s];
        });

        std::vector<int> ground;
        for (const auto& K : cells) {
            auto s = model_sites(model, K);
            ground.insert(ground.end(), s.begin(), s.end());
        }
        std::sort(ground.begin(), ground.end());
        for (int s = 0; s < t.site_total; ++s)
            if (next[s] != cur[s]) {
                ++t.change_count[s];
                t.change_levels[s].push_back(n + 1);
            }
        t.ground.push_back(std::move(ground));
        t.state.push_back(next);
        cur = std::move(next);
    }
    t.check_invariants();
    return t;
}

// --- SandwichTrace -----------------------------------------------------------

void SandwichTrace::check_invariants() const {
    for (int n = 0; n < level_count(); ++n) {
        for (int s : ground[n]) {
            if (minus[n][s] > plus[n][s])
                throw Error("sandwich order broken at site " + std::to_string(s) + ", level " +
                            std::to_string(n + 1));
            if (n > 0 && (plus[n][s] > plus[n - 1][s] || minus[n][s] < minus[n - 1][s]))
                throw Error("sandwich chains are not monotone at site " + std::to_string(s));
            if (n > 0 && plus[n - 1][s] == minus[n - 1][s] && plus[n][s] != plus[n - 1][s])
                throw Error("resolved site " + std::to_string(s) + " changed later");
        }
    }
}

nlohmann::json SandwichTrace::to_json() const {
    nlohmann::json j;
    j["upper"] = upper.to_json();
    j["lower"] = lower.to_json();
    auto levels = nlohmann::json::array();
    for (int n = 0; n < level_count(); ++n) {
        std::vector<int> p, m;
        for (int s : ground[n]) {
            if (plus[n][s]) p.push_back(s);
            if (minus[n][s]) m.push_back(s);
        }
        levels.push_back({{"level", n + 1}, {"ground", ground[n]}, {"plus", p}, {"minus", m}});
    }
    j["levels"] = levels;
    j["stopping_level"] = stopping_level;
    j["value"] = value;
    j["radius"] = radius;
    return j;
}

void SandwichTrace::write_csv(std::ostream& os) const {
    os << "site,stopping_level,value,radius\n";
    for (int s = 0; s < site_total; ++s)
        os << s << ',' << stopping_level[s] << ',' << value[s] << ',' << radius[s] << '\n';
}

// --- sandwich_run ------------------------------------------------------------

SandwichTrace sandwich_run(const Substrate& g, const Exhaustion& ex, const ModelSpec& upper,
                           Tape& tape, const CascadeOptions& opt) {
    upper.validate();
    if (upper.direction() != Direction::Decreasing)
        throw std::invalid_argument("the upper chain must be a decreasing family");
    const ModelSpec lower = upper.dual();
    if (opt.mode == Mode::MonteCarlo && upper.family != Family::Ising)
        throw std::invalid_argument("mc mode is available for Ising only");
    int L = ex.level_count();
    if (opt.max_level > 0) L = std::min(L, opt.max_level);

    SandwichTrace t;
    t.upper = upper;
    t.lower = lower;
    t.site_total = model_site_total(upper, g);
    t.exhaustion_levels = ex.level_count();
    std::vector<char> cp(t.site_total, 1), cm(t.site_total, 0);
    const std::string skey = model_key(upper) + "|" + model_key(lower);

    for (int n = 0; n < L; ++n) {
        auto cells = cells_of(g, ex.levels[n]);
        std::vector<char> marks;
        if (n > 0 && opt.mode == Mode::Exact) marks = marks_of(ex, n - 1, g.vertex_count());
        std::vector<char> np = cp, nm = cm;

        for_each_cell(static_cast<int>(cells.size()), opt.threads, [&](int i) {
            const SubgraphRef& K = cells[i];
            if (opt.mode == Mode::MonteCarlo) {
                auto view = make_view(K);
                TapeView tv(tape, "sandwich.gc", K.vertices);
                auto dec = tape_decider(tv);
                auto rp = cftp_ising(view.shape, upper.beta, 1, view.parent_vertex, dec);
                auto rm = cftp_ising(view.shape, upper.beta, -1, view.parent_vertex, dec);
                for (int v = 0; v < view.shape.n; ++v) {
                    np[view.parent_vertex[v]] = rp.plus[v];
                    nm[view.parent_vertex[v]] = rm.plus[v];
                }
                return;
            }
            const int anchor = K.vertices.front();
            if (n == 0) {
                auto view = make_view(K);
                const auto& ids = local_sites(upper, view);
                auto law = build_pair_law(upper, lower, view.shape);
                if (law.table.empty()) {
                    TapeView tv(tape, level_phase("sandwich", 1, "sample"), K.vertices);
                    auto local = sample_shape(upper, view, tv);
                    for (std::size_t s = 0; s < local.size(); ++s) np[ids[s]] = nm[ids[s]] = local[s];
                    return;
                }
                TapeView tv(tape, level_phase("sandwich", 1, "sample"), K.vertices);
                Mask key = sample_table(law.table, tv.uniform(anchor));
                for (int s = 0; s < law.m; ++s) {
                    np[ids[s]] = pair_plus(key, law.m) >> s & 1;
                    nm[ids[s]] = pair_minus(key, law.m) >> s & 1;
                }
                return;
            }
            auto canon = canonicalize(make_view(K, marks));
            auto kernel = sandwich_kernel_cache().get(skey + "#" + canon.key, [&] {
                return build_sandwich_kernel(upper, lower, canon.view.shape);
            });
            const auto& ids = local_sites(upper, canon.view);
            const int ms = static_cast<int>(kernel->S.size());
            Mask xp = 0, xm = 0;
            for (int j = 0; j < ms; ++j) {
                if (cp[ids[kernel->S[j]]]) xp |= Mask{1} << j;
                if (cm[ids[kernel->S[j]]]) xm |= Mask{1} << j;
            }
            TapeView tc(tape, level_phase("sandwich", n + 1, "couple"), K.vertices);
            Mask target = conditional_sample(kernel->flow, Side::Upper, encode_pair(xp, xm, ms),
                                             tc.uniform(anchor));
            TapeView te(tape, level_phase("sandwich", n + 1, "extend"), K.vertices);
            if (kernel->shared.wilson) {
                auto local = kernel->shared.sample(canon.view, kernel->S, pair_plus(target, ms), te);
                for (std::size_t s = 0; s < local.size(); ++s) np[ids[s]] = nm[ids[s]] = local[s];
                return;
            }
            auto it = kernel->pair_extension.find(target);
            if (it == kernel->pair_extension.end())
                throw ZeroMassCondition("target pair has zero mass in the cell pair law");
            Mask key = sample_key(it->second, te.uniform(anchor));
            const int m = kernel->full.m;
            for (int s = 0; s < m; ++s) {
                np[ids[s]] = pair_plus(key, m) >> s & 1;
                nm[ids[s]] = pair_minus(key, m) >> s & 1;
            }
        });

        std::vector<int> ground;
        for (const auto& K : cells) {
            auto s = model_sites(upper, K);
            ground.insert(ground.end(), s.begin(), s.end());
        }
        std::sort(ground.begin(), ground.end());
        t.ground.push_back(std::move(ground));
        t.plus.push_back(np);
        t.minus.push_back(nm);
        cp = std::move(np);
        cm = std::move(nm);
    }

    t.stopping_level.assign(t.site_total, 0);
    t.value.assign(t.site_total, -1);
    t.radius.assign(t.site_total, -1);
    for (int n = 0; n < t.level_count(); ++n)
        for (int s : t.ground[n])
            if (t.stopping_level[s] == 0 && t.plus[n][s] == t.minus[n][s]) {
                t.stopping_level[s] = n + 1;
                t.value[s] = t.plus[n][s];
                t.radius[s] = ex.levels[n].radius;
            }
    t.check_invariants();
    return t;
}

StoppingProfile stopping_profile(const SandwichTrace& t) {
    StoppingProfile p;
    int resolved = 0, with_radius = 0, below_top = 0;
    double lsum = 0, rsum = 0;
    for (int s = 0; s < t.site_total; ++s) {
        int N = t.stopping_level[s];
        ++p.histogram[N];
        if (N == 0) continue;
        ++resolved;
        lsum += N;
        if (N < t.exhaustion_levels) ++below_top;
        if (t.radius[s] >= 0) {
            ++with_radius;
            rsum += t.radius[s];
        }
    }
    const double total = std::max(1, t.site_total);
    p.mean_level = resolved ? lsum / resolved : 0;
    p.mean_radius = with_radius ? rsum / with_radius : 0;
    p.unresolved_fraction = (t.site_total - resolved) / total;
    p.resolved_before_top = below_top / total;
    return p;
}

nlohmann::json StoppingProfile::to_json() const {
    nlohmann::json h = nlohmann::json::object();
    for (auto [k, v] : histogram) h[std::to_string(k)] = v;
    return {{"histogram", h},
            {"mean_level", mean_level},
            {"mean_radius", mean_radius},
            {"unresolved_fraction", unresolved_fraction},
            {"resolved_before_top", resolved_before_top}};
}

}  // namespace fiid
