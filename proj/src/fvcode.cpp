#include <algorithm>
#include <bit>
#include <cmath>
#include <unordered_map>

#include "fiid/bitcoding.hpp"
#include "fiid/coupling.hpp"
#include "fiid/errors.hpp"
#include "fiid/kernels.hpp"
#include "parallel.hpp"

namespace fiid {

namespace {

constexpr int kLabelBits = 4;
constexpr std::uint64_t kStride = 64;  // bit slots per heat-bath uniform

const std::vector<int>& local_ids(const ModelSpec& m, const CellView& v) {
    return m.edge_model() ? v.parent_edge : v.parent_vertex;
}

KernelCache<MaskTable>& level_one_cache() {
    static KernelCache<MaskTable> c;
    return c;
}

// Law of the next configuration y on a cell (local site masks), given the
// current state on the cell's sites.
struct CellLaw {
    CellView view;
    MaskTable y;
    bool conditional_fallback = false;
};

CellLaw next_law(const ModelSpec& model, const SubgraphRef& K, int n,
                 const std::vector<char>& marks, const std::vector<char>& state) {
    const std::string mkey = model.to_json().dump();
    CellLaw out;
    if (n == 0) {
        auto canon = canonicalize(make_view(K));
        out.view = canon.view;
        if (site_count(model, canon.view.shape) > kMaxEnumSites)
            throw RefuseTooLarge("fv coding needs tabulated cell laws; use mc mode");
        out.y = *level_one_cache().get(mkey + "#" + canon.key,
                                       [&] { return exact_table(model, canon.view.shape); });
        return out;  // the state is everything at level one
    }
    auto canon = canonicalize(make_view(K, marks));
    out.view = canon.view;
    auto kernel = cascade_kernel_cache().get(
        mkey + "#" + canon.key, [&] { return build_cascade_kernel(model, canon.view.shape); });
    if (kernel->extension.wilson)
        throw RefuseTooLarge("fv coding needs tabulated cell laws; use mc mode");
    const auto& ids = local_ids(model, canon.view);
    Mask x = 0;
    for (std::size_t j = 0; j < kernel->S.size(); ++j)
        if (state[ids[kernel->S[j]]]) x |= Mask{1} << j;

    double z = 0;
    for (auto it = kernel->joint.lower_bound({x, 0}); it != kernel->joint.end() && it->first.first == x; ++it)
        z += it->second;
    if (z > 0) {
        for (auto it = kernel->joint.lower_bound({x, 0});
             it != kernel->joint.end() && it->first.first == x; ++it) {
            const auto& ext = kernel->extension.table.at(it->first.second);
            double zr = 0;
            for (const auto& [y, p] : ext) zr += p;
            for (const auto& [y, p] : ext) out.y[y] += it->second / z * p / zr;
        }
        return out;
    }
    // The realized state is off the kernel's support: condition the cell law
    // on staying below it, or remove everything.
    out.conditional_fallback = true;
    Mask cur = 0;
    for (std::size_t s = 0; s < ids.size(); ++s)
        if (state[ids[s]]) cur |= Mask{1} << s;
    double tot = 0;
    for (const auto& [r, ext] : kernel->extension.table)
        for (const auto& [y, p] : ext)
            if ((y & ~cur) == 0) {
                out.y[y] += p;
                tot += p;
            }
    if (tot == 0) out.y = {{0, 1.0}};
    else for (auto& [y, p] : out.y) p /= tot;
    return out;
}

// Removal-set law over the on-sites H of the cell.
DistTable removal_law(const CellLaw& law, const std::vector<int>& ids,
                      const std::vector<char>& state, std::vector<int>& h_local) {
    h_local.clear();
    DistTable d;
    for (std::size_t s = 0; s < ids.size(); ++s)
        if (state[ids[s]]) {
            h_local.push_back(static_cast<int>(s));
            d.ground.push_back(ids[s]);
        }
    for (const auto& [y, p] : law.y) {
        if (p <= 0) continue;
        Mask r = 0;
        for (std::size_t j = 0; j < h_local.size(); ++j)
            if (!(y >> h_local[j] & 1)) r |= Mask{1} << j;
        d.mass[r] += p;
    }
    return d;
}

int max_popcount(const DistTable& d) {
    int m = 0;
    for (const auto& [x, p] : d.mass)
        if (p > 0) m = std::max(m, std::popcount(x));
    return m;
}

std::string phase_of(int level, const char* step) {
    return "fv.L" + std::to_string(level) + "." + step;
}

// Lazily revealed binary expansion of one heat-bath uniform.
struct Reveal {
    std::uint64_t value = 0;
    int k = 0;
};

struct CellOut {
    std::vector<std::pair<int, char>> fv, exact;
    std::vector<std::pair<int, std::uint64_t>> charges;  // (requesting vertex, bits)
    double density = 0;
    double bound = -1;
    bool fallback = false, cond_fallback = false, padded = false;
    int precision = 0;
    nlohmann::json map;
};

}  // namespace

FvTrace fv_cascade_run(const Substrate& g, const Exhaustion& ex, const ModelSpec& model,
                       Tape& tape, const FvOptions& opt) {
    model.validate();
    if (model.direction() != Direction::Decreasing)
        throw std::invalid_argument("fv coding runs decreasing families only, not " + model.name());
    const bool mc = opt.mode == Mode::MonteCarlo;
    if (mc && !(model.family == Family::Ising && model.boundary == Boundary::Plus))
        throw std::invalid_argument("mc mode fv coding is available for the plus Ising chain only");

    FvTrace t;
    t.model = model;
    t.mode = opt.mode;
    t.paired = opt.paired;
    t.site_total = model_site_total(model, g);
    const int V = g.vertex_count();
    std::vector<char> cur(t.site_total, 1), exact(t.site_total, 1);

    BitPool pool(V, opt.budget);
    std::vector<std::uint64_t> labels(V);
    {
        TapeView lab(tape, "fv.labels");
        for (int v = 0; v < V; ++v) {
            for (bool b : lab.bits(v, kLabelBits)) labels[v] = labels[v] << 1 | (b ? 1 : 0);
            pool.charge(v, kLabelBits);
        }
    }
    int max_deg = 0;
    for (int v = 0; v < V; ++v) max_deg = std::max(max_deg, g.degree(v));

    std::vector<std::unordered_map<std::uint64_t, Reveal>> reveal(mc ? V : 0);
    std::vector<std::unordered_map<std::uint64_t, double>> uexact(mc && opt.paired ? V : 0);

    for (int n = 0; n < ex.level_count(); ++n) {
        const int level = n + 1;
        FvLevel lv;
        lv.level = level;
        lv.epsilon = std::ldexp(1.0, -2 * level);
        pool.rebalance(g, labels);
        lv.matched = static_cast<int>(pool.matching().pairs.size());
        lv.match_radius = pool.matching().radius;

        const auto& cells = ex.levels[n].cells;
        lv.cells = static_cast<int>(cells.size());
        std::vector<SubgraphRef> refs;
        for (const auto& c : cells) refs.push_back(induced(g, c));
        std::vector<char> marks;
        if (n > 0) {
            marks.assign(V, 0);
            for (int v = 0; v < V; ++v) marks[v] = ex.levels[n - 1].included(v);
        }
        std::vector<CellOut> outs(cells.size());

        detail::for_each_cell(lv.cells, opt.threads, [&](int i) {
            const SubgraphRef& K = refs[i];
            CellOut& o = outs[i];
            const int anchor = K.vertices.front();

            if (mc) {
                auto view = make_view(K);
                const double need = (max_deg + 1.0) * K.size() * static_cast<double>(opt.max_epoch) /
                                    lv.epsilon;
                const int B = std::min(52, static_cast<int>(std::ceil(std::log2(need))));
                o.precision = B;
                TapeView tu(tape, "fv.u", K.vertices);
                std::map<int, std::uint64_t> spent;
                HeatBathDecider lazy = [&](int v, std::uint64_t time, double p) {
                    Reveal& r = reveal[v][time];
                    while (true) {
                        const long double lo = std::ldexp(static_cast<long double>(r.value), -r.k);
                        const long double hi = std::ldexp(static_cast<long double>(r.value + 1), -r.k);
                        if (hi <= p) return true;
                        if (lo >= p) return false;
                        if (r.k >= B) return false;  // undecided: resolve toward removal
                        bool bit = tu.bit_at(v, time * kStride + r.k);
                        r.value = r.value << 1 | (bit ? 1 : 0);
                        ++r.k;
                        ++spent[v];
                    }
                };
                auto res = cftp_ising(view.shape, model.beta, 1, view.parent_vertex, lazy, {},
                                      opt.max_epoch);
                int removed = 0, h = 0;
                for (int v = 0; v < view.shape.n; ++v) {
                    int site = view.parent_vertex[v];
                    if (cur[site]) {
                        ++h;
                        if (!res.plus[v]) ++removed;
                    }
                    o.fv.push_back({site, static_cast<char>(cur[site] && res.plus[v])});
                }
                o.density = h ? static_cast<double>(removed) / h : 0;
                for (auto [v, k] : spent) o.charges.push_back({v, k});
                if (opt.paired) {
                    HeatBathDecider full = [&](int v, std::uint64_t time, double p) {
                        auto [it, fresh] = uexact[v].try_emplace(time, 0.0);
                        if (fresh) {
                            long double u = 0;
                            for (int k = 0; k < 53; ++k)
                                if (tape.peek_bit(v, "fv.u", time * kStride + k))
                                    u += std::ldexp(1.0L, -(k + 1));
                            it->second = static_cast<double>(u);
                        }
                        return it->second < p;
                    };
                    auto er = cftp_ising(view.shape, model.beta, 1, view.parent_vertex, full, {},
                                         opt.max_epoch);
                    for (int v = 0; v < view.shape.n; ++v)
                        o.exact.push_back({view.parent_vertex[v], er.plus[v]});
                }
                return;
            }

            auto law = next_law(model, K, n, marks, cur);
            o.cond_fallback = law.conditional_fallback;
            const auto& ids = local_ids(model, law.view);
            std::vector<int> h_local;
            auto mu = removal_law(law, ids, cur, h_local);
            const int h = static_cast<int>(mu.ground.size());
            double delta = n < static_cast<int>(opt.delta.size()) ? opt.delta[n] : 1.0;
            if (h > 0) delta = std::max(delta, 1.0 / h);
            const int biggest = max_popcount(mu);
            if (h > 0 && biggest > static_cast<int>(std::floor(delta * h + 1e-9))) {
                o.fallback = true;
                delta = static_cast<double>(biggest) / h;
            }
            auto map = dominating_map(mu, delta, lv.epsilon);
            o.bound = generation_bound(h, delta, lv.epsilon);
            if (opt.dump_maps)
                o.map = {{"level", level}, {"anchor", anchor}, {"map", map.to_json()}};

            std::uint64_t slot = 0;
            if (map.alpha > 0) {
                TapeView tb(tape, phase_of(level, "bits"), K.vertices);
                for (int b = 0; b < map.alpha; ++b) slot = slot << 1 | (tb.bit_at(anchor, b) ? 1 : 0);
                o.charges.push_back({anchor, static_cast<std::uint64_t>(map.alpha)});
            }
            const Mask R = map.codomain[map.lookup(slot)];
            o.padded = slot >= map.assigned;
            o.density = h ? static_cast<double>(std::popcount(R)) / h : 0;
            std::vector<char> next(ids.size());
            for (std::size_t s = 0; s < ids.size(); ++s) next[s] = cur[ids[s]];
            for (int j = 0; j < h; ++j)
                if (R >> j & 1) next[h_local[j]] = 0;
            for (std::size_t s = 0; s < ids.size(); ++s) o.fv.push_back({ids[s], next[s]});

            if (!opt.paired) return;
            // Exact chain: maximal coupling of its next-configuration law with
            // the law of the fv draw, accepting the fv value when possible.
            auto to_y = [&](Mask r) {
                Mask y = 0;
                for (std::size_t s = 0; s < ids.size(); ++s)
                    if (cur[ids[s]]) y |= Mask{1} << s;
                for (int j = 0; j < h; ++j)
                    if (r >> j & 1) y &= ~(Mask{1} << h_local[j]);
                return y;
            };
            MaskTable fv_law;
            const long double N = static_cast<long double>(map.N);
            for (std::size_t k = 0; k < map.codomain.size(); ++k) {
                std::uint64_t c = map.counts[k] + (static_cast<int>(k) == map.pad ? map.padding() : 0);
                if (c) fv_law[to_y(map.codomain[k])] += static_cast<double>(c / N);
            }
            const Mask yf = to_y(R);
            bool same = true;
            for (int id : ids) same = same && cur[id] == exact[id];
            const MaskTable& ex_law = same ? law.y : next_law(model, K, n, marks, exact).y;
            auto prob = [](const MaskTable& t, Mask y) {
                auto it = t.find(y);
                return it == t.end() ? 0.0 : it->second;
            };
            TapeView tx(tape, phase_of(level, "exact"), K.vertices);
            Mask ye = yf;
            if (tx.uniform_at(anchor, 0) * prob(fv_law, yf) >= prob(ex_law, yf)) {
                MaskTable resid;
                double z = 0;
                for (const auto& [y, p] : ex_law) {
                    double w = p - prob(fv_law, y);
                    if (w > 0) {
                        resid[y] = w;
                        z += w;
                    }
                }
                for (auto& [y, w] : resid) w /= z;
                ye = sample_table(resid, tx.uniform_at(anchor, 1));
            }
            std::vector<char> enext(ids.size());
            for (std::size_t s = 0; s < ids.size(); ++s) enext[s] = ye >> s & 1;
            for (std::size_t s = 0; s < ids.size(); ++s) o.exact.push_back({ids[s], enext[s]});
        });

        // Sequential phase: charges in cell order, then the new states.
        std::vector<int> ground;
        long double roots = 0, differ = 0;
        std::uint64_t before = 0;
        for (auto u : pool.usage()) before += u;
        for (std::size_t i = 0; i < outs.size(); ++i) {
            CellOut& o = outs[i];
            std::uint64_t cell_bits = 0;
            for (auto [v, k] : o.charges) {
                pool.charge(v, k);
                cell_bits += k;
            }
            lv.cell_bits.push_back(cell_bits);
            lv.cell_bound.push_back(o.bound);
            lv.removal_density.push_back(o.density);
            lv.fallbacks += o.fallback;
            lv.conditional_fallbacks += o.cond_fallback;
            lv.padded += o.padded;
            lv.precision = std::max(lv.precision, o.precision);
            if (opt.dump_maps && !o.map.is_null()) t.maps.push_back(o.map);
            for (auto [s, on] : o.fv) {
                cur[s] = on;
                ground.push_back(s);
            }
            if (opt.paired) {
                bool diff = false;
                for (auto [s, on] : o.exact) {
                    exact[s] = on;
                    diff = diff || on != cur[s];
                }
                roots += refs[i].size();
                if (diff) differ += refs[i].size();
            }
        }
        std::uint64_t after = 0;
        for (auto u : pool.usage()) after += u;
        lv.bits = after - before;
        lv.mean_bits_per_vertex = static_cast<double>(lv.bits) / V;
        if (opt.paired) lv.disagreement = roots > 0 ? static_cast<double>(differ / roots) : 0;
        std::sort(ground.begin(), ground.end());
        t.ground.push_back(std::move(ground));
        lv.state = cur;
        if (opt.paired) lv.exact = exact;
        t.levels.push_back(std::move(lv));
    }
    t.bits_per_vertex = pool.usage();
    t.check_invariants();
    return t;
}

void FvTrace::check_invariants() const {
    for (int n = 0; n < level_count(); ++n) {
        const auto& L = levels[n];
        if (n > 0)
            for (int s = 0; s < site_total; ++s) {
                if (L.state[s] > levels[n - 1].state[s])
                    throw Error("fv chain grew at site " + std::to_string(s) + ", level " +
                                std::to_string(L.level));
                if (paired && L.exact[s] > levels[n - 1].exact[s])
                    throw Error("paired exact chain grew at site " + std::to_string(s));
            }
        if (mode == Mode::Exact)
            for (std::size_t i = 0; i < L.cell_bits.size(); ++i)
                if (L.cell_bits[i] > std::ceil(L.cell_bound[i] + 1e-9))
                    throw Error("cell bit spend above the generation bound at level " +
                                std::to_string(L.level));
    }
}

nlohmann::json FvTrace::to_json() const {
    nlohmann::json j;
    j["model"] = model.to_json();
    j["mode"] = to_string(mode);
    j["paired"] = paired;
    auto levels_j = nlohmann::json::array();
    for (int n = 0; n < level_count(); ++n) {
        const auto& L = levels[n];
        std::vector<int> on;
        for (int s : ground[n])
            if (L.state[s]) on.push_back(s);
        nlohmann::json e = {{"level", L.level},
                            {"epsilon", L.epsilon},
                            {"cells", L.cells},
                            {"precision", L.precision},
                            {"bits", L.bits},
                            {"mean_bits_per_vertex", L.mean_bits_per_vertex},
                            {"fallbacks", L.fallbacks},
                            {"conditional_fallbacks", L.conditional_fallbacks},
                            {"padded", L.padded},
                            {"matched", L.matched},
                            {"match_radius", L.match_radius},
                            {"on", on}};
        if (paired) e["disagreement"] = L.disagreement;
        levels_j.push_back(e);
    }
    j["levels"] = levels_j;
    j["total_bits_per_vertex"] = total_bits_per_vertex();
    j["max_bits_per_vertex"] =
        bits_per_vertex.empty() ? 0 : *std::max_element(bits_per_vertex.begin(), bits_per_vertex.end());
    return j;
}

void FvTrace::write_csv(std::ostream& os) const {
    os << "level,epsilon,cells,mean_bits_per_vertex,disagreement_rate,fallback_rate\n";
    for (const auto& L : levels) {
        os << L.level << ',' << L.epsilon << ',' << L.cells << ',' << L.mean_bits_per_vertex << ',';
        if (paired) os << L.disagreement;
        os << ',' << (L.cells ? static_cast<double>(L.fallbacks) / L.cells : 0.0) << '\n';
    }
}

}  // namespace fiid
