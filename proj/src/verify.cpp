#include "fiid/verify.hpp"

#include <bit>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include <unistd.h>

#include "fiid/bitcoding.hpp"
#include "fiid/cascade.hpp"
#include "fiid/coupling.hpp"
#include "fiid/errors.hpp"
#include "fiid/harness.hpp"
#include "fiid/kernels.hpp"
#include "fiid/metrics.hpp"
#include "parallel.hpp"

namespace fiid {

using detail::for_each_cell;
using nlohmann::json;

VerifyLevel verify_level_from_string(const std::string& s) {
    if (s == "quick") return VerifyLevel::Quick;
    if (s == "full") return VerifyLevel::Full;
    throw std::invalid_argument("verify level must be quick or full, got '" + s + "'");
}

std::string CriterionResult::line() const {
    std::ostringstream os;
    os << "criterion " << id << ": " << (pass ? "PASS" : "FAIL") << "  " << name << "  "
       << measured.value("summary", std::string{});
    return os.str();
}

bool VerifyReport::all_pass() const {
    return std::all_of(criteria.begin(), criteria.end(), [](const auto& c) { return c.pass; });
}

json VerifyReport::to_json() const {
    auto arr = json::array();
    for (const auto& c : criteria)
        arr.push_back({{"id", c.id}, {"name", c.name}, {"pass", c.pass},
                       {"seconds", c.seconds}, {"measured", c.measured}});
    return {{"level", level}, {"all_pass", all_pass()}, {"criteria", arr}};
}

namespace {

ExhaustionSchedule caps(std::vector<int> c) {
    ExhaustionSchedule s;
    s.caps = std::move(c);
    return s;
}

SubgraphRef whole(const Substrate& g) {
    std::vector<int> all(g.vertex_count());
    std::iota(all.begin(), all.end(), 0);
    return induced(g, all);
}

std::string fmt(double x, int prec = 4) {
    std::ostringstream os;
    os.precision(prec);
    os << x;
    return os.str();
}

struct MeanSe {
    double mean = 0, se = 0;
};
MeanSe mean_se(const std::vector<double>& v) {
    MeanSe r;
    if (v.empty()) return r;
    const double n = static_cast<double>(v.size());
    r.mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
    double ss = 0;
    for (double x : v) ss += (x - r.mean) * (x - r.mean);
    r.se = v.size() > 1 ? std::sqrt(ss / (n - 1) / n) : 0;
    return r;
}

// --- 1: sampler oracle equivalence -------------------------------------------

CriterionResult sampler_oracles(VerifyLevel, int threads) {
    CriterionResult r{1, "samplers match enumeration (TV <= 0.02 at 1e5 samples)"};
    const int n = 100000;
    struct Case {
        std::string label;
        Substrate g;
        std::vector<int> cell;
        ModelSpec model;
    };
    auto edge_box = [](int a, int b) { return Substrate::grid({a, b}, {false, false}); };
    auto vert_box = [](int a, int b) {
        return Substrate::grid({a, b}, {false, false}, Percolation::Vertex);
    };
    std::vector<Case> corpus;
    corpus.push_back({"ust_free C4", Substrate::grid({4}, {true}), {0, 1, 2, 3}, ModelSpec::ust_free()});
    corpus.push_back({"ust_free 2x3", edge_box(2, 3), {0, 1, 2, 3, 4, 5}, ModelSpec::ust_free()});
    corpus.push_back({"ust_wired 2x2 in 4x4", edge_box(4, 4), {0, 1, 4, 5}, ModelSpec::ust_wired()});
    corpus.push_back({"ust_wired 2x3 in 4x4", edge_box(4, 4), {0, 1, 4, 5, 8, 9}, ModelSpec::ust_wired()});
    corpus.push_back({"ust_free K4", Substrate::from_edges(4, {{0, 1}, {0, 2}, {0, 3}, {1, 2}, {1, 3}, {2, 3}}),
                      {0, 1, 2, 3}, ModelSpec::ust_free()});
    corpus.push_back({"ising+ 0.4 2x3", vert_box(2, 3), {0, 1, 2, 3, 4, 5}, ModelSpec::ising(0.4, Boundary::Plus)});
    corpus.push_back({"ising- 0.6 3x3 block", vert_box(4, 4), {0, 1, 2, 4, 5, 6, 8, 9, 10},
                      ModelSpec::ising(0.6, Boundary::Minus)});
    corpus.push_back({"ising+ 0.2 path 6", vert_box(6, 1), {0, 1, 2, 3, 4, 5}, ModelSpec::ising(0.2, Boundary::Plus)});
    corpus.push_back({"ising free 0.5 2x4", vert_box(2, 4), {0, 1, 2, 3, 4, 5, 6, 7},
                      ModelSpec::ising(0.5, Boundary::Free)});

    bool pass = true;
    double worst = 0;
    auto rows = json::array();
    for (const auto& c : corpus) {
        auto cell = induced(c.g, c.cell);
        auto exact = enumerate_exact(c.model, cell);
        if (exact.ground.size() > 12) throw Error("corpus cell exceeds 12 sites");
        std::vector<Config> samples(n);
        const int chunks = 64;
        for_each_cell(chunks, threads, [&](int k) {
            for (int i = k; i < n; i += chunks) {
                Tape tape(0x5A3C0000ull + i);
                samples[i] = c.model.family == Family::Ising
                                 ? cftp_ising(cell, c.model.beta, c.model.boundary, tape)
                                 : wilson_ust(cell, c.model.boundary, tape);
            }
        });
        auto e = estimate_tv(samples, exact);
        pass &= e.estimate <= 0.02;
        worst = std::max(worst, e.estimate);
        rows.push_back({{"cell", c.label}, {"ground", exact.ground.size()}, {"atoms", exact.mass.size()},
                        {"tv", e.estimate}, {"stderr", e.stderr_}});
    }
    r.pass = pass;
    r.measured = {{"samples", n}, {"cells", rows}, {"worst_tv", worst},
                  {"summary", "worst TV " + fmt(worst) + " over " + std::to_string(corpus.size()) + " cells"}};
    return r;
}

// --- 2: monotone compatibility on exact tables -------------------------------

CriterionResult definition_five(VerifyLevel level, int) {
    CriterionResult r{2, "restriction/product domination on exact tables"};
    const int per_family = level == VerifyLevel::Full ? 20 : 10;
    struct Family_ {
        std::string label;
        ModelSpec model;
    };
    std::vector<Family_> fams = {
        {"ust_free", ModelSpec::ust_free()},
        {"ust_wired", ModelSpec::ust_wired()},
        {"ising_plus", ModelSpec::ising(0.4, Boundary::Plus)},
        {"ising_minus", ModelSpec::ising(0.4, Boundary::Minus)},
        {"fk_q1_free", ModelSpec::fk(0.5, 1.0, Boundary::Free)},
        {"fk_q1_wired", ModelSpec::fk(0.5, 1.0, Boundary::Wired)},
        {"fk_q2_free", ModelSpec::fk(0.5, 2.0, Boundary::Free)},
        {"fk_q2_wired", ModelSpec::fk(0.5, 2.0, Boundary::Wired)},
    };
    const std::vector<std::pair<int, int>> boxes = {{3, 3}, {2, 4}, {2, 5}, {3, 4}};
    bool pass = true;
    auto rows = json::array();
    for (const auto& f : fams) {
        int instances = 0, ok = 0, stated_ok = 0;
        for (int i = 0; instances < per_family && i < 50 * per_family; ++i) {
            auto [a, b] = boxes[i % boxes.size()];
            const Percolation mode = f.model.edge_model() ? Percolation::Edge : Percolation::Vertex;
            auto g = Substrate::grid({a, b}, {false, false}, mode);
            auto K = whole(g);
            if (static_cast<int>(model_sites(f.model, K).size()) > kMaxEnumSites) continue;
            Tape tape(0xD5ull * 1000 + i);
            auto ex = build_exhaustion(g, tape, caps({2 + i % 2, a * b}));
            std::vector<SubgraphRef> subs;
            for (const auto& c : ex.levels.front().cells) subs.push_back(induced(g, c));
            if (subs.empty()) continue;
            RestrictExtend re;
            try {
                re = restrict_extend(f.model, K, subs);
            } catch (const std::invalid_argument&) {
                continue;
            }
            ++instances;
            ok += check_domination(re.upper, re.lower).dominates;
            stated_ok += check_domination(re.lower, re.upper).dominates;
        }
        pass &= instances >= 10 && ok == instances;
        rows.push_back({{"family", f.label}, {"instances", instances}, {"dominates", ok},
                        {"reverse_dominates", stated_ok}});
    }
    // Mutation check: flipped coupling arcs must be rejected by the audit.
    bool caught = false;
    {
        DistTable up{{0}, {{1, 1.0}}}, lo{{0}, {{0, 0.5}, {1, 0.5}}};
        set_coupling_mutation(true);
        try {
            build_coupling(up, lo);
        } catch (const DominationFails&) {
            caught = true;
        }
        set_coupling_mutation(false);
        clear_kernel_caches();
    }
    pass &= caught;
    r.pass = pass;
    r.measured = {{"families", rows}, {"mutation_caught", caught},
                  {"summary", std::to_string(fams.size()) + " families x >= " +
                                  std::to_string(per_family) + " instances" +
                                  (caught ? ", mutation caught" : ", MUTATION MISSED")}};
    return r;
}

// --- 3: change counts and the end-to-end law ---------------------------------

CriterionResult cascade_main(VerifyLevel level, int threads) {
    CriterionResult r{3, "cascade: <= 2 changes per site; 2x3 law matches enumeration"};
    const int seeds = level == VerifyLevel::Full ? 500 : 200;
    struct Run {
        std::string label;
        Substrate g;
        ModelSpec model;
        ExhaustionSchedule s;
        Mode mode;
    };
    std::vector<Run> runs = {
        {"ust_free 6x6 torus", Substrate::grid({6, 6}, {true, true}), ModelSpec::ust_free(), caps({3, 9, 36}), Mode::Exact},
        {"ising+ 0.4 8x8 torus mc", Substrate::grid({8, 8}, {true, true}, Percolation::Vertex),
         ModelSpec::ising(0.4, Boundary::Plus), caps({4, 16, 64}), Mode::MonteCarlo},
        {"fk_wired q2 3x3 box", Substrate::grid({3, 3}, {false, false}), ModelSpec::fk(0.5, 2.0, Boundary::Wired),
         caps({3, 9}), Mode::Exact},
    };
    bool pass = true;
    auto rows = json::array();
    for (const auto& run : runs) {
        std::vector<int> max_changes(seeds, 0), twice(seeds, 0);
        std::vector<std::string> errors(seeds);
        for_each_cell(seeds, threads, [&](int i) {
            Tape tape(1 + i);
            auto ex = build_exhaustion(run.g, tape, run.s);
            CascadeOptions opt;
            opt.mode = run.mode;
            auto t = cascade_run(run.g, ex, run.model, tape, opt);
            try {
                t.check_invariants();
            } catch (const std::exception& e) {
                errors[i] = e.what();
            }
            for (int c : t.change_count) {
                max_changes[i] = std::max(max_changes[i], c);
                twice[i] += c == 2;
            }
        });
        int worst = *std::max_element(max_changes.begin(), max_changes.end());
        int bad = static_cast<int>(std::count_if(errors.begin(), errors.end(), [](auto& e) { return !e.empty(); }));
        pass &= worst <= 2 && bad == 0;
        rows.push_back({{"run", run.label}, {"seeds", seeds}, {"max_changes", worst},
                        {"sites_changed_twice", std::accumulate(twice.begin(), twice.end(), 0)},
                        {"invariant_failures", bad}});
    }

    const int n = 100000;
    auto box = [](Percolation m) { return Substrate::grid({2, 3}, {false, false}, m); };
    struct Law {
        std::string label;
        Substrate g;
        ModelSpec model;
    };
    std::vector<Law> laws = {{"ust_free", box(Percolation::Edge), ModelSpec::ust_free()},
                             {"ising+ 0.4", box(Percolation::Vertex), ModelSpec::ising(0.4, Boundary::Plus)}};
    auto tv_rows = json::array();
    for (const auto& law : laws) {
        auto exact = enumerate_exact(law.model, whole(law.g));
        std::vector<Config> finals(n);
        const int chunks = 64;
        for_each_cell(chunks, threads, [&](int k) {
            for (int i = k; i < n; i += chunks) {
                Tape tape(0xE2Eull << 20 | static_cast<std::uint64_t>(i));
                auto ex = build_exhaustion(law.g, tape, caps({3, 6}));
                finals[i] = cascade_run(law.g, ex, law.model, tape).final_config();
            }
        });
        auto e = estimate_tv(finals, exact);
        pass &= e.estimate <= 0.02;
        tv_rows.push_back({{"model", law.label}, {"tv", e.estimate}, {"stderr", e.stderr_}, {"seeds", n}});
    }
    r.pass = pass;
    r.measured = {{"change_counts", rows}, {"end_to_end", tv_rows},
                  {"summary", "max changes " + std::to_string(rows[0]["max_changes"].get<int>()) + "/" +
                                  std::to_string(rows[1]["max_changes"].get<int>()) + "/" +
                                  std::to_string(rows[2]["max_changes"].get<int>()) + ", 2x3 TV " +
                                  fmt(tv_rows[0]["tv"].get<double>()) + " / " +
                                  fmt(tv_rows[1]["tv"].get<double>())}};
    return r;
}

// --- 4: sandwich on the 4x4 torus --------------------------------------------

CriterionResult sandwich_usf(VerifyLevel, int threads) {
    CriterionResult r{4, "USF sandwich on the 4x4 torus matches Kirchhoff marginals"};
    const int seeds = 10000;
    auto g = Substrate::grid({4, 4}, {true, true});
    const int E = g.edge_count();
    std::vector<std::vector<char>> value(seeds);
    std::vector<int> nested(seeds, 1), persistent(seeds, 1), resolved(seeds, 1);
    for_each_cell(seeds, threads, [&](int i) {
        Tape tape(7000 + i);
        auto ex = build_exhaustion(g, tape, caps({2, 4, 16}));
        auto t = sandwich_run(g, ex, ModelSpec::ust_free(), tape);
        t.check_invariants();
        for (int n = 0; n < t.level_count(); ++n)
            for (int s = 0; s < E; ++s) {
                if (t.minus[n][s] > t.plus[n][s]) nested[i] = 0;
                if (n > 0) {
                    bool in_prev = std::binary_search(t.ground[n - 1].begin(), t.ground[n - 1].end(), s);
                    if (in_prev && t.plus[n - 1][s] == t.minus[n - 1][s] &&
                        (t.plus[n][s] != t.plus[n - 1][s] || t.minus[n][s] != t.minus[n - 1][s]))
                        persistent[i] = 0;
                }
            }
        value[i].assign(E, 0);
        for (int s = 0; s < E; ++s) {
            if (t.value[s] < 0) resolved[i] = 0;
            value[i][s] = t.value[s] == 1;
        }
    });
    auto km = kirchhoff_marginals(whole(g));
    double worst_z = 0;
    int outside = 0;
    for (int e = 0; e < E; ++e) {
        double hits = 0;
        for (int i = 0; i < seeds; ++i) hits += value[i][e];
        double p = km.of(e), f = hits / seeds, se = std::sqrt(p * (1 - p) / seeds);
        double z = std::fabs(f - p) / se;
        worst_z = std::max(worst_z, z);
        outside += z > 3;
    }
    auto all = [](const std::vector<int>& v) { return std::all_of(v.begin(), v.end(), [](int x) { return x; }); };
    r.pass = all(nested) && all(persistent) && all(resolved) && outside == 0;
    r.measured = {{"seeds", seeds}, {"nested", all(nested)}, {"agreement_persists", all(persistent)},
                  {"fully_resolved", all(resolved)}, {"kirchhoff_marginal", km.p.front()},
                  {"worst_z", worst_z}, {"edges_outside_3se", outside},
                  {"summary", "worst |z| " + fmt(worst_z, 3) + " over " + std::to_string(E) + " edges, " +
                                  std::to_string(seeds) + " seeds"}};
    return r;
}

// --- 5: finitary trend -------------------------------------------------------

CriterionResult finitary_trend(VerifyLevel, int threads) {
    CriterionResult r{5, "Ising resolved-before-top: beta 0.2 > beta 0.6 on the 32x32 torus"};
    const int seeds = 50;
    auto g = Substrate::grid({32, 32}, {true, true}, Percolation::Vertex);
    const auto s = caps({4, 16, 64, 256});
    auto run = [&](double beta) {
        std::vector<double> frac(seeds);
        for_each_cell(seeds, threads, [&](int i) {
            Tape tape(500 + i);
            auto ex = build_exhaustion(g, tape, s);
            CascadeOptions opt;
            opt.mode = Mode::MonteCarlo;
            opt.max_level = ex.level_count() - 1;  // the whole torus is never simulated
            auto t = sandwich_run(g, ex, ModelSpec::ising(beta, Boundary::Plus), tape, opt);
            t.check_invariants();
            frac[i] = stopping_profile(t).resolved_before_top;
        });
        return mean_se(frac);
    };
    auto lo = run(0.2), hi = run(0.6);
    const double z = (lo.mean - hi.mean) / std::sqrt(lo.se * lo.se + hi.se * hi.se + 1e-300);
    r.pass = z > 3;
    r.measured = {{"seeds", seeds}, {"beta_0.2", {{"mean", lo.mean}, {"se", lo.se}}},
                  {"beta_0.6", {{"mean", hi.mean}, {"se", hi.se}}}, {"z", z},
                  {"summary", fmt(lo.mean) + " vs " + fmt(hi.mean) + ", z = " + fmt(z, 3)}};
    return r;
}

// --- 6: §5 bounds ------------------------------------------------------------

CriterionResult quantitative_bounds(VerifyLevel level, int) {
    CriterionResult r{6, "TV map and dominating-sampler bounds"};
    const int laws = level == VerifyLevel::Full ? 2000 : 300;
    std::mt19937_64 rng(0xB0B5);
    std::uniform_real_distribution<double> u(0, 1);
    int tv_ok = 0, tv_total = 0, dom_ok = 0, dom_total = 0, alpha_ok = 0;
    double worst_ratio = 0;
    for (int k = 0; k < laws; ++k) {
        const int H = 2 + static_cast<int>(rng() % 9);
        DistTable mu;
        for (int i = 0; i < H; ++i) mu.ground.push_back(i);
        const double delta = std::clamp(0.1 + 0.5 * u(rng), 1.0 / H, 1.0);
        const int d = static_cast<int>(std::floor(delta * H + 1e-12));
        const int atoms = 1 + static_cast<int>(rng() % 12);
        for (int a = 0; a < atoms; ++a) {
            Mask m = 0;
            int size = static_cast<int>(rng() % (d + 1));
            for (int j = 0; j < size; ++j) m |= Mask{1} << (rng() % H);
            mu.mass[m] += u(rng) + 1e-3;
        }
        mu.normalize();

        // build_tv_map: TV < |M| / N, computed from the pushforward.
        const std::uint64_t N = std::bit_ceil<std::uint64_t>(mu.mass.size()) << (rng() % 8);
        for (bool dom : {false, true}) {
            auto t = build_tv_map(mu, N, dom);
            auto nu = t.pushforward();
            double tv = 0;
            std::map<Mask, double> both;
            for (const auto& [m, p] : mu.mass) both[m] += p;
            for (const auto& [m, p] : nu.mass) both[m] -= p;
            for (const auto& [m, x] : both) tv += std::fabs(x);
            tv /= 2;
            const double bound = static_cast<double>(mu.mass.size()) / static_cast<double>(N);
            ++tv_total;
            tv_ok += tv < bound;
            worst_ratio = std::max(worst_ratio, tv / bound);
        }

        // dominating map: alpha within the bound and a flow-verified domination.
        const double eps = std::ldexp(1.0, -static_cast<int>(1 + rng() % 10));
        auto dm = dominating_map(mu, delta, eps);
        ++dom_total;
        alpha_ok += dm.alpha <= generation_bound(H, delta, eps) + 1e-9;
        dom_ok += check_domination(dm.pushforward(), mu).dominates;
    }
    // Worked instance: |H| = 8, δ = 1/4, ε = 1/16.
    DistTable w;
    w.ground = {0, 1, 2, 3, 4, 5, 6, 7};
    w.mass = {{0b11, 0.5}, {0b100, 0.3}, {0, 0.2}};
    auto wm = dominating_map(w, 0.25, 1.0 / 16);
    const double wb = generation_bound(8, 0.25, 1.0 / 16);
    const bool worked = wm.alpha == 10 && wm.alpha <= wb && count_small_subsets(8, 2) == 37;
    r.pass = tv_ok == tv_total && dom_ok == dom_total && alpha_ok == dom_total && worked;
    r.measured = {{"tv_maps", tv_total}, {"tv_within_bound", tv_ok}, {"worst_tv_over_bound", worst_ratio},
                  {"dominating_maps", dom_total}, {"alpha_within_bound", alpha_ok}, {"dominates", dom_ok},
                  {"worked_alpha", wm.alpha}, {"worked_bound", wb},
                  {"summary", std::to_string(tv_ok) + "/" + std::to_string(tv_total) + " TV maps, " +
                                  std::to_string(dom_ok) + "/" + std::to_string(dom_total) +
                                  " dominating maps; worked alpha " + std::to_string(wm.alpha) +
                                  " <= " + fmt(wb)}};
    return r;
}

// --- 7: bit budget -----------------------------------------------------------

CriterionResult bit_budget(VerifyLevel level, int threads) {
    CriterionResult r{7, "paired fv cascade on the 8x8 Ising torus: disagreement, spend, budget"};
    const int seeds = 200, pilots = level == VerifyLevel::Full ? 200 : 100;
    auto g = Substrate::grid({8, 8}, {true, true}, Percolation::Vertex);
    const auto model = ModelSpec::ising(0.2, Boundary::Plus);
    const auto sched = caps({2, 4, 8, 16, 32});
    constexpr std::uint64_t kPilot = std::uint64_t{1} << 32;

    // Pilot: thinning proxies from plain cascades, δ and m̂ from unlimited fv runs.
    std::vector<CascadeTrace> pc(pilots);
    for_each_cell(pilots, threads, [&](int i) {
        Tape tape(kPilot + i);
        auto ex = build_exhaustion(g, tape, sched);
        CascadeOptions opt;
        opt.mode = Mode::MonteCarlo;
        pc[i] = cascade_run(g, ex, model, tape, opt);
    });
    const auto th = thin_levels(pc);
    std::vector<FvTrace> pf(pilots);
    for_each_cell(pilots, threads, [&](int i) {
        Tape tape(kPilot + i);
        auto ex = build_exhaustion(g, tape, sched).thinned(th.keep);
        FvOptions opt;
        opt.mode = Mode::MonteCarlo;
        pf[i] = fv_cascade_run(g, ex, model, tape, opt);
    });
    const auto delta = delta_from_pilot(pf);
    const double m_hat = mean_total_bits(pf);
    const auto budget = BitBudget::from_mean(m_hat);

    auto main_run = [&](bool thin, std::vector<FvTrace>& out, int& exceeded) {
        out.assign(seeds, {});
        std::vector<char> hit(seeds, 0);
        for_each_cell(seeds, threads, [&](int i) {
            Tape tape(1 + i);
            auto ex = build_exhaustion(g, tape, sched);
            if (thin) ex = ex.thinned(th.keep);
            FvOptions opt;
            opt.mode = Mode::MonteCarlo;
            opt.paired = true;
            if (thin) {
                opt.delta = delta;
                opt.budget = budget;
            }
            try {
                out[i] = fv_cascade_run(g, ex, model, tape, opt);
            } catch (const BudgetExceeded&) {
                hit[i] = 1;
            }
        });
        exceeded = static_cast<int>(std::count(hit.begin(), hit.end(), 1));
    };
    std::vector<FvTrace> runs, raw;
    int exceeded = 0, raw_exceeded = 0;
    main_run(true, runs, exceeded);
    main_run(false, raw, raw_exceeded);

    auto per_level = [&](const std::vector<FvTrace>& rs, bool disagreement) {
        std::vector<std::vector<double>> v;
        for (const auto& t : rs)
            for (int n = 0; n < t.level_count(); ++n) {
                if (static_cast<int>(v.size()) <= n) v.resize(n + 1);
                v[n].push_back(disagreement ? t.levels[n].disagreement : t.levels[n].mean_bits_per_vertex);
            }
        std::vector<MeanSe> out;
        for (auto& x : v) out.push_back(mean_se(x));
        return out;
    };
    auto dis = per_level(runs, true);
    bool dis_ok = !dis.empty();
    auto dis_rows = json::array();
    for (std::size_t n = 0; n < dis.size(); ++n) {
        const double bound = std::ldexp(1.0, -2 * static_cast<int>(n + 1));
        const bool ok = dis[n].mean <= bound + 2 * dis[n].se;
        dis_ok &= ok;
        dis_rows.push_back({{"level", n + 1}, {"mean", dis[n].mean}, {"se", dis[n].se}, {"bound", bound}, {"ok", ok}});
    }
    auto spend_of = [&](const std::vector<FvTrace>& rs) {
        std::vector<double> s;
        for (const auto& m : per_level(rs, false)) s.push_back(m.mean);
        return analyze_spend(s);
    };
    const auto spend = spend_of(runs), raw_spend = spend_of(raw);
    const bool summable = spend.summable(0.05);
    r.pass = dis_ok && summable && exceeded == 0;
    r.measured = {{"seeds", seeds}, {"pilot_seeds", pilots}, {"thinning_keep", th.keep},
                  {"thinning_proxy", th.proxy}, {"delta", delta}, {"m_hat", m_hat},
                  {"cap", budget.cap}, {"c", budget.c}, {"budget_exceeded", exceeded},
                  {"disagreement", dis_rows}, {"spend", spend.to_json()},
                  {"unthinned_spend", raw_spend.to_json()},
                  {"summary", "disagreement " + std::string(dis_ok ? "ok" : "over bound") + ", spend " +
                                  (summable ? "summable" : "not summable") + " (top share " +
                                  fmt(spend.last_share, 3) + ", kept levels " + std::to_string(th.keep.size()) +
                                  "), budget exceeded " + std::to_string(exceeded)}};
    return r;
}

// --- 8: determinism and locality ---------------------------------------------

CriterionResult determinism(VerifyLevel level, int threads) {
    CriterionResult r{8, "golden replay and tape locality"};
    const int seeds = level == VerifyLevel::Full ? 40 : 12;
    namespace fs = std::filesystem;

    // Byte-identical bundles across reruns and across worker counts.
    Scenario sc;
    sc.engine = Engine::Cascade;
    sc.substrate = Substrate::grid({6, 6}, {true, true}).to_json();
    sc.schedule = caps({3, 9, 36});
    sc.model = ModelSpec::ust_free();
    sc.seeds.clear();
    for (int i = 1; i <= seeds; ++i) sc.seeds.push_back(i);
    sc.dump_trace = true;
    const auto base = fs::temp_directory_path() / ("fiid_verify_replay_" + std::to_string(::getpid()));
    std::vector<std::map<std::string, std::string>> bundles;
    for (int w : {1, 1, std::max(2, threads)}) {
        sc.threads = w;
        sc.out_dir = (base / std::to_string(bundles.size())).string();
        fs::remove_all(sc.out_dir);
        auto res = run_scenario(sc);
        std::map<std::string, std::string> files;
        for (const auto& f : res.files) {
            std::ifstream in(res.dir / f, std::ios::binary);
            std::stringstream ss;
            ss << in.rdbuf();
            files[f] = ss.str();
        }
        bundles.push_back(std::move(files));
    }
    fs::remove_all(base);
    const bool replay = bundles[0] == bundles[1] && bundles[0] == bundles[2];
    std::string digest_src;
    for (const auto& [f, c] : bundles[0]) digest_src += f + '\0' + c;
    char digest[17];
    std::snprintf(digest, sizeof digest, "%016llx", static_cast<unsigned long long>(fnv1a64(digest_src)));

    // Parallel vs sequential cascades, and the locality ledger on every level.
    auto torus = Substrate::grid({6, 6}, {true, true});
    auto vtorus = Substrate::grid({8, 8}, {true, true}, Percolation::Vertex);
    struct Case {
        const Substrate* g;
        ModelSpec m;
        Mode mode;
        ExhaustionSchedule s;
    };
    std::vector<Case> cases = {{&torus, ModelSpec::ust_free(), Mode::Exact, caps({3, 9, 36})},
                               {&torus, ModelSpec::ust_wired(), Mode::Exact, caps({3, 9, 36})},
                               {&vtorus, ModelSpec::ising(0.3, Boundary::Plus), Mode::MonteCarlo,
                                caps({2, 4, 16, 64})}};
    bool same = true;
    std::uint64_t violations = 0;
    int level_runs = 0;
    for (const auto& c : cases)
        for (int seed = 1; seed <= seeds; ++seed) {
            Tape a(seed), b(seed);
            auto ex = build_exhaustion(*c.g, a, c.s);
            build_exhaustion(*c.g, b, c.s);
            CascadeOptions seq, par;
            seq.mode = par.mode = c.mode;
            par.threads = std::max(2, threads);
            auto t1 = cascade_run(*c.g, ex, c.m, a, seq);
            auto t2 = cascade_run(*c.g, ex, c.m, b, par);
            same &= t1.state == t2.state;
            violations += a.locality_violations() + b.locality_violations();
            level_runs += t1.level_count();
        }
    {
        Tape a(3), b(3);
        auto ex = build_exhaustion(vtorus, a, caps({2, 4, 16}));
        build_exhaustion(vtorus, b, caps({2, 4, 16}));
        FvOptions o1, o2;
        o1.mode = o2.mode = Mode::MonteCarlo;
        o1.paired = o2.paired = true;
        o2.threads = std::max(2, threads);
        auto f1 = fv_cascade_run(vtorus, ex, ModelSpec::ising(0.2, Boundary::Plus), a, o1);
        auto f2 = fv_cascade_run(vtorus, ex, ModelSpec::ising(0.2, Boundary::Plus), b, o2);
        same &= f1.to_json() == f2.to_json() && f1.bits_per_vertex == f2.bits_per_vertex;
        violations += a.locality_violations() + b.locality_violations();
    }
    r.pass = replay && same && violations == 0;
    r.measured = {{"replay_identical", replay}, {"bundle_digest", digest}, {"files", bundles[0].size()},
                  {"parallel_equals_sequential", same}, {"locality_violations", violations},
                  {"levels_checked", level_runs},
                  {"summary", std::string(replay ? "replay identical" : "REPLAY DIFFERS") + " (digest " + digest +
                                  "), " + std::to_string(violations) + " locality violations over " +
                                  std::to_string(level_runs) + " levels"}};
    return r;
}

}  // namespace

CriterionResult verify_criterion(int id, VerifyLevel level, int threads) {
    using Fn = CriterionResult (*)(VerifyLevel, int);
    static const Fn table[] = {sampler_oracles, definition_five,     cascade_main, sandwich_usf,
                               finitary_trend,  quantitative_bounds, bit_budget,   determinism};
    if (id < 1 || id > kCriterionCount) throw std::invalid_argument("no criterion " + std::to_string(id));
    const auto start = std::chrono::steady_clock::now();
    CriterionResult r;
    try {
        r = table[id - 1](level, threads);
    } catch (const std::exception& e) {
        r.id = id;
        r.name = "criterion " + std::to_string(id);
        r.pass = false;
        r.measured = {{"error", e.what()}, {"summary", std::string("error: ") + e.what()}};
    }
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return r;
}

VerifyReport verify_all(VerifyLevel level, int threads, const std::vector<int>& only,
                        const std::function<void(const CriterionResult&)>& on_result) {
    VerifyReport rep;
    rep.level = level == VerifyLevel::Full ? "full" : "quick";
    std::vector<int> ids = only;
    if (ids.empty())
        for (int i = 1; i <= kCriterionCount; ++i) ids.push_back(i);
    for (int id : ids) {
        rep.criteria.push_back(verify_criterion(id, level, threads));
        if (on_result) on_result(rep.criteria.back());
    }
    return rep;
}

}  // namespace fiid
