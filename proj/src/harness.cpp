#include "fiid/harness.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "fiid/bitcoding.hpp"
#include "fiid/errors.hpp"
#include "fiid/metrics.hpp"
#include "parallel.hpp"

namespace fiid {

using detail::for_each_cell;
namespace fs = std::filesystem;

Engine engine_from_string(const std::string& s) {
    if (s == "exhaust") return Engine::Exhaust;
    if (s == "sample") return Engine::Sample;
    if (s == "cascade") return Engine::Cascade;
    if (s == "sandwich") return Engine::Sandwich;
    if (s == "fvcode") return Engine::FvCode;
    if (s == "oracle") return Engine::Oracle;
    throw std::invalid_argument("unknown engine '" + s + "'");
}

std::string to_string(Engine e) {
    switch (e) {
        case Engine::Exhaust: return "exhaust";
        case Engine::Sample: return "sample";
        case Engine::Cascade: return "cascade";
        case Engine::Sandwich: return "sandwich";
        case Engine::FvCode: return "fvcode";
        case Engine::Oracle: return "oracle";
    }
    return "?";
}

void Scenario::validate() const {
    if (seeds.empty()) throw ConfigError(0, "seed list is empty");
    if (threads < 1) throw ConfigError(0, "threads must be >= 1");
    Substrate g = [&] {
        try {
            return Substrate::from_json(substrate);
        } catch (const std::exception& e) {
            throw ConfigError(0, std::string("substrate: ") + e.what());
        }
    }();
    const bool needs_schedule = engine != Engine::Sample && engine != Engine::Oracle;
    if (needs_schedule) {
        try {
            schedule.validate();
        } catch (const std::exception& e) {
            throw ConfigError(0, std::string("schedule: ") + e.what());
        }
    }
    try {
        model.validate();
    } catch (const std::exception& e) {
        throw ConfigError(0, std::string("model: ") + e.what());
    }
    const bool ust = model.family == Family::UstFree || model.family == Family::UstWired;
    const int sites = model_site_total(model, g);
    if ((engine == Engine::Oracle || (mode == Mode::Exact && needs_schedule && !ust)) &&
        sites > kMaxEnumSites)
        throw ConfigError(0, "exact enumeration covers at most " + std::to_string(kMaxEnumSites) +
                                 " sites, the substrate has " + std::to_string(sites) +
                                 (engine == Engine::Oracle ? "" : "; use mode = \"mc\""));
    if (engine == Engine::Sandwich && model.direction() != Direction::Decreasing)
        throw ConfigError(0, "sandwich needs a decreasing upper model (" + model.name() + ")");
    if (engine == Engine::FvCode && mode == Mode::MonteCarlo &&
        !(model.family == Family::Ising && model.boundary == Boundary::Plus))
        throw ConfigError(0, "fvcode mc mode supports the plus Ising model only");
    if (paired && engine != Engine::FvCode) throw ConfigError(0, "paired applies to fvcode only");
}

nlohmann::json Scenario::to_json() const {
    nlohmann::json j;
    j["engine"] = fiid::to_string(engine);
    j["substrate"] = Substrate::from_json(substrate).to_json();
    if (engine != Engine::Sample && engine != Engine::Oracle)
        j["schedule"] = {{"caps", schedule.caps},
                         {"rounds", schedule.rounds},
                         {"bits_per_round", schedule.bits_per_round},
                         {"rank_bits", schedule.rank_bits}};
    j["model"] = model.to_json();
    j["beta_sweep"] = beta_sweep;
    j["seeds"] = seeds;
    j["mode"] = fiid::to_string(mode);
    j["paired"] = paired;
    j["dump_trace"] = dump_trace;
    j["dump_maps"] = dump_maps;
    if (max_level > 0) j["max_level"] = max_level;
    if (engine == Engine::FvCode) {
        j["delta"] = delta;
        j["budget_mean"] = budget_mean ? nlohmann::json(*budget_mean) : nlohmann::json(nullptr);
        j["pilot_seeds"] = pilot_seeds;
    }
    return j;
}

std::uint64_t fnv1a64(std::string_view data) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : data) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

std::string Scenario::hash() const {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx",
                  static_cast<unsigned long long>(fnv1a64(to_json().dump())));
    return buf;
}

fs::path resolve_out_dir(const std::string& requested) {
    if (const char* o = std::getenv("OUT_DIR_OVERRIDE"); o && *o) return fs::path(o);
    return fs::path(requested);
}

void write_atomic(const fs::path& path, const std::string& content) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("cannot write '" + tmp.string() + "'");
        out << content;
        out.flush();
        if (!out) throw Error("write failed for '" + tmp.string() + "'");
    }
    fs::rename(tmp, path);
}

void validate_csv(const std::string& text, const std::vector<std::string>& columns) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) throw Error("empty CSV");
    std::string want;
    for (std::size_t i = 0; i < columns.size(); ++i) want += (i ? "," : "") + columns[i];
    if (line != want) throw Error("CSV header '" + line + "' differs from '" + want + "'");
    int row = 1;
    while (std::getline(in, line)) {
        ++row;
        auto fields = std::count(line.begin(), line.end(), ',') + 1;
        if (fields != static_cast<long>(columns.size()))
            throw Error("CSV row " + std::to_string(row) + " has " + std::to_string(fields) +
                        " fields, expected " + std::to_string(columns.size()));
    }
}

namespace {

struct CellOutput {
    double beta = 0;
    std::uint64_t seed = 0;
    std::vector<std::pair<std::string, std::string>> files;  // relative path, content
    nlohmann::json summary;
};

std::string num(double x) { return nlohmann::json(x).dump(); }

template <typename T>
std::string render(const T& obj) {
    std::ostringstream os;
    obj.write_csv(os);
    return os.str();
}

SubgraphRef whole(const Substrate& g) {
    std::vector<int> all(g.vertex_count());
    std::iota(all.begin(), all.end(), 0);
    return induced(g, all);
}

nlohmann::json law_json(const DistTable& t) {
    auto atoms = nlohmann::json::array();
    for (const auto& [m, p] : t.mass) atoms.push_back({{"members", t.config_of(m).members}, {"p", p}});
    return {{"ground", t.ground}, {"atoms", atoms}};
}

struct FvSetup {
    std::vector<double> delta;
    std::optional<BitBudget> budget;
    double m_hat = 0;
};

// Pilot seeds live above 2^32 so they never collide with scenario seeds.
constexpr std::uint64_t kPilotBase = std::uint64_t{1} << 32;

FvSetup fv_setup(const Scenario& sc, const Substrate& g, const ModelSpec& model) {
    FvSetup s{sc.delta, std::nullopt, sc.budget_mean.value_or(0)};
    if (!s.delta.empty() && sc.budget_mean) {
        s.budget = BitBudget::from_mean(*sc.budget_mean);
        return s;
    }
    std::vector<FvTrace> pilot(sc.pilot_seeds);
    for_each_cell(sc.pilot_seeds, sc.threads, [&](int i) {
        Tape tape(kPilotBase + static_cast<std::uint64_t>(i));
        auto ex = build_exhaustion(g, tape, sc.schedule);
        FvOptions opt;
        opt.mode = sc.mode;
        pilot[i] = fv_cascade_run(g, ex, model, tape, opt);
    });
    if (s.delta.empty()) s.delta = delta_from_pilot(pilot);
    if (!sc.budget_mean) s.m_hat = mean_total_bits(pilot);
    s.budget = BitBudget::from_mean(s.m_hat);
    return s;
}

CellOutput run_cell(const Scenario& sc, const Substrate& g, const ModelSpec& model,
                    std::uint64_t seed, const FvSetup* fv, const std::string& prefix) {
    CellOutput out;
    out.beta = model.beta;
    out.seed = seed;
    auto add = [&](const std::string& name, std::string content) {
        out.files.emplace_back(prefix + name, std::move(content));
    };
    Tape tape(seed);
    nlohmann::json& s = out.summary;

    switch (sc.engine) {
        case Engine::Oracle: {
            auto law = enumerate_exact(model, whole(g));
            add("oracle.json", law_json(law).dump(2) + "\n");
            s["atoms"] = law.mass.size();
            s["sites"] = law.ground.size();
            if (model.family == Family::UstFree || model.family == Family::UstWired) {
                auto m = kirchhoff_marginals(whole(g));
                std::string csv = render(m);
                validate_csv(csv, {"edge", "u", "v", "marginal"});
                add("marginals.csv", csv);
            }
            break;
        }
        case Engine::Sample: {
            auto c = sample_exact(model, whole(g), tape);
            add("config.json", nlohmann::json{{"model", model.to_json()}, {"seed", seed},
                                              {"members", c.members}}.dump() + "\n");
            s["size"] = c.members.size();
            break;
        }
        case Engine::Exhaust: {
            auto ex = build_exhaustion(g, tape, sc.schedule);
            std::ostringstream hist;
            write_cell_histogram_csv(ex, hist);
            validate_csv(hist.str(), {"level", "cell_size", "count"});
            add("cells.csv", hist.str());
            if (sc.dump_trace) add("exhaustion.json", ex.to_json().dump() + "\n");
            s["levels"] = ex.level_count();
            s["top_cells"] = ex.levels.back().cells.size();
            s["level1_included"] = ex.levels.front().included_vertices().size();
            break;
        }
        case Engine::Cascade: {
            auto ex = build_exhaustion(g, tape, sc.schedule);
            CascadeOptions opt;
            opt.mode = sc.mode;
            opt.max_level = sc.max_level;
            auto tr = cascade_run(g, ex, model, tape, opt);
            tr.check_invariants();
            std::string csv = render(tr);
            validate_csv(csv, {"site", "change_count", "change_levels"});
            add("changes.csv", csv);
            add("config.json", nlohmann::json{{"model", model.to_json()}, {"seed", seed},
                                              {"members", tr.final_config().members}}.dump() + "\n");
            if (sc.dump_trace) add("trace.json", tr.to_json().dump() + "\n");
            int twice = 0, max_changes = 0;
            for (int c : tr.change_count) {
                twice += c == 2;
                max_changes = std::max(max_changes, c);
            }
            s["levels"] = tr.level_count();
            s["final_size"] = tr.final_config().members.size();
            s["max_changes"] = max_changes;
            s["sites_changed_twice"] = twice;
            s["locality_violations"] = tape.locality_violations();
            break;
        }
        case Engine::Sandwich: {
            auto ex = build_exhaustion(g, tape, sc.schedule);
            CascadeOptions opt;
            opt.mode = sc.mode;
            opt.max_level = sc.max_level;
            auto tr = sandwich_run(g, ex, model, tape, opt);
            tr.check_invariants();
            std::string csv = render(tr);
            validate_csv(csv, {"site", "stopping_level", "value", "radius"});
            add("sandwich.csv", csv);
            auto prof = stopping_profile(tr);
            add("profile.json", prof.to_json().dump(2) + "\n");
            if (sc.dump_trace) add("trace.json", tr.to_json().dump() + "\n");
            s["levels"] = tr.level_count();
            s["resolved_before_top"] = prof.resolved_before_top;
            s["unresolved_fraction"] = prof.unresolved_fraction;
            s["mean_level"] = prof.mean_level;
            break;
        }
        case Engine::FvCode: {
            auto ex = build_exhaustion(g, tape, sc.schedule);
            FvOptions opt;
            opt.mode = sc.mode;
            opt.paired = sc.paired;
            opt.delta = fv->delta;
            opt.budget = fv->budget;
            opt.dump_maps = sc.dump_maps;
            auto tr = fv_cascade_run(g, ex, model, tape, opt);
            tr.check_invariants();
            std::string csv = render(tr);
            validate_csv(csv, {"level", "epsilon", "cells", "mean_bits_per_vertex",
                               "disagreement_rate", "fallback_rate"});
            add("fv.csv", csv);
            if (sc.dump_trace) add("trace.json", tr.to_json().dump() + "\n");
            if (sc.dump_maps) add("maps.json", tr.maps.dump() + "\n");
            s["levels"] = tr.level_count();
            s["total_bits_per_vertex"] = tr.total_bits_per_vertex();
            s["top_disagreement"] = tr.levels.empty() ? -1.0 : tr.levels.back().disagreement;
            break;
        }
    }
    return out;
}

std::string beta_tag(double b) {
    std::string t = num(b);
    std::replace(t.begin(), t.end(), '.', 'p');
    return "beta_" + t + "/";
}

}  // namespace

RunResult run_scenario(const Scenario& sc) {
    sc.validate();
    const Substrate g = Substrate::from_json(sc.substrate);
    std::vector<ModelSpec> models;
    if (sc.beta_sweep.empty()) {
        models.push_back(sc.model);
    } else {
        for (double b : sc.beta_sweep) {
            ModelSpec m = sc.model;
            m.beta = b;
            m.validate();
            models.push_back(m);
        }
    }
    // The oracle does not depend on the seed: one cell per model.
    const std::vector<std::uint64_t> seeds =
        sc.engine == Engine::Oracle ? std::vector<std::uint64_t>{sc.seeds.front()} : sc.seeds;

    std::vector<FvSetup> fv(models.size());
    if (sc.engine == Engine::FvCode)
        for (std::size_t k = 0; k < models.size(); ++k) fv[k] = fv_setup(sc, g, models[k]);

    const int cells = static_cast<int>(models.size() * seeds.size());
    std::vector<CellOutput> outs(cells);
    for_each_cell(cells, sc.threads, [&](int i) {
        std::size_t k = i / seeds.size(), j = i % seeds.size();
        std::string prefix = sc.beta_sweep.empty() ? "" : beta_tag(models[k].beta);
        if (sc.engine != Engine::Oracle) prefix += "seed_" + std::to_string(seeds[j]) + "/";
        outs[i] = run_cell(sc, g, models[k], seeds[j], &fv[k], prefix);
    });

    RunResult res;
    res.dir = resolve_out_dir(sc.out_dir);
    fs::create_directories(res.dir);
    for (const auto& o : outs)
        for (const auto& [name, content] : o.files) {
            write_atomic(res.dir / name, content);
            res.files.push_back(name);
        }

    std::vector<std::string> columns{"beta", "seed"};
    for (auto it = outs.front().summary.begin(); it != outs.front().summary.end(); ++it)
        columns.push_back(it.key());
    std::ostringstream csv;
    for (std::size_t i = 0; i < columns.size(); ++i) csv << (i ? "," : "") << columns[i];
    csv << '\n';
    for (const auto& o : outs) {
        csv << num(o.beta) << ',' << o.seed;
        for (std::size_t c = 2; c < columns.size(); ++c) csv << ',' << o.summary.at(columns[c]).dump();
        csv << '\n';
    }
    validate_csv(csv.str(), columns);
    write_atomic(res.dir / "summary.csv", csv.str());
    res.files.push_back("summary.csv");

    nlohmann::json runs = nlohmann::json::array();
    for (const auto& o : outs) {
        auto files = nlohmann::json::array();
        for (const auto& f : o.files) files.push_back(f.first);
        runs.push_back({{"beta", o.beta}, {"seed", o.seed}, {"summary", o.summary}, {"files", files}});
    }
    res.manifest = {{"scenario", sc.to_json()},
                    {"scenario_hash", sc.hash()},
                    {"code_version", kCodeVersion},
                    {"runs", runs}};
    if (sc.engine == Engine::FvCode) {
        auto setup = nlohmann::json::array();
        for (std::size_t k = 0; k < models.size(); ++k)
            setup.push_back({{"beta", models[k].beta},
                             {"delta", fv[k].delta},
                             {"m_hat", fv[k].m_hat},
                             {"cap", fv[k].budget ? fv[k].budget->cap : 0},
                             {"c", fv[k].budget ? fv[k].budget->c : 0}});
        res.manifest["fv_setup"] = setup;
    }
    write_atomic(res.dir / "manifest.json", res.manifest.dump(2) + "\n");
    res.files.push_back("manifest.json");
    return res;
}

}  // namespace fiid
