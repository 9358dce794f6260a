#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

#include <toml.hpp>

#include "fiid/errors.hpp"
#include "fiid/harness.hpp"

namespace fiid {

namespace {

int line_of(const toml::node& n) { return static_cast<int>(n.source().begin.line); }

nlohmann::json to_json(const toml::node& n) {
    if (auto t = n.as_table()) {
        auto j = nlohmann::json::object();
        for (auto&& [k, v] : *t) j[std::string(k.str())] = to_json(v);
        return j;
    }
    if (auto a = n.as_array()) {
        auto j = nlohmann::json::array();
        for (auto&& v : *a) j.push_back(to_json(v));
        return j;
    }
    if (auto v = n.as_integer()) return v->get();
    if (auto v = n.as_floating_point()) return v->get();
    if (auto v = n.as_boolean()) return v->get();
    if (auto v = n.as_string()) return v->get();
    throw ConfigError(line_of(n), "dates and times are not supported");
}

void reject_unknown(const toml::table& t, const std::set<std::string>& known,
                    const std::string& where) {
    for (auto&& [k, v] : t)
        if (!known.count(std::string(k.str())))
            throw ConfigError(static_cast<int>(k.source().begin.line),
                              "unknown key '" + std::string(k.str()) + "' in " + where);
}

// Runs `f`, re-raising library errors at the line of `n`.
template <typename F>
auto at_line(const toml::node& n, F&& f) {
    try {
        return f();
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception& e) {
        throw ConfigError(line_of(n), e.what());
    }
}

template <typename T>
T get(const toml::node& n) {
    return at_line(n, [&] { return to_json(n).get<T>(); });
}

const toml::table& table(const toml::table& root, const std::string& name) {
    const toml::node* n = root.get(name);
    if (!n) throw ConfigError(0, "missing [" + name + "] table");
    if (!n->is_table()) throw ConfigError(line_of(*n), "'" + name + "' must be a table");
    return *n->as_table();
}

std::uint64_t parse_u64(const std::string& s) {
    std::uint64_t v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size())
        throw std::invalid_argument("bad seed '" + s + "'");
    return v;
}

}  // namespace

std::vector<std::uint64_t> parse_seed_list(const std::string& s) {
    std::vector<std::uint64_t> out;
    if (auto dots = s.find(".."); dots != std::string::npos) {
        auto a = parse_u64(s.substr(0, dots)), b = parse_u64(s.substr(dots + 2));
        if (b < a) throw std::invalid_argument("empty seed range '" + s + "'");
        if (b - a > 10'000'000) throw std::invalid_argument("seed range too long");
        for (auto v = a; v <= b; ++v) out.push_back(v);
        return out;
    }
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(parse_u64(item));
    if (out.empty()) throw std::invalid_argument("empty seed list");
    return out;
}

Scenario parse_scenario(std::string_view text, std::string_view source) {
    toml::table root;
    try {
        root = toml::parse(text, source);
    } catch (const toml::parse_error& e) {
        throw ConfigError(static_cast<int>(e.source().begin.line), std::string(e.description()));
    }
    reject_unknown(root,
                   {"engine", "seeds", "out", "mode", "paired", "dump_trace", "dump_maps",
                    "threads", "max_level", "substrate", "schedule", "model", "sweep", "fv"},
                   "the top level");

    Scenario sc;
    if (auto n = root.get("engine"))
        sc.engine = at_line(*n, [&] { return engine_from_string(get<std::string>(*n)); });
    if (auto n = root.get("seeds")) {
        sc.seeds = at_line(*n, [&] {
            auto j = to_json(*n);
            if (j.is_string()) return parse_seed_list(j.get<std::string>());
            if (j.is_number_integer()) return std::vector<std::uint64_t>{j.get<std::uint64_t>()};
            return j.get<std::vector<std::uint64_t>>();
        });
        if (sc.seeds.empty()) throw ConfigError(line_of(*n), "seed list is empty");
    }
    if (auto n = root.get("out")) sc.out_dir = get<std::string>(*n);
    if (auto n = root.get("mode"))
        sc.mode = at_line(*n, [&] { return mode_from_string(get<std::string>(*n)); });
    if (auto n = root.get("paired")) sc.paired = get<bool>(*n);
    if (auto n = root.get("dump_trace")) sc.dump_trace = get<bool>(*n);
    if (auto n = root.get("dump_maps")) sc.dump_maps = get<bool>(*n);
    if (auto n = root.get("threads")) {
        sc.threads = get<int>(*n);
        if (sc.threads < 1) throw ConfigError(line_of(*n), "threads must be >= 1");
    }

    if (auto n = root.get("max_level")) {
        sc.max_level = get<int>(*n);
        if (sc.max_level < 0) throw ConfigError(line_of(*n), "max_level must be >= 0");
    }

    const auto& sub = table(root, "substrate");
    reject_unknown(sub, {"dims", "wrap", "n", "edges", "mode"}, "[substrate]");
    sc.substrate = to_json(sub);
    at_line(sub, [&] { return Substrate::from_json(sc.substrate).vertex_count(); });

    if (auto n = root.get("schedule")) {
        const auto& t = table(root, "schedule");
        reject_unknown(t, {"caps", "rounds", "bits_per_round", "rank_bits"}, "[schedule]");
        if (auto c = t.get("caps")) sc.schedule.caps = get<std::vector<int>>(*c);
        if (auto c = t.get("rounds")) sc.schedule.rounds = get<int>(*c);
        if (auto c = t.get("bits_per_round")) sc.schedule.bits_per_round = get<int>(*c);
        if (auto c = t.get("rank_bits")) sc.schedule.rank_bits = get<int>(*c);
        at_line(*n, [&] { sc.schedule.validate(); return 0; });
    } else if (sc.engine != Engine::Sample && sc.engine != Engine::Oracle) {
        throw ConfigError(0, "missing [schedule] table");
    }

    if (root.get("model") || sc.engine != Engine::Exhaust) {
        const auto& mod = table(root, "model");
        reject_unknown(mod, {"family", "beta", "p", "q", "boundary"}, "[model]");
        for (const char* k : {"beta", "p", "q"})
            if (auto v = mod.get(k)) get<double>(*v);
        for (const char* k : {"family", "boundary"})
            if (auto v = mod.get(k)) get<std::string>(*v);
        sc.model = at_line(mod, [&] { return ModelSpec::from_json(to_json(mod)); });
    }

    if (root.get("sweep")) {
        const auto& t = table(root, "sweep");
        reject_unknown(t, {"beta"}, "[sweep]");
        if (auto b = t.get("beta")) {
            sc.beta_sweep = get<std::vector<double>>(*b);
            if (sc.model.family != Family::Ising)
                throw ConfigError(line_of(*b), "a beta sweep needs an ising model");
            if (sc.beta_sweep.empty()) throw ConfigError(line_of(*b), "empty beta sweep");
        }
    }

    if (root.get("fv")) {
        const auto& t = table(root, "fv");
        reject_unknown(t, {"delta", "budget_mean", "pilot_seeds"}, "[fv]");
        if (auto d = t.get("delta")) {
            sc.delta = get<std::vector<double>>(*d);
            for (double x : sc.delta)
                if (!(x > 0 && x <= 1)) throw ConfigError(line_of(*d), "delta entries must lie in (0, 1]");
        }
        if (auto b = t.get("budget_mean")) {
            sc.budget_mean = get<double>(*b);
            if (!(*sc.budget_mean > 0)) throw ConfigError(line_of(*b), "budget_mean must be positive");
        }
        if (auto p = t.get("pilot_seeds")) {
            sc.pilot_seeds = get<int>(*p);
            if (sc.pilot_seeds < 1) throw ConfigError(line_of(*p), "pilot_seeds must be >= 1");
        }
    }
    sc.validate();
    return sc;
}

Scenario load_scenario(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError(0, "cannot open config '" + path.string() + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_scenario(ss.str(), path.string());
}

}  // namespace fiid
