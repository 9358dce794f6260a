// fiidsim: command-line front end for scenario runs and the acceptance suite.

#include <fstream>
#include <iostream>
#include <thread>

#include <CLI11.hpp>

#include "fiid/errors.hpp"
#include "fiid/harness.hpp"
#include "fiid/verify.hpp"

namespace {

struct Common {
    std::string config;
    std::string seeds;
    std::string out;
    std::string mode;
    bool paired = false;
    bool dump_trace = false;
    bool dump_maps = false;
    int threads = 0;
    int max_level = -1;
};

void add_common(CLI::App* sub, Common& c) {
    sub->add_option("--config", c.config, "scenario file (TOML)")->required()->check(CLI::ExistingFile);
    sub->add_option("--seed,--seeds", c.seeds, "seed N, range N..M or list a,b,c");
    sub->add_option("--out", c.out, "output directory (OUT_DIR_OVERRIDE wins)");
    sub->add_option("--mode", c.mode, "exact or mc")->check(CLI::IsMember({"exact", "mc"}));
    sub->add_flag("--paired", c.paired, "run the exact chain alongside (fvcode)");
    sub->add_flag("--dump-trace", c.dump_trace, "write full per-seed traces");
    sub->add_flag("--dump-maps", c.dump_maps, "write the fv coding maps (fvcode)");
    sub->add_option("--threads", c.threads, "seed workers")->check(CLI::PositiveNumber);
    sub->add_option("--max-level", c.max_level, "stop after this many levels (0 = all)")
        ->check(CLI::NonNegativeNumber);
}

int run(fiid::Engine engine, const Common& c) {
    auto sc = fiid::load_scenario(c.config);
    sc.engine = engine;
    if (!c.seeds.empty()) sc.seeds = fiid::parse_seed_list(c.seeds);
    if (!c.out.empty()) sc.out_dir = c.out;
    if (!c.mode.empty()) sc.mode = fiid::mode_from_string(c.mode);
    sc.paired |= c.paired;
    sc.dump_trace |= c.dump_trace;
    sc.dump_maps |= c.dump_maps;
    if (c.threads > 0) sc.threads = c.threads;
    if (c.max_level >= 0) sc.max_level = c.max_level;
    sc.validate();

    auto res = fiid::run_scenario(sc);
    std::cout << fiid::to_string(engine) << ": " << res.manifest["runs"].size() << " run(s), hash "
              << sc.hash() << " -> " << res.dir.string() << '\n';
    for (const auto& r : res.manifest["runs"])
        std::cout << "  beta=" << r["beta"].dump() << " seed=" << r["seed"] << "  " << r["summary"].dump() << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"fiidsim - finitary coding simulations"};
    app.require_subcommand(1);

    const std::vector<std::pair<std::string, fiid::Engine>> engines = {
        {"exhaust", fiid::Engine::Exhaust},   {"sample", fiid::Engine::Sample},
        {"cascade", fiid::Engine::Cascade},   {"sandwich", fiid::Engine::Sandwich},
        {"fvcode", fiid::Engine::FvCode},     {"oracle", fiid::Engine::Oracle}};
    const std::map<std::string, std::string> help = {
        {"exhaust", "build the exhaustion and its cell histogram"},
        {"sample", "draw exact samples on the whole substrate"},
        {"cascade", "run the cascade and record per-site changes"},
        {"sandwich", "run the monotone sandwich and record stopping levels"},
        {"fvcode", "run the finite-valued cascade and its bit accounting"},
        {"oracle", "enumerate the exact law (and UST edge marginals)"}};
    std::vector<Common> opts(engines.size());
    std::vector<CLI::App*> subs;
    for (std::size_t i = 0; i < engines.size(); ++i) {
        subs.push_back(app.add_subcommand(engines[i].first, help.at(engines[i].first)));
        add_common(subs.back(), opts[i]);
    }

    auto* verify = app.add_subcommand("verify", "run the acceptance criteria");
    std::string level = "quick", report;
    std::vector<int> only;
    int threads = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
    verify->add_option("--level", level, "quick or full")->check(CLI::IsMember({"quick", "full"}));
    verify->add_option("--only", only, "criteria to run (1-8)");
    verify->add_option("--report", report, "write the JSON report here");
    verify->add_option("--threads", threads)->check(CLI::PositiveNumber);

    CLI11_PARSE(app, argc, argv);

    try {
        for (std::size_t i = 0; i < engines.size(); ++i)
            if (subs[i]->parsed()) return run(engines[i].second, opts[i]);
        if (verify->parsed()) {
            auto rep = fiid::verify_all(fiid::verify_level_from_string(level), threads, only,
                                        [](const fiid::CriterionResult& r) { std::cout << r.line() << std::endl; });
            if (!report.empty()) std::ofstream(report) << rep.to_json().dump(2) << '\n';
            return rep.all_pass() ? 0 : 1;
        }
    } catch (const fiid::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
