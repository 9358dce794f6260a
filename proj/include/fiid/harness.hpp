#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "fiid/cascade.hpp"
#include "fiid/exhaustion.hpp"
#include "fiid/models.hpp"

namespace fiid {

enum class Engine { Exhaust, Sample, Cascade, Sandwich, FvCode, Oracle };

Engine engine_from_string(const std::string& s);
std::string to_string(Engine e);

struct Scenario {
    Engine engine = Engine::Cascade;
    nlohmann::json substrate;  // Substrate::from_json form
    ExhaustionSchedule schedule;
    ModelSpec model;
    std::vector<double> beta_sweep;  // empty = model.beta only
    std::vector<std::uint64_t> seeds{1};
    std::string out_dir = "out";
    Mode mode = Mode::Exact;
    bool paired = false;
    bool dump_trace = false;
    bool dump_maps = false;
    int threads = 1;            // seed workers; never affects outputs
    int max_level = 0;          // cascade/sandwich: stop after this many levels; 0 = all
    std::vector<double> delta;  // fvcode removal caps; empty = pilot-derived
    std::optional<double> budget_mean;  // fvcode m̂; empty = pilot-derived
    int pilot_seeds = 20;

    /// Throws ConfigError (line 0) on inconsistent fields.
    void validate() const;
    /// Everything that determines outputs (no out_dir, no threads).
    nlohmann::json to_json() const;
    /// FNV-1a over the canonical JSON, 16 hex digits.
    std::string hash() const;
};

/// Parses the TOML scenario format; errors carry the offending line.
Scenario parse_scenario(std::string_view text, std::string_view source = "<config>");
Scenario load_scenario(const std::filesystem::path& path);

/// "N", "N..M" (inclusive) or "a,b,c".
std::vector<std::uint64_t> parse_seed_list(const std::string& s);

/// OUT_DIR_OVERRIDE, when set and non-empty, replaces the requested directory.
std::filesystem::path resolve_out_dir(const std::string& requested);

/// Writes through a sibling temporary file and renames it into place.
void write_atomic(const std::filesystem::path& path, const std::string& content);

/// Throws Error when the header differs from `columns` or a row is ragged.
void validate_csv(const std::string& text, const std::vector<std::string>& columns);

std::uint64_t fnv1a64(std::string_view data);

inline constexpr const char* kCodeVersion = "0.1.0";

struct RunResult {
    std::filesystem::path dir;
    nlohmann::json manifest;
    std::vector<std::string> files;  // relative to dir, in write order
};

/// Runs every (beta, seed) cell of the scenario and writes the bundle:
/// per-seed files, summary.csv (one row per beta × seed) and manifest.json.
RunResult run_scenario(const Scenario& sc);

}  // namespace fiid
