#pragma once

#include <map>
#include <ostream>
#include <vector>

#include <json.hpp>

#include "fiid/exhaustion.hpp"
#include "fiid/models.hpp"

namespace fiid {

enum class Mode { Exact, MonteCarlo };

Mode mode_from_string(const std::string& s);
std::string to_string(Mode m);

struct CascadeOptions {
    Mode mode = Mode::Exact;
    int threads = 1;     // cells of one level are processed concurrently
    int max_level = 0;   // stop after this many levels; 0 = all
};

/// ω_{Γ_1}, ω_{Γ_2}, ... with per-site change bookkeeping.  Sites are edges
/// for edge models and vertices for Ising; states are kept for every site,
/// sites outside Γ_n holding the pre-inclusion default (off for decreasing
/// families, on for increasing ones).
struct CascadeTrace {
    ModelSpec model;
    Direction direction = Direction::Decreasing;
    int site_total = 0;
    std::vector<std::vector<int>> ground;  // per level, sorted site ids
    std::vector<std::vector<char>> state;  // per level, per site
    std::vector<int> change_count;
    std::vector<std::vector<int>> change_levels;  // 1-based levels

    int level_count() const { return static_cast<int>(state.size()); }
    Config config(int level) const;  // 0-based level; ground sites that are on
    Config final_config() const { return config(level_count() - 1); }
    /// Change counts <= 2, nesting of ground sets and monotonicity; throws Error.
    void check_invariants() const;
    nlohmann::json to_json() const;
    /// site,change_count,change_levels
    void write_csv(std::ostream& os) const;
};

struct SandwichTrace {
    ModelSpec upper;
    ModelSpec lower;
    int site_total = 0;
    std::vector<std::vector<int>> ground;
    std::vector<std::vector<char>> plus;   // per level, per site; outside ground: 1
    std::vector<std::vector<char>> minus;  // outside ground: 0
    std::vector<int> stopping_level;       // 1-based; 0 = unresolved
    std::vector<int> value;                // resolved value, -1 when unresolved
    std::vector<int> radius;               // coding radius, -1 when unknown
    int exhaustion_levels = 0;             // levels of the exhaustion (computed or not)

    int level_count() const { return static_cast<int>(plus.size()); }
    void check_invariants() const;
    nlohmann::json to_json() const;
    /// site,stopping_level,value,radius
    void write_csv(std::ostream& os) const;
};

struct StoppingProfile {
    std::map<int, int> histogram;  // stopping level -> sites (0 = unresolved)
    double mean_level = 0;         // over resolved sites
    double mean_radius = 0;        // over resolved sites with a known radius
    double unresolved_fraction = 0;
    double resolved_before_top = 0;  // fraction resolved strictly below the top level
    nlohmann::json to_json() const;
};

/// Sites of the model inside a vertex set (edges for edge models).
std::vector<int> model_sites(const ModelSpec& m, const SubgraphRef& cell);
int model_site_total(const ModelSpec& m, const Substrate& g);

CascadeTrace cascade_run(const Substrate& g, const Exhaustion& ex, const ModelSpec& model,
                         Tape& tape, const CascadeOptions& opt = {});

/// `upper` must be a decreasing family; the lower chain runs its dual.
SandwichTrace sandwich_run(const Substrate& g, const Exhaustion& ex, const ModelSpec& upper,
                           Tape& tape, const CascadeOptions& opt = {});

StoppingProfile stopping_profile(const SandwichTrace& t);

}  // namespace fiid
