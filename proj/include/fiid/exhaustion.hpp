#pragma once

#include <cstdint>
#include <vector>

#include <json.hpp>

#include "fiid/substrate.hpp"
#include "fiid/tape.hpp"

namespace fiid {

struct ExhaustionSchedule {
    std::vector<int> caps;   // strictly increasing, caps[0] >= 2
    int rounds = 8;          // merge rounds per level
    int bits_per_round = 8;  // preference bits drawn by a cluster leader per round
    int rank_bits = 8;       // per-vertex rank used to pick separator vertices

    int bits_per_level() const { return rounds * bits_per_round; }
    void validate() const;
};

/// One level Γ_n: a coarsening partition of all vertices into connected
/// clusters, and the included vertex set obtained by removing one designated
/// endpoint of every edge between clusters.  Cells are the components of the
/// included set.
struct ExhaustionLevel {
    int cap = 0;
    std::vector<int> cluster_of;
    std::vector<int> cell_of;  // -1 when excluded
    std::vector<std::vector<int>> cells;
    int radius = -1;  // certified locality radius, -1 until certified

    bool included(int v) const { return cell_of[v] >= 0; }
    std::vector<int> included_vertices() const;
};

struct Exhaustion {
    std::vector<ExhaustionLevel> levels;
    bool forced_top = false;  // schedule ran out before covering the graph

    int level_count() const { return static_cast<int>(levels.size()); }
    int top() const { return level_count() - 1; }
    /// Cell id and members of v at level index `level` (0-based); throws NotIncluded.
    std::pair<int, const std::vector<int>&> cell_of(int level, int v) const;
    /// Keeps only the listed level indices (strictly increasing; the top is always kept).
    Exhaustion thinned(const std::vector<int>& keep) const;

    nlohmann::json to_json() const;
};

Exhaustion build_exhaustion(const Substrate& g, Tape& tape, const ExhaustionSchedule& schedule);

/// Measured locality radius of level `level`: the smallest R such that
/// re-randomising every label outside the R-ball of a probe vertex leaves its
/// cell unchanged, maximised over `probes` probe vertices and `reseeds`
/// re-randomisations each.  Throws fiid::Error if even the full ball fails.
int locality_radius_certificate(const Substrate& g, const Tape& tape,
                                const ExhaustionSchedule& schedule, const Exhaustion& ex,
                                int level, int probes = 20, int reseeds = 2,
                                std::uint64_t probe_seed = 1);

/// Certifies every level; radii are made non-decreasing by a running maximum.
void certify_radii(const Substrate& g, const Tape& tape, const ExhaustionSchedule& schedule,
                   Exhaustion& ex, int probes = 20, int reseeds = 2);

/// Long-format CSV of cell-size counts: level,cell_size,count.
void write_cell_histogram_csv(const Exhaustion& ex, std::ostream& os);

}  // namespace fiid
