#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "fiid/cascade.hpp"
#include "fiid/exhaustion.hpp"
#include "fiid/models.hpp"
#include "fiid/substrate.hpp"
#include "fiid/tape.hpp"

namespace fiid {

// --- TV approximation map ----------------------------------------------------

/// φ from a uniform domain of N = 2^alpha slots onto the support of μ: atom k
/// owns a contiguous block of ⌊N μ(m_k)⌋ slots (atoms in mask order), the
/// remaining slots go to `pad` (the full ground set when dominating, the
/// last atom otherwise).
struct MapTable {
    std::vector<int> ground;
    int alpha = 0;
    std::uint64_t N = 1;
    std::vector<Mask> codomain;
    std::vector<double> mu;             // μ of each codomain entry
    std::vector<std::uint64_t> counts;  // floor slots per codomain entry
    int pad = -1;                       // codomain index receiving the padding
    bool dominate = false;
    std::uint64_t assigned = 0;         // Σ counts, padding excluded
    double tv = 0;                      // exact TV(μ, ν∘φ^{-1})

    std::uint64_t padding() const { return N - assigned; }
    /// Codomain index of a domain slot.
    int lookup(std::uint64_t slot) const;
    /// ν∘φ^{-1} as a table over the ground set.
    DistTable pushforward() const;
    nlohmann::json to_json() const;
};

/// Builds φ for a domain of N slots (N must be a power of two, N >= |support|).
/// When `dominate`, the pushforward is verified to dominate μ.
MapTable build_tv_map(const DistTable& mu, std::uint64_t N, bool dominate);

/// Σ_{k<=d} C(n, k).
double count_small_subsets(int n, int d);
/// log2(1/ε) + |H|δ log2(e/δ).
double generation_bound(int H, double delta, double eps);

struct DominatingDraw {
    Mask value = 0;
    std::uint64_t slot = 0;
    int alpha = 0;
    bool padded = false;  // slot fell in the padding block
};

/// A map realising Prop.-style generation: domain 2^alpha with
/// 2^alpha >= (#subsets of size <= δ|H|)/ε.  A point mass needs no bits.
/// Throws SupportCapViolated when μ charges a set larger than δ|H|.
MapTable dominating_map(const DistTable& mu, double delta, double eps);

/// Draws alpha bits for the cell (at its minimum vertex) and maps them.
DominatingDraw dominating_sampler(const SubgraphRef& cell, const DistTable& mu, double delta,
                                  double eps, Tape& tape, const std::string& phase = "fvcode");

// --- Stable matching ---------------------------------------------------------

struct Matching {
    std::vector<std::pair<int, int>> pairs;  // (deficit, surplus), by deficit id
    int radius = 0;                          // largest matched distance
    int rounds = 0;

    std::optional<int> partner(int deficit) const;
};

/// Iterated mutually-nearest matching; preferences are (distance, label, id).
Matching stable_match_bits(const Substrate& g, const std::vector<int>& deficit,
                           const std::vector<int>& surplus,
                           const std::vector<std::uint64_t>& tie_labels);

/// Post-hoc audit: no blocking pair (a, b) closer than both current partners.
bool matching_is_stable(const Substrate& g, const std::vector<int>& deficit,
                        const std::vector<int>& surplus, const Matching& m);

// --- Bit budget --------------------------------------------------------------

struct BitBudget {
    std::uint64_t cap = 0;  // per-vertex total
    std::uint64_t c = 0;    // reallocation threshold
    static BitBudget from_mean(double m_hat);
};

/// Per-vertex bit accounting with matching-based reallocation: a vertex with
/// at most c unused bits draws from its partner among those with at least 2c.
class BitPool {
public:
    BitPool(int vertex_count, std::optional<BitBudget> budget);

    /// Recomputes the deficit/surplus matching from the current usage.
    void rebalance(const Substrate& g, const std::vector<std::uint64_t>& labels);
    /// Charges k bits requested by v; returns the vertex that paid.
    int charge(int v, std::uint64_t k);

    std::uint64_t used(int v) const { return used_[v]; }
    std::optional<std::uint64_t> unused(int v) const;
    const std::vector<std::uint64_t>& usage() const { return used_; }
    const Matching& matching() const { return matching_; }
    bool limited() const { return budget_.has_value(); }

private:
    std::optional<BitBudget> budget_;
    std::vector<std::uint64_t> used_;
    std::vector<int> route_;
    Matching matching_;
};

// --- Finite-valued cascade ---------------------------------------------------

struct FvOptions {
    Mode mode = Mode::Exact;
    bool paired = false;
    /// Per-level removal density caps δ_n; missing levels use 1 (no cap).
    std::vector<double> delta;
    std::optional<BitBudget> budget;
    int threads = 1;
    bool dump_maps = false;
    /// Epoch cap of the lazy CFTP in mc mode (enters the precision B_n).
    std::uint64_t max_epoch = std::uint64_t{1} << 12;
};

struct FvLevel {
    int level = 0;  // 1-based
    double epsilon = 0;
    int cells = 0;
    int precision = 0;  // mc mode: bits per heat-bath uniform
    std::uint64_t bits = 0;
    double mean_bits_per_vertex = 0;
    int fallbacks = 0;              // cells whose removal law broke the δ cap
    int conditional_fallbacks = 0;  // realized state had zero mass in the kernel
    int padded = 0;                 // draws landing in a padding block
    std::vector<double> removal_density;  // per cell, |R| / |H|
    std::vector<std::uint64_t> cell_bits;
    std::vector<double> cell_bound;       // exact mode: generation bound per cell
    double disagreement = -1;             // paired: fraction of roots with ω' ≠ ω on their cell
    int match_radius = 0;
    int matched = 0;
    std::vector<char> state;  // ω'_n, per site (1 outside Γ_n)
    std::vector<char> exact;  // ω_n when paired
};

struct FvTrace {
    ModelSpec model;
    Mode mode = Mode::Exact;
    bool paired = false;
    int site_total = 0;
    std::vector<std::vector<int>> ground;
    std::vector<FvLevel> levels;
    std::vector<std::uint64_t> bits_per_vertex;  // final pool usage
    nlohmann::json maps = nlohmann::json::array();

    int level_count() const { return static_cast<int>(levels.size()); }
    double total_bits_per_vertex() const;
    /// Nesting ω'_{n+1} ⊆ ω'_n and per-cell spend within the generation bound.
    void check_invariants() const;
    nlohmann::json to_json() const;
    /// level,epsilon,cells,mean_bits_per_vertex,disagreement_rate,fallback_rate
    void write_csv(std::ostream& os) const;
};

FvTrace fv_cascade_run(const Substrate& g, const Exhaustion& ex, const ModelSpec& model,
                       Tape& tape, const FvOptions& opt = {});

/// δ_n = 2 × 99th percentile of pilot removal densities, capped at 1.
std::vector<double> delta_from_pilot(const std::vector<FvTrace>& pilot);
double mean_total_bits(const std::vector<FvTrace>& runs);

/// Level indices kept so that the proxy P(o ∈ ω_n \ ω) <= 4^{-n} holds for the
/// kept sequence (ω = top level); the top is always kept.
struct Thinning {
    std::vector<int> keep;
    std::vector<double> proxy;  // per original level
};
Thinning thin_levels(const std::vector<CascadeTrace>& pilot);

/// Summability reading of a per-level spend series.
struct SpendSeries {
    std::vector<double> per_level;
    std::vector<double> partial;
    double last_share = 0;     // last increment / total
    double fit_c = 0;          // least-squares C in C·n·2^{-n}
    double fit_rss = 0;
    double tail_estimate = 0;  // fitted Σ_{n>L} C·n·2^{-n}
    /// Partial sum at the top within `tol` of the fitted limit.
    bool summable(double tol = 0.05) const {
        return !partial.empty() && tail_estimate <= tol * (partial.back() + tail_estimate);
    }
    nlohmann::json to_json() const;
};
SpendSeries analyze_spend(const std::vector<double>& per_level);

}  // namespace fiid
