#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "fiid/substrate.hpp"
#include "fiid/tape.hpp"

namespace fiid {

enum class Family { UstFree, UstWired, Ising, FK };
enum class Boundary { Plus, Minus, Free, Wired };
enum class Direction { Decreasing, Increasing, None };

struct ModelSpec {
    Family family = Family::UstFree;
    double beta = 0.0;
    double p = 0.5;
    double q = 1.0;
    Boundary boundary = Boundary::Free;

    static ModelSpec ust_free() { return {Family::UstFree, 0, 0, 1, Boundary::Free}; }
    static ModelSpec ust_wired() { return {Family::UstWired, 0, 0, 1, Boundary::Wired}; }
    static ModelSpec ising(double beta, Boundary b) { return {Family::Ising, beta, 0, 1, b}; }
    static ModelSpec fk(double p, double q, Boundary b) { return {Family::FK, 0, p, q, b}; }
    static ModelSpec from_json(const nlohmann::json& j);

    void validate() const;
    bool edge_model() const { return family != Family::Ising; }
    Direction direction() const;
    /// The opposite boundary condition of the same family (free <-> wired, plus <-> minus).
    ModelSpec dual() const;
    std::string name() const;
    nlohmann::json to_json() const;
};

std::string to_string(Family f);
std::string to_string(Boundary b);

/// A configuration: the sorted parent site ids that are present.
struct Config {
    std::vector<int> members;
    bool contains(int site) const;
    bool operator==(const Config&) const = default;
    nlohmann::json to_json() const { return members; }
};

using Mask = std::uint64_t;
using MaskTable = std::map<Mask, double>;

/// Exact law over subsets of a ground set; bit i of a key is ground[i].
struct DistTable {
    std::vector<int> ground;
    MaskTable mass;

    double total() const;
    void normalize();
    double prob(Mask m) const;
    Mask mask_of(const Config& c) const;
    Config config_of(Mask m) const;
    /// Marginal on a subset of the ground set (given as ground ids).
    DistTable marginal(const std::vector<int>& sub_ground) const;
    void check() const;  // probabilities >= 0, total 1 within 1e-12
};

/// Enumeration caps: ground sets above these are refused.
inline constexpr int kMaxEnumSites = 20;

// --- Shape-level primitives (local coordinates) -----------------------------

int site_count(const ModelSpec& m, const CellShape& s);

/// Exact law over all sites of the shape by brute-force enumeration.
MaskTable exact_table(const ModelSpec& m, const CellShape& s);

/// Law of T ∩ S for T the (free or wired) uniform spanning tree of the shape,
/// computed through the matrix-tree theorem; bit j of a key is sites[j].
MaskTable ust_restriction_law(const CellShape& s, bool wired, std::span<const int> sites);

/// Per-edge constraint for conditioned sampling: 0 free, +1 forced in, -1 forced out.
using EdgeConstraint = std::vector<signed char>;

/// Wilson's algorithm on the shape (wired roots at w) with forced edges
/// contracted and forbidden ones deleted.  Tape reads happen at
/// tape_vertex[x] for the walker at local vertex x.
std::vector<char> wilson_sample(const CellShape& s, bool wired,
                                const std::vector<int>& tape_vertex, TapeView& tape,
                                const EdgeConstraint& constraint = {});

/// Heat-bath decision source for CFTP: returns U < p for the uniform U
/// attached to (parent vertex, time index).
using HeatBathDecider = std::function<bool(int vertex, std::uint64_t time, double p)>;

HeatBathDecider tape_decider(TapeView& tape);

struct CftpResult {
    std::vector<char> plus;  // per local vertex
    std::uint64_t epoch = 0;
};

/// Monotone coupling from the past over systematic heat-bath sweeps in
/// parent-id order.  `field` is the outside spin (+1, -1, 0 = free) applied
/// through boundary edges; `clamp` fixes spins (+1/-1, 0 = free).
CftpResult cftp_ising(const CellShape& s, double beta, int field,
                      const std::vector<int>& tape_vertex, const HeatBathDecider& decide,
                      std::span<const signed char> clamp = {},
                      std::uint64_t max_epoch = std::uint64_t{1} << 22);

/// Inverse-transform draw from a mask table using one uniform.
Mask sample_table(const MaskTable& t, double u);

/// Exact sample of the model on a view, in local site indices.
std::vector<char> sample_shape(const ModelSpec& m, const CellView& view, TapeView& tape);

// --- Cell-level API ----------------------------------------------------------

DistTable enumerate_exact(const ModelSpec& m, const SubgraphRef& cell);
Config wilson_ust(const SubgraphRef& cell, Boundary boundary, Tape& tape,
                  const std::string& phase = "wilson");
Config cftp_ising(const SubgraphRef& cell, double beta, Boundary boundary, Tape& tape,
                  const std::string& phase = "cftp");
Config sample_exact(const ModelSpec& m, const SubgraphRef& cell, Tape& tape,
                    const std::string& phase = "sample");

}  // namespace fiid
