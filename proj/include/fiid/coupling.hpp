#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "fiid/models.hpp"

namespace fiid {

/// Monotone coupling of two laws on the same ground set: every support
/// pair (x, y) has y ⊆ x, x drawn from `upper`, y from `lower`.
struct CouplingTable {
    DistTable upper;
    DistTable lower;
    std::map<std::pair<Mask, Mask>, double> joint;

    /// Marginals within 1e-10, containment on the support, total mass one.
    /// Throws DominationFails on a containment breach, Error otherwise.
    void audit() const;
    nlohmann::json to_json() const;
};

struct DominationResult {
    bool dominates = false;
    double flow = 0.0;
    /// When !dominates: minimal generators of an up-set A with upper(A) < lower(A).
    std::vector<Mask> witness;
    double upper_mass = 0.0;
    double lower_mass = 0.0;

    /// Whether `m` lies in the witness up-set.
    bool in_witness(Mask m) const;
};

/// Support pairs above this count are refused.
inline constexpr std::size_t kMaxCouplingArcs = std::size_t{1} << 22;

DominationResult check_domination(const DistTable& upper, const DistTable& lower);

/// Mask-level variants used by the cascade kernels (same ground, bit i = site i).
DominationResult check_domination(const MaskTable& upper, const MaskTable& lower);
std::map<std::pair<Mask, Mask>, double> monotone_flow(const MaskTable& upper,
                                                      const MaskTable& lower);

/// Audit of a mask-level joint table against its marginals (see CouplingTable::audit).
void audit_joint(const MaskTable& upper, const MaskTable& lower,
                 const std::map<std::pair<Mask, Mask>, double>& joint);

/// Canonical flow coupling; audited on every construction.
CouplingTable build_coupling(const DistTable& upper, const DistTable& lower);

/// Test hook: when set, support arcs are built in the wrong direction
/// (x -> y for x ⊆ y) so the audit must reject the result.
void set_coupling_mutation(bool flip);
bool coupling_mutation();

enum class Side { Upper, Lower };

/// Draws the other coordinate given one side by inverse transform over the
/// pairs in key order.  Throws ZeroMassCondition when the condition has no mass.
Mask conditional_sample(const std::map<std::pair<Mask, Mask>, double>& joint, Side given,
                        Mask value, double u);
Config conditional_sample(const CouplingTable& c, Side given, const Config& value, Tape& tape,
                          const SubgraphRef& cell, const std::string& phase = "couple");

/// Tables for one step of the cascade on a big cell K with sub-cells H_i.
struct RestrictExtend {
    DistTable upper;      // oriented by the model's direction
    DistTable lower;
    DistTable product;    // ⊗ μ_{H_i} on the common ground
    DistTable restricted; // μ_K restricted to the common ground
    DistTable full;       // μ_K on all of K's sites
};

RestrictExtend restrict_extend(const ModelSpec& model, const SubgraphRef& big_cell,
                               const std::vector<SubgraphRef>& sub_cells);

}  // namespace fiid
