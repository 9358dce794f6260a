#pragma once

#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "fiid/coupling.hpp"
#include "fiid/models.hpp"

namespace fiid {

using Joint = std::map<std::pair<Mask, Mask>, double>;

/// Sub-cells of a marked cell: components of the marked vertices, with
/// their own shapes (boundary counts as seen from the whole substrate).
struct SubCells {
    std::vector<std::vector<int>> vertices;  // local (cell) ids, sorted
    std::vector<CellShape> shapes;
    std::vector<std::vector<int>> sites;     // cell-local site ids of each sub-cell
};
SubCells split_marked(const ModelSpec& m, const CellShape& cell);

/// Conditional extension from a restriction on S to all sites of the cell.
struct Extension {
    /// Table route: restriction mask -> (full mask, probability), in key order.
    std::map<Mask, std::vector<std::pair<Mask, double>>> table;
    /// Constrained Wilson route for spanning trees too large to tabulate.
    bool wilson = false;
    bool wired = false;
    int sites = 0;

    /// Local site indicators of a draw consistent with `restriction`.
    std::vector<char> sample(const CellView& view, const std::vector<int>& S, Mask restriction,
                             TapeView& tape) const;
};

/// One step of the monotone cascade for a canonical (cell, sub-cells) class.
struct CascadeKernel {
    std::vector<int> S;  // restriction ground: cell-local site ids, ascending
    Side given = Side::Upper;
    MaskTable product;     // ⊗ μ_{H_i} on S
    MaskTable restricted;  // μ_K restricted to S
    Joint joint;           // upper -> lower over S
    Extension extension;
};

/// Pair law of (upper chain, lower chain) on a cell: key = x⁺ | (~x⁻ << m),
/// so that the sandwich order is plain containment of keys.
struct PairLaw {
    int m = 0;  // number of sites
    MaskTable table;
    bool diagonal = false;  // upper and lower laws coincide on this cell
};

inline Mask encode_pair(Mask plus, Mask minus, int m) {
    const Mask full = m >= 64 ? ~Mask{0} : (Mask{1} << m) - 1;
    return plus | ((~minus & full) << m);
}
inline Mask pair_plus(Mask key, int m) { return key & ((Mask{1} << m) - 1); }
inline Mask pair_minus(Mask key, int m) {
    return ~(key >> m) & ((Mask{1} << m) - 1);
}

/// One step of the sandwich for a canonical (cell, sub-cells) class.
struct SandwichKernel {
    std::vector<int> S;
    PairLaw source;  // ⊗ J_{H_i} on S
    PairLaw target;  // J_K restricted to S
    Joint flow;      // encoded source pair -> encoded target pair
    /// Extension of the target pair from S to the cell.
    std::map<Mask, std::vector<std::pair<Mask, double>>> pair_extension;
    bool diagonal = false;  // extension shared by both chains
    Extension shared;       // used when diagonal
    PairLaw full;           // J_K on all sites (empty when diagonal and too large)
};

/// Canonical-form memo: one deterministic value per key, first writer wins.
template <class T>
class KernelCache {
public:
    template <class Build>
    std::shared_ptr<const T> get(const std::string& key, Build&& build) {
        {
            std::lock_guard lk(mu_);
            auto it = map_.find(key);
            if (it != map_.end()) return it->second;
        }
        auto value = std::make_shared<const T>(build());
        std::lock_guard lk(mu_);
        return map_.emplace(key, value).first->second;
    }
    std::size_t size() const {
        std::lock_guard lk(mu_);
        return map_.size();
    }
    void clear() {
        std::lock_guard lk(mu_);
        map_.clear();
    }

private:
    mutable std::mutex mu_;
    std::map<std::string, std::shared_ptr<const T>> map_;
};

CascadeKernel build_cascade_kernel(const ModelSpec& m, const CellShape& marked);
PairLaw build_pair_law(const ModelSpec& upper, const ModelSpec& lower, const CellShape& cell);
SandwichKernel build_sandwich_kernel(const ModelSpec& upper, const ModelSpec& lower,
                                     const CellShape& marked);

KernelCache<CascadeKernel>& cascade_kernel_cache();
KernelCache<SandwichKernel>& sandwich_kernel_cache();
KernelCache<PairLaw>& pair_law_cache();
/// Drops every memoised kernel (tests toggling the mutation hook need this).
void clear_kernel_caches();

/// Whether the upper and lower models agree on this cell (empty boundary
/// for spanning trees; beta = 0 for Ising).
bool laws_coincide(const ModelSpec& upper, const ModelSpec& lower, const CellShape& cell);

}  // namespace fiid
