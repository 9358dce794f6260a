#pragma once

#include <functional>
#include <ostream>
#include <vector>

#include <json.hpp>

#include "fiid/models.hpp"
#include "fiid/substrate.hpp"

namespace fiid {

/// Exact UST edge inclusion probabilities of a connected cell.
struct MarginalTable {
    const Substrate* parent = nullptr;
    std::vector<int> edges;  // parent edge ids
    std::vector<double> p;
    double checksum = 0;     // Σ p, equals (vertices - 1) for unit weights

    double of(int parent_edge) const;
    /// edge,u,v,marginal
    void write_csv(std::ostream& os) const;
};

inline constexpr int kMaxKirchhoffVertices = 400;

/// P(e ∈ T) = w(e)·R_eff(e) through the reduced Laplacian; `weights` follows
/// cell.edges (empty = unit weights).  Throws NotConnected / RefuseTooLarge.
MarginalTable kirchhoff_marginals(const SubgraphRef& cell, const std::vector<double>& weights = {});

struct TvEstimate {
    double estimate = 0;
    double stderr_ = 0;  // delta-method standard error
    double bias = 0;     // Σ sqrt(p(1-p)/n) / 2, the scale of the plug-in's upward bias
    std::size_t n = 0;
    nlohmann::json to_json() const;
    /// tv_estimate,stderr,n_samples
    void write_csv(std::ostream& os) const;
};

/// Plug-in TV between the empirical law of `samples` and `oracle`.
TvEstimate estimate_tv(const std::vector<Config>& samples, const DistTable& oracle);

using PairFunction = std::function<double(int x, int y)>;

struct TransportReport {
    long double forward = 0;   // Σ_x Σ_y f(x, y)
    long double backward = 0;  // Σ_y Σ_x f(x, y)
    std::vector<double> sent;
    std::vector<double> received;
    bool balanced = false;     // totals agree to relative 1e-12
};

TransportReport mass_transport_check(const Substrate& g, const PairFunction& f);

/// Mean of sent(o) - received(o) over independent reports, with its standard
/// error; on transitive substrates with invariant f the mean is zero.
struct RootBalance {
    double mean_gap = 0;
    double stderr_ = 0;
    bool consistent(double z = 3) const;
};
RootBalance root_balance(const std::vector<TransportReport>& reports, int root);

/// The 1/k transport: every marked vertex sends 1/|P(x)| to each vertex of
/// its cell P(x) in `cells` (cell index per vertex, -1 = none).
PairFunction component_transport(const std::vector<int>& cell_of,
                                 const std::vector<std::vector<int>>& cells,
                                 const std::vector<char>& marked);

}  // namespace fiid
