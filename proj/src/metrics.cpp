#include "fiid/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include <Eigen/Dense>

#include "fiid/errors.hpp"

namespace fiid {

double MarginalTable::of(int parent_edge) const {
    auto it = std::lower_bound(edges.begin(), edges.end(), parent_edge);
    if (it == edges.end() || *it != parent_edge)
        throw std::out_of_range("edge " + std::to_string(parent_edge) + " is not in the table");
    return p[it - edges.begin()];
}

void MarginalTable::write_csv(std::ostream& os) const {
    os << "edge,u,v,marginal\n";
    for (std::size_t i = 0; i < edges.size(); ++i) {
        const Edge& e = parent->edge(edges[i]);
        os << edges[i] << ',' << e.u << ',' << e.v << ',' << p[i] << '\n';
    }
}

MarginalTable kirchhoff_marginals(const SubgraphRef& cell, const std::vector<double>& weights) {
    if (!cell.connected()) throw NotConnected("kirchhoff_marginals needs a connected cell");
    const int n = cell.size();
    if (n > kMaxKirchhoffVertices)
        throw RefuseTooLarge("kirchhoff_marginals over " + std::to_string(n) + " vertices");
    if (!weights.empty() && weights.size() != cell.edges.size())
        throw std::invalid_argument("one weight per cell edge expected");

    MarginalTable t;
    t.parent = cell.parent;
    t.edges = cell.edges;
    if (n == 1) return t;

    // Reduced Laplacian: vertex n-1 is grounded.
    Eigen::MatrixXd L = Eigen::MatrixXd::Zero(n - 1, n - 1);
    auto w_of = [&](std::size_t i) { return weights.empty() ? 1.0 : weights[i]; };
    for (std::size_t i = 0; i < cell.edges.size(); ++i) {
        const Edge& e = cell.parent->edge(cell.edges[i]);
        int a = cell.local_index(e.u), b = cell.local_index(e.v);
        double w = w_of(i);
        if (a < n - 1) L(a, a) += w;
        if (b < n - 1) L(b, b) += w;
        if (a < n - 1 && b < n - 1) {
            L(a, b) -= w;
            L(b, a) -= w;
        }
    }
    Eigen::LLT<Eigen::MatrixXd> llt(L);
    if (llt.info() != Eigen::Success) throw Error("reduced Laplacian is not positive definite");
    const Eigen::MatrixXd G = llt.solve(Eigen::MatrixXd::Identity(n - 1, n - 1));
    auto g = [&](int a, int b) { return a == n - 1 || b == n - 1 ? 0.0 : G(a, b); };

    for (std::size_t i = 0; i < cell.edges.size(); ++i) {
        const Edge& e = cell.parent->edge(cell.edges[i]);
        int a = cell.local_index(e.u), b = cell.local_index(e.v);
        double r = g(a, a) + g(b, b) - 2 * g(a, b);
        t.p.push_back(std::clamp(w_of(i) * r, 0.0, 1.0));
        t.checksum += t.p.back();
    }
    if (weights.empty() && std::fabs(t.checksum - (n - 1)) > 1e-9)
        throw Error("Kirchhoff checksum " + std::to_string(t.checksum) + " differs from " +
                    std::to_string(n - 1));
    return t;
}

nlohmann::json TvEstimate::to_json() const {
    return {{"tv_estimate", estimate}, {"stderr", stderr_}, {"bias_scale", bias}, {"n_samples", n}};
}

void TvEstimate::write_csv(std::ostream& os) const {
    os << "tv_estimate,stderr,n_samples\n" << estimate << ',' << stderr_ << ',' << n << '\n';
}

TvEstimate estimate_tv(const std::vector<Config>& samples, const DistTable& oracle) {
    if (oracle.mass.empty()) throw std::invalid_argument("oracle law is empty");
    if (samples.empty()) throw std::invalid_argument("no samples");
    std::map<Mask, double> freq;
    for (const auto& c : samples) {
        for (int s : c.members)
            if (std::find(oracle.ground.begin(), oracle.ground.end(), s) == oracle.ground.end())
                throw std::invalid_argument("sample site " + std::to_string(s) +
                                            " is outside the oracle's ground set");
        freq[oracle.mask_of(c)] += 1;
    }
    TvEstimate e;
    e.n = samples.size();
    const double n = static_cast<double>(e.n);
    for (auto& [m, f] : freq) f /= n;
    std::map<Mask, std::pair<double, double>> both;  // (empirical, oracle)
    for (const auto& [m, f] : freq) both[m].first = f;
    for (const auto& [m, p] : oracle.mass) both[m].second = p;
    double tv = 0, mean = 0, second = 0;
    for (const auto& [m, fp] : both) {
        auto [f, p] = fp;
        tv += std::fabs(f - p);
        double s = f > p ? 1.0 : f < p ? -1.0 : 0.0;
        mean += s * f;
        second += s * s * f;
        e.bias += std::sqrt(p * (1 - p) / n);
    }
    e.estimate = tv / 2;
    e.stderr_ = 0.5 * std::sqrt(std::max(0.0, second - mean * mean) / n);
    e.bias /= 2;
    return e;
}

TransportReport mass_transport_check(const Substrate& g, const PairFunction& f) {
    const int n = g.vertex_count();
    TransportReport r;
    r.sent.assign(n, 0.0);
    r.received.assign(n, 0.0);
    for (int x = 0; x < n; ++x)
        for (int y = 0; y < n; ++y) {
            double v = f(x, y);
            if (v < 0) throw std::invalid_argument("transport mass must be non-negative");
            r.forward += v;
            r.sent[x] += v;
        }
    for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x) {
            double v = f(x, y);
            r.backward += v;
            r.received[y] += v;
        }
    const long double scale = std::max<long double>(1, std::fabs(r.forward));
    r.balanced = std::fabs(r.forward - r.backward) <= 1e-12L * scale;
    return r;
}

bool RootBalance::consistent(double z) const {
    return std::fabs(mean_gap) <= z * stderr_ + 1e-12;
}

RootBalance root_balance(const std::vector<TransportReport>& reports, int root) {
    RootBalance b;
    if (reports.empty()) return b;
    double s = 0, s2 = 0;
    for (const auto& r : reports) {
        double d = r.sent.at(root) - r.received.at(root);
        s += d;
        s2 += d * d;
    }
    const double n = static_cast<double>(reports.size());
    b.mean_gap = s / n;
    b.stderr_ = n > 1 ? std::sqrt(std::max(0.0, (s2 - s * s / n) / (n - 1)) / n) : 0;
    return b;
}

PairFunction component_transport(const std::vector<int>& cell_of,
                                 const std::vector<std::vector<int>>& cells,
                                 const std::vector<char>& marked) {
    return [&cell_of, &cells, &marked](int x, int y) {
        if (!marked[x] || cell_of[x] < 0 || cell_of[x] != cell_of[y]) return 0.0;
        return 1.0 / static_cast<double>(cells[cell_of[x]].size());
    };
}

}  // namespace fiid
