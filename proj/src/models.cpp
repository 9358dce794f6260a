#include "fiid/models.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fiid/errors.hpp"

namespace fiid {

std::string to_string(Family f) {
    switch (f) {
        case Family::UstFree: return "ust_free";
        case Family::UstWired: return "ust_wired";
        case Family::Ising: return "ising";
        case Family::FK: return "fk";
    }
    return "?";
}

std::string to_string(Boundary b) {
    switch (b) {
        case Boundary::Plus: return "plus";
        case Boundary::Minus: return "minus";
        case Boundary::Free: return "free";
        case Boundary::Wired: return "wired";
    }
    return "?";
}

namespace {
Boundary boundary_from(const std::string& s) {
    if (s == "plus") return Boundary::Plus;
    if (s == "minus") return Boundary::Minus;
    if (s == "free") return Boundary::Free;
    if (s == "wired") return Boundary::Wired;
    throw std::invalid_argument("unknown boundary '" + s + "'");
}
}  // namespace

ModelSpec ModelSpec::from_json(const nlohmann::json& j) {
    std::string fam = j.at("family").get<std::string>();
    ModelSpec m;
    if (fam == "ust_free" || fam == "fsf") {
        m = ust_free();
    } else if (fam == "ust_wired" || fam == "wsf") {
        m = ust_wired();
    } else if (fam == "ising") {
        m = ising(j.at("beta").get<double>(), boundary_from(j.value("boundary", "plus")));
    } else if (fam == "fk") {
        m = fk(j.at("p").get<double>(), j.value("q", 1.0),
               boundary_from(j.value("boundary", "wired")));
    } else {
        throw std::invalid_argument("unknown model family '" + fam + "'");
    }
    m.validate();
    return m;
}

void ModelSpec::validate() const {
    switch (family) {
        case Family::UstFree:
            if (boundary != Boundary::Free) throw std::invalid_argument("free UST needs free boundary");
            break;
        case Family::UstWired:
            if (boundary != Boundary::Wired)
                throw std::invalid_argument("wired UST needs wired boundary");
            break;
        case Family::Ising:
            if (!(beta >= 0) || !std::isfinite(beta)) throw std::invalid_argument("beta must be >= 0");
            if (boundary == Boundary::Wired)
                throw std::invalid_argument("Ising boundary is plus, minus or free");
            break;
        case Family::FK:
            if (!(p >= 0 && p <= 1)) throw std::invalid_argument("FK p must lie in [0,1]");
            if (!(q >= 1) || !std::isfinite(q)) throw std::invalid_argument("FK q must be >= 1");
            if (boundary != Boundary::Free && boundary != Boundary::Wired)
                throw std::invalid_argument("FK boundary is free or wired");
            break;
    }
}

Direction ModelSpec::direction() const {
    switch (family) {
        case Family::UstFree: return Direction::Decreasing;
        case Family::UstWired: return Direction::Increasing;
        case Family::Ising:
            if (boundary == Boundary::Plus) return Direction::Decreasing;
            if (boundary == Boundary::Minus) return Direction::Increasing;
            return Direction::None;
        case Family::FK:
            // Positive association: wired boundary conditions lose mass as the
            // domain grows, free ones gain it.
            return boundary == Boundary::Wired ? Direction::Decreasing : Direction::Increasing;
    }
    return Direction::None;
}

ModelSpec ModelSpec::dual() const {
    ModelSpec d = *this;
    switch (family) {
        case Family::UstFree: return ust_wired();
        case Family::UstWired: return ust_free();
        case Family::Ising:
            if (boundary == Boundary::Plus) d.boundary = Boundary::Minus;
            else if (boundary == Boundary::Minus) d.boundary = Boundary::Plus;
            return d;
        case Family::FK:
            d.boundary = boundary == Boundary::Wired ? Boundary::Free : Boundary::Wired;
            return d;
    }
    return d;
}

std::string ModelSpec::name() const {
    switch (family) {
        case Family::UstFree: return "ust_free";
        case Family::UstWired: return "ust_wired";
        case Family::Ising: return "ising(beta=" + std::to_string(beta) + "," + to_string(boundary) + ")";
        case Family::FK:
            return "fk(p=" + std::to_string(p) + ",q=" + std::to_string(q) + "," +
                   to_string(boundary) + ")";
    }
    return "?";
}

nlohmann::json ModelSpec::to_json() const {
    nlohmann::json j{{"family", to_string(family)}, {"boundary", to_string(boundary)}};
    if (family == Family::Ising) j["beta"] = beta;
    if (family == Family::FK) {
        j["p"] = p;
        j["q"] = q;
    }
    return j;
}

bool Config::contains(int site) const {
    return std::binary_search(members.begin(), members.end(), site);
}

// --- DistTable ---------------------------------------------------------------

double DistTable::total() const {
    double s = 0;
    for (const auto& [m, p] : mass) s += p;
    return s;
}

void DistTable::normalize() {
    double z = total();
    if (!(z > 0)) throw ZeroMassCondition("cannot normalise a zero-mass table");
    for (auto& [m, p] : mass) p /= z;
}

double DistTable::prob(Mask m) const {
    auto it = mass.find(m);
    return it == mass.end() ? 0.0 : it->second;
}

Mask DistTable::mask_of(const Config& c) const {
    Mask m = 0;
    for (std::size_t i = 0; i < ground.size(); ++i)
        if (c.contains(ground[i])) m |= Mask{1} << i;
    return m;
}

Config DistTable::config_of(Mask m) const {
    Config c;
    for (std::size_t i = 0; i < ground.size(); ++i)
        if (m >> i & 1) c.members.push_back(ground[i]);
    std::sort(c.members.begin(), c.members.end());
    return c;
}

DistTable DistTable::marginal(const std::vector<int>& sub_ground) const {
    std::vector<int> pos;
    for (int s : sub_ground) {
        auto it = std::find(ground.begin(), ground.end(), s);
        if (it == ground.end()) throw std::invalid_argument("marginal site outside the ground set");
        pos.push_back(static_cast<int>(it - ground.begin()));
    }
    DistTable out;
    out.ground = sub_ground;
    for (const auto& [m, p] : mass) {
        Mask r = 0;
        for (std::size_t j = 0; j < pos.size(); ++j)
            if (m >> pos[j] & 1) r |= Mask{1} << j;
        out.mass[r] += p;
    }
    return out;
}

void DistTable::check() const {
    for (const auto& [m, p] : mass)
        if (!(p >= 0)) throw Error("negative or NaN probability in table");
    if (std::abs(total() - 1.0) > 1e-12) throw Error("table does not sum to one");
}

// --- Enumeration -------------------------------------------------------------

int site_count(const ModelSpec& m, const CellShape& s) {
    return m.edge_model() ? static_cast<int>(s.edges.size()) : s.n;
}

namespace {

// Union-find with rollback (union by size, no path compression).
struct RollbackDsu {
    std::vector<int> parent, size;
    std::vector<std::pair<int, int>> history;
    explicit RollbackDsu(int n) : parent(n), size(n, 1) {
        std::iota(parent.begin(), parent.end(), 0);
    }
    int find(int x) const {
        while (parent[x] != x) x = parent[x];
        return x;
    }
    bool unite(int a, int b) {
        a = find(a);
        b = find(b);
        if (a == b) return false;
        if (size[a] < size[b]) std::swap(a, b);
        parent[b] = a;
        size[a] += size[b];
        history.push_back({a, b});
        return true;
    }
    void rollback() {
        auto [a, b] = history.back();
        history.pop_back();
        parent[b] = b;
        size[a] -= size[b];
    }
};

void check_enum_size(int sites) {
    if (sites > kMaxEnumSites)
        throw RefuseTooLarge("enumeration over " + std::to_string(sites) +
                             " sites exceeds the cap of " + std::to_string(kMaxEnumSites));
}

// Visits every forest of the shape (as an edge mask) with its DSU state.
template <class F>
void for_each_forest(const CellShape& s, F&& visit) {
    RollbackDsu dsu(s.n);
    const int m = static_cast<int>(s.edges.size());
    auto rec = [&](auto&& self, int i, Mask chosen) -> void {
        if (i == m) {
            visit(chosen, dsu);
            return;
        }
        self(self, i + 1, chosen);
        if (dsu.unite(s.edges[i].first, s.edges[i].second)) {
            self(self, i + 1, chosen | Mask{1} << i);
            dsu.rollback();
        }
    };
    rec(rec, 0, 0);
}

MaskTable ust_table(const CellShape& s, bool wired) {
    MaskTable t;
    if (wired && !s.boundary_empty()) {
        for_each_forest(s, [&](Mask f, const RollbackDsu& dsu) {
            std::vector<double> w(s.n, 0.0);
            for (int v = 0; v < s.n; ++v) w[dsu.find(v)] += s.boundary[v];
            double weight = 1.0;
            for (int v = 0; v < s.n; ++v)
                if (dsu.find(v) == v) weight *= w[v];
            if (weight > 0) t[f] = weight;
        });
    } else {
        for_each_forest(s, [&](Mask f, const RollbackDsu& dsu) {
            if (dsu.size[dsu.find(0)] == s.n) t[f] = 1.0;
        });
    }
    if (t.empty()) throw NotConnected("cell has no spanning tree");
    return t;
}

int field_of(Boundary b) {
    return b == Boundary::Plus ? 1 : b == Boundary::Minus ? -1 : 0;
}

MaskTable ising_table(const CellShape& s, double beta, int field) {
    std::vector<double> logw(std::size_t{1} << s.n);
    for (Mask m = 0; m < logw.size(); ++m) {
        double e = 0;
        auto spin = [&](int v) { return (m >> v & 1) ? 1.0 : -1.0; };
        for (auto [u, v] : s.edges) e += spin(u) * spin(v);
        for (int v = 0; v < s.n; ++v) e += field * s.boundary[v] * spin(v);
        logw[m] = beta * e;
    }
    double mx = *std::max_element(logw.begin(), logw.end());
    MaskTable t;
    for (Mask m = 0; m < logw.size(); ++m) t[m] = std::exp(logw[m] - mx);
    return t;
}

MaskTable fk_table(const CellShape& s, double p, double q, bool wired) {
    const int m = static_cast<int>(s.edges.size());
    MaskTable t;
    for (Mask w = 0; w < (Mask{1} << m); ++w) {
        RollbackDsu dsu(s.n);
        if (wired) {
            int first = -1;
            for (int v = 0; v < s.n; ++v)
                if (s.boundary[v] > 0) {
                    if (first < 0) first = v;
                    else dsu.unite(first, v);
                }
        }
        int open = 0;
        for (int i = 0; i < m; ++i)
            if (w >> i & 1) {
                ++open;
                dsu.unite(s.edges[i].first, s.edges[i].second);
            }
        int k = 0;
        for (int v = 0; v < s.n; ++v) k += dsu.find(v) == v;
        double weight = std::pow(p, open) * std::pow(1 - p, m - open) * std::pow(q, k);
        if (weight > 0) t[w] = weight;
    }
    return t;
}

void normalize(MaskTable& t) {
    double z = 0;
    for (const auto& [m, p] : t) z += p;
    if (!(z > 0)) throw ZeroMassCondition("zero-mass table");
    for (auto& [m, p] : t) p /= z;
}

}  // namespace

MaskTable exact_table(const ModelSpec& m, const CellShape& s) {
    m.validate();
    check_enum_size(site_count(m, s));
    MaskTable t;
    switch (m.family) {
        case Family::UstFree: t = ust_table(s, false); break;
        case Family::UstWired: t = ust_table(s, true); break;
        case Family::Ising: t = ising_table(s, m.beta, field_of(m.boundary)); break;
        case Family::FK: t = fk_table(s, m.p, m.q, m.boundary == Boundary::Wired); break;
    }
    normalize(t);
    return t;
}

Mask sample_table(const MaskTable& t, double u) {
    if (t.empty()) throw ZeroMassCondition("sampling from an empty table");
    double acc = 0;
    for (const auto& [m, p] : t) {
        acc += p;
        if (u < acc) return m;
    }
    // Rounding slack: the last atom with positive mass.
    for (auto it = t.rbegin(); it != t.rend(); ++it)
        if (it->second > 0) return it->first;
    return t.rbegin()->first;
}

DistTable enumerate_exact(const ModelSpec& m, const SubgraphRef& cell) {
    if (!cell.connected()) throw NotConnected("cell is not connected");
    auto view = make_view(cell);
    DistTable d;
    d.ground = m.edge_model() ? view.parent_edge : view.parent_vertex;
    d.mass = exact_table(m, view.shape);
    return d;
}

}  // namespace fiid
