#include "fiid/substrate.hpp"

#include <algorithm>
#include <numeric>
#include <queue>
#include <set>

#include "fiid/errors.hpp"

namespace fiid {

Substrate::Substrate(int n, std::vector<Edge> edges, std::optional<Geometry> geom,
                     Percolation mode)
    : n_(n), edges_(std::move(edges)), geometry_(std::move(geom)), mode_(mode) {
    if (n_ < 1) throw std::invalid_argument("substrate needs at least one vertex");
    std::set<std::pair<int, int>> seen;
    std::vector<int> deg(n_, 0);
    for (auto& e : edges_) {
        if (e.u < 0 || e.v < 0 || e.u >= n_ || e.v >= n_)
            throw std::invalid_argument("edge endpoint out of range");
        if (e.u == e.v) throw std::invalid_argument("self-loop at vertex " + std::to_string(e.u));
        if (e.u > e.v) std::swap(e.u, e.v);
        if (!seen.emplace(e.u, e.v).second)
            throw std::invalid_argument("duplicate edge {" + std::to_string(e.u) + "," +
                                        std::to_string(e.v) + "}");
        ++deg[e.u];
        ++deg[e.v];
    }
    adj_offset_.assign(n_ + 1, 0);
    for (int v = 0; v < n_; ++v) adj_offset_[v + 1] = adj_offset_[v] + deg[v];
    adj_.resize(adj_offset_[n_]);
    std::vector<int> fill(adj_offset_.begin(), adj_offset_.end() - 1);
    for (int id = 0; id < edge_count(); ++id) {
        const auto& e = edges_[id];
        adj_[fill[e.u]++] = {e.v, id};
        adj_[fill[e.v]++] = {e.u, id};
    }
    for (int v = 0; v < n_; ++v)
        std::sort(adj_.begin() + adj_offset_[v], adj_.begin() + adj_offset_[v + 1],
                  [](const Incidence& a, const Incidence& b) { return a.vertex < b.vertex; });
    if (!connected()) throw NotConnected("substrate is not connected");
}

Substrate Substrate::grid(std::vector<int> dims, std::vector<bool> wrap, Percolation mode) {
    if (dims.empty()) throw std::invalid_argument("grid needs at least one axis");
    if (wrap.size() != dims.size()) throw std::invalid_argument("dims and wrap differ in length");
    long long n = 1;
    for (std::size_t a = 0; a < dims.size(); ++a) {
        if (dims[a] < 1) throw std::invalid_argument("grid extent must be >= 1");
        if (wrap[a] && dims[a] < 3)
            throw std::invalid_argument("wrapped axis needs extent >= 3");
        n *= dims[a];
    }
    if (n > (1 << 26)) throw std::invalid_argument("grid too large");
    std::vector<long long> stride(dims.size(), 1);
    for (std::size_t a = 1; a < dims.size(); ++a) stride[a] = stride[a - 1] * dims[a - 1];
    std::vector<Edge> edges;
    std::vector<int> coord(dims.size(), 0);
    for (int v = 0; v < n; ++v) {
        long long rem = v;
        for (std::size_t a = 0; a < dims.size(); ++a) {
            coord[a] = static_cast<int>(rem % dims[a]);
            rem /= dims[a];
        }
        for (std::size_t a = 0; a < dims.size(); ++a) {
            int c = coord[a] + 1;
            if (c == dims[a]) {
                if (!wrap[a]) continue;
                c = 0;
            }
            int u = static_cast<int>(v + (c - coord[a]) * stride[a]);
            edges.push_back({std::min(u, v), std::max(u, v)});
        }
    }
    return Substrate(static_cast<int>(n), std::move(edges), Geometry{dims, wrap}, mode);
}

Substrate Substrate::from_edges(int n, std::vector<Edge> edges, Percolation mode) {
    return Substrate(n, std::move(edges), std::nullopt, mode);
}

namespace {
Percolation parse_mode(const nlohmann::json& j) {
    if (!j.contains("mode")) return Percolation::Edge;
    auto m = j.at("mode").get<std::string>();
    if (m == "edge") return Percolation::Edge;
    if (m == "vertex") return Percolation::Vertex;
    throw std::invalid_argument("unknown percolation mode '" + m + "'");
}
}  // namespace

Substrate Substrate::from_json(const nlohmann::json& j) {
    auto mode = parse_mode(j);
    if (j.contains("dims")) {
        auto dims = j.at("dims").get<std::vector<int>>();
        std::vector<bool> wrap(dims.size(), false);
        if (j.contains("wrap")) wrap = j.at("wrap").get<std::vector<bool>>();
        return grid(dims, wrap, mode);
    }
    int n = j.at("n").get<int>();
    std::vector<Edge> edges;
    for (const auto& e : j.at("edges")) edges.push_back({e.at(0).get<int>(), e.at(1).get<int>()});
    return from_edges(n, std::move(edges), mode);
}

nlohmann::json Substrate::to_json() const {
    nlohmann::json j;
    if (geometry_) {
        j["dims"] = geometry_->dims;
        j["wrap"] = geometry_->wrap;
    } else {
        j["n"] = n_;
        auto arr = nlohmann::json::array();
        for (const auto& e : edges_) arr.push_back({e.u, e.v});
        j["edges"] = arr;
    }
    j["mode"] = mode_ == Percolation::Edge ? "edge" : "vertex";
    return j;
}

std::span<const Incidence> Substrate::neighbors(int v) const {
    return {adj_.data() + adj_offset_[v], adj_.data() + adj_offset_[v + 1]};
}

std::optional<int> Substrate::edge_between(int u, int v) const {
    for (const auto& inc : neighbors(u))
        if (inc.vertex == v) return inc.edge;
    return std::nullopt;
}

std::vector<int> Substrate::distances_from(int v) const {
    std::vector<int> dist(n_, -1);
    std::queue<int> q;
    dist[v] = 0;
    q.push(v);
    while (!q.empty()) {
        int x = q.front();
        q.pop();
        for (const auto& inc : neighbors(x))
            if (dist[inc.vertex] < 0) {
                dist[inc.vertex] = dist[x] + 1;
                q.push(inc.vertex);
            }
    }
    return dist;
}

std::vector<int> Substrate::ball(int v, int radius) const {
    auto d = distances_from(v);
    std::vector<int> out;
    for (int x = 0; x < n_; ++x)
        if (d[x] >= 0 && d[x] <= radius) out.push_back(x);
    return out;
}

bool Substrate::connected() const {
    auto d = distances_from(0);
    return std::none_of(d.begin(), d.end(), [](int x) { return x < 0; });
}

int Substrate::diameter() const {
    int best = 0;
    for (int v = 0; v < n_; ++v) {
        auto d = distances_from(v);
        best = std::max(best, *std::max_element(d.begin(), d.end()));
    }
    return best;
}

// ---------------------------------------------------------------------------

SubgraphRef induced(const Substrate& parent, std::vector<int> vertices) {
    std::sort(vertices.begin(), vertices.end());
    vertices.erase(std::unique(vertices.begin(), vertices.end()), vertices.end());
    for (int v : vertices)
        if (v < 0 || v >= parent.vertex_count())
            throw std::out_of_range("vertex id " + std::to_string(v) + " out of range");
    SubgraphRef s;
    s.parent = &parent;
    s.vertices = std::move(vertices);
    std::vector<char> in(parent.vertex_count(), 0);
    for (int v : s.vertices) in[v] = 1;
    for (int id = 0; id < parent.edge_count(); ++id) {
        const auto& e = parent.edge(id);
        if (in[e.u] && in[e.v]) s.edges.push_back(id);
    }
    return s;
}

bool SubgraphRef::contains(int v) const {
    return std::binary_search(vertices.begin(), vertices.end(), v);
}

int SubgraphRef::local_index(int v) const {
    auto it = std::lower_bound(vertices.begin(), vertices.end(), v);
    if (it == vertices.end() || *it != v) return -1;
    return static_cast<int>(it - vertices.begin());
}

std::vector<std::vector<int>> SubgraphRef::components() const {
    std::vector<std::vector<int>> out;
    std::vector<char> seen(vertices.size(), 0);
    for (std::size_t i = 0; i < vertices.size(); ++i) {
        if (seen[i]) continue;
        std::vector<int> comp;
        std::vector<int> stack{static_cast<int>(i)};
        seen[i] = 1;
        while (!stack.empty()) {
            int li = stack.back();
            stack.pop_back();
            comp.push_back(vertices[li]);
            for (const auto& inc : parent->neighbors(vertices[li])) {
                int lj = local_index(inc.vertex);
                if (lj >= 0 && !seen[lj]) {
                    seen[lj] = 1;
                    stack.push_back(lj);
                }
            }
        }
        std::sort(comp.begin(), comp.end());
        out.push_back(std::move(comp));
    }
    return out;
}

std::vector<int> SubgraphRef::boundary_edges() const {
    std::vector<int> out;
    for (int id = 0; id < parent->edge_count(); ++id) {
        const auto& e = parent->edge(id);
        if (contains(e.u) != contains(e.v)) out.push_back(id);
    }
    return out;
}

bool SubgraphRef::complement_connected() const {
    std::vector<int> rest;
    for (int v = 0; v < parent->vertex_count(); ++v)
        if (!contains(v)) rest.push_back(v);
    if (rest.empty()) return true;
    return induced(*parent, rest).components().size() == 1;
}

int WiredClosure::total_wire_weight() const {
    int s = 0;
    for (const auto& w : wire_edges) s += w.weight;
    return s;
}

WiredClosure wire(const SubgraphRef& base) {
    if (base.vertices.empty()) throw std::invalid_argument("cannot wire an empty subgraph");
    WiredClosure wc;
    wc.base = base;
    wc.wire_vertex = base.size();
    for (int v : base.vertices) {
        int w = 0;
        for (const auto& inc : base.parent->neighbors(v))
            if (!base.contains(inc.vertex)) ++w;
        if (w > 0) wc.wire_edges.push_back({v, w});
    }
    return wc;
}

// ---------------------------------------------------------------------------

int CellShape::edge_index(int u, int v) const {
    if (u > v) std::swap(u, v);
    auto it = std::lower_bound(edges.begin(), edges.end(), std::make_pair(u, v));
    if (it == edges.end() || *it != std::make_pair(u, v)) return -1;
    return static_cast<int>(it - edges.begin());
}

bool CellShape::boundary_empty() const {
    return std::all_of(boundary.begin(), boundary.end(), [](int b) { return b == 0; });
}

std::vector<std::vector<int>> CellShape::adjacency() const {
    std::vector<std::vector<int>> adj(n);
    for (auto [u, v] : edges) {
        adj[u].push_back(v);
        adj[v].push_back(u);
    }
    for (auto& a : adj) std::sort(a.begin(), a.end());
    return adj;
}

CellView make_view(const SubgraphRef& cell, std::span<const char> marked) {
    CellView view;
    auto& s = view.shape;
    s.n = cell.size();
    view.parent_vertex = cell.vertices;
    s.boundary.assign(s.n, 0);
    s.mark.assign(s.n, 0);
    for (int i = 0; i < s.n; ++i) {
        int v = cell.vertices[i];
        if (!marked.empty()) s.mark[i] = marked[v];
        for (const auto& inc : cell.parent->neighbors(v))
            if (!cell.contains(inc.vertex)) ++s.boundary[i];
    }
    std::vector<std::pair<std::pair<int, int>, int>> es;
    for (int id : cell.edges) {
        const auto& e = cell.parent->edge(id);
        int a = cell.local_index(e.u), b = cell.local_index(e.v);
        es.push_back({{std::min(a, b), std::max(a, b)}, id});
    }
    std::sort(es.begin(), es.end());
    for (auto& [p, id] : es) {
        s.edges.push_back(p);
        view.parent_edge.push_back(id);
    }
    return view;
}

}  // namespace fiid
