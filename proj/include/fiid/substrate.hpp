#pragma once

#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

namespace fiid {

enum class Percolation { Vertex, Edge };

struct Edge {
    int u;
    int v;
    bool operator==(const Edge&) const = default;
};

struct Incidence {
    int vertex;
    int edge;
};

struct Geometry {
    std::vector<int> dims;
    std::vector<bool> wrap;
};

/// A finite, simple, connected undirected graph with dense vertex ids.
/// Immutable after construction.
class Substrate {
public:
    /// Nearest-neighbour grid.  Vertex ids are row-major with axis 0 fastest.
    static Substrate grid(std::vector<int> dims, std::vector<bool> wrap,
                          Percolation mode = Percolation::Edge);
    static Substrate from_edges(int n, std::vector<Edge> edges,
                                Percolation mode = Percolation::Edge);
    static Substrate from_json(const nlohmann::json& j);

    int vertex_count() const { return n_; }
    int edge_count() const { return static_cast<int>(edges_.size()); }
    const std::vector<Edge>& edges() const { return edges_; }
    const Edge& edge(int id) const { return edges_[id]; }
    std::span<const Incidence> neighbors(int v) const;
    int degree(int v) const { return static_cast<int>(neighbors(v).size()); }
    std::optional<int> edge_between(int u, int v) const;
    const std::optional<Geometry>& geometry() const { return geometry_; }
    Percolation mode() const { return mode_; }

    /// Number of sites of the percolation mode (vertices or edges).
    int site_count() const { return mode_ == Percolation::Vertex ? n_ : edge_count(); }

    std::vector<int> distances_from(int v) const;
    std::vector<int> ball(int v, int radius) const;
    bool connected() const;
    /// Maximum eccentricity.
    int diameter() const;

    nlohmann::json to_json() const;

private:
    Substrate(int n, std::vector<Edge> edges, std::optional<Geometry> geom, Percolation mode);

    int n_ = 0;
    std::vector<Edge> edges_;
    std::vector<int> adj_offset_;
    std::vector<Incidence> adj_;
    std::optional<Geometry> geometry_;
    Percolation mode_ = Percolation::Edge;
};

/// Vertex-induced subgraph of a Substrate.  The parent must outlive it.
struct SubgraphRef {
    const Substrate* parent = nullptr;
    std::vector<int> vertices;  // sorted parent ids
    std::vector<int> edges;     // sorted parent edge ids, both endpoints inside

    int size() const { return static_cast<int>(vertices.size()); }
    bool contains(int v) const;
    int local_index(int v) const;  // -1 when absent
    std::vector<std::vector<int>> components() const;
    bool connected() const { return components().size() <= 1 && !vertices.empty(); }
    /// Parent edges with exactly one endpoint inside.
    std::vector<int> boundary_edges() const;
    /// Whether the parent minus this vertex set is connected (empty counts as connected).
    bool complement_connected() const;
    /// Sites of the parent's percolation mode lying in this subgraph.
    const std::vector<int>& sites() const {
        return parent->mode() == Percolation::Vertex ? vertices : edges;
    }
};

SubgraphRef induced(const Substrate& parent, std::vector<int> vertices);

/// Boundary edges wired to an extra vertex w.  Parallel wire edges are
/// collapsed to one edge whose weight is their multiplicity.
struct WiredClosure {
    struct WireEdge {
        int vertex;  // parent id
        int weight;
    };
    SubgraphRef base;
    int wire_vertex = 0;  // local index of w == base.size()
    std::vector<WireEdge> wire_edges;

    int total_wire_weight() const;
};

WiredClosure wire(const SubgraphRef& base);

/// Shape of a cell as seen from inside: a small graph with, per vertex, the
/// number of parent edges leaving the cell and a mark bit (sub-cell membership).
/// Edges are (u<v) pairs sorted lexicographically.
struct CellShape {
    int n = 0;
    std::vector<std::pair<int, int>> edges;
    std::vector<int> boundary;
    std::vector<char> mark;

    int edge_index(int u, int v) const;  // -1 when absent
    bool boundary_empty() const;
    std::vector<std::vector<int>> adjacency() const;
};

/// A CellShape together with its embedding into the parent substrate.
struct CellView {
    CellShape shape;
    std::vector<int> parent_vertex;  // local vertex -> parent id
    std::vector<int> parent_edge;    // local edge -> parent edge id
};

/// Local view of `cell`; `marked` (parent-indexed, may be empty) sets mark bits.
CellView make_view(const SubgraphRef& cell, std::span<const char> marked = {});

/// Permutes a view to canonical vertex order.  Views of isomorphic
/// (shape, boundary, mark) triples share the returned key.
struct Canonical {
    CellView view;
    std::string key;
};
Canonical canonicalize(const CellView& view);

/// Vertex permutations a (v -> a[v]) mapping the shape onto itself with
/// boundary counts and marks preserved; sorted, identity included.
std::vector<std::vector<int>> automorphisms(const CellShape& s);

}  // namespace fiid
