#pragma once

#include "vln/geometry.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace vln {

struct SceneLayout;

struct Edge {
    VertexId to;
    double weight;
};

/// Weighted undirected viewpoint graph. Edge weights are always the
/// Euclidean distance between endpoint positions. Adjacency lists are kept
/// ordered by the neighbour's string id so that iteration order (and thus
/// every tie-break downstream) is deterministic.
class NavGraph {
public:
    static constexpr double kDefaultMaxEdge = 5.0;

    explicit NavGraph(double max_edge = kDefaultMaxEdge) : max_edge_(max_edge) {}

    VertexId add_vertex(std::string id, const Point3& position);

    /// Adds the undirected edge a-b. Rejects self loops, duplicates and
    /// edges longer than max_edge().
    void add_edge(VertexId a, VertexId b);

    std::size_t size() const { return positions_.size(); }
    std::size_t edge_count() const { return edge_count_; }
    double max_edge() const { return max_edge_; }

    const Point3& position(VertexId v) const { return positions_.at(index_of(v)); }
    const std::string& id(VertexId v) const { return ids_.at(index_of(v)); }
    std::span<const Edge> neighbors(VertexId v) const { return adjacency_.at(index_of(v)); }

    std::optional<VertexId> find(std::string_view id) const;
    /// Like find() but throws vln::Error naming the id.
    VertexId at(std::string_view id) const;

    bool contains(VertexId v) const { return index_of(v) < size(); }
    bool adjacent(VertexId a, VertexId b) const;
    /// Weight of edge a-b; throws if the vertices are not adjacent.
    double weight(VertexId a, VertexId b) const;

private:
    double max_edge_;
    std::vector<Point3> positions_;
    std::vector<std::string> ids_;
    std::vector<std::vector<Edge>> adjacency_;
    std::unordered_map<std::string, VertexId> index_;
    std::size_t edge_count_ = 0;
};

/// Connects every pair of same-floor viewpoints that are within max_edge
/// metres and mutually visible, plus the layout's explicit stair pairs.
NavGraph build_graph(const SceneLayout& layout, double max_edge = NavGraph::kDefaultMaxEdge);

/// The current viewpoint followed by every neighbour inside the horizontal
/// frustum, neighbours in adjacency order.
std::vector<VertexId> reachable_set(const NavGraph& graph, const Pose& pose, const FrustumSpec& spec);

struct Route {
    std::vector<VertexId> vertices;
    double length = 0.0;
};

/// Single-source Dijkstra distances to every vertex (+inf when unreachable).
std::vector<double> distances_from(const NavGraph& graph, VertexId source);

/// Minimum-weight path. Among equal-length paths the lexicographically
/// smallest id sequence wins. Returns nullopt when `to` is unreachable.
std::optional<Route> shortest_path(const NavGraph& graph, VertexId from, VertexId to);

/// Same as shortest_path but reuses precomputed distances to `to`.
std::optional<Route> shortest_path_with(const NavGraph& graph, VertexId from, VertexId to,
                                        std::span<const double> dist_to_target);

/// Tolerance used when comparing accumulated path lengths for equality.
inline double length_tolerance(double length) { return 1e-9 * std::max(1.0, length); }

struct GraphStats {
    std::size_t vertex_count = 0;
    double mean_degree = 0.0;
    std::optional<double> mean_edge_length;  // empty when there are no edges
};

GraphStats graph_stats(const NavGraph& graph);

bool is_connected(const NavGraph& graph);

/// Connectivity JSON: {"nodes": [{id,x,y,z}], "edges": [[id,id]]}. Weights
/// are recomputed from positions on load.
nlohmann::json graph_to_json(const NavGraph& graph);
NavGraph graph_from_json(const nlohmann::json& j, double max_edge = NavGraph::kDefaultMaxEdge);

}  // namespace vln
