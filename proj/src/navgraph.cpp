#include "vln/navgraph.hpp"

#include "vln/error.hpp"
#include "vln/scene.hpp"

#include <limits>
#include <queue>

namespace vln {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

VertexId NavGraph::add_vertex(std::string id, const Point3& position) {
    if (!std::isfinite(position.x) || !std::isfinite(position.y) || !std::isfinite(position.z)) {
        throw Error("vertex '" + id + "' has a non-finite position");
    }
    if (index_.contains(id)) throw Error("duplicate vertex id '" + id + "'");
    const VertexId v = vertex_at(positions_.size());
    index_.emplace(id, v);
    ids_.push_back(std::move(id));
    positions_.push_back(position);
    adjacency_.emplace_back();
    return v;
}

void NavGraph::add_edge(VertexId a, VertexId b) {
    if (!contains(a) || !contains(b)) throw Error("add_edge: unknown vertex");
    if (a == b) throw Error("add_edge: self loop on '" + id(a) + "'");
    if (adjacent(a, b)) throw Error("add_edge: duplicate edge " + id(a) + "-" + id(b));
    const double w = distance(position(a), position(b));
    if (!(w > 0.0)) throw Error("add_edge: zero-length edge " + id(a) + "-" + id(b));
    if (w > max_edge_) {
        throw Error("add_edge: edge " + id(a) + "-" + id(b) + " exceeds " + std::to_string(max_edge_) + " m");
    }
    auto insert = [this](VertexId from, VertexId to, double weight) {
        auto& list = adjacency_[index_of(from)];
        auto pos = std::lower_bound(list.begin(), list.end(), to, [this](const Edge& e, VertexId t) {
            return ids_[index_of(e.to)] < ids_[index_of(t)];
        });
        list.insert(pos, Edge{to, weight});
    };
    insert(a, b, w);
    insert(b, a, w);
    ++edge_count_;
}

std::optional<VertexId> NavGraph::find(std::string_view id) const {
    auto it = index_.find(std::string(id));
    if (it == index_.end()) return std::nullopt;
    return it->second;
}

VertexId NavGraph::at(std::string_view id) const {
    if (auto v = find(id)) return *v;
    throw Error("unknown viewpoint '" + std::string(id) + "'");
}

bool NavGraph::adjacent(VertexId a, VertexId b) const {
    for (const Edge& e : neighbors(a)) {
        if (e.to == b) return true;
    }
    return false;
}

double NavGraph::weight(VertexId a, VertexId b) const {
    for (const Edge& e : neighbors(a)) {
        if (e.to == b) return e.weight;
    }
    throw Error("viewpoints '" + id(a) + "' and '" + id(b) + "' are not adjacent");
}

NavGraph build_graph(const SceneLayout& layout, double max_edge) {
    if (layout.viewpoints.size() < 2) throw Error("build_graph: layout needs at least 2 viewpoints");
    NavGraph graph(max_edge);
    for (const auto& vp : layout.viewpoints) {
        for (std::size_t i = 0; i < graph.size(); ++i) {
            if (graph.position(vertex_at(i)) == vp.position) {
                throw Error("build_graph: viewpoints '" + graph.id(vertex_at(i)) + "' and '" + vp.id +
                            "' share a position");
            }
        }
        graph.add_vertex(vp.id, vp.position);
    }
    const std::size_t n = layout.viewpoints.size();
    for (std::size_t a = 0; a < n; ++a) {
        for (std::size_t b = a + 1; b < n; ++b) {
            const double d = distance(layout.viewpoints[a].position, layout.viewpoints[b].position);
            if (d <= max_edge && line_of_sight(layout, a, b)) graph.add_edge(vertex_at(a), vertex_at(b));
        }
    }
    for (const auto& [a, b] : layout.stairs) {
        const VertexId va = graph.at(a), vb = graph.at(b);
        if (!graph.adjacent(va, vb)) graph.add_edge(va, vb);
    }
    return graph;
}

std::vector<VertexId> reachable_set(const NavGraph& graph, const Pose& pose, const FrustumSpec& spec) {
    const VertexId here = pose.viewpoint();
    if (!graph.contains(here)) throw Error("reachable_set: unknown viewpoint");
    std::vector<VertexId> out{here};
    const Point3& origin = graph.position(here);
    for (const Edge& e : graph.neighbors(here)) {
        const Point3& target = graph.position(e.to);
        // stair edges may stack vertically; treat a pure vertical neighbour as dead ahead
        if (horizontal_distance(origin, target) == 0.0 || in_frustum(pose.heading(), origin, target, spec)) {
            out.push_back(e.to);
        }
    }
    return out;
}

std::vector<double> distances_from(const NavGraph& graph, VertexId source) {
    if (!graph.contains(source)) throw Error("distances_from: unknown viewpoint");
    std::vector<double> dist(graph.size(), kInf);
    using Item = std::pair<double, std::size_t>;
    std::priority_queue<Item, std::vector<Item>, std::greater<>> heap;
    dist[index_of(source)] = 0.0;
    heap.emplace(0.0, index_of(source));
    while (!heap.empty()) {
        auto [d, u] = heap.top();
        heap.pop();
        if (d > dist[u]) continue;
        for (const Edge& e : graph.neighbors(vertex_at(u))) {
            const double nd = d + e.weight;
            if (nd < dist[index_of(e.to)]) {
                dist[index_of(e.to)] = nd;
                heap.emplace(nd, index_of(e.to));
            }
        }
    }
    return dist;
}

std::optional<Route> shortest_path_with(const NavGraph& graph, VertexId from, VertexId to,
                                        std::span<const double> dist_to_target) {
    if (!graph.contains(from) || !graph.contains(to)) throw Error("shortest_path: unknown viewpoint");
    if (!std::isfinite(dist_to_target[index_of(from)])) return std::nullopt;
    Route route;
    route.vertices.push_back(from);
    VertexId cur = from;
    while (cur != to) {
        const double remaining = dist_to_target[index_of(cur)];
        std::optional<Edge> next;
        // neighbours are id-ordered, so the first tight edge gives the
        // lexicographically smallest continuation
        for (const Edge& e : graph.neighbors(cur)) {
            const double via = e.weight + dist_to_target[index_of(e.to)];
            if (std::abs(via - remaining) <= length_tolerance(remaining)) {
                next = e;
                break;
            }
        }
        if (!next) throw Error("shortest_path: inconsistent distance table");
        route.length += next->weight;
        route.vertices.push_back(next->to);
        cur = next->to;
    }
    return route;
}

std::optional<Route> shortest_path(const NavGraph& graph, VertexId from, VertexId to) {
    if (!graph.contains(from) || !graph.contains(to)) throw Error("shortest_path: unknown viewpoint");
    const auto dist = distances_from(graph, to);
    return shortest_path_with(graph, from, to, dist);
}

GraphStats graph_stats(const NavGraph& graph) {
    if (graph.size() == 0) throw Error("graph_stats: empty graph");
    GraphStats s;
    s.vertex_count = graph.size();
    s.mean_degree = 2.0 * static_cast<double>(graph.edge_count()) / static_cast<double>(graph.size());
    if (graph.edge_count() > 0) {
        double total = 0.0;
        for (std::size_t i = 0; i < graph.size(); ++i) {
            for (const Edge& e : graph.neighbors(vertex_at(i))) {
                if (index_of(e.to) > i) total += e.weight;
            }
        }
        s.mean_edge_length = total / static_cast<double>(graph.edge_count());
    }
    return s;
}

bool is_connected(const NavGraph& graph) {
    if (graph.size() == 0) return true;
    const auto dist = distances_from(graph, vertex_at(0));
    return std::all_of(dist.begin(), dist.end(), [](double d) { return std::isfinite(d); });
}

nlohmann::json graph_to_json(const NavGraph& graph) {
    nlohmann::json nodes = nlohmann::json::array();
    nlohmann::json edges = nlohmann::json::array();
    for (std::size_t i = 0; i < graph.size(); ++i) {
        const auto v = vertex_at(i);
        const auto& p = graph.position(v);
        nodes.push_back({{"id", graph.id(v)}, {"x", p.x}, {"y", p.y}, {"z", p.z}});
        for (const Edge& e : graph.neighbors(v)) {
            if (index_of(e.to) > i) edges.push_back({graph.id(v), graph.id(e.to)});
        }
    }
    return {{"nodes", nodes}, {"edges", edges}};
}

NavGraph graph_from_json(const nlohmann::json& j, double max_edge) {
    NavGraph graph(max_edge);
    try {
        for (const auto& node : j.at("nodes")) {
            graph.add_vertex(node.at("id").get<std::string>(),
                             {node.at("x").get<double>(), node.at("y").get<double>(), node.at("z").get<double>()});
        }
        for (const auto& edge : j.at("edges")) {
            if (!edge.is_array() || edge.size() != 2) throw ParseError("edge must be a pair of ids");
            graph.add_edge(graph.at(edge[0].get<std::string>()), graph.at(edge[1].get<std::string>()));
        }
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("connectivity json: ") + e.what());
    }
    return graph;
}

}  // namespace vln
