#include "../support/oracles.hpp"
#include "vln/error.hpp"
#include "vln/navgraph.hpp"
#include "vln/scene.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>

using namespace vln;

namespace {

// A(0,0)-B(4,0)-C(8,0), B-D(4,3)
NavGraph cross_graph() {
    NavGraph g;
    const auto a = g.add_vertex("A", {0, 0, 0});
    const auto b = g.add_vertex("B", {4, 0, 0});
    const auto c = g.add_vertex("C", {8, 0, 0});
    const auto d = g.add_vertex("D", {4, 3, 0});
    g.add_edge(a, b);
    g.add_edge(b, c);
    g.add_edge(b, d);
    return g;
}

std::vector<std::string> ids(const NavGraph& g, std::vector<VertexId> vs) {
    std::vector<std::string> out;
    for (VertexId v : vs) out.push_back(g.id(v));
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace

TEST_SUITE("navgraph") {

TEST_CASE("edge invariants are enforced") {
    NavGraph g;
    const auto a = g.add_vertex("a", {0, 0, 0});
    const auto b = g.add_vertex("b", {3, 0, 0});
    const auto far = g.add_vertex("far", {0, 6, 0});
    CHECK_THROWS_AS(g.add_vertex("a", {1, 1, 0}), Error);
    CHECK_THROWS_AS(g.add_edge(a, a), Error);
    CHECK_THROWS_AS(g.add_edge(a, far), Error);
    g.add_edge(a, b);
    CHECK_THROWS_AS(g.add_edge(b, a), Error);
    CHECK(g.weight(a, b) == 3.0);
    CHECK(g.weight(b, a) == 3.0);
    CHECK(g.adjacent(b, a));
    CHECK(g.edge_count() == 1);
}

TEST_CASE("reachable set examples") {
    const NavGraph g = cross_graph();
    const FrustumSpec spec;
    CHECK(ids(g, reachable_set(g, Pose(g.at("B"), kPi / 2), spec)) == std::vector<std::string>{"B", "C"});
    CHECK(ids(g, reachable_set(g, Pose(g.at("B"), 0.0), spec)) == std::vector<std::string>{"B", "D"});
    CHECK(reachable_set(g, Pose(g.at("B"), 0.0), spec).front() == g.at("B"));

    NavGraph lonely;
    const auto v = lonely.add_vertex("x", {0, 0, 0});
    CHECK(reachable_set(lonely, Pose(v, 1.0), spec) == std::vector<VertexId>{v});
    CHECK_THROWS(reachable_set(lonely, Pose(vertex_at(5), 0.0), spec));
}

TEST_CASE("shortest path examples") {
    const NavGraph g = cross_graph();
    auto r = shortest_path(g, g.at("A"), g.at("C"));
    REQUIRE(r);
    CHECK(r->length == 8.0);
    CHECK(r->vertices == std::vector<VertexId>{g.at("A"), g.at("B"), g.at("C")});
    r = shortest_path(g, g.at("A"), g.at("D"));
    REQUIRE(r);
    CHECK(r->length == 7.0);
    r = shortest_path(g, g.at("C"), g.at("C"));
    REQUIRE(r);
    CHECK(r->vertices.size() == 1);
    CHECK(r->length == 0.0);

    NavGraph split = cross_graph();
    split.add_vertex("island", {20, 20, 0});
    CHECK_FALSE(shortest_path(split, split.at("A"), split.at("island")).has_value());
}

TEST_CASE("graph stats by hand count") {
    NavGraph path;
    const auto a = path.add_vertex("A", {0, 0, 0});
    const auto b = path.add_vertex("B", {1, 0, 0});
    const auto c = path.add_vertex("C", {2, 0, 0});
    path.add_edge(a, b);
    path.add_edge(b, c);
    CHECK(graph_stats(path).mean_degree == doctest::Approx(4.0 / 3.0));
    CHECK(graph_stats(cross_graph()).mean_degree == doctest::Approx(1.5));
    CHECK(*graph_stats(cross_graph()).mean_edge_length == doctest::Approx(11.0 / 3.0));
}

TEST_CASE("build_graph follows distance and sight lines") {
    SceneLayout open;
    open.scene_id = "t";
    open.rooms.push_back({"r0", "hallway", {-1, -1, 10, 10}, 0.0});
    open.viewpoints = {{"a", {0, 0, 0}}, {"b", {3, 0, 0}}, {"c", {9, 0, 0}}};
    NavGraph g = build_graph(open);
    CHECK(g.adjacent(g.at("a"), g.at("b")));
    CHECK(g.weight(g.at("a"), g.at("b")) == 3.0);
    CHECK_FALSE(g.adjacent(g.at("b"), g.at("c")));  // 6 m apart

    SceneLayout walled = open;
    walled.walls.push_back({1.5, -1, 1.5, 1, 0.0});
    g = build_graph(walled);
    CHECK_FALSE(g.adjacent(g.at("a"), g.at("b")));

    SceneLayout dup = open;
    dup.viewpoints.push_back({"d", {3, 0, 0}});
    CHECK_THROWS_AS(build_graph(dup), Error);
}

TEST_CASE("property: reachable_set matches brute force") {
    Rng rng(7);
    const FrustumSpec spec;
    for (int trial = 0; trial < 300; ++trial) {
        const auto rg = oracle::random_graph(rng, 2 + static_cast<int>(rng.index(9)), 0.6, false);
        const NavGraph g = rg.build();
        const int v = static_cast<int>(rng.index(rg.ids.size()));
        const double heading = rng.uniform(0.0, kTwoPi);
        std::vector<std::string> expect;
        for (int u : oracle::reachable(rg, v, heading, spec.hfov)) expect.push_back(rg.ids[static_cast<std::size_t>(u)]);
        std::sort(expect.begin(), expect.end());
        CHECK(ids(g, reachable_set(g, Pose(g.at(rg.ids[static_cast<std::size_t>(v)]), heading), spec)) == expect);
    }
}

TEST_CASE("property: Dijkstra agrees with path enumeration, ties included") {
    Rng rng(8);
    for (int trial = 0; trial < 150; ++trial) {
        const bool lattice = trial % 2 == 0;
        const auto rg = oracle::random_graph(rng, 2 + static_cast<int>(rng.index(7)), 0.5, lattice);
        const NavGraph g = rg.build();
        const int a = static_cast<int>(rng.index(rg.ids.size()));
        const int b = static_cast<int>(rng.index(rg.ids.size()));
        const auto expect = oracle::shortest_by_enumeration(rg, a, b);
        const auto got = shortest_path(g, g.at(rg.ids[static_cast<std::size_t>(a)]), g.at(rg.ids[static_cast<std::size_t>(b)]));
        if (expect.vertices.empty()) {
            CHECK_FALSE(got.has_value());
            continue;
        }
        REQUIRE(got.has_value());
        CHECK(got->length == doctest::Approx(expect.length).epsilon(1e-12));
        std::vector<std::string> got_ids, want_ids;
        for (VertexId v : got->vertices) got_ids.push_back(g.id(v));
        for (int v : expect.vertices) want_ids.push_back(rg.ids[static_cast<std::size_t>(v)]);
        CHECK(got_ids == want_ids);
    }
}

TEST_CASE("property: edges are symmetric with Euclidean weights") {
    Rng rng(9);
    for (int trial = 0; trial < 50; ++trial) {
        const NavGraph g = oracle::random_graph(rng, 8, 0.5, false).build();
        for (std::size_t i = 0; i < g.size(); ++i) {
            for (const Edge& e : g.neighbors(vertex_at(i))) {
                CHECK(g.adjacent(e.to, vertex_at(i)));
                CHECK(g.weight(e.to, vertex_at(i)) == e.weight);
                CHECK(std::abs(e.weight - distance(g.position(e.to), g.position(vertex_at(i)))) < 1e-9);
                CHECK(e.weight > 0.0);
                CHECK(e.weight <= 5.0);
            }
        }
    }
}

TEST_CASE("json round trip") {
    const NavGraph g = cross_graph();
    const NavGraph back = graph_from_json(graph_to_json(g));
    REQUIRE(back.size() == g.size());
    CHECK(back.edge_count() == g.edge_count());
    for (std::size_t i = 0; i < g.size(); ++i) {
        CHECK(back.id(vertex_at(i)) == g.id(vertex_at(i)));
        CHECK(back.position(vertex_at(i)) == g.position(vertex_at(i)));
    }
}

}  // TEST_SUITE
