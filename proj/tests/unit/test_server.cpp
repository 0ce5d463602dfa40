#include "../support/corpus.hpp"
#include "vln/server.hpp"

#include <doctest.h>
#include <httplib.h>

#include <set>
#include <thread>

using namespace vln;
using nlohmann::json;

namespace {

struct Fixture {
    fixture::Corpus corpus = fixture::small_corpus();
    std::chrono::steady_clock::time_point now{};
    std::unique_ptr<Service> service;

    Fixture() {
        std::map<std::string, std::vector<PathItem>> splits;
        for (std::size_t i = 0; i < corpus.items.size(); ++i) {
            splits[i % 2 == 0 ? "val_seen" : "test"].push_back(corpus.items[i]);
        }
        ServiceOptions o;
        o.session_ttl = std::chrono::seconds(60);
        service = std::make_unique<Service>(corpus.world, splits, o, [this] { return now; });
    }
    const PathItem& seen() const { return corpus.items[0]; }
    const PathItem& test() const { return corpus.items[1]; }

    std::string open(const PathItem& item, const std::string& split) {
        const Reply r = service->create_session(json{{"split", split}, {"path_id", item.path_id}}.dump());
        REQUIRE(r.status == 201);
        return r.body["session_id"].get<std::string>();
    }
    Reply model(const std::string& id, const std::string& action) {
        return service->act(id, json{{"type", "model"}, {"payload", {{"action", action}}}}.dump());
    }
};

}  // namespace

TEST_SUITE("server") {

TEST_CASE("session creation") {
    Fixture f;
    const Reply r = f.service->create_session(json{{"split", "val_seen"}, {"path_id", f.seen().path_id}, {"instr_index", 1}}.dump());
    CHECK(r.status == 201);
    CHECK(r.body["instruction"] == f.seen().instructions[1]);
    CHECK(r.body["pose"]["viewpoint"] == f.seen().path.front());
    CHECK(r.body["pose"]["heading"].get<double>() == doctest::Approx(f.seen().heading));
    CHECK(r.body["goal"] == f.seen().path.back());
    CHECK(r.body["step"] == 0);
    CHECK(r.body["done"] == false);
    CHECK(r.body.contains("reachable"));
    CHECK(r.body["map_hint"]["scene"] == f.seen().scan);

    const Reply t = f.service->create_session(json{{"split", "test"}, {"path_id", f.test().path_id}}.dump());
    CHECK(t.status == 201);
    CHECK_FALSE(t.body.contains("goal"));
    CHECK(t.body.dump().find("\"" + f.test().path.back() + "\"") == std::string::npos);
}

TEST_CASE("session creation errors") {
    Fixture f;
    CHECK(f.service->create_session(json{{"split", "val_seen"}, {"path_id", 9999}}.dump()).status == 404);
    CHECK(f.service->create_session(json{{"split", "nope"}, {"path_id", 0}}.dump()).status == 404);
    CHECK(f.service->create_session(json{{"split", "val_seen"}, {"path_id", f.seen().path_id}, {"instr_index", 7}}.dump()).status == 404);
    CHECK(f.service->create_session("{not json").status == 400);
    CHECK(f.service->create_session("[]").status == 400);
    CHECK(f.service->create_session(json{{"split", "val_seen"}}.dump()).status == 400);
    CHECK(f.service->create_session(json{{"split", 3}, {"path_id", 0}}.dump()).status == 400);
}

TEST_CASE("model actions and episode end") {
    Fixture f;
    const std::string id = f.open(f.seen(), "val_seen");
    Reply r = f.model(id, "right");
    CHECK(r.status == 200);
    CHECK(r.body["step"] == 1);
    r = f.service->act(id, json{{"type", "model"}, {"payload", "stop"}}.dump());
    CHECK(r.status == 200);
    CHECK(r.body["done"] == true);
    CHECK(r.body["reason"] == "stop");
    CHECK(r.body.contains("metrics"));
    CHECK(f.model(id, "left").status == 409);
    CHECK(f.model("ffffffffffffffff", "left").status == 404);
}

TEST_CASE("action validation") {
    Fixture f;
    const std::string id = f.open(f.seen(), "val_seen");
    CHECK(f.service->act(id, "oops").status == 400);
    CHECK(f.service->act(id, json{{"type", "teleport"}}.dump()).status == 400);
    CHECK(f.model(id, "jump").status == 400);
    CHECK(f.service->act(id, json{{"type", "sim"}, {"payload", {{"heading", 1.0}}}}.dump()).status == 400);
    CHECK(f.service->act(id, json{{"type", "sim"}, {"payload", {{"viewpoint", "nowhere"}}}}.dump()).status == 422);
}

TEST_CASE("sim moves obey Eq. 1 reachability") {
    Fixture f;
    const std::string id = f.open(f.seen(), "val_seen");
    const Scene& scene = f.corpus.world.scene(f.seen().scan);
    const NavGraph& g = scene.graph();
    const VertexId here = g.at(f.seen().path.front());
    const Reply state = f.service->get_session(id);
    std::set<std::string> reachable;
    for (const auto& c : state.body["reachable"]) reachable.insert(c["viewpoint"].get<std::string>());
    for (std::size_t i = 0; i < g.size(); ++i) {
        const std::string vid = g.id(vertex_at(i));
        if (vertex_at(i) == here || reachable.count(vid)) continue;
        CHECK(f.service->act(id, json{{"type", "sim"}, {"payload", {{"viewpoint", vid}}}}.dump()).status == 422);
    }
    if (!reachable.empty()) {
        const Reply r = f.service->act(id, json{{"type", "sim"}, {"payload", {{"viewpoint", *reachable.begin()}, {"heading", 0.5}}}}.dump());
        CHECK(r.status == 200);
        CHECK(r.body["pose"]["viewpoint"] == *reachable.begin());
    }
}

TEST_CASE("step limit ends the episode") {
    Fixture f;
    const std::string id = f.open(f.seen(), "val_seen");
    Reply r;
    for (int k = 0; k < 20; ++k) r = f.model(id, "left");
    CHECK(r.body["done"] == true);
    CHECK(r.body["reason"] == "step_limit");
    CHECK(f.model(id, "left").status == 409);
}

TEST_CASE("idle sessions expire") {
    Fixture f;
    const std::string a = f.open(f.seen(), "val_seen");
    f.now += std::chrono::seconds(40);
    const std::string b = f.open(f.seen(), "val_seen");
    CHECK(f.service->session_count() == 2);
    f.now += std::chrono::seconds(30);
    CHECK(f.model(a, "left").status == 404);
    CHECK(f.model(b, "left").status == 200);
    f.now += std::chrono::seconds(59);
    CHECK(f.model(b, "left").status == 200);
    CHECK(f.service->session_count() == 1);
}

TEST_CASE("submissions") {
    Fixture f;
    auto shortest = [&](const std::vector<std::size_t>& which) {
        json entries = json::array();
        for (const Task& t : f.corpus.tasks) {
            const std::size_t item = std::stoul(t.instr_id.substr(0, t.instr_id.find('_')));
            if (std::find(which.begin(), which.end(), item % 2) == which.end()) continue;
            const Simulator& sim = f.corpus.world.simulator(t.scan);
            entries.push_back(save_submission({to_submission(sim.scene().graph(), shortest_agent(sim, t))})[0]);
        }
        return entries;
    };
    Reply r = f.service->submit(json{{"split", "val_seen"}, {"trajectories", shortest({0})}}.dump());
    REQUIRE(r.status == 200);
    CHECK(r.body["success_rate"] == 1.0);
    CHECK(r.body["navigation_error"] == 0.0);
    CHECK(r.body.contains("per_episode"));

    r = f.service->submit(json{{"split", "test"}, {"trajectories", shortest({1})}}.dump());
    REQUIRE(r.status == 200);
    CHECK(r.body["success_rate"] == 1.0);
    CHECK_FALSE(r.body.contains("per_episode"));

    json dup = shortest({0});
    dup.push_back(dup[0]);
    r = f.service->submit(json{{"split", "val_seen"}, {"trajectories", dup}}.dump());
    CHECK(r.status == 422);
    CHECK(r.body["instr_ids"].size() >= 1);
    r = f.service->submit(json{{"split", "val_seen"}, {"trajectories", shortest({0, 1})}}.dump());
    CHECK(r.status == 422);
    CHECK(f.service->submit(json{{"split", "val_seen"}, {"trajectories", 5}}.dump()).status == 400);
    CHECK(f.service->submit("nonsense").status == 400);
    CHECK(f.service->submit(json{{"split", "dev"}, {"trajectories", json::array()}}.dump()).status == 404);
}

TEST_CASE("scene maps and datasets") {
    Fixture f;
    const Reply m = f.service->scene_map(f.seen().scan);
    CHECK(m.status == 200);
    CHECK(m.body["viewpoints"].size() == f.corpus.world.scene(f.seen().scan).graph().size());
    CHECK(m.body["edges"].size() == f.corpus.world.scene(f.seen().scan).graph().edge_count());
    CHECK(m.body.contains("walls"));
    CHECK(f.service->scene_map("nowhere").status == 404);

    const Reply seen = f.service->dataset("val_seen");
    CHECK(seen.status == 200);
    CHECK(load_r2r(seen.body).front() == f.seen());
    const Reply test = f.service->dataset("test");
    CHECK(test.status == 200);
    for (const auto& item : test.body) {
        CHECK_FALSE(item.contains("path"));
        CHECK_FALSE(item.contains("distance"));
        CHECK(item.contains("start"));
    }
    CHECK(f.service->dataset("holdout").status == 404);
}

TEST_CASE("HTTP transport") {
    Fixture f;
    HttpServer server(*f.service);
    const int port = server.bind("127.0.0.1", 0);
    REQUIRE(port > 0);
    std::thread thread([&] { server.listen(); });
    httplib::Client client("127.0.0.1", port);
    auto res = client.Post("/sessions", json{{"split", "val_seen"}, {"path_id", f.seen().path_id}}.dump(), "application/json");
    REQUIRE(res);
    CHECK(res->status == 201);
    const std::string id = json::parse(res->body)["session_id"];
    res = client.Post("/sessions/" + id + "/action", json{{"type", "model"}, {"payload", "forward"}}.dump(), "application/json");
    REQUIRE(res);
    CHECK(res->status == 200);
    res = client.Get("/sessions/" + id);
    REQUIRE(res);
    CHECK(json::parse(res->body)["step"] == 1);
    res = client.Get("/scenes/" + f.seen().scan + "/map");
    REQUIRE(res);
    CHECK(res->status == 200);
    res = client.Get("/datasets/unknown");
    REQUIRE(res);
    CHECK(res->status == 404);
    res = client.Post("/sessions/0000/action", "{}", "application/json");
    REQUIRE(res);
    CHECK(res->status == 404);
    server.stop();
    thread.join();
}

}  // TEST_SUITE
