#pragma once

#include "vln/dataset.hpp"
#include "vln/simulator.hpp"
#include "vln/world.hpp"

#include <nlohmann/json.hpp>

#include <chrono>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

namespace httplib {
class Server;
}

namespace vln {

struct Reply {
    int status = 200;
    nlohmann::json body;
};

struct ServiceOptions {
    std::chrono::seconds session_ttl{1800};
    /// Splits whose goals are never revealed.
    std::vector<std::string> hidden_splits{"test"};
};

/// Episode sessions, dataset/scene retrieval and scoring, independent of
/// the transport. Every handler returns a status code and a JSON body;
/// failures carry {"error": message}.
class Service {
public:
    using Clock = std::function<std::chrono::steady_clock::time_point()>;

    Service(const World& world, std::map<std::string, std::vector<PathItem>> splits, ServiceOptions opts = {},
            Clock clock = [] { return std::chrono::steady_clock::now(); });

    Reply create_session(const std::string& body);
    Reply act(const std::string& session_id, const std::string& body);
    Reply get_session(const std::string& session_id);
    Reply submit(const std::string& body);
    Reply scene_map(const std::string& scene_id) const;
    Reply dataset(const std::string& split) const;

    /// Drops sessions idle for longer than the TTL; returns how many.
    std::size_t expire_sessions();
    std::size_t session_count() const;

private:
    struct Session {
        std::mutex mutex;
        std::string split;
        const PathItem* item = nullptr;
        std::size_t instr_index = 0;
        VertexId goal{};
        EpisodeState state;
        std::chrono::steady_clock::time_point last_used;
    };

    bool hidden(const std::string& split) const;
    std::shared_ptr<Session> find(const std::string& id);
    nlohmann::json state_json(const Session& s) const;
    std::string new_id();

    const World* world_;
    std::map<std::string, std::vector<PathItem>> splits_;
    ServiceOptions opts_;
    Clock clock_;
    mutable std::mutex mutex_;
    std::map<std::string, std::shared_ptr<Session>> sessions_;
    std::uint64_t id_state_;
};

/// Binds a Service to HTTP routes:
///   POST /sessions, GET /sessions/{id}, POST /sessions/{id}/action,
///   POST /submissions, GET /scenes/{id}/map, GET /datasets/{split}.
/// When static_dir is non-empty it is served at "/".
class HttpServer {
public:
    explicit HttpServer(Service& service, std::string static_dir = {});
    ~HttpServer();
    HttpServer(const HttpServer&) = delete;
    HttpServer& operator=(const HttpServer&) = delete;

    /// Binds to an ephemeral port when port is 0; returns the bound port or
    /// -1 on failure.
    int bind(const std::string& host, int port);
    /// Blocks until stop() is called.
    void listen();
    void stop();

private:
    Service* service_;
    std::unique_ptr<httplib::Server> http_;
};

}  // namespace vln
