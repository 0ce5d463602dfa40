#include "vln/server.hpp"

#include "vln/error.hpp"
#include "vln/metrics.hpp"

#include <httplib.h>

#include <algorithm>
#include <cstdio>
#include <random>

namespace vln {

using nlohmann::json;

namespace {

Reply error_reply(int status, const std::string& message) { return {status, {{"error", message}}}; }

json pose_json(const NavGraph& g, const Pose& p) {
    return {{"viewpoint", g.id(p.viewpoint())}, {"heading", p.heading()}, {"elevation", p.elevation()}};
}

// Body must be a JSON object; anything else is a 400.
std::optional<json> parse_object(const std::string& body) {
    json j = json::parse(body, nullptr, false);
    if (j.is_discarded() || !j.is_object()) return std::nullopt;
    return j;
}

}  // namespace

Service::Service(const World& world, std::map<std::string, std::vector<PathItem>> splits, ServiceOptions opts,
                 Clock clock)
    : world_(&world), splits_(std::move(splits)), opts_(std::move(opts)), clock_(std::move(clock)) {
    std::random_device rd;
    id_state_ = (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
    for (const auto& [name, items] : splits_) {
        for (const PathItem& item : items) {
            if (!world.contains(item.scan)) throw Error("split '" + name + "' references unknown scene " + item.scan);
        }
    }
}

bool Service::hidden(const std::string& split) const {
    return std::find(opts_.hidden_splits.begin(), opts_.hidden_splits.end(), split) != opts_.hidden_splits.end();
}

std::string Service::new_id() {
    // splitmix64 over a random seed: unguessable enough for a lab server
    std::uint64_t z = (id_state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    z ^= z >> 31;
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(z));
    return buf;
}

std::size_t Service::expire_sessions() {
    const auto now = clock_();
    std::lock_guard lock(mutex_);
    std::size_t n = 0;
    for (auto it = sessions_.begin(); it != sessions_.end();) {
        if (now - it->second->last_used > opts_.session_ttl) {
            it = sessions_.erase(it);
            ++n;
        } else {
            ++it;
        }
    }
    return n;
}

std::size_t Service::session_count() const {
    std::lock_guard lock(mutex_);
    return sessions_.size();
}

std::shared_ptr<Service::Session> Service::find(const std::string& id) {
    expire_sessions();
    std::lock_guard lock(mutex_);
    auto it = sessions_.find(id);
    return it == sessions_.end() ? nullptr : it->second;
}

json Service::state_json(const Session& s) const {
    const Simulator& sim = world_->simulator(s.item->scan);
    const NavGraph& g = sim.scene().graph();
    json reachable = json::array();
    for (const Candidate& c : s.state.reachable) {
        const Point3& p = g.position(c.viewpoint);
        reachable.push_back({{"viewpoint", g.id(c.viewpoint)}, {"rel_bearing", c.rel_bearing}, {"position", {p.x, p.y, p.z}}});
    }
    json j = {{"pose", pose_json(g, s.state.pose)},
              {"step", s.state.step},
              {"done", s.state.done},
              {"reason", done_reason_name(s.state.reason)},
              {"forward_failed", s.state.forward_failed},
              {"reachable", reachable}};
    return j;
}

Reply Service::create_session(const std::string& body) {
    const auto req = parse_object(body);
    if (!req) return error_reply(400, "body must be a JSON object");
    std::string split;
    int path_id = 0;
    std::size_t instr_index = 0;
    try {
        split = req->at("split").get<std::string>();
        path_id = req->at("path_id").get<int>();
        instr_index = req->value("instr_index", std::size_t{0});
    } catch (const json::exception& e) {
        return error_reply(400, std::string("malformed session request: ") + e.what());
    }
    auto sp = splits_.find(split);
    if (sp == splits_.end()) return error_reply(404, "unknown split '" + split + "'");
    auto item = std::find_if(sp->second.begin(), sp->second.end(), [&](const PathItem& p) { return p.path_id == path_id; });
    if (item == sp->second.end()) return error_reply(404, "no path_id " + std::to_string(path_id) + " in " + split);
    if (instr_index >= item->instructions.size()) return error_reply(404, "no such instruction index");

    const Simulator& sim = world_->simulator(item->scan);
    const NavGraph& g = sim.scene().graph();
    auto s = std::make_shared<Session>();
    s->split = split;
    s->item = &*item;
    s->instr_index = instr_index;
    s->goal = g.at(item->path.back());
    s->state = sim.new_episode(Pose(g.at(item->path.front()), item->heading));
    s->last_used = clock_();

    json out = state_json(*s);
    const std::string id = new_id();
    out["session_id"] = id;
    out["instr_id"] = instr_id(item->path_id, instr_index);
    out["instruction"] = item->instructions[instr_index];
    out["scan"] = item->scan;
    out["step_limit"] = sim.config().step_limit;
    out["map_hint"] = {{"scene", item->scan}, {"url", "/scenes/" + item->scan + "/map"}};
    if (!hidden(split)) out["goal"] = item->path.back();
    {
        std::lock_guard lock(mutex_);
        sessions_.emplace(id, std::move(s));
    }
    return {201, out};
}

Reply Service::get_session(const std::string& session_id) {
    auto s = find(session_id);
    if (!s) return error_reply(404, "unknown or expired session");
    std::unique_lock lock(s->mutex, std::try_to_lock);
    if (!lock.owns_lock()) return error_reply(409, "session is busy");
    s->last_used = clock_();
    json out = state_json(*s);
    out["session_id"] = session_id;
    return {200, out};
}

Reply Service::act(const std::string& session_id, const std::string& body) {
    auto s = find(session_id);
    if (!s) return error_reply(404, "unknown or expired session");
    // concurrent posts to one session: the later one is rejected
    std::unique_lock lock(s->mutex, std::try_to_lock);
    if (!lock.owns_lock()) return error_reply(409, "another action on this session is in progress");
    s->last_used = clock_();

    const auto req = parse_object(body);
    if (!req || !req->contains("type") || !(*req)["type"].is_string()) {
        return error_reply(400, "action needs {type: model|sim, payload}");
    }
    if (s->state.done) return error_reply(409, "episode already finished");

    const Simulator& sim = world_->simulator(s->item->scan);
    const NavGraph& g = sim.scene().graph();
    const std::string type = (*req)["type"].get<std::string>();
    const json payload = req->value("payload", json::object());
    try {
        if (type == "model") {
            const std::string name = payload.is_string() ? payload.get<std::string>() : payload.at("action").get<std::string>();
            const auto action = parse_action(name);
            if (!action) return error_reply(400, "unknown model action '" + name + "'");
            s->state = sim.model_step(s->state, *action);
        } else if (type == "sim") {
            const std::string vp = payload.at("viewpoint").get<std::string>();
            const auto next = g.find(vp);
            if (!next) return error_reply(422, "unknown viewpoint '" + vp + "'");
            s->state = sim.make_action(s->state, *next, payload.value("heading", 0.0), payload.value("elevation", 0.0));
        } else {
            return error_reply(400, "unknown action type '" + type + "'");
        }
    } catch (const json::exception& e) {
        return error_reply(400, std::string("malformed payload: ") + e.what());
    } catch (const ReachabilityViolation& e) {
        return error_reply(422, e.what());
    } catch (const EpisodeDone& e) {
        return error_reply(409, e.what());
    }
    json out = state_json(*s);
    out["session_id"] = session_id;
    if (s->state.done && !hidden(s->split)) {
        out["metrics"] = {{"navigation_error", sim.scene().distances_to(s->goal)->at(index_of(s->state.pose.viewpoint()))}};
        out["metrics"]["success"] = success(out["metrics"]["navigation_error"].get<double>());
    }
    return {200, out};
}

Reply Service::submit(const std::string& body) {
    const auto req = parse_object(body);
    if (!req) return error_reply(400, "body must be a JSON object");
    std::string split;
    std::vector<SubmissionEntry> entries;
    ScoreOptions opts;
    try {
        split = req->at("split").get<std::string>();
        entries = load_submission(req->at("trajectories"));
        opts.require_complete = req->value("require_complete", true);
    } catch (const json::exception& e) {
        return error_reply(400, std::string("malformed submission: ") + e.what());
    } catch (const ParseError& e) {
        return error_reply(400, e.what());
    }
    auto sp = splits_.find(split);
    if (sp == splits_.end()) return error_reply(404, "unknown split '" + split + "'");
    try {
        const CorpusMetrics m = score_corpus(*world_, sp->second, entries, opts);
        return {200, metrics_to_json(m, !hidden(split))};
    } catch (const ScoringError& e) {
        return {422, {{"error", e.what()}, {"instr_ids", e.ids()}}};
    } catch (const Error& e) {
        return error_reply(422, e.what());
    }
}

Reply Service::scene_map(const std::string& scene_id) const {
    if (!world_->contains(scene_id)) return error_reply(404, "unknown scene '" + scene_id + "'");
    const Scene& scene = world_->scene(scene_id);
    json out = scene_to_json(scene.layout());
    json edges = json::array();
    const NavGraph& g = scene.graph();
    for (std::size_t i = 0; i < g.size(); ++i) {
        const VertexId v = vertex_at(i);
        for (const auto& e : g.neighbors(v)) {
            if (index_of(v) < index_of(e.to)) edges.push_back({g.id(v), g.id(e.to), e.weight});
        }
    }
    out["edges"] = edges;
    return {200, out};
}

Reply Service::dataset(const std::string& split) const {
    auto sp = splits_.find(split);
    if (sp == splits_.end()) return error_reply(404, "unknown split '" + split + "'");
    if (!hidden(split)) return {200, save_r2r(sp->second)};
    json out = json::array();
    for (const PathItem& item : sp->second) {
        out.push_back({{"scan", item.scan},
                       {"path_id", item.path_id},
                       {"heading", item.heading},
                       {"start", item.path.front()},
                       {"instructions", item.instructions}});
    }
    return {200, out};
}

HttpServer::HttpServer(Service& service, std::string static_dir)
    : service_(&service), http_(std::make_unique<httplib::Server>()) {
    auto send = [](httplib::Response& res, const Reply& r) {
        res.status = r.status;
        res.set_content(r.body.dump(), "application/json");
    };
    http_->Post("/sessions", [this, send](const httplib::Request& req, httplib::Response& res) {
        send(res, service_->create_session(req.body));
    });
    http_->Get(R"(/sessions/([0-9a-f]+))", [this, send](const httplib::Request& req, httplib::Response& res) {
        send(res, service_->get_session(req.matches[1]));
    });
    http_->Post(R"(/sessions/([^/]+)/action)", [this, send](const httplib::Request& req, httplib::Response& res) {
        send(res, service_->act(req.matches[1], req.body));
    });
    http_->Post("/submissions", [this, send](const httplib::Request& req, httplib::Response& res) {
        send(res, service_->submit(req.body));
    });
    http_->Get(R"(/scenes/([^/]+)/map)", [this, send](const httplib::Request& req, httplib::Response& res) {
        send(res, service_->scene_map(req.matches[1]));
    });
    http_->Get(R"(/datasets/([^/]+))", [this, send](const httplib::Request& req, httplib::Response& res) {
        send(res, service_->dataset(req.matches[1]));
    });
    http_->set_exception_handler([send](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
        std::string what = "internal error";
        try {
            std::rethrow_exception(ep);
        } catch (const std::exception& e) {
            what = e.what();
        } catch (...) {
        }
        send(res, error_reply(500, what));
    });
    if (!static_dir.empty()) http_->set_mount_point("/", static_dir);
}

HttpServer::~HttpServer() = default;

int HttpServer::bind(const std::string& host, int port) {
    if (port == 0) return http_->bind_to_any_port(host);
    return http_->bind_to_port(host, port) ? port : -1;
}

void HttpServer::listen() { http_->listen_after_bind(); }

void HttpServer::stop() { http_->stop(); }

}  // namespace vln
