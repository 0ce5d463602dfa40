#include "vln/metrics.hpp"

#include <limits>
#include <set>
#include <unordered_map>

namespace vln {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();

void require_nonempty(const Trajectory& t) {
    if (t.poses.empty()) throw Error("trajectory '" + t.instr_id + "' is empty");
}
}  // namespace

double navigation_error(const NavGraph& graph, const Trajectory& trajectory, VertexId goal) {
    require_nonempty(trajectory);
    const auto dist = distances_from(graph, goal);
    return dist[index_of(trajectory.poses.back().viewpoint())];
}

bool success(double navigation_error) { return navigation_error < kSuccessRadius; }

bool oracle_success(const NavGraph& graph, const Trajectory& trajectory, VertexId goal) {
    require_nonempty(trajectory);
    const auto dist = distances_from(graph, goal);
    double best = kInf;
    for (const Pose& p : trajectory.poses) best = std::min(best, dist[index_of(p.viewpoint())]);
    return success(best);
}

double trajectory_length(const NavGraph& graph, const Trajectory& trajectory) {
    require_nonempty(trajectory);
    double total = 0.0;
    for (std::size_t i = 1; i < trajectory.poses.size(); ++i) {
        const VertexId a = trajectory.poses[i - 1].viewpoint();
        const VertexId b = trajectory.poses[i].viewpoint();
        if (a == b) continue;
        if (!graph.adjacent(a, b)) {
            throw Error("trajectory '" + trajectory.instr_id + "' jumps from '" + graph.id(a) + "' to non-adjacent '" +
                        graph.id(b) + "' at step " + std::to_string(i));
        }
        total += graph.weight(a, b);
    }
    return total;
}

Metrics evaluate_episode(const NavGraph& graph, const Trajectory& trajectory, std::span<const double> to_goal) {
    require_nonempty(trajectory);
    Metrics m;
    m.trajectory_length = trajectory_length(graph, trajectory);
    m.navigation_error = to_goal[index_of(trajectory.poses.back().viewpoint())];
    m.success = success(m.navigation_error);
    double best = kInf;
    for (const Pose& p : trajectory.poses) best = std::min(best, to_goal[index_of(p.viewpoint())]);
    m.oracle_success = success(best);
    return m;
}

Metrics evaluate_episode(const Scene& scene, const Trajectory& trajectory, VertexId goal) {
    return evaluate_episode(scene.graph(), trajectory, *scene.distances_to(goal));
}

std::string instr_id(int path_id, std::size_t instruction_index) {
    return std::to_string(path_id) + "_" + std::to_string(instruction_index);
}

Trajectory resolve(const NavGraph& graph, const SubmissionEntry& entry) {
    Trajectory t;
    t.instr_id = entry.instr_id;
    t.poses.reserve(entry.trajectory.size());
    for (std::size_t i = 0; i < entry.trajectory.size(); ++i) {
        const auto& s = entry.trajectory[i];
        auto v = graph.find(s.viewpoint);
        if (!v) {
            throw ParseError("trajectory '" + entry.instr_id + "' step " + std::to_string(i) + ": unknown viewpoint '" +
                             s.viewpoint + "'");
        }
        if (!std::isfinite(s.heading) || !std::isfinite(s.elevation)) {
            throw ParseError("trajectory '" + entry.instr_id + "' step " + std::to_string(i) + ": non-finite angle");
        }
        t.poses.emplace_back(*v, s.heading, s.elevation);
    }
    return t;
}

SubmissionEntry to_submission(const NavGraph& graph, const Trajectory& trajectory) {
    SubmissionEntry e;
    e.instr_id = trajectory.instr_id;
    for (const Pose& p : trajectory.poses) e.trajectory.push_back({graph.id(p.viewpoint()), p.heading(), p.elevation()});
    return e;
}

CorpusMetrics summarize(std::vector<EpisodeResult> results) {
    CorpusMetrics c;
    c.episodes = results.size();
    if (!results.empty()) {
        for (const auto& r : results) {
            c.trajectory_length += r.metrics.trajectory_length;
            c.navigation_error += r.metrics.navigation_error;
            c.success_rate += r.metrics.success ? 1.0 : 0.0;
            c.oracle_success_rate += r.metrics.oracle_success ? 1.0 : 0.0;
        }
        const double n = static_cast<double>(results.size());
        c.trajectory_length /= n;
        c.navigation_error /= n;
        c.success_rate /= n;
        c.oracle_success_rate /= n;
    }
    c.per_episode = std::move(results);
    return c;
}

CorpusMetrics score_corpus(const World& world, const std::vector<PathItem>& items,
                           const std::vector<SubmissionEntry>& entries, const ScoreOptions& opts) {
    struct Target {
        const PathItem* item;
    };
    std::unordered_map<std::string, Target> targets;
    for (const PathItem& item : items) {
        for (std::size_t k = 0; k < item.instructions.size(); ++k) targets.emplace(instr_id(item.path_id, k), Target{&item});
    }

    std::set<std::string> seen;
    std::vector<std::string> duplicates, unknown;
    for (const auto& e : entries) {
        if (!targets.contains(e.instr_id)) unknown.push_back(e.instr_id);
        if (!seen.insert(e.instr_id).second) duplicates.push_back(e.instr_id);
    }
    if (!duplicates.empty()) throw ScoringError("duplicate instr_id in submission", duplicates);
    if (!unknown.empty()) throw ScoringError("unknown instr_id in submission", unknown);
    if (entries.empty()) throw ScoringError("submission matches no items", {});
    if (opts.require_complete) {
        std::vector<std::string> missing;
        for (const auto& [id, _] : targets) {
            if (!seen.contains(id)) missing.push_back(id);
        }
        std::sort(missing.begin(), missing.end());
        if (!missing.empty()) throw ScoringError("submission is missing trajectories", missing);
    }

    std::vector<EpisodeResult> results;
    results.reserve(entries.size());
    for (const auto& e : entries) {
        const PathItem& item = *targets.at(e.instr_id).item;
        const Scene& scene = world.scene(item.scan);
        const Trajectory t = resolve(scene.graph(), e);
        if (t.poses.empty()) throw ParseError("trajectory '" + e.instr_id + "' is empty");
        const VertexId goal = scene.graph().at(item.path.back());
        results.push_back({e.instr_id, evaluate_episode(scene, t, goal)});
    }
    return summarize(std::move(results));
}

std::vector<SubmissionEntry> load_submission(const nlohmann::json& j) {
    if (!j.is_array()) throw ParseError("submission must be a JSON array");
    std::vector<SubmissionEntry> out;
    for (std::size_t i = 0; i < j.size(); ++i) {
        const auto& rec = j[i];
        const std::string where = " @ entry " + std::to_string(i);
        if (!rec.is_object()) throw ParseError("entry" + where + " is not an object");
        if (!rec.contains("instr_id") || !rec["instr_id"].is_string()) throw ParseError("instr_id" + where);
        if (!rec.contains("trajectory") || !rec["trajectory"].is_array()) throw ParseError("trajectory" + where);
        SubmissionEntry e;
        e.instr_id = rec["instr_id"].get<std::string>();
        for (const auto& step : rec["trajectory"]) {
            if (!step.is_array() || step.size() < 3 || !step[0].is_string() || !step[1].is_number() ||
                !step[2].is_number()) {
                throw ParseError("trajectory step" + where + " must be [viewpoint, heading, elevation]");
            }
            e.trajectory.push_back({step[0].get<std::string>(), step[1].get<double>(), step[2].get<double>()});
        }
        out.push_back(std::move(e));
    }
    return out;
}

nlohmann::json save_submission(const std::vector<SubmissionEntry>& entries) {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& e : entries) {
        nlohmann::json traj = nlohmann::json::array();
        for (const auto& s : e.trajectory) traj.push_back({s.viewpoint, s.heading, s.elevation});
        j.push_back({{"instr_id", e.instr_id}, {"trajectory", traj}});
    }
    return j;
}

nlohmann::json metrics_to_json(const CorpusMetrics& m, bool include_episodes) {
    auto finite_or_null = [](double v) -> nlohmann::json {
        if (std::isfinite(v)) return v;
        return nullptr;
    };
    nlohmann::json j = {{"episodes", m.episodes},
                        {"trajectory_length", finite_or_null(m.trajectory_length)},
                        {"navigation_error", finite_or_null(m.navigation_error)},
                        {"success_rate", m.success_rate},
                        {"oracle_success_rate", m.oracle_success_rate}};
    if (include_episodes) {
        nlohmann::json eps = nlohmann::json::array();
        for (const auto& r : m.per_episode) {
            eps.push_back({{"instr_id", r.instr_id},
                           {"trajectory_length", finite_or_null(r.metrics.trajectory_length)},
                           {"navigation_error", finite_or_null(r.metrics.navigation_error)},
                           {"success", r.metrics.success},
                           {"oracle_success", r.metrics.oracle_success}});
        }
        j["per_episode"] = eps;
    }
    return j;
}

}  // namespace vln
