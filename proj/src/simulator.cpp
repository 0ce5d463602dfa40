#include "vln/simulator.hpp"

#include "vln/error.hpp"

#include <limits>
#include <queue>

namespace vln {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr int kHeadings = 12;
constexpr std::size_t kPlanCacheLimit = 4096;
}  // namespace

Scene::Scene(SceneLayout layout, double max_edge) : layout_(std::move(layout)), graph_(build_graph(layout_, max_edge)) {}

std::shared_ptr<const std::vector<double>> Scene::distances_to(VertexId goal) const {
    std::lock_guard lock(mutex_);
    auto it = distance_cache_.find(index_of(goal));
    if (it != distance_cache_.end()) return it->second;
    auto table = std::make_shared<const std::vector<double>>(distances_from(graph_, goal));
    distance_cache_.emplace(index_of(goal), table);
    return table;
}

const std::string& Scene::room_label(VertexId v) const { return layout_.room_of(index_of(v)).label; }

std::string_view action_name(ModelAction a) {
    switch (a) {
        case ModelAction::left: return "left";
        case ModelAction::right: return "right";
        case ModelAction::up: return "up";
        case ModelAction::down: return "down";
        case ModelAction::forward: return "forward";
        case ModelAction::stop: return "stop";
    }
    return "?";
}

std::optional<ModelAction> parse_action(std::string_view name) {
    for (ModelAction a : kAllActions) {
        if (action_name(a) == name) return a;
    }
    return std::nullopt;
}

std::string_view done_reason_name(DoneReason r) {
    switch (r) {
        case DoneReason::none: return "none";
        case DoneReason::stop: return "stop";
        case DoneReason::step_limit: return "step_limit";
    }
    return "?";
}

bool operator==(const EpisodeState& a, const EpisodeState& b) {
    if (!(a.pose == b.pose) || a.step != b.step || a.done != b.done || a.reason != b.reason ||
        a.forward_failed != b.forward_failed || a.reachable.size() != b.reachable.size()) {
        return false;
    }
    for (std::size_t i = 0; i < a.reachable.size(); ++i) {
        if (a.reachable[i].viewpoint != b.reachable[i].viewpoint ||
            a.reachable[i].rel_bearing != b.reachable[i].rel_bearing) {
            return false;
        }
    }
    return true;
}

// Optimal cost-to-go over (viewpoint, heading lattice index) for one goal.
// Cost is (metres travelled, actions taken) compared lexicographically.
struct Simulator::PlanTable {
    double phase = 0.0;
    std::vector<double> dist;
    std::vector<int> steps;
    std::vector<long> forward_to;  // -1 when forward has no target

    static std::size_t key(std::size_t v, int k) { return v * kHeadings + static_cast<std::size_t>(k); }
};

Simulator::Simulator(const Scene& scene, SimConfig config)
    : scene_(&scene),
      config_(config),
      plan_mutex_(std::make_shared<std::mutex>()),
      plans_(std::make_shared<std::map<std::pair<std::size_t, long long>, std::shared_ptr<const PlanTable>>>()) {
    if (!(config_.frustum.hfov > 0.0 && config_.frustum.hfov < kPi)) throw Error("SimConfig: hfov must be in (0, pi)");
    if (config_.step_limit < 1) throw Error("SimConfig: step limit must be positive");
}

std::vector<Candidate> Simulator::candidates(const Pose& pose) const {
    const NavGraph& graph = scene_->graph();
    const auto reach = reachable_set(graph, pose, config_.frustum);
    std::vector<Candidate> out;
    out.reserve(reach.size() - 1);
    const Point3& here = graph.position(pose.viewpoint());
    for (std::size_t i = 1; i < reach.size(); ++i) {
        const Point3& there = graph.position(reach[i]);
        const double rel = horizontal_distance(here, there) == 0.0 ? 0.0 : relative_bearing(pose.heading(), here, there);
        out.push_back({reach[i], rel});
    }
    return out;
}

std::optional<VertexId> Simulator::forward_target(const Pose& pose) const {
    std::optional<VertexId> best;
    double best_offset = kInf;
    for (const Candidate& c : candidates(pose)) {
        // candidates arrive in id order, so strict < keeps the smaller id on ties
        if (std::abs(c.rel_bearing) < best_offset) {
            best_offset = std::abs(c.rel_bearing);
            best = c.viewpoint;
        }
    }
    return best;
}

EpisodeState Simulator::new_episode(const Pose& start) const {
    if (!scene_->graph().contains(start.viewpoint())) throw Error("new_episode: start viewpoint not in scene");
    EpisodeState s;
    s.pose = start;
    s.reachable = candidates(start);
    return s;
}

EpisodeState Simulator::advance(EpisodeState next) const {
    ++next.step;
    next.reachable = candidates(next.pose);
    if (next.step >= config_.step_limit) {
        next.done = true;
        next.reason = DoneReason::step_limit;
    }
    return next;
}

EpisodeState Simulator::make_action(const EpisodeState& state, VertexId next, double delta_heading,
                                    double delta_elevation) const {
    if (state.done) throw EpisodeDone("make_action: episode already finished");
    const NavGraph& graph = scene_->graph();
    if (!graph.contains(next)) throw ReachabilityViolation("make_action: unknown viewpoint");
    bool allowed = next == state.pose.viewpoint();
    for (const Candidate& c : state.reachable) allowed = allowed || c.viewpoint == next;
    if (!allowed) {
        throw ReachabilityViolation("viewpoint '" + graph.id(next) + "' is not in the reachable set of '" +
                                    graph.id(state.pose.viewpoint()) + "'");
    }
    EpisodeState out = state;
    out.forward_failed = false;
    out.pose.set_viewpoint(next);
    out.pose.set_heading(state.pose.heading() + delta_heading);
    out.pose.set_elevation(state.pose.elevation() + delta_elevation);
    return advance(std::move(out));
}

EpisodeState Simulator::model_step(const EpisodeState& state, ModelAction action) const {
    if (state.done) throw EpisodeDone("model_step: episode already finished");
    EpisodeState out = state;
    out.forward_failed = false;
    switch (action) {
        case ModelAction::left: out.pose.set_heading(state.pose.heading() - kTurnStep); break;
        case ModelAction::right: out.pose.set_heading(state.pose.heading() + kTurnStep); break;
        case ModelAction::up: out.pose.set_elevation(state.pose.elevation() + kTurnStep); break;
        case ModelAction::down: out.pose.set_elevation(state.pose.elevation() - kTurnStep); break;
        case ModelAction::forward:
            if (auto target = forward_target(state.pose)) {
                out.pose.set_viewpoint(*target);
            } else {
                out.forward_failed = true;
            }
            break;
        case ModelAction::stop:
            out.done = true;
            out.reason = DoneReason::stop;
            ++out.step;
            return out;
    }
    return advance(std::move(out));
}

std::shared_ptr<const Simulator::PlanTable> Simulator::plan_for(VertexId goal, double phase) const {
    const auto cache_key = std::make_pair(index_of(goal), std::llround(phase * 1e9));
    {
        std::lock_guard lock(*plan_mutex_);
        auto it = plans_->find(cache_key);
        if (it != plans_->end()) return it->second;
    }

    const NavGraph& graph = scene_->graph();
    const std::size_t n = graph.size();
    auto table = std::make_shared<PlanTable>();
    table->phase = phase;
    table->dist.assign(n * kHeadings, kInf);
    table->steps.assign(n * kHeadings, std::numeric_limits<int>::max());
    table->forward_to.assign(n * kHeadings, -1);

    struct Pred {
        std::size_t from;
        double weight;
    };
    std::vector<std::vector<Pred>> preds(n * kHeadings);
    for (std::size_t v = 0; v < n; ++v) {
        for (int k = 0; k < kHeadings; ++k) {
            const std::size_t s = PlanTable::key(v, k);
            preds[PlanTable::key(v, (k + 1) % kHeadings)].push_back({s, 0.0});
            preds[PlanTable::key(v, (k + kHeadings - 1) % kHeadings)].push_back({s, 0.0});
            const Pose pose(vertex_at(v), phase + k * kTurnStep);
            if (auto target = forward_target(pose)) {
                table->forward_to[s] = static_cast<long>(index_of(*target));
                preds[PlanTable::key(index_of(*target), k)].push_back({s, graph.weight(vertex_at(v), *target)});
            }
        }
    }

    using Item = std::tuple<double, int, std::size_t>;
    std::priority_queue<Item, std::vector<Item>, std::greater<>> heap;
    for (int k = 0; k < kHeadings; ++k) {
        const std::size_t s = PlanTable::key(index_of(goal), k);
        table->dist[s] = 0.0;
        table->steps[s] = 1;  // the stop action
        heap.emplace(0.0, 1, s);
    }
    while (!heap.empty()) {
        auto [d, st, s] = heap.top();
        heap.pop();
        if (d > table->dist[s] || (d == table->dist[s] && st > table->steps[s])) continue;
        for (const Pred& p : preds[s]) {
            const double nd = d + p.weight;
            const int ns = st + 1;
            double& cur = table->dist[p.from];
            int& cur_steps = table->steps[p.from];
            const double tol = length_tolerance(nd);
            if (nd < cur - tol || (std::abs(nd - cur) <= tol && ns < cur_steps)) {
                cur = nd;
                cur_steps = ns;
                heap.emplace(nd, ns, p.from);
            }
        }
    }

    std::lock_guard lock(*plan_mutex_);
    if (plans_->size() >= kPlanCacheLimit) plans_->clear();
    plans_->emplace(cache_key, table);
    return table;
}

ModelAction Simulator::teacher_action(const EpisodeState& state, VertexId goal) const {
    const NavGraph& graph = scene_->graph();
    if (!graph.contains(goal)) throw Error("teacher_action: unknown goal");
    const VertexId here = state.pose.viewpoint();
    if (here == goal) return ModelAction::stop;
    const auto to_goal = scene_->distances_to(goal);
    if (!std::isfinite((*to_goal)[index_of(here)])) {
        throw Error("teacher_action: goal '" + graph.id(goal) + "' unreachable from '" + graph.id(here) + "'");
    }

    // Position of the heading on the 30 degree lattice through it.
    const double heading = state.pose.heading();
    const double q = heading / kTurnStep;
    long long k_raw = std::llround(q);
    double phase = 0.0;
    if (std::abs(q - static_cast<double>(k_raw)) > 1e-9) {
        k_raw = static_cast<long long>(std::floor(q));
        phase = heading - static_cast<double>(k_raw) * kTurnStep;
    }
    const int k = static_cast<int>(((k_raw % kHeadings) + kHeadings) % kHeadings);
    const auto plan = plan_for(goal, phase);
    const std::size_t v = index_of(here);

    struct Option {
        ModelAction action;
        double dist;
        long steps;
    };
    std::vector<Option> options;
    const long fwd = plan->forward_to[PlanTable::key(v, k)];
    if (fwd >= 0) {
        const std::size_t s = PlanTable::key(static_cast<std::size_t>(fwd), k);
        options.push_back({ModelAction::forward, graph.weight(here, vertex_at(static_cast<std::size_t>(fwd))) + plan->dist[s],
                           static_cast<long>(plan->steps[s]) + 1});
    }
    const std::size_t sl = PlanTable::key(v, (k + kHeadings - 1) % kHeadings);
    const std::size_t sr = PlanTable::key(v, (k + 1) % kHeadings);
    options.push_back({ModelAction::left, plan->dist[sl], static_cast<long>(plan->steps[sl]) + 1});
    options.push_back({ModelAction::right, plan->dist[sr], static_cast<long>(plan->steps[sr]) + 1});

    // preferred turning direction: towards the next vertex on the graph's
    // shortest path; an exact tie (dead ahead or directly behind) turns right
    const auto route = shortest_path_with(graph, here, goal, *to_goal);
    ModelAction toward = ModelAction::right;
    const VertexId next = route->vertices.at(1);
    if (horizontal_distance(graph.position(here), graph.position(next)) > 0.0) {
        const double offset = relative_bearing(heading, graph.position(here), graph.position(next));
        if (offset < 0.0 && offset > -kPi) toward = ModelAction::left;
    }
    auto rank = [&](ModelAction a) {
        if (a == ModelAction::forward) return 0;
        return a == toward ? 1 : 2;
    };
    const Option* best = nullptr;
    for (const Option& o : options) {
        if (!std::isfinite(o.dist)) continue;
        if (!best) {
            best = &o;
            continue;
        }
        const double tol = length_tolerance(std::max(o.dist, best->dist));
        const bool better = o.dist < best->dist - tol ||
                            (std::abs(o.dist - best->dist) <= tol &&
                             (o.steps < best->steps || (o.steps == best->steps && rank(o.action) < rank(best->action))));
        if (better) best = &o;
    }
    if (best) return best->action;

    // The goal is graph-connected but no action sequence reaches it from
    // this heading lattice; move greedily instead.
    if (fwd >= 0 && (*to_goal)[static_cast<std::size_t>(fwd)] < (*to_goal)[v]) return ModelAction::forward;
    return toward;
}

}  // namespace vln
