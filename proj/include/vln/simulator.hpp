#pragma once

#include "vln/geometry.hpp"
#include "vln/navgraph.hpp"
#include "vln/scene.hpp"

#include <array>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string_view>
#include <vector>

namespace vln {

/// Immutable scene bundle: layout plus its navigation graph, with
/// thread-safe caches of goal distance tables.
class Scene {
public:
    explicit Scene(SceneLayout layout, double max_edge = NavGraph::kDefaultMaxEdge);

    const std::string& id() const { return layout_.scene_id; }
    const SceneLayout& layout() const { return layout_; }
    const NavGraph& graph() const { return graph_; }

    /// Graph distances from every vertex to `goal` (cached).
    std::shared_ptr<const std::vector<double>> distances_to(VertexId goal) const;

    /// Room label of a viewpoint.
    const std::string& room_label(VertexId v) const;

private:
    SceneLayout layout_;
    NavGraph graph_;
    mutable std::mutex mutex_;
    mutable std::map<std::size_t, std::shared_ptr<const std::vector<double>>> distance_cache_;
};

enum class ModelAction : std::uint8_t { left = 0, right, up, down, forward, stop };

inline constexpr std::size_t kActionCount = 6;
inline constexpr std::array<ModelAction, kActionCount> kAllActions = {
    ModelAction::left, ModelAction::right, ModelAction::up, ModelAction::down, ModelAction::forward, ModelAction::stop};

constexpr std::size_t action_index(ModelAction a) { return static_cast<std::size_t>(a); }
std::string_view action_name(ModelAction a);
std::optional<ModelAction> parse_action(std::string_view name);

struct Candidate {
    VertexId viewpoint;
    double rel_bearing;  // signed offset from the camera heading, (-pi, pi]
};

enum class DoneReason : std::uint8_t { none, stop, step_limit };
std::string_view done_reason_name(DoneReason r);

struct EpisodeState {
    Pose pose;
    int step = 0;
    bool done = false;
    DoneReason reason = DoneReason::none;
    /// Set when the last model action was a forward with nothing to move to.
    bool forward_failed = false;
    /// Reachable set minus the current viewpoint, in adjacency order.
    std::vector<Candidate> reachable;

    friend bool operator==(const EpisodeState& a, const EpisodeState& b);
};

struct SimConfig {
    FrustumSpec frustum{};
    int step_limit = 20;
};

/// Deterministic episode transitions over one scene. Every operation takes
/// a state and returns the successor; the simulator itself holds no
/// per-episode data, so one instance can serve concurrent episodes.
class Simulator {
public:
    explicit Simulator(const Scene& scene, SimConfig config = {});

    const Scene& scene() const { return *scene_; }
    const SimConfig& config() const { return config_; }

    EpisodeState new_episode(const Pose& start) const;

    /// Simulator-level action: move to `next` (which must be in the
    /// reachable set, the current viewpoint included) and adjust the camera.
    EpisodeState make_action(const EpisodeState& state, VertexId next, double delta_heading,
                             double delta_elevation) const;

    /// Six-way model action adapter.
    EpisodeState model_step(const EpisodeState& state, ModelAction action) const;

    /// Candidate a forward action would move to: smallest |rel_bearing|,
    /// ties to the smaller viewpoint id.
    std::optional<VertexId> forward_target(const Pose& pose) const;

    /// Next action of an optimal model-action trajectory from the current
    /// pose to `goal`. Never emits up/down. Throws when the goal is not
    /// connected to the current viewpoint.
    ModelAction teacher_action(const EpisodeState& state, VertexId goal) const;

private:
    struct PlanTable;
    std::shared_ptr<const PlanTable> plan_for(VertexId goal, double phase) const;
    std::vector<Candidate> candidates(const Pose& pose) const;
    EpisodeState advance(EpisodeState next) const;

    const Scene* scene_;
    SimConfig config_;
    mutable std::shared_ptr<std::mutex> plan_mutex_;
    mutable std::shared_ptr<std::map<std::pair<std::size_t, long long>, std::shared_ptr<const PlanTable>>> plans_;
};

}  // namespace vln
