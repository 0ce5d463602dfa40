#pragma once

#include "vln/dataset.hpp"
#include "vln/error.hpp"
#include "vln/navgraph.hpp"
#include "vln/world.hpp"

#include <nlohmann/json.hpp>

#include <string>
#include <vector>

namespace vln {

inline constexpr double kSuccessRadius = 3.0;

/// Visited poses of one episode, in order, starting with the start pose.
struct Trajectory {
    std::string instr_id;  // "<path_id>_<instruction index>"
    std::vector<Pose> poses;
};

/// Trajectory as it appears in a submission file: viewpoint ids are
/// strings and are resolved against a scene when scored.
struct SubmissionEntry {
    std::string instr_id;
    struct Step {
        std::string viewpoint;
        double heading;
        double elevation;
    };
    std::vector<Step> trajectory;
};

struct Metrics {
    double trajectory_length = 0.0;
    double navigation_error = 0.0;
    bool success = false;
    bool oracle_success = false;
};

/// Graph distance from the final viewpoint to the goal; +inf if unreachable.
double navigation_error(const NavGraph& graph, const Trajectory& trajectory, VertexId goal);

/// Strictly below the 3 m radius.
bool success(double navigation_error);

/// Success under an oracle that stops at the visited viewpoint closest to
/// the goal.
bool oracle_success(const NavGraph& graph, const Trajectory& trajectory, VertexId goal);

/// Sum of edge weights over viewpoint changes. Throws when two consecutive
/// viewpoints are neither equal nor adjacent.
double trajectory_length(const NavGraph& graph, const Trajectory& trajectory);

/// All four metrics; `to_goal` are precomputed distances to the goal.
Metrics evaluate_episode(const NavGraph& graph, const Trajectory& trajectory, std::span<const double> to_goal);
Metrics evaluate_episode(const Scene& scene, const Trajectory& trajectory, VertexId goal);

struct EpisodeResult {
    std::string instr_id;
    Metrics metrics;
};

struct CorpusMetrics {
    std::size_t episodes = 0;
    double trajectory_length = 0.0;  // mean, metres
    double navigation_error = 0.0;   // mean, metres
    double success_rate = 0.0;       // fraction in [0,1]
    double oracle_success_rate = 0.0;
    std::vector<EpisodeResult> per_episode;
};

struct ScoreOptions {
    /// Require a trajectory for every instruction of every item.
    bool require_complete = true;
};

/// Resolves submission ids against the scene graph. Throws ParseError on
/// unknown viewpoints.
Trajectory resolve(const NavGraph& graph, const SubmissionEntry& entry);

/// Scores submission entries against items (matched by instr_id). Unknown
/// or duplicate ids are errors, as are missing ids when require_complete.
CorpusMetrics score_corpus(const World& world, const std::vector<PathItem>& items,
                           const std::vector<SubmissionEntry>& entries, const ScoreOptions& opts = {});

CorpusMetrics summarize(std::vector<EpisodeResult> results);

/// Thrown by score_corpus; carries the offending instr_ids.
class ScoringError : public Error {
public:
    ScoringError(const std::string& what, std::vector<std::string> ids) : Error(what), ids_(std::move(ids)) {}
    const std::vector<std::string>& ids() const { return ids_; }

private:
    std::vector<std::string> ids_;
};

std::string instr_id(int path_id, std::size_t instruction_index);

/// Submission JSON: [{instr_id, trajectory: [[viewpoint, heading, elevation], ...]}].
std::vector<SubmissionEntry> load_submission(const nlohmann::json& j);
nlohmann::json save_submission(const std::vector<SubmissionEntry>& entries);
SubmissionEntry to_submission(const NavGraph& graph, const Trajectory& trajectory);

nlohmann::json metrics_to_json(const CorpusMetrics& m, bool include_episodes);

}  // namespace vln
