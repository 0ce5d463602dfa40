#pragma once

#include "vln/dataset.hpp"
#include "vln/kernels.hpp"
#include "vln/metrics.hpp"
#include "vln/model.hpp"
#include "vln/scene.hpp"
#include "vln/simulator.hpp"
#include "vln/world.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace vln {

/// One (path, instruction) pair ready for rollout.
struct Task {
    std::string instr_id;
    std::string scan;
    Pose start;
    VertexId goal{};
    std::vector<VertexId> path;
    std::vector<int> tokens;
};

/// Expands every instruction of every item into a task. Items whose scene
/// is missing from the world are rejected.
std::vector<Task> make_tasks(const World& world, const std::vector<PathItem>& items, const Vocabulary& vocab,
                             std::size_t max_len);

Trajectory greedy_rollout(const ModelParams& params, const FeatureProvider& features, const Simulator& sim,
                          const Task& task);

/// Turns to one of the 12 absolute 30 degree headings, then tries to move
/// forward five times, turning right whenever nothing is ahead.
Trajectory random_agent(const Simulator& sim, const Task& task, Rng& rng);

/// Follows teacher_action to the goal; throws when the goal is unreachable.
Trajectory shortest_agent(const Simulator& sim, const Task& task);

using AgentFn = std::function<Trajectory(const Simulator&, const Task&, std::size_t index)>;

/// Runs the agent on every task (OpenMP over tasks when `parallel`) and
/// scores the trajectories.
CorpusMetrics evaluate_agent(const World& world, const std::vector<Task>& tasks, const AgentFn& agent,
                             bool parallel = true);

enum class Regime { teacher, student };
std::string_view regime_name(Regime r);
std::optional<Regime> parse_regime(std::string_view name);

struct TrainOptions {
    Regime regime = Regime::student;
    int iters = 100;
    std::size_t batch = 100;
    double lr = 1e-4;
    double weight_decay = 5e-4;
    std::uint64_t seed = 0;
    bool parallel = true;
    /// Called after iterations that are multiples of eval_every (0 = never);
    /// the returned value lands in the loss curve's split_metric column.
    int eval_every = 0;
    std::function<double(const ModelParams&, int iter)> evaluate;
};

struct CurvePoint {
    int iter;
    double loss;
    std::optional<double> split_metric;
};

struct TrainStats {
    std::vector<CurvePoint> curve;
    std::size_t episodes = 0;
    std::size_t steps = 0;
    /// Supervised states whose viewpoint lies off the item's reference path.
    std::size_t off_path_states = 0;
};

/// Gradients of one batch are accumulated in a fixed number of chunks and
/// reduced in chunk order, so results do not depend on the thread count and
/// the serial and parallel paths agree bitwise.
class Trainer {
public:
    static constexpr std::size_t kChunks = 8;

    Trainer(ModelParams params, const World& world, const FeatureProvider& features, TrainOptions opts);

    /// One Adam update on the given tasks; returns the mean per-step loss.
    double step(const std::vector<const Task*>& batch, int iter);

    /// Runs opts.iters iterations over shuffled epochs of `tasks`.
    TrainStats train(const std::vector<Task>& tasks);

    const ModelParams& params() const { return params_; }
    const TrainStats& stats() const { return stats_; }

private:
    struct Rollout {
        double loss = 0.0;
        std::size_t steps = 0;
        std::size_t off_path = 0;
    };
    Rollout run_episode(const Task& task, Rng& rng, ModelParams& grads) const;

    ModelParams params_;
    const World* world_;
    const FeatureProvider* features_;
    TrainOptions opts_;
    std::vector<double> m_, v_;
    long t_ = 0;
    std::vector<ModelParams> chunk_grads_;
    TrainStats stats_;
};

/// Writes the curve as CSV with header `iter,loss,split_metric`.
void write_loss_csv(const std::filesystem::path& path, const std::vector<CurvePoint>& curve);

struct Checkpoint {
    ModelParams params;
    Vocabulary vocab;
    std::size_t feature_dim = 0;
    std::uint64_t feature_seed = 0;
    double feature_noise = 0.5;
};

/// Binary file: magic line, 8-byte header length, JSON header (config,
/// tensor names/shapes, vocabulary, feature settings), then raw doubles.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace vln
