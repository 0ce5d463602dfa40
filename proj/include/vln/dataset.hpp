#pragma once

#include "vln/rng.hpp"
#include "vln/simulator.hpp"

#include <nlohmann/json.hpp>

#include <map>
#include <string>
#include <unordered_map>
#include <vector>

namespace vln {

/// One R2R record: a start heading, a viewpoint path and its instructions.
struct PathItem {
    int path_id = 0;
    std::string scan;
    double heading = 0.0;
    std::vector<std::string> path;
    double distance = 0.0;
    std::vector<std::string> instructions;

    friend bool operator==(const PathItem&, const PathItem&) = default;
};

inline constexpr double kMinPathDistance = 5.0;
inline constexpr std::size_t kMinPathEdges = 4;
inline constexpr std::size_t kMaxPathEdges = 6;
inline constexpr std::size_t kInstructionsPerPath = 3;

/// Checks every generated-item invariant against the scene; returns a
/// description of the first violation, or empty when the item is valid.
std::string validate_item(const Scene& scene, const PathItem& item);

struct SampleOptions {
    int first_path_id = 0;
    /// Maximum number of (start, goal) draws; 0 means 400 per requested path.
    std::size_t budget = 0;
    /// Probability that a draw insists on start and goal in different rooms.
    double cross_room_prob = 0.97;
    /// When positive, drop paths whose teacher rollout from the start pose
    /// needs more model actions than this.
    int max_teacher_steps = 0;
};

struct SampleResult {
    std::vector<PathItem> items;  // instructions left empty
    std::size_t cross_room = 0;
    /// Number of requested paths that could not be found within budget.
    std::size_t shortfall = 0;
};

/// Rejection-samples start/goal pairs whose shortest path has distance
/// >= 5 m and 4..6 edges. Unreachable pairs are skipped silently.
SampleResult sample_paths(const Simulator& sim, std::size_t count, Rng& rng, const SampleOptions& opts = {});

/// Model actions and visited viewpoints of the teacher rollout for an item.
struct TeacherRollout {
    std::vector<ModelAction> actions;
    std::vector<VertexId> viewpoints;  // viewpoint before each action
};
TeacherRollout teacher_rollout(const Simulator& sim, const Pose& start, VertexId goal, int max_steps = 200);

/// Three distinct template instructions describing the item's teacher
/// rollout through turn words and room labels. Deterministic in the seed.
std::vector<std::string> gen_instructions(const Simulator& sim, const PathItem& item, std::uint64_t grammar_seed);

struct SplitOptions {
    std::uint64_t seed = 0;
    double unseen_fraction = 11.0 / 90.0;
    double test_fraction = 18.0 / 90.0;
    /// Share of train-scene paths held out as val_seen.
    double val_seen_fraction = 1020.0 / (14025.0 + 1020.0);
};

struct Splits {
    std::vector<std::string> train_scenes, val_unseen_scenes, test_scenes;
    std::vector<PathItem> train, val_seen, val_unseen, test;

    const std::vector<PathItem>& items(std::string_view split) const;
};

inline constexpr std::array<std::string_view, 4> kSplitNames = {"train", "val_seen", "val_unseen", "test"};

/// Scene-disjoint partition: val_unseen and test scenes never appear in
/// train or val_seen. Requires at least 4 scenes.
Splits make_splits(std::vector<std::string> scenes, const std::vector<PathItem>& items, const SplitOptions& opts = {});

/// Lower-cases, splits on whitespace and strips leading/trailing punctuation
/// from every token; tokens left empty are dropped.
std::vector<std::string> tokenize(std::string_view text);

class Vocabulary {
public:
    static constexpr int kPad = 0, kUnk = 1, kBos = 2, kEos = 3;
    static constexpr std::size_t kMinCount = 5;

    Vocabulary();
    explicit Vocabulary(const std::vector<std::string>& tokens);  // tokens after the reserved four

    int lookup(std::string_view token) const;
    const std::string& token(int index) const { return tokens_.at(static_cast<std::size_t>(index)); }
    std::size_t size() const { return tokens_.size(); }
    /// Every token including the reserved ones, in index order.
    const std::vector<std::string>& tokens() const { return tokens_; }

    /// Token ids of the instruction, truncated to max_len (UNK for unknown).
    std::vector<int> encode(std::string_view text, std::size_t max_len) const;

private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, int> index_;
};

/// Keeps tokens seen at least `min_count` times across the corpus, ordered
/// by descending count then alphabetically.
Vocabulary build_vocab(const std::vector<std::string>& corpus, std::size_t min_count = Vocabulary::kMinCount);

/// R2R JSON (array of {distance, scan, path_id, path, heading, instructions}).
std::vector<PathItem> load_r2r(const nlohmann::json& j);
nlohmann::json save_r2r(const std::vector<PathItem>& items);

std::vector<PathItem> load_r2r_file(const std::string& path);
void save_r2r_file(const std::string& path, const std::vector<PathItem>& items);

}  // namespace vln
