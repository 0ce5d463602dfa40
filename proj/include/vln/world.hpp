#pragma once

#include "vln/simulator.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

namespace vln {

/// Collection of scenes with one long-lived simulator each. Simulators
/// cache teacher plans, so callers should reuse them through the world.
class World {
public:
    explicit World(SimConfig config = {}) : config_(config) {}

    World(const World&) = delete;
    World& operator=(const World&) = delete;
    World(World&&) = default;
    World& operator=(World&&) = default;

    const Scene& add(SceneLayout layout);

    bool contains(std::string_view scene_id) const;
    const Scene& scene(std::string_view scene_id) const;
    const Simulator& simulator(std::string_view scene_id) const;
    std::vector<std::string> scene_ids() const;
    const SimConfig& config() const { return config_; }

    /// Loads every *.json scene file in a directory (sorted by name).
    static World load_dir(const std::filesystem::path& dir, SimConfig config = {});

private:
    struct Entry {
        std::unique_ptr<Scene> scene;
        std::unique_ptr<Simulator> simulator;
    };
    SimConfig config_;
    std::map<std::string, Entry, std::less<>> entries_;
};

nlohmann::json read_json_file(const std::filesystem::path& path);
void write_json_file(const std::filesystem::path& path, const nlohmann::json& j, int indent = 2);

}  // namespace vln
