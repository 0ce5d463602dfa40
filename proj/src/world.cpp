#include "vln/world.hpp"

#include "vln/error.hpp"

#include <algorithm>
#include <fstream>

namespace vln {

const Scene& World::add(SceneLayout layout) {
    const std::string id = layout.scene_id;
    if (entries_.contains(id)) throw Error("duplicate scene '" + id + "'");
    Entry e;
    e.scene = std::make_unique<Scene>(std::move(layout));
    e.simulator = std::make_unique<Simulator>(*e.scene, config_);
    auto [it, _] = entries_.emplace(id, std::move(e));
    return *it->second.scene;
}

bool World::contains(std::string_view scene_id) const { return entries_.find(scene_id) != entries_.end(); }

const Scene& World::scene(std::string_view scene_id) const {
    auto it = entries_.find(scene_id);
    if (it == entries_.end()) throw Error("unknown scene '" + std::string(scene_id) + "'");
    return *it->second.scene;
}

const Simulator& World::simulator(std::string_view scene_id) const {
    auto it = entries_.find(scene_id);
    if (it == entries_.end()) throw Error("unknown scene '" + std::string(scene_id) + "'");
    return *it->second.simulator;
}

std::vector<std::string> World::scene_ids() const {
    std::vector<std::string> ids;
    for (const auto& [id, _] : entries_) ids.push_back(id);
    return ids;
}

World World::load_dir(const std::filesystem::path& dir, SimConfig config) {
    if (!std::filesystem::is_directory(dir)) throw Error("scene directory '" + dir.string() + "' not found");
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ".json") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    World world(config);
    for (const auto& f : files) world.add(scene_from_json(read_json_file(f)));
    return world;
}

nlohmann::json read_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open '" + path.string() + "'");
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
}

void write_json_file(const std::filesystem::path& path, const nlohmann::json& j, int indent) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw Error("cannot write '" + path.string() + "'");
    out << j.dump(indent) << '\n';
}

}  // namespace vln
