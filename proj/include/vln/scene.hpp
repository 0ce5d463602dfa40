#pragma once

#include "vln/geometry.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace vln {

/// 2D wall (or furniture) segment on the floor at height z.
struct Wall {
    double x1, y1, x2, y2;
    double z = 0.0;
};

struct Rect {
    double x0, y0, x1, y1;

    bool contains(double x, double y) const { return x > x0 && x < x1 && y > y0 && y < y1; }
    double width() const { return x1 - x0; }
    double height() const { return y1 - y0; }
};

struct Room {
    std::string id;
    std::string label;
    Rect rect;
    double z = 0.0;
};

struct Viewpoint {
    std::string id;
    Point3 position;
};

/// Static description of one building: walls, labelled rooms and the
/// panoramic viewpoint positions. Stairs are explicit viewpoint pairs that
/// get an edge regardless of line of sight.
struct SceneLayout {
    std::string scene_id;
    std::vector<Wall> walls;
    std::vector<Room> rooms;
    std::vector<Viewpoint> viewpoints;
    std::vector<std::pair<std::string, std::string>> stairs;

    /// Index of the viewpoint with this id; throws if absent.
    std::size_t viewpoint_index(std::string_view id) const;
    /// Room containing the point on the given floor, if any.
    const Room* room_at(double x, double y, double z) const;
    /// Room holding viewpoint i; throws when the point lies in no room.
    const Room& room_of(std::size_t viewpoint) const;
};

struct SceneParams {
    int rooms_x = 3;
    int rooms_y = 3;
    double room_size_m = 6.0;
    double door_width_m = 1.0;
    int floors = 1;
    /// Pitch of the jittered viewpoint lattice. With door viewpoints added,
    /// 3 m gives a mean nearest-neighbour separation of about 2 m.
    double spacing_m = 3.0;
    /// Each room gets up to furniture_pieces segments blocking sight lines,
    /// each present with furniture_prob.
    int furniture_pieces = 2;
    double furniture_prob = 0.7;
    double furniture_min_m = 1.2;
    double furniture_max_m = 2.2;
    /// Distance of the doorway viewpoint from the wall line.
    double door_viewpoint_offset_m = 0.4;
    /// Probability of an extra door beyond the spanning tree of doors.
    double extra_door_prob = 0.3;
};

inline constexpr double kFloorHeight = 3.0;

/// Builds a rectangular grid of rooms joined by doorways, with jittered
/// viewpoints inside each room. Deterministic in (seed, params). Retries
/// internally until the resulting navigation graph is connected.
SceneLayout generate_scene(std::uint64_t seed, const SceneParams& params, std::string scene_id = {});

/// True when the horizontal segment between the two viewpoints crosses no
/// wall on their floor. Touching a wall endpoint counts as blocked, and
/// viewpoints on different floors never see each other.
bool line_of_sight(const SceneLayout& layout, std::size_t a, std::size_t b);

/// Closed segment intersection test (touching counts).
bool segments_intersect(double ax, double ay, double bx, double by, double cx, double cy, double dx,
                        double dy);

/// Scene JSON: {scene_id, walls: [[x1,y1,x2,y2,z]], rooms: [{id,label,rect}],
/// viewpoints: [{id,x,y,z}], stairs?: [[id,id]]}.
nlohmann::json scene_to_json(const SceneLayout& layout);
SceneLayout scene_from_json(const nlohmann::json& j);

/// Room type names used by the generator.
const std::vector<std::string>& room_labels();

/// Deterministic synthetic observation features standing in for cached CNN
/// features. Each component mixes per-view hash noise with a smooth
/// function of what the camera sees (room labels, free space ahead,
/// position), so nearby views correlate and room types are recognisable.
class FeatureProvider {
public:
    static constexpr double kBin = kPi / 6.0;

    explicit FeatureProvider(std::size_t dim = 2048, std::uint64_t seed = 0, double noise_weight = 0.5);

    std::size_t dim() const { return dim_; }
    std::uint64_t seed() const { return seed_; }
    double noise_weight() const { return noise_weight_; }

    static int heading_bin(double heading);
    static int elevation_bin(double elevation);

    std::vector<double> features(const SceneLayout& layout, std::size_t viewpoint, double heading,
                                 double elevation) const;
    void features_into(const SceneLayout& layout, std::size_t viewpoint, double heading,
                       double elevation, std::span<double> out) const;

    /// Length of the semantic descriptor fed through the fixed projection.
    static std::size_t semantic_size();

private:
    std::vector<double> semantic(const SceneLayout& layout, std::size_t viewpoint, int hbin,
                                 int ebin) const;

    std::size_t dim_;
    std::uint64_t seed_;
    double noise_weight_;
    std::vector<double> projection_;  // dim x semantic_size, row-major
    std::vector<double> offset_;
};

}  // namespace vln
