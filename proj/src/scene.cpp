#include "vln/scene.hpp"

#include "vln/error.hpp"
#include "vln/navgraph.hpp"
#include "vln/rng.hpp"

#include <algorithm>
#include <cstdio>
#include <limits>

namespace vln {

namespace {

double orient(double ax, double ay, double bx, double by, double cx, double cy) {
    return (bx - ax) * (cy - ay) - (by - ay) * (cx - ax);
}

bool on_segment(double ax, double ay, double bx, double by, double px, double py) {
    return std::min(ax, bx) <= px && px <= std::max(ax, bx) && std::min(ay, by) <= py &&
           py <= std::max(ay, by);
}

bool same_floor(double z1, double z2) { return std::abs(z1 - z2) < kFloorHeight / 2.0; }

std::string viewpoint_name(std::size_t i) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "vp%04zu", i);
    return buf;
}

struct Door {
    bool vertical;  // wall runs along y at fixed x
    double fixed;   // x (vertical) or y (horizontal) of the wall line
    double lo, hi;  // extent of the shared wall
    double center;  // doorway centre along the wall
};

double point_segment_distance(double px, double py, const Wall& w) {
    const double vx = w.x2 - w.x1, vy = w.y2 - w.y1;
    const double len2 = vx * vx + vy * vy;
    double t = len2 > 0.0 ? ((px - w.x1) * vx + (py - w.y1) * vy) / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    return std::hypot(px - (w.x1 + t * vx), py - (w.y1 + t * vy));
}

SceneLayout try_generate(Rng& rng, const SceneParams& p, const std::string& scene_id) {
    SceneLayout layout;
    layout.scene_id = scene_id;
    const double S = p.room_size_m;
    const int nx = p.rooms_x, ny = p.rooms_y;
    const double width = nx * S, height = ny * S;
    const double margin = 0.5;

    std::vector<std::string> labels = room_labels();
    std::vector<std::vector<std::size_t>> floor_room_viewpoints;

    for (int floor = 0; floor < p.floors; ++floor) {
        const double z = floor * kFloorHeight;
        rng.shuffle(labels.begin(), labels.end());
        const std::size_t room_base = layout.rooms.size();
        for (int iy = 0; iy < ny; ++iy) {
            for (int ix = 0; ix < nx; ++ix) {
                const std::size_t k = static_cast<std::size_t>(iy * nx + ix);
                Room room;
                room.id = "r" + std::to_string(floor) + "_" + std::to_string(ix) + "_" + std::to_string(iy);
                room.label = labels[k % labels.size()];
                room.rect = {ix * S, iy * S, (ix + 1) * S, (iy + 1) * S};
                room.z = z;
                layout.rooms.push_back(std::move(room));
            }
        }

        layout.walls.push_back({0, 0, width, 0, z});
        layout.walls.push_back({width, 0, width, height, z});
        layout.walls.push_back({width, height, 0, height, z});
        layout.walls.push_back({0, height, 0, 0, z});

        // doors: random spanning tree over the room grid plus a few extras
        const int cells = nx * ny;
        std::vector<int> parent(static_cast<std::size_t>(cells));
        for (int i = 0; i < cells; ++i) parent[static_cast<std::size_t>(i)] = i;
        auto find = [&](int x) {
            while (parent[static_cast<std::size_t>(x)] != x) {
                parent[static_cast<std::size_t>(x)] = parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(x)])];
                x = parent[static_cast<std::size_t>(x)];
            }
            return x;
        };
        struct Adj {
            int a, b;
            bool vertical;
        };
        std::vector<Adj> adjacencies;
        for (int iy = 0; iy < ny; ++iy) {
            for (int ix = 0; ix < nx; ++ix) {
                if (ix + 1 < nx) adjacencies.push_back({iy * nx + ix, iy * nx + ix + 1, true});
                if (iy + 1 < ny) adjacencies.push_back({iy * nx + ix, (iy + 1) * nx + ix, false});
            }
        }
        rng.shuffle(adjacencies.begin(), adjacencies.end());
        std::vector<Door> doors;
        for (const Adj& adj : adjacencies) {
            const int ra = find(adj.a), rb = find(adj.b);
            const bool tree = ra != rb;
            const bool open = tree || rng.bernoulli(p.extra_door_prob);
            if (tree) parent[static_cast<std::size_t>(ra)] = rb;
            const int ax = adj.a % nx, ay = adj.a / nx;
            Door d;
            d.vertical = adj.vertical;
            if (adj.vertical) {
                d.fixed = (ax + 1) * S;
                d.lo = ay * S;
                d.hi = (ay + 1) * S;
            } else {
                d.fixed = (ay + 1) * S;
                d.lo = ax * S;
                d.hi = (ax + 1) * S;
            }
            auto wall = [&](double a, double b) {
                if (b - a <= 1e-9) return;
                if (d.vertical) {
                    layout.walls.push_back({d.fixed, a, d.fixed, b, z});
                } else {
                    layout.walls.push_back({a, d.fixed, b, d.fixed, z});
                }
            };
            if (!open) {
                wall(d.lo, d.hi);
                continue;
            }
            const double half = p.door_width_m / 2.0;
            d.center = rng.uniform(d.lo + margin + half, d.hi - margin - half);
            wall(d.lo, d.center - half);
            wall(d.center + half, d.hi);
            doors.push_back(d);
        }

        // viewpoints on a jittered lattice inside each room
        const int per_axis = std::max(1, static_cast<int>(std::lround(S / p.spacing_m)));
        const double cell = S / per_axis;
        const double jitter = 0.2 * cell;
        std::vector<std::size_t> room_first(static_cast<std::size_t>(cells));
        for (int r = 0; r < cells; ++r) {
            const Rect& rect = layout.rooms[room_base + static_cast<std::size_t>(r)].rect;
            room_first[static_cast<std::size_t>(r)] = layout.viewpoints.size();
            std::size_t placed = 0;
            const int total = per_axis * per_axis;
            for (int c = 0; c < total; ++c) {
                const bool last_chance = placed == 0 && c == total - 1;
                if (!last_chance && rng.bernoulli(0.1)) continue;
                const int i = c % per_axis, j = c / per_axis;
                double x = rect.x0 + (i + 0.5) * cell + rng.uniform(-jitter, jitter);
                double y = rect.y0 + (j + 0.5) * cell + rng.uniform(-jitter, jitter);
                x = std::clamp(x, rect.x0 + 0.3, rect.x1 - 0.3);
                y = std::clamp(y, rect.y0 + 0.3, rect.y1 - 0.3);
                layout.viewpoints.push_back({viewpoint_name(layout.viewpoints.size()), {x, y, z}});
                ++placed;
            }
        }
        // one viewpoint just inside each doorway
        for (const Door& d : doors) {
            const double side = rng.bernoulli(0.5) ? p.door_viewpoint_offset_m : -p.door_viewpoint_offset_m;
            const Point3 pt = d.vertical ? Point3{d.fixed + side, d.center, z} : Point3{d.center, d.fixed + side, z};
            layout.viewpoints.push_back({viewpoint_name(layout.viewpoints.size()), pt});
        }
        floor_room_viewpoints.emplace_back(room_first);

        // furniture segments, kept clear of the viewpoints
        const std::size_t floor_vp_begin = room_first.empty() ? 0 : room_first.front();
        for (int r = 0; r < cells * p.furniture_pieces; ++r) {
            if (!rng.bernoulli(p.furniture_prob)) continue;
            const Rect& rect = layout.rooms[room_base + static_cast<std::size_t>(r / p.furniture_pieces)].rect;
            for (int attempt = 0; attempt < 12; ++attempt) {
                const double len = rng.uniform(p.furniture_min_m, p.furniture_max_m);
                const bool horizontal = rng.bernoulli(0.5);
                const double cx = rng.uniform(rect.x0 + 1.0, rect.x1 - 1.0);
                const double cy = rng.uniform(rect.y0 + 1.0, rect.y1 - 1.0);
                Wall w = horizontal ? Wall{cx - len / 2, cy, cx + len / 2, cy, z} : Wall{cx, cy - len / 2, cx, cy + len / 2, z};
                w.x1 = std::max(w.x1, rect.x0 + 0.6);
                w.x2 = std::min(w.x2, rect.x1 - 0.6);
                w.y1 = std::max(w.y1, rect.y0 + 0.6);
                w.y2 = std::min(w.y2, rect.y1 - 0.6);
                bool clear = true;
                for (std::size_t v = floor_vp_begin; v < layout.viewpoints.size(); ++v) {
                    const auto& pos = layout.viewpoints[v].position;
                    if (point_segment_distance(pos.x, pos.y, w) < 0.35) {
                        clear = false;
                        break;
                    }
                }
                if (clear) {
                    layout.walls.push_back(w);
                    break;
                }
            }
        }
    }

    // stairs: nearest horizontal pair between consecutive floors within one room
    for (int floor = 0; floor + 1 < p.floors; ++floor) {
        const double z0 = floor * kFloorHeight, z1 = z0 + kFloorHeight;
        const std::size_t room = rng.index(static_cast<std::size_t>(nx * ny));
        const Rect& rect = layout.rooms[room].rect;
        double best = std::numeric_limits<double>::infinity();
        std::pair<std::size_t, std::size_t> pair{0, 0};
        for (std::size_t a = 0; a < layout.viewpoints.size(); ++a) {
            const auto& pa = layout.viewpoints[a].position;
            if (!same_floor(pa.z, z0) || !rect.contains(pa.x, pa.y)) continue;
            for (std::size_t b = 0; b < layout.viewpoints.size(); ++b) {
                const auto& pb = layout.viewpoints[b].position;
                if (!same_floor(pb.z, z1) || !rect.contains(pb.x, pb.y)) continue;
                const double h = horizontal_distance(pa, pb);
                if (h < best) {
                    best = h;
                    pair = {a, b};
                }
            }
        }
        if (std::isfinite(best)) {
            layout.stairs.emplace_back(layout.viewpoints[pair.first].id, layout.viewpoints[pair.second].id);
        }
    }
    return layout;
}

}  // namespace

const std::vector<std::string>& room_labels() {
    static const std::vector<std::string> labels = {
        "kitchen", "bedroom",  "bathroom", "living room", "dining room", "hallway",
        "office",  "closet",   "laundry room", "family room", "lounge", "garage",
        "library", "gym",      "porch",    "entryway"};
    return labels;
}

std::size_t SceneLayout::viewpoint_index(std::string_view id) const {
    for (std::size_t i = 0; i < viewpoints.size(); ++i) {
        if (viewpoints[i].id == id) return i;
    }
    throw Error("scene '" + scene_id + "' has no viewpoint '" + std::string(id) + "'");
}

const Room* SceneLayout::room_at(double x, double y, double z) const {
    for (const Room& r : rooms) {
        if (same_floor(r.z, z) && r.rect.contains(x, y)) return &r;
    }
    return nullptr;
}

const Room& SceneLayout::room_of(std::size_t viewpoint) const {
    const auto& p = viewpoints.at(viewpoint).position;
    if (const Room* r = room_at(p.x, p.y, p.z)) return *r;
    throw Error("viewpoint '" + viewpoints[viewpoint].id + "' lies outside every room");
}

SceneLayout generate_scene(std::uint64_t seed, const SceneParams& params, std::string scene_id) {
    if (params.rooms_x < 1 || params.rooms_y < 1 || params.floors < 1) {
        throw Error("generate_scene: grid dimensions must be at least 1");
    }
    if (!(params.door_width_m > 0.0) || !(params.room_size_m > params.door_width_m + 1.0)) {
        throw Error("generate_scene: need room size > door width + 2 * 0.5 m margin and door width > 0");
    }
    if (!(params.spacing_m > 0.0)) throw Error("generate_scene: spacing must be positive");
    if (params.furniture_pieces < 0 || !(params.furniture_min_m > 0.0 && params.furniture_min_m <= params.furniture_max_m)) {
        throw Error("generate_scene: bad furniture parameters");
    }
    if (scene_id.empty()) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "synth%016llx", static_cast<unsigned long long>(mix64(seed)));
        scene_id = buf;
    }
    for (std::uint64_t attempt = 0; attempt < 64; ++attempt) {
        Rng rng(hash_combine(seed, attempt));
        SceneLayout layout = try_generate(rng, params, scene_id);
        if (layout.viewpoints.empty()) throw Error("generate_scene: parameters produce no viewpoints");
        if (layout.viewpoints.size() == 1) return layout;
        if (is_connected(build_graph(layout))) return layout;
    }
    throw Error("generate_scene: no connected layout after 64 attempts");
}

bool segments_intersect(double ax, double ay, double bx, double by, double cx, double cy, double dx,
                        double dy) {
    const double d1 = orient(cx, cy, dx, dy, ax, ay);
    const double d2 = orient(cx, cy, dx, dy, bx, by);
    const double d3 = orient(ax, ay, bx, by, cx, cy);
    const double d4 = orient(ax, ay, bx, by, dx, dy);
    if (((d1 > 0 && d2 < 0) || (d1 < 0 && d2 > 0)) && ((d3 > 0 && d4 < 0) || (d3 < 0 && d4 > 0))) {
        return true;
    }
    if (d1 == 0 && on_segment(cx, cy, dx, dy, ax, ay)) return true;
    if (d2 == 0 && on_segment(cx, cy, dx, dy, bx, by)) return true;
    if (d3 == 0 && on_segment(ax, ay, bx, by, cx, cy)) return true;
    if (d4 == 0 && on_segment(ax, ay, bx, by, dx, dy)) return true;
    return false;
}

bool line_of_sight(const SceneLayout& layout, std::size_t a, std::size_t b) {
    const auto& pa = layout.viewpoints.at(a).position;
    const auto& pb = layout.viewpoints.at(b).position;
    if (!same_floor(pa.z, pb.z)) return false;
    for (const Wall& w : layout.walls) {
        if (!same_floor(w.z, pa.z)) continue;
        if (segments_intersect(pa.x, pa.y, pb.x, pb.y, w.x1, w.y1, w.x2, w.y2)) return false;
    }
    return true;
}

nlohmann::json scene_to_json(const SceneLayout& layout) {
    using nlohmann::json;
    json walls = json::array(), rooms = json::array(), vps = json::array();
    for (const Wall& w : layout.walls) walls.push_back({w.x1, w.y1, w.x2, w.y2, w.z});
    for (const Room& r : layout.rooms) {
        rooms.push_back({{"id", r.id},
                         {"label", r.label},
                         {"rect", {r.rect.x0, r.rect.y0, r.rect.x1, r.rect.y1}},
                         {"z", r.z}});
    }
    for (const Viewpoint& v : layout.viewpoints) {
        vps.push_back({{"id", v.id}, {"x", v.position.x}, {"y", v.position.y}, {"z", v.position.z}});
    }
    json j = {{"scene_id", layout.scene_id}, {"walls", walls}, {"rooms", rooms}, {"viewpoints", vps}};
    if (!layout.stairs.empty()) {
        json stairs = json::array();
        for (const auto& [a, b] : layout.stairs) stairs.push_back({a, b});
        j["stairs"] = stairs;
    }
    return j;
}

SceneLayout scene_from_json(const nlohmann::json& j) {
    SceneLayout layout;
    std::string where = "scene_id";
    try {
        layout.scene_id = j.at("scene_id").get<std::string>();
        where = "walls";
        for (const auto& w : j.at("walls")) {
            if (w.size() != 5) throw ParseError("wall must be [x1,y1,x2,y2,z]");
            layout.walls.push_back({w[0].get<double>(), w[1].get<double>(), w[2].get<double>(),
                                    w[3].get<double>(), w[4].get<double>()});
        }
        where = "rooms";
        for (const auto& r : j.at("rooms")) {
            const auto& rect = r.at("rect");
            if (rect.size() != 4) throw ParseError("room rect must be [x0,y0,x1,y1]");
            layout.rooms.push_back({r.at("id").get<std::string>(), r.at("label").get<std::string>(),
                                    {rect[0].get<double>(), rect[1].get<double>(), rect[2].get<double>(),
                                     rect[3].get<double>()},
                                    r.value("z", 0.0)});
        }
        where = "viewpoints";
        for (const auto& v : j.at("viewpoints")) {
            layout.viewpoints.push_back(
                {v.at("id").get<std::string>(), {v.at("x").get<double>(), v.at("y").get<double>(), v.at("z").get<double>()}});
        }
        where = "stairs";
        if (j.contains("stairs")) {
            for (const auto& s : j.at("stairs")) {
                layout.stairs.emplace_back(s.at(0).get<std::string>(), s.at(1).get<std::string>());
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("scene json: " + where + ": " + e.what());
    }
    return layout;
}

// ---------------------------------------------------------------------------
// FeatureProvider

namespace {
constexpr double kRayCap = 10.0;
constexpr double kLookAhead = 4.0;
constexpr double kRbfCenters[] = {0.5, 1.5, 3.0, 5.0, 8.0};

double free_space_ahead(const SceneLayout& layout, const Point3& origin, double heading) {
    const double dx = std::sin(heading), dy = std::cos(heading);
    double best = kRayCap;
    for (const Wall& w : layout.walls) {
        if (!same_floor(w.z, origin.z)) continue;
        const double ex = w.x2 - w.x1, ey = w.y2 - w.y1;
        const double denom = dx * ey - dy * ex;
        if (std::abs(denom) < 1e-12) continue;
        const double qx = w.x1 - origin.x, qy = w.y1 - origin.y;
        const double t = (qx * ey - qy * ex) / denom;  // distance along the ray
        const double s = (qx * dy - qy * dx) / denom;  // position along the wall
        if (t > 0.0 && s >= 0.0 && s <= 1.0) best = std::min(best, t);
    }
    return best;
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

std::size_t FeatureProvider::semantic_size() {
    const std::size_t labels = room_labels().size();
    return 2 * labels + std::size(kRbfCenters) + 1 + 4;
}

FeatureProvider::FeatureProvider(std::size_t dim, std::uint64_t seed, double noise_weight)
    : dim_(dim), seed_(seed), noise_weight_(noise_weight) {
    if (dim == 0) throw Error("FeatureProvider: dim must be positive");
    if (!(noise_weight >= 0.0 && noise_weight <= 1.0)) throw Error("FeatureProvider: noise weight outside [0,1]");
    // The projection depends only on the seed, so the semantic part of a
    // feature means the same thing in every scene.
    Rng rng(hash_combine(seed, 0x5e3a7f1cULL));
    const std::size_t s = semantic_size();
    projection_.resize(dim * s);
    offset_.resize(dim);
    for (double& a : projection_) a = 1.5 * rng.normal();
    for (double& b : offset_) b = 0.5 * rng.normal();
}

int FeatureProvider::heading_bin(double heading) {
    const auto bin = static_cast<int>(std::lround(wrap_heading(heading) / kBin));
    return bin % 12;
}

int FeatureProvider::elevation_bin(double elevation) {
    const auto bin = static_cast<int>(std::lround(clamp_elevation(elevation) / kBin));
    return std::clamp(bin, -3, 3);
}

std::vector<double> FeatureProvider::semantic(const SceneLayout& layout, std::size_t viewpoint, int hbin,
                                              int ebin) const {
    const auto& labels = room_labels();
    const std::size_t nl = labels.size();
    std::vector<double> s(semantic_size(), 0.0);
    const Point3& pos = layout.viewpoints.at(viewpoint).position;
    auto label_index = [&](const Room* room) -> std::optional<std::size_t> {
        if (!room) return std::nullopt;
        auto it = std::find(labels.begin(), labels.end(), room->label);
        if (it == labels.end()) return std::nullopt;
        return static_cast<std::size_t>(it - labels.begin());
    };
    const Room* here = layout.room_at(pos.x, pos.y, pos.z);
    if (auto li = label_index(here)) s[*li] = 1.0;

    const double heading = hbin * kBin;
    const double free = free_space_ahead(layout, pos, heading);
    const double reach = std::clamp(free - 0.3, 0.0, kLookAhead);
    const Room* seen = layout.room_at(pos.x + reach * std::sin(heading), pos.y + reach * std::cos(heading), pos.z);
    if (!seen) seen = here;
    if (auto li = label_index(seen)) s[nl + *li] = 1.0;

    std::size_t k = 2 * nl;
    for (double c : kRbfCenters) {
        const double u = (free - c) / 1.0;
        s[k++] = std::exp(-u * u);
    }
    s[k++] = ebin / 3.0;
    s[k++] = std::sin(pos.x / 2.5);
    s[k++] = std::cos(pos.x / 2.5);
    s[k++] = std::sin(pos.y / 2.5);
    s[k++] = std::cos(pos.y / 2.5);
    return s;
}

void FeatureProvider::features_into(const SceneLayout& layout, std::size_t viewpoint, double heading,
                                    double elevation, std::span<double> out) const {
    if (out.size() != dim_) throw Error("features_into: output span has wrong size");
    const int hbin = heading_bin(heading);
    const int ebin = elevation_bin(elevation);
    const auto sem = semantic(layout, viewpoint, hbin, ebin);
    std::uint64_t key = hash_combine(seed_, hash_string(layout.scene_id));
    key = hash_combine(key, hash_string(layout.viewpoints.at(viewpoint).id));
    key = hash_combine(key, static_cast<std::uint64_t>(hbin));
    key = hash_combine(key, static_cast<std::uint64_t>(ebin + 8));
    const std::size_t s = sem.size();
    for (std::size_t i = 0; i < dim_; ++i) {
        const double noise = unit_from_bits(mix64(key + i));
        double acc = offset_[i];
        const double* row = projection_.data() + i * s;
        for (std::size_t j = 0; j < s; ++j) acc += row[j] * sem[j];
        out[i] = noise_weight_ * noise + (1.0 - noise_weight_) * sigmoid(acc);
    }
}

std::vector<double> FeatureProvider::features(const SceneLayout& layout, std::size_t viewpoint, double heading,
                                              double elevation) const {
    std::vector<double> out(dim_);
    features_into(layout, viewpoint, heading, elevation, out);
    return out;
}

}  // namespace vln
