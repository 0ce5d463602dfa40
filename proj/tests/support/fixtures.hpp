#pragma once

#include "vln/scene.hpp"

namespace fixture {

// A(0,0)-B(4,0)-C(8,0), B-D(4,3). Two short walls cut the A-D and C-D
// sight lines, which would otherwise be 5 m edges.
inline vln::SceneLayout cross_layout() {
    vln::SceneLayout l;
    l.scene_id = "cross";
    l.rooms.push_back({"r0", "hallway", {-1, -1, 9, 4}, 0.0});
    l.viewpoints = {{"A", {0, 0, 0}}, {"B", {4, 0, 0}}, {"C", {8, 0, 0}}, {"D", {4, 3, 0}}};
    l.walls = {{2, 0.5, 2, 2.5, 0.0}, {6, 0.5, 6, 2.5, 0.0}};
    return l;
}

}  // namespace fixture
