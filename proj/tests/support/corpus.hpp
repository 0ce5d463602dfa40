#pragma once

#include "vln/agent.hpp"

#include <string>
#include <vector>

namespace fixture {

/// Two generated 2x2-room scenes with a few sampled paths each, their
/// instructions, vocabulary and tasks.
struct Corpus {
    vln::World world;
    vln::Vocabulary vocab;
    std::vector<vln::PathItem> items;
    std::vector<vln::Task> tasks;
};

inline Corpus small_corpus(std::size_t paths_per_scene = 4) {
    Corpus c;
    vln::Rng rng(21);
    vln::SceneParams sp;
    sp.rooms_x = 2;
    sp.rooms_y = 2;
    for (std::uint64_t seed : {31u, 32u}) {
        const vln::Scene& scene = c.world.add(vln::generate_scene(seed, sp));
        vln::SampleOptions o;
        o.first_path_id = static_cast<int>(c.items.size());
        o.max_teacher_steps = 20;
        auto r = vln::sample_paths(c.world.simulator(scene.id()), paths_per_scene, rng, o);
        for (auto& it : r.items) {
            it.instructions = vln::gen_instructions(c.world.simulator(scene.id()), it, 5);
            c.items.push_back(it);
        }
    }
    std::vector<std::string> corpus;
    for (const auto& it : c.items) corpus.insert(corpus.end(), it.instructions.begin(), it.instructions.end());
    c.vocab = vln::build_vocab(corpus, 1);
    c.tasks = vln::make_tasks(c.world, c.items, c.vocab, 80);
    return c;
}

}  // namespace fixture
