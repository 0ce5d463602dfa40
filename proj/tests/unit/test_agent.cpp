#include "../support/corpus.hpp"
#include "vln/agent.hpp"
#include "vln/error.hpp"

#include <doctest.h>

#include <omp.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

using namespace vln;
using fixture::small_corpus;

namespace {

ModelConfig tiny_config(const Vocabulary& vocab, std::size_t feature_dim) {
    ModelConfig cfg;
    cfg.hidden = 16;
    cfg.word_emb = 8;
    cfg.action_emb = 4;
    cfg.feature_dim = feature_dim;
    cfg.vocab_size = vocab.size();
    cfg.dropout = 0.0;
    return cfg;
}

bool same_bits(const ModelParams& a, const ModelParams& b) {
    return a.size() == b.size() && std::memcmp(a.flat().data(), b.flat().data(), a.size() * sizeof(double)) == 0;
}

std::vector<const Task*> pointers(const std::vector<Task>& tasks, std::size_t n) {
    std::vector<const Task*> out;
    for (std::size_t i = 0; i < n && i < tasks.size(); ++i) out.push_back(&tasks[i]);
    return out;
}

}  // namespace

TEST_SUITE("agent") {

TEST_CASE("tasks expand every instruction") {
    const fixture::Corpus c = small_corpus();
    CHECK(c.tasks.size() == 3 * c.items.size());
    for (const Task& t : c.tasks) {
        CHECK(t.start.viewpoint() == t.path.front());
        CHECK(t.goal == t.path.back());
        CHECK_FALSE(t.tokens.empty());
    }
    auto bad = c.items;
    bad[0].scan = "nowhere";
    CHECK_THROWS_AS(make_tasks(c.world, bad, c.vocab, 80), Error);
}

TEST_CASE("shortest agent: zero error on every task") {
    const fixture::Corpus c = small_corpus();
    const auto m = evaluate_agent(c.world, c.tasks,
                                  [](const Simulator& sim, const Task& t, std::size_t) { return shortest_agent(sim, t); });
    CHECK(m.success_rate == 1.0);
    CHECK(m.navigation_error == 0.0);
}

TEST_CASE("a policy that replays the reference path scores 100%") {
    const fixture::Corpus c = small_corpus();
    const AgentFn cheat = [](const Simulator&, const Task& t, std::size_t) {
        Trajectory traj{t.instr_id, {t.start}};
        for (std::size_t k = 1; k < t.path.size(); ++k) traj.poses.emplace_back(t.path[k], 0.0);
        return traj;
    };
    const auto m = evaluate_agent(c.world, c.tasks, cheat, false);
    CHECK(m.success_rate == 1.0);
    CHECK(m.oracle_success_rate == 1.0);
}

TEST_CASE("random agent is seeded and respects the step limit") {
    const fixture::Corpus c = small_corpus();
    for (const Task& t : c.tasks) {
        const Simulator& sim = c.world.simulator(t.scan);
        Rng a(5), b(5);
        const auto ta = random_agent(sim, t, a), tb = random_agent(sim, t, b);
        CHECK(ta.poses == tb.poses);
        CHECK(ta.poses.size() <= 21);
        CHECK(ta.poses.front() == t.start);
    }
}

TEST_CASE("random agent with nothing ahead turns until the step limit") {
    SceneLayout l;
    l.scene_id = "cell";
    l.rooms.push_back({"r0", "closet", {-1, -1, 5, 1}, 0.0});
    l.viewpoints = {{"A", {0, 0, 0}}, {"B", {4, 0, 0}}};
    l.walls = {{2, -1, 2, 1, 0.0}};
    World world;
    const Scene& scene = world.add(l);
    const Simulator& sim = world.simulator("cell");
    const VertexId a = scene.graph().at("A");
    const Task task{"0_0", "cell", Pose(a, 0.0), scene.graph().at("B"), {a}, {1}};
    Rng rng(3);
    const auto traj = random_agent(sim, task, rng);
    CHECK(traj.poses.size() == 21);
    for (const Pose& p : traj.poses) CHECK(p.viewpoint() == a);
}

TEST_CASE("greedy rollout stops when stop dominates") {
    const fixture::Corpus c = small_corpus();
    const FeatureProvider fp(12, 1);
    ModelParams p(tiny_config(c.vocab, 12));
    p.block(Block::output_bias)[action_index(ModelAction::stop)] = 10.0;
    const Task& t = c.tasks.front();
    const auto traj = greedy_rollout(p, fp, c.world.simulator(t.scan), t);
    REQUIRE(traj.poses.size() == 2);
    CHECK(traj.poses[1] == t.start);

    p.block(Block::output_bias)[action_index(ModelAction::stop)] = 0.0;
    p.block(Block::output_bias)[action_index(ModelAction::left)] = 10.0;
    const auto spin = greedy_rollout(p, fp, c.world.simulator(t.scan), t);
    CHECK(spin.poses.size() == 21);
}

TEST_CASE("zero learning rate leaves parameters alone; zero init loss is ln 6") {
    const fixture::Corpus c = small_corpus();
    const FeatureProvider fp(12, 1);
    TrainOptions o;
    o.lr = 0.0;
    o.regime = Regime::teacher;
    const ModelParams zero(tiny_config(c.vocab, 12));
    Trainer tr(zero, c.world, fp, o);
    const double loss = tr.step(pointers(c.tasks, 6), 1);
    CHECK(loss == doctest::Approx(std::log(6.0)).epsilon(1e-12));
    CHECK(same_bits(tr.params(), zero));
}

TEST_CASE("teacher forcing fits a five-item set") {
    const fixture::Corpus c = small_corpus();
    const FeatureProvider fp(12, 1);
    std::vector<Task> five(c.tasks.begin(), c.tasks.begin() + 5);
    TrainOptions o;
    o.regime = Regime::teacher;
    o.iters = 300;
    o.batch = 5;
    o.lr = 1e-2;
    o.weight_decay = 0.0;
    Trainer tr(ModelParams::randomized(tiny_config(c.vocab, 12), 1), c.world, fp, o);
    const auto stats = tr.train(five);
    REQUIRE(stats.curve.size() == 300);
    CHECK(stats.curve.back().loss <= 0.5 * stats.curve.front().loss);
    CHECK(stats.episodes == 1500);
}

TEST_CASE("training is deterministic and thread-count independent") {
    const fixture::Corpus c = small_corpus();
    const FeatureProvider fp(12, 1);
    const ModelParams init = ModelParams::randomized(tiny_config(c.vocab, 12), 2);
    for (Regime regime : {Regime::teacher, Regime::student}) {
        CAPTURE(regime_name(regime));
        TrainOptions o;
        o.regime = regime;
        o.iters = 4;
        o.batch = 10;
        o.lr = 1e-3;
        o.seed = 9;
        o.parallel = false;
        Trainer serial(init, c.world, fp, o);
        serial.train(c.tasks);
        Trainer again(init, c.world, fp, o);
        again.train(c.tasks);
        CHECK(same_bits(serial.params(), again.params()));

        const int saved = omp_get_max_threads();
        omp_set_num_threads(3);
        o.parallel = true;
        Trainer parallel(init, c.world, fp, o);
        parallel.train(c.tasks);
        omp_set_num_threads(saved);
        CHECK(same_bits(serial.params(), parallel.params()));
        CHECK(serial.stats().steps == parallel.stats().steps);

        o.seed = 10;
        Trainer other(init, c.world, fp, o);
        other.train(c.tasks);
        if (regime == Regime::student) CHECK_FALSE(same_bits(serial.params(), other.params()));
    }
}

TEST_CASE("student forcing visits states off the reference path") {
    const fixture::Corpus c = small_corpus();
    const FeatureProvider fp(12, 1);
    TrainOptions o;
    o.regime = Regime::student;
    o.iters = 3;
    o.batch = 8;
    Trainer tr(ModelParams::randomized(tiny_config(c.vocab, 12), 3), c.world, fp, o);
    const auto stats = tr.train(c.tasks);
    CHECK(stats.off_path_states > 0);
    CHECK(stats.steps >= stats.episodes);
}

TEST_CASE("divergence is reported") {
    const fixture::Corpus c = small_corpus();
    const FeatureProvider fp(12, 1);
    ModelParams p = ModelParams::randomized(tiny_config(c.vocab, 12), 4);
    p.block(Block::output_weight)[0] = INFINITY;
    TrainOptions o;
    Trainer tr(p, c.world, fp, o);
    CHECK_THROWS_AS(tr.step(pointers(c.tasks, 2), 1), Divergence);
}

TEST_CASE("trainer rejects mismatched features") {
    const fixture::Corpus c = small_corpus();
    const FeatureProvider fp(10, 1);
    CHECK_THROWS_AS(Trainer(ModelParams(tiny_config(c.vocab, 12)), c.world, fp, TrainOptions{}), Error);
}

TEST_CASE("regime names round-trip") {
    CHECK(parse_regime(regime_name(Regime::teacher)) == Regime::teacher);
    CHECK(parse_regime("student") == Regime::student);
    CHECK_FALSE(parse_regime("both").has_value());
}

TEST_CASE("checkpoint round trip") {
    const fixture::Corpus c = small_corpus();
    Checkpoint ck{ModelParams::randomized(tiny_config(c.vocab, 12), 5), c.vocab, 12, 77, 0.25};
    const auto dir = std::filesystem::temp_directory_path() / "vln_ckpt_test";
    const auto path = dir / "model.ckpt";
    save_checkpoint(path, ck);
    const Checkpoint back = load_checkpoint(path);
    CHECK(back.params.config() == ck.params.config());
    CHECK(same_bits(back.params, ck.params));
    CHECK(back.vocab.tokens() == ck.vocab.tokens());
    CHECK(back.feature_dim == 12);
    CHECK(back.feature_seed == 77);
    CHECK(back.feature_noise == 0.25);

    {
        std::ofstream out(dir / "junk.ckpt", std::ios::binary);
        out << "not a checkpoint";
    }
    CHECK_THROWS_AS(load_checkpoint(dir / "junk.ckpt"), ParseError);
    std::filesystem::resize_file(path, std::filesystem::file_size(path) - 8);
    CHECK_THROWS_AS(load_checkpoint(path), ParseError);
    CHECK_THROWS_AS(load_checkpoint(dir / "missing.ckpt"), Error);
    std::filesystem::remove_all(dir);
}

TEST_CASE("loss curve csv") {
    const auto path = std::filesystem::temp_directory_path() / "vln_curve_test.csv";
    write_loss_csv(path, {{1, 1.5, std::nullopt}, {2, 1.25, 0.5}});
    std::ifstream in(path);
    std::string all((std::istreambuf_iterator<char>(in)), {});
    CHECK(all == "iter,loss,split_metric\n1,1.5,\n2,1.25,0.5\n");
    std::filesystem::remove(path);
}

}  // TEST_SUITE
