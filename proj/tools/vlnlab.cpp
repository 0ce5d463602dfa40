// vlnlab: scene/dataset generation, training, evaluation, scoring, serving
// and replay export. Exit codes: 0 success, 1 runtime failure, 2 usage.

#include "vln/agent.hpp"
#include "vln/error.hpp"
#include "vln/server.hpp"

#include <CLI11.hpp>

#include <csignal>
#include <cstdio>
#include <iostream>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace vln;

namespace {

constexpr int kUsage = 2;

struct UsageError : Error {
    using Error::Error;
};

struct Common {
    std::string scenes = "data/scenes";
    std::string data = "data/r2r";
    int step_limit = 20;
};

void add_common(CLI::App* cmd, Common& c, bool with_data = true) {
    cmd->add_option("--scenes", c.scenes, "Directory of scene JSON files")->capture_default_str();
    if (with_data) cmd->add_option("--data", c.data, "Directory holding R2R_<split>.json")->capture_default_str();
    cmd->add_option("--step-limit", c.step_limit, "Model steps per episode")->capture_default_str()->check(CLI::PositiveNumber);
}

World load_world(const Common& c) {
    if (!fs::is_directory(c.scenes)) throw UsageError("scene directory '" + c.scenes + "' not found");
    SimConfig cfg;
    cfg.step_limit = c.step_limit;
    World world = World::load_dir(c.scenes, cfg);
    if (world.scene_ids().empty()) throw UsageError("no scene files in '" + c.scenes + "'");
    return world;
}

fs::path split_file(const std::string& dir, const std::string& split) { return fs::path(dir) / ("R2R_" + split + ".json"); }

std::vector<PathItem> load_split(const Common& c, const std::string& split) {
    const fs::path p = split_file(c.data, split);
    if (!fs::exists(p)) throw UsageError("dataset file '" + p.string() + "' not found");
    return load_r2r_file(p.string());
}

void log_config(const std::string& command, const json& cfg) {
    std::cerr << "[" << command << "] config " << cfg.dump() << "\n";
}

// --------------------------------------------------------------------------

struct GenScenes {
    int count = 16;
    std::uint64_t seed = 0;
    std::string out = "data/scenes";
    SceneParams params;
};

int run_gen_scenes(const GenScenes& o) {
    if (o.count <= 0) throw UsageError("--count must be positive");
    log_config("gen-scenes", {{"count", o.count}, {"seed", o.seed}, {"out", o.out}, {"rooms_x", o.params.rooms_x},
                              {"rooms_y", o.params.rooms_y}, {"floors", o.params.floors}});
    fs::create_directories(o.out);
    for (int i = 0; i < o.count; ++i) {
        char id[32];
        std::snprintf(id, sizeof id, "scan%03d", i);
        const SceneLayout layout = generate_scene(o.seed + static_cast<std::uint64_t>(i), o.params, id);
        write_json_file(fs::path(o.out) / (std::string(id) + ".json"), scene_to_json(layout));
    }
    std::cout << "wrote " << o.count << " scenes to " << o.out << "\n";
    return 0;
}

struct GenDataset {
    Common common;
    std::size_t paths_per_scene = 20;
    std::uint64_t seed = 0;
    int max_teacher_steps = 20;
    SplitOptions split;
};

int run_gen_dataset(const GenDataset& o) {
    if (o.paths_per_scene == 0) throw UsageError("--paths-per-scene must be positive");
    const World world = load_world(o.common);
    log_config("gen-dataset", {{"scenes", o.common.scenes}, {"out", o.common.data}, {"paths_per_scene", o.paths_per_scene},
                               {"seed", o.seed}, {"max_teacher_steps", o.max_teacher_steps},
                               {"unseen_fraction", o.split.unseen_fraction}, {"test_fraction", o.split.test_fraction},
                               {"val_seen_fraction", o.split.val_seen_fraction}});
    Rng rng(o.seed);
    std::vector<PathItem> items;
    std::size_t cross = 0, shortfall = 0;
    for (const std::string& id : world.scene_ids()) {
        const Simulator& sim = world.simulator(id);
        SampleOptions so;
        so.first_path_id = static_cast<int>(items.size());
        so.max_teacher_steps = o.max_teacher_steps;
        SampleResult r = sample_paths(sim, o.paths_per_scene, rng, so);
        cross += r.cross_room;
        shortfall += r.shortfall;
        for (PathItem& item : r.items) {
            item.instructions = gen_instructions(sim, item, hash_combine(o.seed, static_cast<std::uint64_t>(item.path_id)));
            const std::string bad = validate_item(sim.scene(), item);
            if (!bad.empty()) throw Error("generated item " + std::to_string(item.path_id) + " invalid: " + bad);
            items.push_back(std::move(item));
        }
    }
    SplitOptions so = o.split;
    so.seed = o.seed;
    const Splits splits = make_splits(world.scene_ids(), items, so);
    for (std::string_view name : kSplitNames) {
        save_r2r_file(split_file(o.common.data, std::string(name)).string(), splits.items(name));
    }
    std::cout << "paths " << items.size() << " (cross-room " << cross << ", shortfall " << shortfall << ")";
    for (std::string_view name : kSplitNames) std::cout << ", " << name << " " << splits.items(name).size();
    std::cout << "\n";
    return 0;
}

struct Train {
    Common common;
    std::string regime = "student";
    TrainOptions opts;
    ModelConfig model;
    std::size_t feature_dim = 2048;
    std::uint64_t feature_seed = 0;
    double feature_noise = 0.5;
    std::string checkpoint = "runs/model.ckpt";
    std::string loss_csv;
};

int run_train(Train& o) {
    const auto regime = parse_regime(o.regime);
    if (!regime) throw UsageError("--regime must be teacher or student");
    o.opts.regime = *regime;
    const World world = load_world(o.common);
    const auto train_items = load_split(o.common, "train");
    std::vector<std::string> corpus;
    for (const PathItem& it : train_items) corpus.insert(corpus.end(), it.instructions.begin(), it.instructions.end());
    const Vocabulary vocab = build_vocab(corpus);
    o.model.feature_dim = o.feature_dim;
    o.model.vocab_size = vocab.size();
    o.model.validate();
    const auto tasks = make_tasks(world, train_items, vocab, o.model.max_instruction);

    std::map<std::string, std::vector<Task>> val;
    for (const char* split : {"val_seen", "val_unseen"}) {
        if (fs::exists(split_file(o.common.data, split))) val[split] = make_tasks(world, load_split(o.common, split), vocab, o.model.max_instruction);
    }
    const FeatureProvider features(o.feature_dim, o.feature_seed, o.feature_noise);
    log_config("train", {{"regime", o.regime}, {"iters", o.opts.iters}, {"batch", o.opts.batch}, {"lr", o.opts.lr},
                         {"weight_decay", o.opts.weight_decay}, {"seed", o.opts.seed}, {"hidden", o.model.hidden},
                         {"word_emb", o.model.word_emb}, {"action_emb", o.model.action_emb}, {"dropout", o.model.dropout},
                         {"feature_dim", o.feature_dim}, {"feature_seed", o.feature_seed}, {"feature_noise", o.feature_noise},
                         {"vocab", vocab.size()}, {"train_tasks", tasks.size()}, {"step_limit", o.common.step_limit},
                         {"checkpoint", o.checkpoint}});

    o.opts.evaluate = [&](const ModelParams& p, int iter) {
        double seen = 0.0;
        std::cout << "iter " << iter;
        for (const auto& [split, vt] : val) {
            const auto m = evaluate_agent(world, vt, [&](const Simulator& sim, const Task& t, std::size_t) {
                return greedy_rollout(p, features, sim, t);
            });
            std::cout << "  " << split << " success " << 100.0 * m.success_rate << "% error " << m.navigation_error << " m";
            if (split == "val_seen") seen = m.success_rate;
        }
        std::cout << std::endl;
        return seen;
    };
    Trainer trainer(ModelParams::randomized(o.model, o.opts.seed), world, features, o.opts);
    const TrainStats stats = trainer.train(tasks);
    save_checkpoint(o.checkpoint, {trainer.params(), vocab, o.feature_dim, o.feature_seed, o.feature_noise});
    const std::string csv = o.loss_csv.empty() ? fs::path(o.checkpoint).replace_extension(".loss.csv").string() : o.loss_csv;
    write_loss_csv(csv, stats.curve);
    std::cout << "final loss " << stats.curve.back().loss << "\n"
              << "episodes " << stats.episodes << ", supervised steps " << stats.steps << ", off-path states "
              << stats.off_path_states << "\n"
              << "checkpoint " << o.checkpoint << ", loss curve " << csv << "\n";
    return 0;
}

void print_table(const std::string& label, const CorpusMetrics& m) {
    std::printf("%-12s %10s %10s %10s %10s\n", "", "TrajLen", "NavError", "Success", "OracleSucc");
    std::printf("%-12s %10.2f %10.2f %9.1f%% %9.1f%%\n", label.c_str(), m.trajectory_length, m.navigation_error,
                100.0 * m.success_rate, 100.0 * m.oracle_success_rate);
}

struct Eval {
    Common common;
    std::string agent = "seq2seq";
    std::string checkpoint;
    std::string split = "val_seen";
    std::uint64_t seed = 0;
    std::string out;
};

int run_eval(const Eval& o) {
    const World world = load_world(o.common);
    const auto items = load_split(o.common, o.split);
    log_config("eval", {{"agent", o.agent}, {"split", o.split}, {"checkpoint", o.checkpoint}, {"seed", o.seed},
                        {"step_limit", o.common.step_limit}});
    std::optional<Checkpoint> ckpt;
    std::optional<FeatureProvider> features;
    Vocabulary vocab;
    AgentFn agent;
    if (o.agent == "seq2seq") {
        if (o.checkpoint.empty()) throw UsageError("seq2seq evaluation needs --checkpoint");
        ckpt = load_checkpoint(o.checkpoint);
        features.emplace(ckpt->feature_dim, ckpt->feature_seed, ckpt->feature_noise);
        vocab = ckpt->vocab;
        agent = [&](const Simulator& sim, const Task& t, std::size_t) { return greedy_rollout(ckpt->params, *features, sim, t); };
    } else if (o.agent == "shortest") {
        agent = [](const Simulator& sim, const Task& t, std::size_t) { return shortest_agent(sim, t); };
    } else if (o.agent == "random") {
        agent = [&](const Simulator& sim, const Task& t, std::size_t i) {
            Rng rng(hash_combine(o.seed, static_cast<std::uint64_t>(i)));
            return random_agent(sim, t, rng);
        };
    } else {
        throw UsageError("--agent must be seq2seq, shortest or random");
    }
    const auto tasks = make_tasks(world, items, vocab, ckpt ? ckpt->params.config().max_instruction : 80);
    std::vector<Trajectory> trajs(tasks.size());
    const auto m = evaluate_agent(world, tasks, [&](const Simulator& sim, const Task& t, std::size_t i) {
        trajs[i] = agent(sim, t, i);
        return trajs[i];
    });
    print_table(o.agent, m);
    if (!o.out.empty()) {
        std::vector<SubmissionEntry> entries;
        for (std::size_t i = 0; i < tasks.size(); ++i) {
            entries.push_back(to_submission(world.scene(tasks[i].scan).graph(), trajs[i]));
        }
        write_json_file(o.out, save_submission(entries));
        std::cout << "trajectories written to " << o.out << "\n";
    }
    return 0;
}

struct Score {
    Common common;
    std::string submission;
    std::string split = "val_seen";
    std::string out;
    bool allow_partial = false;
};

int run_score(const Score& o) {
    const World world = load_world(o.common);
    const auto items = load_split(o.common, o.split);
    if (!fs::exists(o.submission)) throw UsageError("submission '" + o.submission + "' not found");
    const auto entries = load_submission(read_json_file(o.submission));
    ScoreOptions so;
    so.require_complete = !o.allow_partial;
    const CorpusMetrics m = score_corpus(world, items, entries, so);
    print_table(o.split, m);
    if (!o.out.empty()) write_json_file(o.out, metrics_to_json(m, o.split != "test"));
    return 0;
}

struct Serve {
    Common common;
    std::string host = "127.0.0.1";
    int port = 8080;
    int ttl = 1800;
    std::string static_dir;
};

HttpServer* g_server = nullptr;

int run_serve(const Serve& o) {
    const World world = load_world(o.common);
    std::map<std::string, std::vector<PathItem>> splits;
    for (std::string_view name : kSplitNames) {
        const fs::path p = split_file(o.common.data, std::string(name));
        if (fs::exists(p)) splits[std::string(name)] = load_r2r_file(p.string());
    }
    ServiceOptions so;
    so.session_ttl = std::chrono::seconds(o.ttl);
    Service service(world, std::move(splits), so);
    HttpServer server(service, o.static_dir);
    const int port = server.bind(o.host, o.port);
    if (port < 0) throw Error("cannot bind " + o.host + ":" + std::to_string(o.port));
    log_config("serve", {{"host", o.host}, {"port", port}, {"scenes", o.common.scenes}, {"data", o.common.data},
                         {"ttl_s", o.ttl}, {"step_limit", o.common.step_limit}, {"static", o.static_dir}});
    std::cout << "listening on http://" << o.host << ":" << port << std::endl;
    g_server = &server;
    std::signal(SIGINT, [](int) { if (g_server) g_server->stop(); });
    std::signal(SIGTERM, [](int) { if (g_server) g_server->stop(); });
    server.listen();
    g_server = nullptr;
    return 0;
}

struct Replay {
    Common common;
    std::string trajectory;
    std::string split = "val_seen";
    std::string out = "replay.json";
};

int run_replay(const Replay& o) {
    const World world = load_world(o.common);
    const auto items = load_split(o.common, o.split);
    if (!fs::exists(o.trajectory)) throw UsageError("trajectory file '" + o.trajectory + "' not found");
    const auto entries = load_submission(read_json_file(o.trajectory));
    std::map<std::string, const PathItem*> by_id;
    for (const PathItem& it : items) {
        for (std::size_t k = 0; k < it.instructions.size(); ++k) by_id[instr_id(it.path_id, k)] = &it;
    }
    json out = json::array();
    for (const SubmissionEntry& e : entries) {
        auto it = by_id.find(e.instr_id);
        if (it == by_id.end()) throw ParseError("replay: instr_id '" + e.instr_id + "' not in split " + o.split);
        const PathItem& item = *it->second;
        const NavGraph& g = world.scene(item.scan).graph();
        const Trajectory traj = resolve(g, e);
        json steps = json::array();
        for (std::size_t k = 0; k < traj.poses.size(); ++k) {
            const Pose& p = traj.poses[k];
            const Point3& x = g.position(p.viewpoint());
            steps.push_back({{"step", k}, {"viewpoint", g.id(p.viewpoint())}, {"heading", p.heading()},
                             {"elevation", p.elevation()}, {"position", {x.x, x.y, x.z}}});
        }
        const std::size_t k = std::stoul(e.instr_id.substr(e.instr_id.find('_') + 1));
        json entry = {{"instr_id", e.instr_id}, {"scan", item.scan}, {"instruction", item.instructions.at(k)}, {"steps", steps}};
        if (o.split != "test") entry["path"] = item.path;
        out.push_back(entry);
    }
    write_json_file(o.out, out);
    std::cout << "replay of " << out.size() << " episodes written to " << o.out << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Vision-and-language navigation lab"};
    app.require_subcommand(1);

    GenScenes gs;
    auto* c_gs = app.add_subcommand("gen-scenes", "Generate procedural scenes");
    c_gs->add_option("--count", gs.count, "Number of scenes")->capture_default_str();
    c_gs->add_option("--seed", gs.seed, "First scene seed")->capture_default_str();
    c_gs->add_option("--out", gs.out, "Output directory")->capture_default_str();
    c_gs->add_option("--rooms-x", gs.params.rooms_x)->capture_default_str();
    c_gs->add_option("--rooms-y", gs.params.rooms_y)->capture_default_str();
    c_gs->add_option("--floors", gs.params.floors)->capture_default_str();

    GenDataset gd;
    auto* c_gd = app.add_subcommand("gen-dataset", "Sample paths, write instructions and splits");
    add_common(c_gd, gd.common, false);
    c_gd->add_option("--out", gd.common.data, "Output directory")->capture_default_str();
    c_gd->add_option("--paths-per-scene", gd.paths_per_scene)->capture_default_str();
    c_gd->add_option("--seed", gd.seed)->capture_default_str();
    c_gd->add_option("--max-teacher-steps", gd.max_teacher_steps,
                     "Drop paths the teacher cannot finish within this many steps (0 = keep all)")
        ->capture_default_str();
    c_gd->add_option("--unseen-fraction", gd.split.unseen_fraction)->capture_default_str();
    c_gd->add_option("--test-fraction", gd.split.test_fraction)->capture_default_str();
    c_gd->add_option("--val-seen-fraction", gd.split.val_seen_fraction)->capture_default_str();

    Train tr;
    auto* c_tr = app.add_subcommand("train", "Train the seq2seq agent");
    add_common(c_tr, tr.common);
    c_tr->add_option("--regime", tr.regime, "teacher or student")->capture_default_str();
    c_tr->add_option("--iters", tr.opts.iters)->capture_default_str()->check(CLI::PositiveNumber);
    c_tr->add_option("--batch", tr.opts.batch)->capture_default_str()->check(CLI::PositiveNumber);
    c_tr->add_option("--lr", tr.opts.lr)->capture_default_str();
    c_tr->add_option("--weight-decay", tr.opts.weight_decay)->capture_default_str();
    c_tr->add_option("--seed", tr.opts.seed)->capture_default_str();
    c_tr->add_option("--hidden", tr.model.hidden)->capture_default_str();
    c_tr->add_option("--word-emb", tr.model.word_emb)->capture_default_str();
    c_tr->add_option("--action-emb", tr.model.action_emb)->capture_default_str();
    c_tr->add_option("--dropout", tr.model.dropout)->capture_default_str();
    c_tr->add_option("--feature-dim", tr.feature_dim)->capture_default_str();
    c_tr->add_option("--feature-seed", tr.feature_seed)->capture_default_str();
    c_tr->add_option("--feature-noise", tr.feature_noise)->capture_default_str();
    c_tr->add_option("--eval-every", tr.opts.eval_every, "Evaluate both val splits every N iterations")->capture_default_str();
    c_tr->add_option("--out-checkpoint", tr.checkpoint)->capture_default_str();
    c_tr->add_option("--loss-csv", tr.loss_csv, "Defaults to <checkpoint>.loss.csv");

    Eval ev;
    auto* c_ev = app.add_subcommand("eval", "Evaluate an agent on a split");
    add_common(c_ev, ev.common);
    c_ev->add_option("--agent", ev.agent, "seq2seq, shortest or random")->capture_default_str();
    c_ev->add_option("--checkpoint", ev.checkpoint);
    c_ev->add_option("--split", ev.split)->capture_default_str();
    c_ev->add_option("--seed", ev.seed, "Random agent seed")->capture_default_str();
    c_ev->add_option("--out", ev.out, "Write trajectories as a submission file");

    Score sc;
    auto* c_sc = app.add_subcommand("score", "Score a submission file");
    add_common(c_sc, sc.common);
    c_sc->add_option("--submission", sc.submission)->required();
    c_sc->add_option("--split", sc.split)->capture_default_str();
    c_sc->add_option("--out", sc.out, "Write metrics JSON");
    c_sc->add_flag("--allow-partial", sc.allow_partial, "Do not require every instruction");

    Serve sv;
    auto* c_sv = app.add_subcommand("serve", "Run the HTTP episode/scoring server");
    add_common(c_sv, sv.common);
    c_sv->add_option("--host", sv.host)->capture_default_str();
    c_sv->add_option("--port", sv.port, "0 picks a free port")->capture_default_str();
    c_sv->add_option("--ttl", sv.ttl, "Session idle timeout in seconds")->capture_default_str();
    c_sv->add_option("--static", sv.static_dir, "Directory served at /");

    Replay rp;
    auto* c_rp = app.add_subcommand("replay", "Export a trajectory file as a step-by-step replay");
    add_common(c_rp, rp.common);
    c_rp->add_option("--trajectory", rp.trajectory)->required();
    c_rp->add_option("--split", rp.split)->capture_default_str();
    c_rp->add_option("--out", rp.out)->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kUsage;
    }

    try {
        if (*c_gs) return run_gen_scenes(gs);
        if (*c_gd) return run_gen_dataset(gd);
        if (*c_tr) return run_train(tr);
        if (*c_ev) return run_eval(ev);
        if (*c_sc) return run_score(sc);
        if (*c_sv) return run_serve(sv);
        if (*c_rp) return run_replay(rp);
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return kUsage;
    } catch (const Divergence& e) {
        std::cerr << "aborted: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return kUsage;
}
