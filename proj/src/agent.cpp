#include "vln/agent.hpp"

#include "vln/error.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

namespace vln {

std::vector<Task> make_tasks(const World& world, const std::vector<PathItem>& items, const Vocabulary& vocab,
                             std::size_t max_len) {
    std::vector<Task> tasks;
    for (const PathItem& item : items) {
        if (!world.contains(item.scan)) throw Error("make_tasks: unknown scene '" + item.scan + "'");
        const NavGraph& graph = world.scene(item.scan).graph();
        std::vector<VertexId> path;
        for (const std::string& id : item.path) path.push_back(graph.at(id));
        if (path.empty()) throw Error("make_tasks: empty path for path_id " + std::to_string(item.path_id));
        for (std::size_t k = 0; k < item.instructions.size(); ++k) {
            Task t;
            t.instr_id = instr_id(item.path_id, k);
            t.scan = item.scan;
            t.start = Pose(path.front(), item.heading);
            t.goal = path.back();
            t.path = path;
            t.tokens = vocab.encode(item.instructions[k], max_len);
            if (t.tokens.empty()) t.tokens.push_back(Vocabulary::kUnk);
            tasks.push_back(std::move(t));
        }
    }
    return tasks;
}

Trajectory greedy_rollout(const ModelParams& params, const FeatureProvider& features, const Simulator& sim,
                          const Task& task) {
    const SceneLayout& layout = sim.scene().layout();
    Trajectory traj{task.instr_id, {task.start}};
    const EncoderOutput enc = encode_instruction(params, task.tokens);
    DecoderState dstate = initial_decoder_state(enc);
    EpisodeState state = sim.new_episode(task.start);
    std::size_t prev = params.config().start_action();
    std::vector<double> feat(features.dim());
    while (!state.done) {
        const Pose& p = state.pose;
        features.features_into(layout, index_of(p.viewpoint()), p.heading(), p.elevation(), feat);
        DecodeResult r = decode_step(params, enc, feat, prev, dstate);
        const auto best = static_cast<std::size_t>(std::max_element(r.probs.begin(), r.probs.end()) - r.probs.begin());
        state = sim.model_step(state, kAllActions[best]);
        traj.poses.push_back(state.pose);
        dstate = std::move(r.state);
        prev = best;
    }
    return traj;
}

Trajectory random_agent(const Simulator& sim, const Task& task, Rng& rng) {
    Trajectory traj{task.instr_id, {task.start}};
    EpisodeState state = sim.new_episode(task.start);
    const double target = static_cast<double>(rng.index(12)) * kTurnStep;
    state = sim.make_action(state, task.start.viewpoint(), wrap_signed(target - task.start.heading()), 0.0);
    traj.poses.push_back(state.pose);
    int forwards = 0;
    while (!state.done) {
        ModelAction a = ModelAction::forward;
        if (forwards == 5) a = ModelAction::stop;
        state = sim.model_step(state, a);
        traj.poses.push_back(state.pose);
        if (a != ModelAction::forward || state.done) continue;
        if (state.forward_failed) {
            state = sim.model_step(state, ModelAction::right);
            traj.poses.push_back(state.pose);
        } else {
            ++forwards;
        }
    }
    return traj;
}

Trajectory shortest_agent(const Simulator& sim, const Task& task) {
    const auto dist = sim.scene().distances_to(task.goal);
    if (!std::isfinite((*dist)[index_of(task.start.viewpoint())])) {
        throw Error("shortest_agent: goal unreachable for " + task.instr_id);
    }
    // The reference path may need more steps than an agent is allowed.
    SimConfig cfg = sim.config();
    cfg.step_limit = std::numeric_limits<int>::max() / 2;
    const Simulator unlimited(sim.scene(), cfg);
    Trajectory traj{task.instr_id, {task.start}};
    EpisodeState state = unlimited.new_episode(task.start);
    while (!state.done) {
        state = unlimited.model_step(state, sim.teacher_action(state, task.goal));
        traj.poses.push_back(state.pose);
    }
    return traj;
}

CorpusMetrics evaluate_agent(const World& world, const std::vector<Task>& tasks, const AgentFn& agent, bool parallel) {
    std::vector<EpisodeResult> results(tasks.size());
    const auto n = static_cast<long>(tasks.size());
    std::string failure;
#pragma omp parallel for schedule(dynamic) if (parallel)
    for (long i = 0; i < n; ++i) {
        try {
            const Task& task = tasks[static_cast<std::size_t>(i)];
            const Simulator& sim = world.simulator(task.scan);
            const Trajectory traj = agent(sim, task, static_cast<std::size_t>(i));
            results[static_cast<std::size_t>(i)] = {task.instr_id, evaluate_episode(sim.scene(), traj, task.goal)};
        } catch (const std::exception& e) {
#pragma omp critical(vln_eval_failure)
            if (failure.empty()) failure = e.what();
        }
    }
    if (!failure.empty()) throw Error("evaluate_agent: " + failure);
    return summarize(std::move(results));
}

std::string_view regime_name(Regime r) { return r == Regime::teacher ? "teacher" : "student"; }

std::optional<Regime> parse_regime(std::string_view name) {
    if (name == "teacher") return Regime::teacher;
    if (name == "student") return Regime::student;
    return std::nullopt;
}

Trainer::Trainer(ModelParams params, const World& world, const FeatureProvider& features, TrainOptions opts)
    : params_(std::move(params)), world_(&world), features_(&features), opts_(std::move(opts)) {
    if (features.dim() != params_.config().feature_dim) {
        throw Error("Trainer: feature provider dimension does not match the model");
    }
    if (opts_.batch == 0) throw Error("Trainer: batch size must be positive");
    m_.assign(params_.size(), 0.0);
    v_.assign(params_.size(), 0.0);
    chunk_grads_.assign(kChunks, ModelParams(params_.config()));
}

Trainer::Rollout Trainer::run_episode(const Task& task, Rng& rng, ModelParams& grads) const {
    const Simulator& sim = world_->simulator(task.scan);
    const SceneLayout& layout = sim.scene().layout();
    Dropout dropout(params_.config().dropout, &rng);

    EpisodeTape tape;
    tape.encoded = encode_instruction(params_, task.tokens, &dropout, &tape.encoder);
    DecoderState dstate = initial_decoder_state(tape.encoded);
    EpisodeState state = sim.new_episode(task.start);
    std::size_t prev = params_.config().start_action();
    Rollout out;
    std::vector<double> feat(features_->dim());
    while (!state.done) {
        const Pose& p = state.pose;
        if (std::find(task.path.begin(), task.path.end(), p.viewpoint()) == task.path.end()) ++out.off_path;
        features_->features_into(layout, index_of(p.viewpoint()), p.heading(), p.elevation(), feat);
        DecoderCache cache;
        DecodeResult r = decode_step(params_, tape.encoded, feat, prev, dstate, &dropout, &cache);
        const ModelAction target = sim.teacher_action(state, task.goal);
        std::size_t chosen = action_index(target);
        if (opts_.regime == Regime::student) {
            double u = rng.uniform();
            chosen = kActionCount - 1;
            for (std::size_t a = 0; a < kActionCount; ++a) {
                u -= r.probs[a];
                if (u < 0.0) {
                    chosen = a;
                    break;
                }
            }
        }
        tape.steps.push_back(std::move(cache));
        tape.targets.push_back(action_index(target));
        state = sim.model_step(state, kAllActions[chosen]);
        dstate = std::move(r.state);
        prev = chosen;
    }
    out.loss = tape_loss(tape);
    out.steps = tape.steps.size();
    backward(params_, tape, grads);
    return out;
}

double Trainer::step(const std::vector<const Task*>& batch, int iter) {
    if (batch.empty()) throw Error("Trainer::step: empty batch");
    const std::size_t n = batch.size();
    const std::size_t chunks = std::min(kChunks, n);
    std::vector<Rollout> rollouts(n);
    std::string failure;

    // Chunk c owns episodes [c*n/chunks, (c+1)*n/chunks).
    const auto nc = static_cast<long>(chunks);
#pragma omp parallel for schedule(dynamic) if (opts_.parallel)
    for (long c = 0; c < nc; ++c) {
        const auto cu = static_cast<std::size_t>(c);
        ModelParams& g = chunk_grads_[cu];
        g.set_zero();
        for (std::size_t i = cu * n / chunks; i < (cu + 1) * n / chunks; ++i) {
            try {
                Rng rng(hash_combine(hash_combine(opts_.seed, static_cast<std::uint64_t>(iter)), i));
                rollouts[i] = run_episode(*batch[i], rng, g);
            } catch (const std::exception& e) {
#pragma omp critical(vln_train_failure)
                if (failure.empty()) failure = e.what();
            }
        }
    }
    if (!failure.empty()) throw Error("Trainer::step: " + failure);

    double loss = 0.0;
    std::size_t steps = 0;
    for (const Rollout& r : rollouts) {
        loss += r.loss;
        steps += r.steps;
        stats_.off_path_states += r.off_path;
    }
    stats_.episodes += n;
    stats_.steps += steps;
    if (!std::isfinite(loss)) {
        throw Divergence("training diverged at iteration " + std::to_string(iter) + ": loss is not finite");
    }

    std::vector<std::span<const double>> parts;
    for (std::size_t c = 0; c < chunks; ++c) parts.push_back(chunk_grads_[c].flat());
    std::vector<double> sum(params_.size());
    kernels::AdamHyper hp{opts_.lr, 0.9, 0.999, 1e-8, opts_.weight_decay};
    if (opts_.parallel) {
        kernels::omp::sum_buffers(parts, sum);
        kernels::omp::scale(1.0 / static_cast<double>(steps), sum);
        kernels::omp::adam_step(params_.flat(), sum, m_, v_, ++t_, hp);
    } else {
        kernels::serial::sum_buffers(parts, sum);
        kernels::serial::scale(1.0 / static_cast<double>(steps), sum);
        kernels::serial::adam_step(params_.flat(), sum, m_, v_, ++t_, hp);
    }
    if (!params_.all_finite()) {
        throw Divergence("training diverged at iteration " + std::to_string(iter) + ": parameters are not finite");
    }
    return loss / static_cast<double>(steps);
}

TrainStats Trainer::train(const std::vector<Task>& tasks) {
    if (tasks.empty()) throw Error("Trainer::train: no training tasks");
    Rng order_rng(hash_combine(opts_.seed, 0x0bd3ULL));
    std::vector<std::size_t> order(tasks.size());
    std::iota(order.begin(), order.end(), 0);
    order_rng.shuffle(order.begin(), order.end());
    std::size_t cursor = 0;
    for (int iter = 1; iter <= opts_.iters; ++iter) {
        std::vector<const Task*> batch;
        while (batch.size() < opts_.batch) {
            if (cursor == order.size()) {
                order_rng.shuffle(order.begin(), order.end());
                cursor = 0;
            }
            batch.push_back(&tasks[order[cursor++]]);
            if (batch.size() == tasks.size()) break;
        }
        CurvePoint point{iter, step(batch, iter), std::nullopt};
        if (opts_.eval_every > 0 && opts_.evaluate && iter % opts_.eval_every == 0) {
            point.split_metric = opts_.evaluate(params_, iter);
        }
        stats_.curve.push_back(point);
    }
    return stats_;
}

void write_loss_csv(const std::filesystem::path& path, const std::vector<CurvePoint>& curve) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    out << "iter,loss,split_metric\n";
    out.precision(10);
    for (const CurvePoint& p : curve) {
        out << p.iter << ',' << p.loss << ',';
        if (p.split_metric) out << *p.split_metric;
        out << '\n';
    }
}

namespace {

constexpr std::string_view kMagic = "VLNCKPT1\n";

nlohmann::json config_to_json(const ModelConfig& c) {
    return {{"hidden", c.hidden},           {"word_emb", c.word_emb},   {"action_emb", c.action_emb},
            {"dropout", c.dropout},         {"feature_dim", c.feature_dim}, {"vocab_size", c.vocab_size},
            {"action_count", c.action_count}, {"max_instruction", c.max_instruction}};
}

ModelConfig config_from_json(const nlohmann::json& j) {
    ModelConfig c;
    c.hidden = j.at("hidden").get<std::size_t>();
    c.word_emb = j.at("word_emb").get<std::size_t>();
    c.action_emb = j.at("action_emb").get<std::size_t>();
    c.dropout = j.at("dropout").get<double>();
    c.feature_dim = j.at("feature_dim").get<std::size_t>();
    c.vocab_size = j.at("vocab_size").get<std::size_t>();
    c.action_count = j.at("action_count").get<std::size_t>();
    c.max_instruction = j.at("max_instruction").get<std::size_t>();
    return c;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
    nlohmann::json header;
    header["config"] = config_to_json(ckpt.params.config());
    header["tensors"] = nlohmann::json::array();
    for (const BlockInfo& b : ckpt.params.blocks()) {
        header["tensors"].push_back({{"name", b.name}, {"rows", b.rows}, {"cols", b.cols}, {"offset", b.offset}});
    }
    header["vocab"] = ckpt.vocab.tokens();
    header["features"] = {{"dim", ckpt.feature_dim}, {"seed", ckpt.feature_seed}, {"noise_weight", ckpt.feature_noise}};
    const std::string text = header.dump();

    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    out.write(kMagic.data(), static_cast<std::streamsize>(kMagic.size()));
    const std::uint64_t len = text.size();
    out.write(reinterpret_cast<const char*>(&len), sizeof len);
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    const auto flat = ckpt.params.flat();
    out.write(reinterpret_cast<const char*>(flat.data()), static_cast<std::streamsize>(flat.size_bytes()));
    if (!out) throw Error("failed writing " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot read " + path.string());
    std::string magic(kMagic.size(), '\0');
    in.read(magic.data(), static_cast<std::streamsize>(magic.size()));
    if (magic != kMagic) throw ParseError(path.string() + ": not a checkpoint file");
    std::uint64_t len = 0;
    in.read(reinterpret_cast<char*>(&len), sizeof len);
    if (!in || len > (1ULL << 30)) throw ParseError(path.string() + ": corrupt header length");
    std::string text(len, '\0');
    in.read(text.data(), static_cast<std::streamsize>(len));
    if (!in) throw ParseError(path.string() + ": truncated header");

    Checkpoint ckpt;
    try {
        const auto header = nlohmann::json::parse(text);
        ckpt.params = ModelParams(config_from_json(header.at("config")));
        const auto& tensors = header.at("tensors");
        const auto blocks = ckpt.params.blocks();
        if (tensors.size() != blocks.size()) throw ParseError("tensor count mismatch");
        for (std::size_t i = 0; i < blocks.size(); ++i) {
            if (tensors[i].at("name").get<std::string>() != blocks[i].name ||
                tensors[i].at("rows").get<std::size_t>() != blocks[i].rows ||
                tensors[i].at("cols").get<std::size_t>() != blocks[i].cols) {
                throw ParseError("tensor '" + blocks[i].name + "' has unexpected shape");
            }
        }
        auto tokens = header.at("vocab").get<std::vector<std::string>>();
        if (tokens.size() < 4) throw ParseError("vocabulary lacks reserved tokens");
        ckpt.vocab = Vocabulary(std::vector<std::string>(tokens.begin() + 4, tokens.end()));
        const auto& f = header.at("features");
        ckpt.feature_dim = f.at("dim").get<std::size_t>();
        ckpt.feature_seed = f.at("seed").get<std::uint64_t>();
        ckpt.feature_noise = f.at("noise_weight").get<double>();
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(path.string() + ": bad header: " + e.what());
    } catch (const ParseError& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
    auto flat = ckpt.params.flat();
    in.read(reinterpret_cast<char*>(flat.data()), static_cast<std::streamsize>(flat.size_bytes()));
    if (!in) throw ParseError(path.string() + ": truncated tensor data");
    return ckpt;
}

}  // namespace vln
