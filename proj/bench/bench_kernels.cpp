// Serial reference kernels against their OpenMP counterparts, plus the two
// batch-level loops the trainer and evaluator parallelise.

#include "vln/agent.hpp"
#include "vln/kernels.hpp"

#include <benchmark/benchmark.h>

#include <vector>

using namespace vln;

namespace {

std::vector<double> filled(std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<double> v(n);
    for (double& x : v) x = rng.normal();
    return v;
}

template <bool Parallel>
void BM_gemv(benchmark::State& state) {
    const auto rows = static_cast<std::size_t>(state.range(0)), cols = static_cast<std::size_t>(state.range(1));
    const auto a = filled(rows * cols, 1), x = filled(cols, 2);
    std::vector<double> y(rows);
    for (auto _ : state) {
        if constexpr (Parallel) kernels::omp::gemv(a, rows, cols, x, y);
        else kernels::serial::gemv(a, rows, cols, x, y);
        benchmark::DoNotOptimize(y.data());
    }
    state.SetItemsProcessed(state.iterations() * static_cast<long>(rows * cols));
}

template <bool Parallel>
void BM_ger(benchmark::State& state) {
    const auto rows = static_cast<std::size_t>(state.range(0)), cols = static_cast<std::size_t>(state.range(1));
    auto a = filled(rows * cols, 1);
    const auto x = filled(rows, 2), y = filled(cols, 3);
    for (auto _ : state) {
        if constexpr (Parallel) kernels::omp::ger(a, rows, cols, x, y);
        else kernels::serial::ger(a, rows, cols, x, y);
        benchmark::DoNotOptimize(a.data());
    }
    state.SetItemsProcessed(state.iterations() * static_cast<long>(rows * cols));
}

template <bool Parallel>
void BM_adam(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    auto p = filled(n, 1);
    const auto g = filled(n, 2);
    std::vector<double> m(n, 0.0), v(n, 0.0);
    long t = 0;
    for (auto _ : state) {
        if constexpr (Parallel) kernels::omp::adam_step(p, g, m, v, ++t, {});
        else kernels::serial::adam_step(p, g, m, v, ++t, {});
        benchmark::DoNotOptimize(p.data());
    }
    state.SetItemsProcessed(state.iterations() * static_cast<long>(n));
}

template <bool Parallel>
void BM_sum_buffers(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    std::vector<std::vector<double>> bufs;
    std::vector<std::span<const double>> parts;
    for (std::uint64_t k = 0; k < 8; ++k) bufs.push_back(filled(n, k));
    for (const auto& b : bufs) parts.emplace_back(b);
    std::vector<double> out(n);
    for (auto _ : state) {
        if constexpr (Parallel) kernels::omp::sum_buffers(parts, out);
        else kernels::serial::sum_buffers(parts, out);
        benchmark::DoNotOptimize(out.data());
    }
    state.SetItemsProcessed(state.iterations() * static_cast<long>(8 * n));
}

// A small generated corpus shared by the batch-level benchmarks.
struct Lab {
    World world;
    Vocabulary vocab;
    std::vector<Task> tasks;
    FeatureProvider features{128, 3};
    ModelParams params;

    Lab() {
        Rng rng(5);
        std::vector<PathItem> items;
        for (std::uint64_t s = 0; s < 4; ++s) {
            const Scene& scene = world.add(generate_scene(900 + s, SceneParams{}));
            SampleOptions o;
            o.first_path_id = static_cast<int>(items.size());
            o.max_teacher_steps = 20;
            auto r = sample_paths(world.simulator(scene.id()), 8, rng, o);
            for (auto& it : r.items) {
                it.instructions = gen_instructions(world.simulator(scene.id()), it, 1);
                items.push_back(it);
            }
        }
        std::vector<std::string> corpus;
        for (const auto& it : items) corpus.insert(corpus.end(), it.instructions.begin(), it.instructions.end());
        vocab = build_vocab(corpus, 1);
        tasks = make_tasks(world, items, vocab, 80);
        ModelConfig cfg;
        cfg.hidden = 64;
        cfg.word_emb = 32;
        cfg.action_emb = 16;
        cfg.feature_dim = 128;
        cfg.dropout = 0.2;
        cfg.vocab_size = vocab.size();
        params = ModelParams::randomized(cfg, 1);
    }
};

Lab& lab() {
    static Lab instance;
    return instance;
}

template <bool Parallel>
void BM_greedy_eval(benchmark::State& state) {
    Lab& l = lab();
    for (auto _ : state) {
        const auto m = evaluate_agent(l.world, l.tasks, [&](const Simulator& sim, const Task& t, std::size_t) {
            return greedy_rollout(l.params, l.features, sim, t);
        }, Parallel);
        benchmark::DoNotOptimize(m.success_rate);
    }
    state.SetItemsProcessed(state.iterations() * static_cast<long>(l.tasks.size()));
}

template <bool Parallel>
void BM_train_step(benchmark::State& state) {
    Lab& l = lab();
    TrainOptions o;
    o.regime = Regime::student;
    o.parallel = Parallel;
    Trainer trainer(l.params, l.world, l.features, o);
    std::vector<const Task*> batch;
    for (std::size_t i = 0; i < 32 && i < l.tasks.size(); ++i) batch.push_back(&l.tasks[i]);
    int iter = 0;
    for (auto _ : state) benchmark::DoNotOptimize(trainer.step(batch, ++iter));
    state.SetItemsProcessed(state.iterations() * static_cast<long>(batch.size()));
}

}  // namespace

BENCHMARK(BM_gemv<false>)->Args({256, 208})->Args({2048, 2592});
BENCHMARK(BM_gemv<true>)->Args({256, 208})->Args({2048, 2592});
BENCHMARK(BM_ger<false>)->Args({256, 208})->Args({2048, 2592});
BENCHMARK(BM_ger<true>)->Args({256, 208})->Args({2048, 2592});
BENCHMARK(BM_adam<false>)->Arg(1 << 16)->Arg(1 << 22);
BENCHMARK(BM_adam<true>)->Arg(1 << 16)->Arg(1 << 22);
BENCHMARK(BM_sum_buffers<false>)->Arg(1 << 16)->Arg(1 << 20);
BENCHMARK(BM_sum_buffers<true>)->Arg(1 << 16)->Arg(1 << 20);
BENCHMARK(BM_greedy_eval<false>)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_greedy_eval<true>)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_train_step<false>)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_train_step<true>)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
