#include "../support/oracles.hpp"
#include "vln/error.hpp"
#include "vln/model.hpp"

#include <doctest.h>

#include <cmath>
#include <vector>

using namespace vln;

namespace {

ModelConfig small_config() {
    ModelConfig cfg;
    cfg.hidden = 8;
    cfg.word_emb = 5;
    cfg.action_emb = 3;
    cfg.feature_dim = 6;
    cfg.vocab_size = 7;
    cfg.dropout = 0.0;
    return cfg;
}

std::vector<double> random_feature(Rng& rng, std::size_t n) {
    std::vector<double> f(n);
    for (double& v : f) v = rng.uniform();
    return f;
}

std::vector<ScriptedStep> two_steps(Rng& rng, std::size_t f) {
    return {{random_feature(rng, f), 6, 2}, {random_feature(rng, f), 2, 0}};
}

double rel_error(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-6}); }

/// Largest relative error between backward() and central differences over
/// every parameter. `seed` fixes the dropout masks so every forward pass of
/// the check sees the same ones.
double gradient_check(const ModelConfig& cfg, std::uint64_t seed, double p) {
    ModelParams params = ModelParams::randomized(cfg, seed);
    Rng data(seed + 100);
    const std::vector<int> tokens{1, 4, 0, 6};
    const auto steps = two_steps(data, cfg.feature_dim);
    auto loss = [&](const ModelParams& at) {
        Rng mask_rng(seed + 7);
        Dropout d(p, &mask_rng);
        return tape_loss(run_scripted(at, tokens, steps, &d));
    };
    Rng mask_rng(seed + 7);
    Dropout d(p, &mask_rng);
    const EpisodeTape tape = run_scripted(params, tokens, steps, &d);
    ModelParams grads(cfg);
    backward(params, tape, grads);

    const double h = 1e-5;
    double worst = 0.0;
    auto flat = params.flat();
    for (std::size_t i = 0; i < flat.size(); ++i) {
        const double keep = flat[i];
        flat[i] = keep + h;
        const double up = loss(params);
        flat[i] = keep - h;
        const double down = loss(params);
        flat[i] = keep;
        worst = std::max(worst, rel_error(grads.flat()[i], (up - down) / (2 * h)));
    }
    return worst;
}

}  // namespace

TEST_SUITE("model") {

TEST_CASE("config validation") {
    ModelConfig cfg = small_config();
    CHECK_NOTHROW(cfg.validate());
    cfg.dropout = 1.0;
    CHECK_THROWS_AS(cfg.validate(), Error);
    cfg = small_config();
    cfg.hidden = 0;
    CHECK_THROWS_AS(cfg.validate(), Error);
    cfg = small_config();
    cfg.action_count = 5;
    CHECK_THROWS_AS(cfg.validate(), Error);
}

TEST_CASE("block shapes") {
    const ModelConfig cfg = small_config();
    const ModelParams p(cfg);
    CHECK(p.info(Block::word_embedding).rows == 7);
    CHECK(p.info(Block::action_embedding).rows == 7);
    CHECK(p.info(Block::encoder_weight).rows == 32);
    CHECK(p.info(Block::encoder_weight).cols == 13);
    CHECK(p.info(Block::decoder_weight).cols == 6 + 3 + 8);
    CHECK(p.info(Block::attention_weight).cols == 8);
    CHECK(p.info(Block::combine_weight).cols == 16);
    CHECK(p.info(Block::output_weight).rows == 6);
    std::size_t total = 0;
    for (const auto& b : p.blocks()) {
        CHECK(b.offset == total);
        total += b.size();
    }
    CHECK(total == p.size());
    for (double v : p.flat()) CHECK(v == 0.0);
}

TEST_CASE("randomized initialisation is seeded and bounded") {
    const ModelConfig cfg = small_config();
    const auto a = ModelParams::randomized(cfg, 3), b = ModelParams::randomized(cfg, 3);
    const auto c = ModelParams::randomized(cfg, 4);
    CHECK(std::equal(a.flat().begin(), a.flat().end(), b.flat().begin()));
    CHECK_FALSE(std::equal(a.flat().begin(), a.flat().end(), c.flat().begin()));
    const double bound = 1.0 / std::sqrt(8.0);
    for (double v : a.block(Block::encoder_weight)) CHECK(std::abs(v) <= bound);
    CHECK(a.all_finite());
}

TEST_CASE("encoder matches a hand-written LSTM over reversed tokens") {
    const ModelConfig cfg = small_config();
    const auto p = ModelParams::randomized(cfg, 11);
    const std::vector<int> tokens{3, 1, 5, 2, 2};
    const EncoderOutput enc = encode_instruction(p, tokens);
    std::vector<double> h, c;
    const auto states = oracle::encoder_states(p, tokens, h, c);
    REQUIRE(enc.length == tokens.size());
    for (std::size_t i = 0; i < states.size(); ++i) {
        for (std::size_t j = 0; j < cfg.hidden; ++j) CHECK(enc.at(i, cfg.hidden)[j] == doctest::Approx(states[i][j]).epsilon(1e-12));
    }
    for (std::size_t j = 0; j < cfg.hidden; ++j) {
        CHECK(enc.final_h[j] == doctest::Approx(h[j]).epsilon(1e-12));
        CHECK(enc.final_c[j] == doctest::Approx(c[j]).epsilon(1e-12));
    }
}

TEST_CASE("encoder truncates to max_instruction and rejects bad tokens") {
    ModelConfig cfg = small_config();
    cfg.max_instruction = 3;
    const auto p = ModelParams::randomized(cfg, 2);
    const std::vector<int> long_tokens{1, 2, 3, 4, 5};
    const std::vector<int> first{1, 2, 3};
    const auto a = encode_instruction(p, long_tokens), b = encode_instruction(p, first);
    CHECK(a.length == 3);
    CHECK(a.context == b.context);
    const std::vector<int> bad{1, 7};
    CHECK_THROWS_AS(encode_instruction(p, bad), Error);
    const std::vector<int> negative{-1};
    CHECK_THROWS_AS(encode_instruction(p, negative), Error);
    CHECK_THROWS_AS(encode_instruction(p, std::vector<int>{}), Error);
}

TEST_CASE("decoder step matches the scalar oracle") {
    const ModelConfig cfg = small_config();
    Rng rng(5);
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const auto p = ModelParams::randomized(cfg, seed);
        const std::vector<int> tokens{1, 2, 3, 4};
        const auto enc = encode_instruction(p, tokens);
        std::vector<double> h, c;
        const auto ctx = oracle::encoder_states(p, tokens, h, c);
        DecoderState state = initial_decoder_state(enc);
        std::size_t prev = cfg.start_action();
        for (int t = 0; t < 3; ++t) {
            const auto f = random_feature(rng, cfg.feature_dim);
            const auto r = decode_step(p, enc, f, prev, state);
            const auto want = oracle::decode(p, ctx, f, prev, h, c);
            double sum = 0.0;
            for (std::size_t a = 0; a < 6; ++a) {
                CHECK(r.probs[a] == doctest::Approx(want[a]).epsilon(1e-12));
                sum += r.probs[a];
            }
            CHECK(sum == doctest::Approx(1.0));
            state = r.state;
            prev = static_cast<std::size_t>(t);
        }
    }
}

TEST_CASE("zero parameters give a uniform policy and loss T ln 6") {
    const ModelConfig cfg = small_config();
    const ModelParams p(cfg);
    Rng rng(1);
    const std::vector<int> tokens{1, 2};
    const auto steps = two_steps(rng, cfg.feature_dim);
    const auto tape = run_scripted(p, tokens, steps);
    for (const auto& s : tape.steps) {
        for (double q : s.probs) CHECK(q == doctest::Approx(1.0 / 6.0).epsilon(1e-15));
    }
    CHECK(tape_loss(tape) == doctest::Approx(2.0 * std::log(6.0)).epsilon(1e-14));
}

TEST_CASE("a one-token instruction puts all attention on it") {
    const ModelConfig cfg = small_config();
    const auto p = ModelParams::randomized(cfg, 9);
    const std::vector<int> tokens{4};
    const auto enc = encode_instruction(p, tokens);
    Rng rng(2);
    DecoderCache cache;
    decode_step(p, enc, random_feature(rng, cfg.feature_dim), cfg.start_action(), initial_decoder_state(enc), nullptr,
                &cache);
    REQUIRE(cache.alpha.size() == 1);
    CHECK(cache.alpha[0] == 1.0);
    for (std::size_t j = 0; j < cfg.hidden; ++j) CHECK(cache.attended[j] == enc.context[j]);
}

TEST_CASE("decoder input validation") {
    const ModelConfig cfg = small_config();
    const auto p = ModelParams::randomized(cfg, 1);
    const std::vector<int> tokens{1};
    const auto enc = encode_instruction(p, tokens);
    const auto st = initial_decoder_state(enc);
    std::vector<double> f(cfg.feature_dim, 0.5);
    CHECK_THROWS_AS(decode_step(p, enc, std::vector<double>(5, 0.0), 0, st), Error);
    CHECK_THROWS_AS(decode_step(p, enc, f, 7, st), Error);
    f[2] = NAN;
    CHECK_THROWS_AS(decode_step(p, enc, f, 0, st), Error);
    f[2] = INFINITY;
    CHECK_THROWS_AS(decode_step(p, enc, f, 0, st), Error);
}

TEST_CASE("dropout masks") {
    Dropout off;
    CHECK_FALSE(off.active());
    CHECK(off.mask(10).empty());
    Rng rng(3);
    Dropout zero(0.0, &rng);
    CHECK(zero.mask(4).empty());
    Dropout half(0.5, &rng);
    const auto m = half.mask(20000);
    double mean = 0.0;
    for (double v : m) {
        CHECK((v == 0.0 || v == 2.0));
        mean += v;
    }
    CHECK(mean / 20000 == doctest::Approx(1.0).epsilon(0.03));
}

TEST_CASE("analytic gradients match central differences") {
    const ModelConfig cfg = small_config();
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        CAPTURE(seed);
        CHECK(gradient_check(cfg, seed, 0.0) < 1e-4);
    }
}

TEST_CASE("gradients match with fixed dropout masks") {
    const ModelConfig cfg = small_config();
    CHECK(gradient_check(cfg, 4, 0.3) < 1e-4);
}

TEST_CASE("backward accumulates rather than overwrites") {
    const ModelConfig cfg = small_config();
    const auto p = ModelParams::randomized(cfg, 8);
    Rng rng(4);
    const std::vector<int> tokens{2, 3};
    const auto steps = two_steps(rng, cfg.feature_dim);
    const auto tape = run_scripted(p, tokens, steps);
    ModelParams once(cfg), twice(cfg);
    backward(p, tape, once);
    backward(p, tape, twice);
    backward(p, tape, twice);
    for (std::size_t i = 0; i < once.size(); ++i) CHECK(twice.flat()[i] == doctest::Approx(2 * once.flat()[i]));
}

}  // TEST_SUITE
