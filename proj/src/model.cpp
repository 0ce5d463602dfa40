#include "vln/model.hpp"

#include "vln/error.hpp"
#include "vln/kernels.hpp"

#include <algorithm>
#include <cmath>

namespace vln {

namespace ks = kernels::serial;

void ModelConfig::validate() const {
    if (hidden == 0 || word_emb == 0 || action_emb == 0 || feature_dim == 0 || vocab_size == 0 ||
        max_instruction == 0) {
        throw Error("ModelConfig: every dimension must be positive");
    }
    if (action_count != 6) throw Error("ModelConfig: the action space has exactly 6 actions");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw Error("ModelConfig: dropout must lie in [0, 1)");
}

ModelParams::ModelParams(const ModelConfig& config) : config_(config) {
    config_.validate();
    const std::size_t H = config.hidden;
    const std::size_t shapes[kBlockCount][2] = {
        {config.vocab_size, config.word_emb},
        {config.action_count + 1, config.action_emb},
        {4 * H, config.word_emb + H},
        {4 * H, 1},
        {4 * H, config.feature_dim + config.action_emb + H},
        {4 * H, 1},
        {H, H},
        {H, 2 * H},
        {config.action_count, H},
        {config.action_count, 1},
    };
    static const char* names[kBlockCount] = {"word_embedding", "action_embedding", "encoder_weight", "encoder_bias",
                                             "decoder_weight", "decoder_bias",     "attention_weight", "combine_weight",
                                             "output_weight",  "output_bias"};
    std::size_t offset = 0;
    for (std::size_t b = 0; b < kBlockCount; ++b) {
        blocks_.push_back({names[b], offset, shapes[b][0], shapes[b][1]});
        offset += shapes[b][0] * shapes[b][1];
    }
    data_.assign(offset, 0.0);
}

ModelParams ModelParams::randomized(const ModelConfig& config, std::uint64_t seed) {
    ModelParams p(config);
    Rng rng(hash_combine(seed, 0x1a17ULL));
    const double k = 1.0 / std::sqrt(static_cast<double>(config.hidden));
    for (std::size_t b = 0; b < kBlockCount; ++b) {
        auto span = p.block(static_cast<Block>(b));
        const bool embedding = b == static_cast<std::size_t>(Block::word_embedding) ||
                               b == static_cast<std::size_t>(Block::action_embedding);
        for (double& v : span) v = embedding ? 0.5 * rng.normal() : rng.uniform(-k, k);
    }
    return p;
}

std::span<double> ModelParams::block(Block b) {
    const auto& i = info(b);
    return std::span<double>(data_).subspan(i.offset, i.size());
}

std::span<const double> ModelParams::block(Block b) const {
    const auto& i = info(b);
    return std::span<const double>(data_).subspan(i.offset, i.size());
}

std::span<double> ModelParams::row(Block b, std::size_t r) {
    const auto& i = info(b);
    return std::span<double>(data_).subspan(i.offset + r * i.cols, i.cols);
}

std::span<const double> ModelParams::row(Block b, std::size_t r) const {
    const auto& i = info(b);
    return std::span<const double>(data_).subspan(i.offset + r * i.cols, i.cols);
}

void ModelParams::set_zero() { std::fill(data_.begin(), data_.end(), 0.0); }

bool ModelParams::all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

std::vector<double> Dropout::mask(std::size_t n) {
    if (!active()) return {};
    std::vector<double> m(n);
    const double keep = 1.0 - p_;
    for (double& v : m) v = rng_->uniform() < keep ? 1.0 / keep : 0.0;
    return m;
}

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

void apply_mask(std::span<double> x, const std::vector<double>& mask) {
    if (mask.empty()) return;
    for (std::size_t i = 0; i < x.size(); ++i) x[i] *= mask[i];
}

// Fills cache.gates/c/tanh_c/h from cache.xh and cache.c_prev.
void lstm_forward(std::span<const double> w, std::span<const double> b, std::size_t H, LstmCache& s) {
    std::vector<double> z(4 * H);
    ks::gemv_bias(w, 4 * H, s.xh.size(), s.xh, b, z);
    s.gates.resize(4 * H);
    s.c.resize(H);
    s.tanh_c.resize(H);
    s.h.resize(H);
    for (std::size_t j = 0; j < H; ++j) {
        const double i = sigmoid(z[j]);
        const double f = sigmoid(z[H + j]);
        const double g = std::tanh(z[2 * H + j]);
        const double o = sigmoid(z[3 * H + j]);
        s.gates[j] = i;
        s.gates[H + j] = f;
        s.gates[2 * H + j] = g;
        s.gates[3 * H + j] = o;
        s.c[j] = f * s.c_prev[j] + i * g;
        s.tanh_c[j] = std::tanh(s.c[j]);
        s.h[j] = o * s.tanh_c[j];
    }
}

// dh/dc_next are the gradients flowing into this step's h and c. Writes the
// gradient w.r.t. [input; h_prev] into dxh and w.r.t. c_prev into dc_prev.
void lstm_backward(std::span<const double> w, std::size_t H, const LstmCache& s, std::span<const double> dh,
                   std::span<const double> dc_next, std::span<double> dw, std::span<double> db, std::vector<double>& dxh,
                   std::vector<double>& dc_prev) {
    std::vector<double> dz(4 * H);
    dc_prev.resize(H);
    for (std::size_t j = 0; j < H; ++j) {
        const double i = s.gates[j], f = s.gates[H + j], g = s.gates[2 * H + j], o = s.gates[3 * H + j];
        const double d_o = dh[j] * s.tanh_c[j];
        const double dc = dh[j] * o * (1.0 - s.tanh_c[j] * s.tanh_c[j]) + dc_next[j];
        dz[j] = dc * g * i * (1.0 - i);
        dz[H + j] = dc * s.c_prev[j] * f * (1.0 - f);
        dz[2 * H + j] = dc * i * (1.0 - g * g);
        dz[3 * H + j] = d_o * o * (1.0 - o);
        dc_prev[j] = dc * f;
    }
    ks::ger(dw, 4 * H, s.xh.size(), dz, s.xh);
    ks::axpy(1.0, dz, db);
    dxh.assign(s.xh.size(), 0.0);
    ks::gemv_t_acc(w, 4 * H, s.xh.size(), dz, dxh);
}

void softmax(std::span<double> x) {
    const double m = *std::max_element(x.begin(), x.end());
    double sum = 0.0;
    for (double& v : x) {
        v = std::exp(v - m);
        sum += v;
    }
    for (double& v : x) v /= sum;
}

}  // namespace

EncoderOutput encode_instruction(const ModelParams& params, std::span<const int> tokens, Dropout* dropout,
                                 EncoderCache* cache) {
    const ModelConfig& cfg = params.config();
    if (tokens.empty()) throw Error("encode_instruction: empty instruction");
    const std::size_t H = cfg.hidden, E = cfg.word_emb;
    const std::size_t L = std::min(tokens.size(), cfg.max_instruction);
    for (std::size_t i = 0; i < L; ++i) {
        if (tokens[i] < 0 || static_cast<std::size_t>(tokens[i]) >= cfg.vocab_size) {
            throw Error("encode_instruction: token id " + std::to_string(tokens[i]) + " outside vocabulary");
        }
    }
    EncoderOutput out;
    out.length = L;
    out.context.resize(L * H);
    std::vector<double> h(H, 0.0), c(H, 0.0);
    if (cache) {
        cache->tokens.clear();
        cache->masks.clear();
        cache->steps.clear();
        cache->steps.reserve(L);
    }
    const auto w = params.block(Block::encoder_weight);
    const auto b = params.block(Block::encoder_bias);
    for (std::size_t k = 0; k < L; ++k) {
        const int token = tokens[L - 1 - k];
        LstmCache step;
        step.xh.resize(E + H);
        const auto emb = params.row(Block::word_embedding, static_cast<std::size_t>(token));
        std::copy(emb.begin(), emb.end(), step.xh.begin());
        std::vector<double> mask = dropout ? dropout->mask(E) : std::vector<double>{};
        apply_mask(std::span<double>(step.xh).first(E), mask);
        std::copy(h.begin(), h.end(), step.xh.begin() + static_cast<long>(E));
        step.c_prev = c;
        lstm_forward(w, b, H, step);
        h = step.h;
        c = step.c;
        std::copy(h.begin(), h.end(), out.context.begin() + static_cast<long>(k * H));
        if (cache) {
            cache->tokens.push_back(token);
            cache->masks.push_back(std::move(mask));
            cache->steps.push_back(std::move(step));
        }
    }
    out.final_h = h;
    out.final_c = c;
    return out;
}

DecoderState initial_decoder_state(const EncoderOutput& encoder) { return {encoder.final_h, encoder.final_c}; }

DecodeResult decode_step(const ModelParams& params, const EncoderOutput& encoder, std::span<const double> feature,
                         std::size_t prev_action, const DecoderState& state, Dropout* dropout, DecoderCache* cache) {
    const ModelConfig& cfg = params.config();
    const std::size_t H = cfg.hidden, F = cfg.feature_dim, A = cfg.action_emb, L = encoder.length;
    if (feature.size() != F) throw Error("decode_step: feature has wrong dimension");
    if (prev_action > cfg.action_count) throw Error("decode_step: previous action out of range");
    if (state.h.size() != H || state.c.size() != H || L == 0) throw Error("decode_step: inconsistent state shapes");
    for (double v : feature) {
        if (!std::isfinite(v)) throw Error("decode_step: non-finite feature");
    }

    DecoderCache local;
    DecoderCache& s = cache ? *cache : local;
    s.prev_action = prev_action;

    // LSTM over q_t = [feature; action embedding]
    s.lstm.xh.resize(F + A + H);
    std::copy(feature.begin(), feature.end(), s.lstm.xh.begin());
    apply_mask(std::span<double>(s.lstm.xh).first(F), dropout ? dropout->mask(F) : std::vector<double>{});
    const auto aemb = params.row(Block::action_embedding, prev_action);
    std::copy(aemb.begin(), aemb.end(), s.lstm.xh.begin() + static_cast<long>(F));
    s.action_mask = dropout ? dropout->mask(A) : std::vector<double>{};
    apply_mask(std::span<double>(s.lstm.xh).subspan(F, A), s.action_mask);
    std::copy(state.h.begin(), state.h.end(), s.lstm.xh.begin() + static_cast<long>(F + A));
    s.lstm.c_prev = state.c;
    lstm_forward(params.block(Block::decoder_weight), params.block(Block::decoder_bias), H, s.lstm);
    const std::vector<double>& hp = s.lstm.h;

    // general alignment score_i = h_i . (W_a h')
    s.query.assign(H, 0.0);
    ks::gemv(params.block(Block::attention_weight), H, H, hp, s.query);
    s.alpha.resize(L);
    for (std::size_t i = 0; i < L; ++i) {
        const auto hi = encoder.at(i, H);
        double acc = 0.0;
        for (std::size_t j = 0; j < H; ++j) acc += hi[j] * s.query[j];
        s.alpha[i] = acc;
    }
    softmax(s.alpha);
    s.attended.assign(2 * H, 0.0);
    for (std::size_t i = 0; i < L; ++i) ks::axpy(s.alpha[i], encoder.at(i, H), std::span<double>(s.attended).first(H));
    std::copy(hp.begin(), hp.end(), s.attended.begin() + static_cast<long>(H));

    s.h_tilde.resize(H);
    ks::gemv(params.block(Block::combine_weight), H, 2 * H, s.attended, s.h_tilde);
    for (double& v : s.h_tilde) v = std::tanh(v);
    s.h_tilde_mask = dropout ? dropout->mask(H) : std::vector<double>{};
    s.h_tilde_dropped = s.h_tilde;
    apply_mask(s.h_tilde_dropped, s.h_tilde_mask);

    std::array<double, 6> logits{};
    ks::gemv_bias(params.block(Block::output_weight), cfg.action_count, H, s.h_tilde_dropped,
                  params.block(Block::output_bias), logits);
    softmax(logits);
    s.probs = logits;

    DecodeResult r;
    r.probs = logits;
    r.state = {s.lstm.h, s.lstm.c};
    return r;
}

double tape_loss(const EpisodeTape& tape) {
    double loss = 0.0;
    for (std::size_t t = 0; t < tape.steps.size(); ++t) loss -= std::log(tape.steps[t].probs[tape.targets[t]]);
    return loss;
}

void backward(const ModelParams& params, const EpisodeTape& tape, ModelParams& grads) {
    const ModelConfig& cfg = params.config();
    const std::size_t H = cfg.hidden, F = cfg.feature_dim, A = cfg.action_emb, E = cfg.word_emb;
    const std::size_t L = tape.encoded.length;
    const std::size_t nA = cfg.action_count;

    std::vector<double> d_context(L * H, 0.0);
    std::vector<double> dh_next(H, 0.0), dc_next(H, 0.0);
    std::vector<double> dxh, dc_prev;

    const auto w_out = params.block(Block::output_weight);
    const auto w_comb = params.block(Block::combine_weight);
    const auto w_attn = params.block(Block::attention_weight);
    const auto w_dec = params.block(Block::decoder_weight);

    for (std::size_t t = tape.steps.size(); t-- > 0;) {
        const DecoderCache& s = tape.steps[t];
        std::array<double, 6> dlogits = s.probs;
        dlogits[tape.targets[t]] -= 1.0;
        ks::ger(grads.block(Block::output_weight), nA, H, dlogits, s.h_tilde_dropped);
        ks::axpy(1.0, dlogits, grads.block(Block::output_bias));

        std::vector<double> dpre(H, 0.0);
        ks::gemv_t_acc(w_out, nA, H, dlogits, dpre);
        apply_mask(dpre, s.h_tilde_mask);
        for (std::size_t j = 0; j < H; ++j) dpre[j] *= 1.0 - s.h_tilde[j] * s.h_tilde[j];
        ks::ger(grads.block(Block::combine_weight), H, 2 * H, dpre, s.attended);
        std::vector<double> d_attended(2 * H, 0.0);
        ks::gemv_t_acc(w_comb, H, 2 * H, dpre, d_attended);
        const std::span<const double> d_ctx(d_attended.data(), H);
        std::vector<double> dh(d_attended.begin() + static_cast<long>(H), d_attended.end());

        // attention: context = sum_i alpha_i h_i, alpha = softmax(h_i . query)
        std::vector<double> d_alpha(L);
        double weighted = 0.0;
        for (std::size_t i = 0; i < L; ++i) {
            const auto hi = tape.encoded.at(i, H);
            double acc = 0.0;
            for (std::size_t j = 0; j < H; ++j) acc += d_ctx[j] * hi[j];
            d_alpha[i] = acc;
            weighted += s.alpha[i] * acc;
        }
        std::vector<double> d_query(H, 0.0);
        for (std::size_t i = 0; i < L; ++i) {
            const double d_score = s.alpha[i] * (d_alpha[i] - weighted);
            auto dci = std::span<double>(d_context).subspan(i * H, H);
            ks::axpy(s.alpha[i], d_ctx, dci);
            ks::axpy(d_score, s.query, dci);
            ks::axpy(d_score, tape.encoded.at(i, H), d_query);
        }
        ks::ger(grads.block(Block::attention_weight), H, H, d_query, s.lstm.h);
        ks::gemv_t_acc(w_attn, H, H, d_query, dh);

        ks::axpy(1.0, dh_next, dh);
        lstm_backward(w_dec, H, s.lstm, dh, dc_next, grads.block(Block::decoder_weight), grads.block(Block::decoder_bias),
                      dxh, dc_prev);
        auto d_aemb = grads.row(Block::action_embedding, s.prev_action);
        for (std::size_t j = 0; j < A; ++j) {
            d_aemb[j] += dxh[F + j] * (s.action_mask.empty() ? 1.0 : s.action_mask[j]);
        }
        dh_next.assign(dxh.begin() + static_cast<long>(F + A), dxh.end());
        dc_next = dc_prev;
    }

    const auto w_enc = params.block(Block::encoder_weight);
    for (std::size_t k = L; k-- > 0;) {
        const LstmCache& s = tape.encoder.steps[k];
        std::vector<double> dh(d_context.begin() + static_cast<long>(k * H), d_context.begin() + static_cast<long>((k + 1) * H));
        ks::axpy(1.0, dh_next, dh);
        lstm_backward(w_enc, H, s, dh, dc_next, grads.block(Block::encoder_weight), grads.block(Block::encoder_bias), dxh,
                      dc_prev);
        auto d_emb = grads.row(Block::word_embedding, static_cast<std::size_t>(tape.encoder.tokens[k]));
        const auto& mask = tape.encoder.masks[k];
        for (std::size_t j = 0; j < E; ++j) d_emb[j] += dxh[j] * (mask.empty() ? 1.0 : mask[j]);
        dh_next.assign(dxh.begin() + static_cast<long>(E), dxh.end());
        dc_next = dc_prev;
    }
}

EpisodeTape run_scripted(const ModelParams& params, std::span<const int> tokens, std::span<const ScriptedStep> steps,
                         Dropout* dropout) {
    EpisodeTape tape;
    tape.encoded = encode_instruction(params, tokens, dropout, &tape.encoder);
    DecoderState state = initial_decoder_state(tape.encoded);
    for (const ScriptedStep& step : steps) {
        DecoderCache cache;
        auto r = decode_step(params, tape.encoded, step.feature, step.prev_action, state, dropout, &cache);
        state = std::move(r.state);
        tape.steps.push_back(std::move(cache));
        tape.targets.push_back(step.target);
    }
    return tape;
}

}  // namespace vln
