#pragma once

#include "vln/rng.hpp"

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace vln {

struct ModelConfig {
    std::size_t hidden = 512;
    std::size_t word_emb = 256;
    std::size_t action_emb = 32;
    double dropout = 0.5;
    std::size_t feature_dim = 2048;
    std::size_t vocab_size = 0;
    std::size_t action_count = 6;
    std::size_t max_instruction = 80;

    /// Throws vln::Error when a dimension is zero or dropout is outside [0,1).
    void validate() const;
    /// Index of the start-of-episode "previous action" embedding row.
    std::size_t start_action() const { return action_count; }

    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

enum class Block : std::size_t {
    word_embedding,
    action_embedding,
    encoder_weight,  // 4H x (word_emb + H), gates ordered i, f, g, o
    encoder_bias,
    decoder_weight,  // 4H x (feature_dim + action_emb + H)
    decoder_bias,
    attention_weight,  // H x H, general alignment score h_i . (W h')
    combine_weight,    // H x 2H, tanh(W [context; h'])
    output_weight,     // action_count x H
    output_bias,
};
inline constexpr std::size_t kBlockCount = 10;

struct BlockInfo {
    std::string name;
    std::size_t offset;
    std::size_t rows;
    std::size_t cols;
    std::size_t size() const { return rows * cols; }
};

/// Every learnable tensor of the encoder/decoder/attention policy, stored
/// in one flat buffer so optimiser steps and gradient reductions are single
/// kernels. A gradient accumulator is simply another ModelParams.
class ModelParams {
public:
    ModelParams() = default;
    /// All-zero parameters with shapes derived from the config.
    explicit ModelParams(const ModelConfig& config);

    /// PyTorch-style initialisation: embeddings ~ N(0, 0.5^2), every other
    /// tensor ~ U(-1/sqrt(H), 1/sqrt(H)).
    static ModelParams randomized(const ModelConfig& config, std::uint64_t seed);

    const ModelConfig& config() const { return config_; }
    std::span<double> flat() { return data_; }
    std::span<const double> flat() const { return data_; }
    std::span<const BlockInfo> blocks() const { return blocks_; }
    const BlockInfo& info(Block b) const { return blocks_[static_cast<std::size_t>(b)]; }
    std::span<double> block(Block b);
    std::span<const double> block(Block b) const;
    /// One row of a matrix block.
    std::span<double> row(Block b, std::size_t r);
    std::span<const double> row(Block b, std::size_t r) const;

    void set_zero();
    bool all_finite() const;
    std::size_t size() const { return data_.size(); }

private:
    ModelConfig config_;
    std::vector<double> data_;
    std::vector<BlockInfo> blocks_;
};

/// Bernoulli dropout masks scaled by 1/(1-p); inactive contexts hand out
/// empty masks, which the model treats as identity.
class Dropout {
public:
    Dropout() = default;
    Dropout(double p, Rng* rng) : p_(p), rng_(rng) {}

    bool active() const { return rng_ != nullptr && p_ > 0.0; }
    std::vector<double> mask(std::size_t n);

private:
    double p_ = 0.0;
    Rng* rng_ = nullptr;
};

/// One LSTM step's saved activations.
struct LstmCache {
    std::vector<double> xh;      // [input; h_prev]
    std::vector<double> c_prev;
    std::vector<double> gates;   // i, f, g, o after their nonlinearities
    std::vector<double> c;
    std::vector<double> tanh_c;
    std::vector<double> h;
};

struct EncoderCache {
    std::vector<int> tokens;  // in the order fed to the LSTM (reversed)
    std::vector<std::vector<double>> masks;
    std::vector<LstmCache> steps;
};

/// Encoder context vectors h_1..h_L (row-major L x H) and final state.
struct EncoderOutput {
    std::size_t length = 0;
    std::vector<double> context;
    std::vector<double> final_h;
    std::vector<double> final_c;

    std::span<const double> at(std::size_t i, std::size_t hidden) const {
        return std::span<const double>(context).subspan(i * hidden, hidden);
    }
};

struct DecoderState {
    std::vector<double> h;
    std::vector<double> c;
};

struct DecoderCache {
    std::size_t prev_action = 0;
    std::vector<double> action_mask;
    LstmCache lstm;
    std::vector<double> query;  // W_a h'
    std::vector<double> alpha;
    std::vector<double> attended;  // [context; h']
    std::vector<double> h_tilde;
    std::vector<double> h_tilde_mask;
    std::vector<double> h_tilde_dropped;
    std::array<double, 6> probs{};
};

struct DecodeResult {
    std::array<double, 6> probs{};
    DecoderState state;
};

/// Runs the encoder LSTM over the reversed instruction. Throws on an empty
/// instruction or a token id outside the vocabulary.
EncoderOutput encode_instruction(const ModelParams& params, std::span<const int> tokens, Dropout* dropout = nullptr,
                                 EncoderCache* cache = nullptr);

/// Decoder state the first step starts from (the encoder's final state).
DecoderState initial_decoder_state(const EncoderOutput& encoder);

/// One decoder step: LSTM over [feature; previous action embedding],
/// general-score attention over the encoder context, attentional hidden
/// state and a softmax over the six actions.
DecodeResult decode_step(const ModelParams& params, const EncoderOutput& encoder, std::span<const double> feature,
                         std::size_t prev_action, const DecoderState& state, Dropout* dropout = nullptr,
                         DecoderCache* cache = nullptr);

/// Saved forward pass of one supervised episode.
struct EpisodeTape {
    EncoderCache encoder;
    EncoderOutput encoded;
    std::vector<DecoderCache> steps;
    std::vector<std::size_t> targets;
};

/// Sum over steps of -log p(target).
double tape_loss(const EpisodeTape& tape);

/// Accumulates d(sum of step losses)/d(params) into `grads`.
void backward(const ModelParams& params, const EpisodeTape& tape, ModelParams& grads);

/// Teacher-forced loss of a fixed step sequence; the reference forward pass
/// used by gradient checks.
struct ScriptedStep {
    std::vector<double> feature;
    std::size_t prev_action;
    std::size_t target;
};
EpisodeTape run_scripted(const ModelParams& params, std::span<const int> tokens, std::span<const ScriptedStep> steps,
                         Dropout* dropout = nullptr);

}  // namespace vln
