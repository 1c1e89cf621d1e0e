#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "prnmt/corpus.hpp"

namespace prnmt {

// Dimensions of the attention encoder-decoder. attention_dim and readout_dim
// default to hidden_dim when left at zero.
struct ModelConfig {
    std::size_t src_vocab = 0;
    std::size_t tgt_vocab = 0;
    std::size_t embed_dim = 32;
    std::size_t hidden_dim = 64;
    std::size_t attention_dim = 0;
    std::size_t readout_dim = 0;

    std::size_t attention() const { return attention_dim == 0 ? hidden_dim : attention_dim; }
    std::size_t readout() const { return readout_dim == 0 ? hidden_dim : readout_dim; }
    void validate() const;
    bool operator==(const ModelConfig&) const = default;
};

// Parameter blocks. GRU weights stack the update gate, reset gate and
// candidate rows: W is 3H x input, U is 3H x H, b is 3H.
enum class ParamId : std::size_t {
    kSrcEmbed,
    kTgtEmbed,
    kEncFwdW,
    kEncFwdU,
    kEncFwdB,
    kEncBwdW,
    kEncBwdU,
    kEncBwdB,
    kInitW,
    kInitB,
    kAttW,
    kAttU,
    kAttB,
    kAttV,
    kDecW,
    kDecU,
    kDecB,
    kReadS,
    kReadE,
    kReadC,
    kReadB,
    kOutW,
    kOutB,
    kCount,
};

inline constexpr std::size_t kNumParamBlocks = static_cast<std::size_t>(ParamId::kCount);

std::string_view param_name(ParamId id);
bool is_bias(ParamId id);

using BlockArray = std::array<Eigen::MatrixXd, kNumParamBlocks>;

// Expected (rows, cols) of every block for a configuration.
std::array<std::pair<std::size_t, std::size_t>, kNumParamBlocks> block_shapes(const ModelConfig& config);

struct ModelParams {
    ModelConfig config;
    BlockArray blocks;

    Eigen::MatrixXd& operator[](ParamId id) { return blocks[static_cast<std::size_t>(id)]; }
    const Eigen::MatrixXd& operator[](ParamId id) const { return blocks[static_cast<std::size_t>(id)]; }

    bool all_finite() const;
    std::size_t num_values() const;
    bool operator==(const ModelParams& other) const;
};

// d/dtheta of some scalar, block-congruent with ModelParams.
struct Gradient {
    BlockArray blocks;

    static Gradient zeros_like(const ModelParams& params);

    Eigen::MatrixXd& operator[](ParamId id) { return blocks[static_cast<std::size_t>(id)]; }
    const Eigen::MatrixXd& operator[](ParamId id) const { return blocks[static_cast<std::size_t>(id)]; }

    void set_zero();
    void add_scaled(const Gradient& other, double scale);
    double squared_norm() const;
};

struct InitOptions {
    std::uint64_t seed = 1;
};

// Uniform(-s, s) with s = 1/sqrt(fan-in) for weight matrices, zero biases.
ModelParams init_params(const ModelConfig& config, InitOptions options);

// Row j is target step j, column i is source position i.
class AttentionMatrix {
public:
    AttentionMatrix() = default;
    explicit AttentionMatrix(std::size_t source_len) : source_len_(source_len) {}
    AttentionMatrix(std::size_t target_len, std::size_t source_len);

    std::size_t rows() const { return source_len_ == 0 ? 0 : values_.size() / source_len_; }
    std::size_t cols() const { return source_len_; }

    double operator()(std::size_t j, std::size_t i) const { return values_[j * source_len_ + i]; }
    double& operator()(std::size_t j, std::size_t i) { return values_[j * source_len_ + i]; }
    std::span<const double> row(std::size_t j) const {
        return std::span<const double>(values_).subspan(j * source_len_, source_len_);
    }

    void append_row(const Eigen::VectorXd& row);
    void pop_row();
    // Sum over the first `rows` target steps for source position i.
    double column_sum(std::size_t i, std::size_t rows) const;

    bool operator==(const AttentionMatrix&) const = default;

private:
    std::size_t source_len_ = 0;
    std::vector<double> values_;
};

struct Hypothesis {
    TokenIds tokens;  // emitted tokens, EOS-terminated unless truncated
    double log_prob = 0.0;
    AttentionMatrix attention;

    bool finished() const { return !tokens.empty() && tokens.back() == kEos; }
    // Target words without the terminating EOS.
    TokenIds words() const { return strip_eos(tokens); }
};

struct SampleSet {
    TokenIds source;
    std::vector<Hypothesis> hypotheses;
};

// Precomputed encoder side of one source sentence.
struct EncodedSource {
    Eigen::MatrixXd annotations;  // 2H x I
    Eigen::MatrixXd keys;         // A x I, att_U * annotations + att_b
    std::size_t length() const { return static_cast<std::size_t>(annotations.cols()); }
};

struct StepOutput {
    Eigen::VectorXd log_probs;  // over the target vocabulary
    Eigen::VectorXd attention;  // over source positions
    Eigen::VectorXd state;      // decoder hidden state after the step
};

EncodedSource encode_source(const ModelParams& params, std::span<const TokenId> source);
Eigen::VectorXd initial_state(const ModelParams& params, const EncodedSource& encoded);
// One decoder step given the previous hidden state and previously emitted token.
StepOutput decode_step(const ModelParams& params, const EncodedSource& encoded,
                       const Eigen::VectorXd& state, TokenId previous);

struct ForcedResult {
    double log_prob = 0.0;
    AttentionMatrix attention;
};

// Scores exactly the given emitted sequence (no EOS appended).
ForcedResult score_steps(const ModelParams& params, std::span<const TokenId> source,
                         std::span<const TokenId> steps);

// log P(y | x) with EOS appended to y.
ForcedResult forward_logprob(const ModelParams& params, std::span<const TokenId> source,
                             std::span<const TokenId> target);

// Adds scale * d logP(steps | source) / d theta into grad; returns logP.
double accumulate_gradient(const ModelParams& params, std::span<const TokenId> source,
                           std::span<const TokenId> steps, double scale, Gradient& grad);

struct LogProbGradient {
    double log_prob = 0.0;
    Gradient gradient;
};

// Gradient of log P(y | x) with EOS appended to y.
LogProbGradient grad_logprob(const ModelParams& params, std::span<const TokenId> source,
                             std::span<const TokenId> target);

// k ancestral samples at temperature 1, deduplicated in first-seen order.
SampleSet sample_translations(const ModelParams& params, std::span<const TokenId> source,
                              std::size_t k, std::size_t max_len, std::uint64_t seed);

// Score used to rank partial hypotheses during pruning. Defaults to logP.
using PruningScore = std::function<double(const Hypothesis&)>;

// Length-unnormalized beam search. Finished hypotheses leave the beam; the
// search stops when no live hypothesis remains or max_len steps were taken,
// at which point live hypotheses are finalized without EOS. Returns at most
// beam_size hypotheses sorted by logP descending, ties lexicographic.
std::vector<Hypothesis> beam_search(const ModelParams& params, std::span<const TokenId> source,
                                    std::size_t beam_size, std::size_t max_len,
                                    const PruningScore& pruning_score = {});

// Stepwise argmax, lowest id on ties.
Hypothesis greedy_decode(const ModelParams& params, std::span<const TokenId> source,
                                      std::size_t max_len);

// Sort order used everywhere for hypotheses: higher score first, then
// lexicographically smaller token sequence.
bool hypothesis_before(double score_a, const TokenIds& a, double score_b, const TokenIds& b);

inline std::size_t default_max_len(std::size_t source_len) { return 2 * source_len + 10; }

}  // namespace prnmt
