#include "prnmt/model.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <stdexcept>

namespace prnmt {

using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

constexpr std::string_view kParamNames[kNumParamBlocks] = {
    "src_embed", "tgt_embed", "enc_fwd_W", "enc_fwd_U", "enc_fwd_b", "enc_bwd_W",
    "enc_bwd_U", "enc_bwd_b", "init_W",    "init_b",    "att_W",     "att_U",
    "att_b",     "att_v",     "dec_W",     "dec_U",     "dec_b",     "read_S",
    "read_E",    "read_C",    "read_b",    "out_W",     "out_b",
};

VectorXd sigmoid(const VectorXd& v) {
    return v.unaryExpr([](double a) { return 1.0 / (1.0 + std::exp(-a)); });
}

VectorXd log_softmax(const VectorXd& logits) {
    const double m = logits.maxCoeff();
    const double lse = m + std::log((logits.array() - m).exp().sum());
    return logits.array() - lse;
}

VectorXd softmax(const VectorXd& scores) {
    VectorXd e = (scores.array() - scores.maxCoeff()).exp();
    return e / e.sum();
}

struct GruCache {
    VectorXd input;
    VectorXd h_prev;
    VectorXd z;
    VectorXd r;
    VectorXd candidate;
    VectorXd h;
};

GruCache gru_forward(const MatrixXd& W, const MatrixXd& U, const MatrixXd& b, const VectorXd& input,
                     const VectorXd& h_prev) {
    const Eigen::Index H = h_prev.size();
    GruCache c;
    c.input = input;
    c.h_prev = h_prev;
    const VectorXd gx = W * input + b.col(0);
    c.z = sigmoid(gx.segment(0, H) + U.topRows(H) * h_prev);
    c.r = sigmoid(gx.segment(H, H) + U.middleRows(H, H) * h_prev);
    c.candidate = (gx.segment(2 * H, H) + U.bottomRows(H) * c.r.cwiseProduct(h_prev)).array().tanh();
    c.h = (1.0 - c.z.array()) * h_prev.array() + c.z.array() * c.candidate.array();
    return c;
}

// Returns d input; adds d h_prev into dh_prev.
VectorXd gru_backward(const MatrixXd& W, const MatrixXd& U, const GruCache& c, const VectorXd& dh,
                      MatrixXd& dW, MatrixXd& dU, MatrixXd& db, VectorXd& dh_prev) {
    const Eigen::Index H = c.h_prev.size();
    const VectorXd dz = dh.cwiseProduct(c.candidate - c.h_prev);
    const VectorXd dcand = dh.cwiseProduct(c.z);
    dh_prev = dh.array() * (1.0 - c.z.array());

    VectorXd dgx(3 * H);
    dgx.segment(2 * H, H) = dcand.array() * (1.0 - c.candidate.array().square());
    dgx.segment(0, H) = dz.array() * c.z.array() * (1.0 - c.z.array());

    const VectorXd rh = c.r.cwiseProduct(c.h_prev);
    dU.bottomRows(H).noalias() += dgx.segment(2 * H, H) * rh.transpose();
    const VectorXd drh = U.bottomRows(H).transpose() * dgx.segment(2 * H, H);
    dh_prev += drh.cwiseProduct(c.r);
    dgx.segment(H, H) = drh.array() * c.h_prev.array() * c.r.array() * (1.0 - c.r.array());

    dU.topRows(2 * H).noalias() += dgx.head(2 * H) * c.h_prev.transpose();
    dh_prev.noalias() += U.topRows(2 * H).transpose() * dgx.head(2 * H);

    dW.noalias() += dgx * c.input.transpose();
    db.col(0) += dgx;
    return W.transpose() * dgx;
}

struct EncoderTape {
    std::vector<GruCache> fwd;
    std::vector<GruCache> bwd;
    VectorXd mean_annotation;
    VectorXd init_state;
};

EncodedSource run_encoder(const ModelParams& p, std::span<const TokenId> source, EncoderTape* tape) {
    if (source.empty()) {
        throw std::invalid_argument("empty source sentence");
    }
    const auto H = static_cast<Eigen::Index>(p.config.hidden_dim);
    const auto I = static_cast<Eigen::Index>(source.size());
    const MatrixXd& emb = p[ParamId::kSrcEmbed];
    for (auto t : source) {
        if (t < 0 || t >= emb.rows()) {
            throw std::out_of_range("source token id " + std::to_string(t) + " outside vocabulary");
        }
    }
    EncodedSource enc;
    enc.annotations.resize(2 * H, I);
    std::vector<GruCache> fwd(source.size()), bwd(source.size());
    VectorXd h = VectorXd::Zero(H);
    for (Eigen::Index i = 0; i < I; ++i) {
        fwd[i] = gru_forward(p[ParamId::kEncFwdW], p[ParamId::kEncFwdU], p[ParamId::kEncFwdB],
                             emb.row(source[i]).transpose(), h);
        h = fwd[i].h;
        enc.annotations.col(i).head(H) = h;
    }
    h = VectorXd::Zero(H);
    for (Eigen::Index i = I - 1; i >= 0; --i) {
        bwd[i] = gru_forward(p[ParamId::kEncBwdW], p[ParamId::kEncBwdU], p[ParamId::kEncBwdB],
                             emb.row(source[i]).transpose(), h);
        h = bwd[i].h;
        enc.annotations.col(i).tail(H) = h;
    }
    enc.keys = p[ParamId::kAttU] * enc.annotations;
    enc.keys.colwise() += p[ParamId::kAttB].col(0);
    if (tape != nullptr) {
        tape->fwd = std::move(fwd);
        tape->bwd = std::move(bwd);
    }
    return enc;
}

struct StepTape {
    TokenId previous = kBos;
    TokenId emitted = kEos;
    VectorXd state_prev;
    MatrixXd act;  // tanh activations of the attention MLP, A x I
    VectorXd alpha;
    VectorXd context;
    GruCache gru;
    VectorXd readout;
    VectorXd probs;
};

// Shared step computation; fills tape when given.
StepOutput step_impl(const ModelParams& p, const EncodedSource& enc, const VectorXd& state,
                     TokenId previous, StepTape* tape) {
    const MatrixXd& temb = p[ParamId::kTgtEmbed];
    if (previous < 0 || previous >= temb.rows()) {
        throw std::out_of_range("target token id " + std::to_string(previous) + " outside vocabulary");
    }
    const VectorXd query = p[ParamId::kAttW] * state;
    MatrixXd act = enc.keys;
    act.colwise() += query;
    act = act.array().tanh();
    const VectorXd scores = act.transpose() * p[ParamId::kAttV].col(0);
    VectorXd alpha = softmax(scores);
    VectorXd context = enc.annotations * alpha;

    const auto E = static_cast<Eigen::Index>(p.config.embed_dim);
    VectorXd input(E + context.size());
    input.head(E) = temb.row(previous).transpose();
    input.tail(context.size()) = context;
    GruCache gru = gru_forward(p[ParamId::kDecW], p[ParamId::kDecU], p[ParamId::kDecB], input, state);

    VectorXd readout = (p[ParamId::kReadS] * gru.h + p[ParamId::kReadE] * input.head(E) +
                        p[ParamId::kReadC] * context + p[ParamId::kReadB].col(0))
                           .array()
                           .tanh();
    const VectorXd logits = p[ParamId::kOutW] * readout + p[ParamId::kOutB].col(0);

    StepOutput out;
    out.log_probs = log_softmax(logits);
    out.attention = alpha;
    out.state = gru.h;
    if (tape != nullptr) {
        tape->previous = previous;
        tape->state_prev = state;
        tape->act = std::move(act);
        tape->alpha = std::move(alpha);
        tape->context = std::move(context);
        tape->gru = std::move(gru);
        tape->readout = std::move(readout);
        tape->probs = out.log_probs.array().exp();
    }
    return out;
}

struct ForwardTape {
    EncoderTape encoder;
    EncodedSource encoded;
    std::vector<StepTape> steps;
};

double run_forward(const ModelParams& p, std::span<const TokenId> source,
                   std::span<const TokenId> steps, ForwardTape& tape, AttentionMatrix* attention) {
    if (steps.empty()) {
        throw std::invalid_argument("empty target sequence");
    }
    tape.encoded = run_encoder(p, source, &tape.encoder);
    const MatrixXd& ann = tape.encoded.annotations;
    tape.encoder.mean_annotation = ann.rowwise().mean();
    tape.encoder.init_state =
        (p[ParamId::kInitW] * tape.encoder.mean_annotation + p[ParamId::kInitB].col(0)).array().tanh();

    tape.steps.assign(steps.size(), StepTape{});
    VectorXd state = tape.encoder.init_state;
    TokenId previous = kBos;
    double log_prob = 0.0;
    const auto V = p[ParamId::kOutW].rows();
    for (std::size_t t = 0; t < steps.size(); ++t) {
        if (steps[t] < 0 || steps[t] >= V) {
            throw std::out_of_range("target token id " + std::to_string(steps[t]) + " outside vocabulary");
        }
        StepOutput out = step_impl(p, tape.encoded, state, previous, &tape.steps[t]);
        tape.steps[t].emitted = steps[t];
        log_prob += out.log_probs[steps[t]];
        if (attention != nullptr) {
            attention->append_row(out.attention);
        }
        state = std::move(out.state);
        previous = steps[t];
    }
    return log_prob;
}

void run_backward(const ModelParams& p, std::span<const TokenId> source, const ForwardTape& tape,
                  double scale, Gradient& g) {
    const auto H = static_cast<Eigen::Index>(p.config.hidden_dim);
    const auto E = static_cast<Eigen::Index>(p.config.embed_dim);
    const auto I = static_cast<Eigen::Index>(source.size());
    const MatrixXd& ann = tape.encoded.annotations;

    MatrixXd d_ann = MatrixXd::Zero(ann.rows(), I);
    MatrixXd d_keys = MatrixXd::Zero(tape.encoded.keys.rows(), I);
    VectorXd d_state = VectorXd::Zero(H);
    const VectorXd& v = p[ParamId::kAttV].col(0);

    for (std::size_t t = tape.steps.size(); t-- > 0;) {
        const StepTape& s = tape.steps[t];
        VectorXd d_logits = -scale * s.probs;
        d_logits[s.emitted] += scale;

        g[ParamId::kOutW].noalias() += d_logits * s.readout.transpose();
        g[ParamId::kOutB].col(0) += d_logits;
        const VectorXd d_read_pre =
            (p[ParamId::kOutW].transpose() * d_logits).array() * (1.0 - s.readout.array().square());

        const VectorXd& embed = s.gru.input.head(E);
        g[ParamId::kReadS].noalias() += d_read_pre * s.gru.h.transpose();
        g[ParamId::kReadE].noalias() += d_read_pre * embed.transpose();
        g[ParamId::kReadC].noalias() += d_read_pre * s.context.transpose();
        g[ParamId::kReadB].col(0) += d_read_pre;

        const VectorXd d_h = d_state + p[ParamId::kReadS].transpose() * d_read_pre;
        VectorXd d_embed = p[ParamId::kReadE].transpose() * d_read_pre;
        VectorXd d_context = p[ParamId::kReadC].transpose() * d_read_pre;

        VectorXd d_state_prev;
        const VectorXd d_input = gru_backward(p[ParamId::kDecW], p[ParamId::kDecU], s.gru, d_h,
                                              g[ParamId::kDecW], g[ParamId::kDecU], g[ParamId::kDecB],
                                              d_state_prev);
        d_embed += d_input.head(E);
        d_context += d_input.tail(d_input.size() - E);
        g[ParamId::kTgtEmbed].row(s.previous) += d_embed.transpose();

        // context = ann * alpha
        d_ann.noalias() += d_context * s.alpha.transpose();
        const VectorXd d_alpha = ann.transpose() * d_context;
        const VectorXd d_scores = s.alpha.array() * (d_alpha.array() - s.alpha.dot(d_alpha));
        // scores = act^T v, act = tanh(keys + query)
        g[ParamId::kAttV].col(0).noalias() += s.act * d_scores;
        const MatrixXd d_act_pre =
            (v * d_scores.transpose()).array() * (1.0 - s.act.array().square());
        d_keys += d_act_pre;
        const VectorXd d_query = d_act_pre.rowwise().sum();
        g[ParamId::kAttW].noalias() += d_query * s.state_prev.transpose();
        d_state_prev.noalias() += p[ParamId::kAttW].transpose() * d_query;

        d_state = std::move(d_state_prev);
    }

    // keys = att_U * ann + att_b
    g[ParamId::kAttU].noalias() += d_keys * ann.transpose();
    g[ParamId::kAttB].col(0) += d_keys.rowwise().sum();
    d_ann.noalias() += p[ParamId::kAttU].transpose() * d_keys;

    // init_state = tanh(init_W * mean(ann) + init_b)
    const VectorXd d_init_pre = d_state.array() * (1.0 - tape.encoder.init_state.array().square());
    g[ParamId::kInitW].noalias() += d_init_pre * tape.encoder.mean_annotation.transpose();
    g[ParamId::kInitB].col(0) += d_init_pre;
    const VectorXd d_mean = p[ParamId::kInitW].transpose() * d_init_pre;
    d_ann.colwise() += d_mean / static_cast<double>(I);

    MatrixXd& d_src = g[ParamId::kSrcEmbed];
    VectorXd carry = VectorXd::Zero(H);
    for (Eigen::Index i = I - 1; i >= 0; --i) {
        const VectorXd d_h = d_ann.col(i).head(H) + carry;
        const VectorXd d_x = gru_backward(p[ParamId::kEncFwdW], p[ParamId::kEncFwdU], tape.encoder.fwd[i],
                                          d_h, g[ParamId::kEncFwdW], g[ParamId::kEncFwdU],
                                          g[ParamId::kEncFwdB], carry);
        d_src.row(source[i]) += d_x.transpose();
    }
    carry.setZero();
    for (Eigen::Index i = 0; i < I; ++i) {
        const VectorXd d_h = d_ann.col(i).tail(H) + carry;
        const VectorXd d_x = gru_backward(p[ParamId::kEncBwdW], p[ParamId::kEncBwdU], tape.encoder.bwd[i],
                                          d_h, g[ParamId::kEncBwdW], g[ParamId::kEncBwdU],
                                          g[ParamId::kEncBwdB], carry);
        d_src.row(source[i]) += d_x.transpose();
    }
}

TokenIds with_eos(std::span<const TokenId> target) {
    TokenIds steps(target.begin(), target.end());
    steps.push_back(kEos);
    return steps;
}

}  // namespace

void ModelConfig::validate() const {
    if (src_vocab == 0 || tgt_vocab <= static_cast<std::size_t>(kEos)) {
        throw std::invalid_argument("target vocabulary must cover the BOS and EOS ids");
    }
    if (embed_dim == 0 || hidden_dim == 0) {
        throw std::invalid_argument("model dimensions must be positive");
    }
}

std::string_view param_name(ParamId id) { return kParamNames[static_cast<std::size_t>(id)]; }

bool is_bias(ParamId id) {
    switch (id) {
        case ParamId::kEncFwdB:
        case ParamId::kEncBwdB:
        case ParamId::kInitB:
        case ParamId::kAttB:
        case ParamId::kDecB:
        case ParamId::kReadB:
        case ParamId::kOutB:
            return true;
        default:
            return false;
    }
}

std::array<std::pair<std::size_t, std::size_t>, kNumParamBlocks> block_shapes(const ModelConfig& c) {
    const std::size_t E = c.embed_dim, H = c.hidden_dim, A = c.attention(), L = c.readout();
    return {{
        {c.src_vocab, E},
        {c.tgt_vocab, E},
        {3 * H, E},
        {3 * H, H},
        {3 * H, 1},
        {3 * H, E},
        {3 * H, H},
        {3 * H, 1},
        {H, 2 * H},
        {H, 1},
        {A, H},
        {A, 2 * H},
        {A, 1},
        {A, 1},
        {3 * H, E + 2 * H},
        {3 * H, H},
        {3 * H, 1},
        {L, H},
        {L, E},
        {L, 2 * H},
        {L, 1},
        {c.tgt_vocab, L},
        {c.tgt_vocab, 1},
    }};
}

bool ModelParams::all_finite() const {
    return std::all_of(blocks.begin(), blocks.end(), [](const MatrixXd& m) { return m.allFinite(); });
}

std::size_t ModelParams::num_values() const {
    std::size_t n = 0;
    for (const auto& b : blocks) {
        n += static_cast<std::size_t>(b.size());
    }
    return n;
}

bool ModelParams::operator==(const ModelParams& other) const {
    if (!(config == other.config)) {
        return false;
    }
    for (std::size_t i = 0; i < kNumParamBlocks; ++i) {
        const auto& a = blocks[i];
        const auto& b = other.blocks[i];
        if (a.rows() != b.rows() || a.cols() != b.cols() ||
            !std::equal(a.data(), a.data() + a.size(), b.data())) {
            return false;
        }
    }
    return true;
}

Gradient Gradient::zeros_like(const ModelParams& params) {
    Gradient g;
    for (std::size_t i = 0; i < kNumParamBlocks; ++i) {
        g.blocks[i] = MatrixXd::Zero(params.blocks[i].rows(), params.blocks[i].cols());
    }
    return g;
}

void Gradient::set_zero() {
    for (auto& b : blocks) {
        b.setZero();
    }
}

void Gradient::add_scaled(const Gradient& other, double scale) {
    for (std::size_t i = 0; i < kNumParamBlocks; ++i) {
        blocks[i] += scale * other.blocks[i];
    }
}

double Gradient::squared_norm() const {
    double n = 0.0;
    for (const auto& b : blocks) {
        n += b.squaredNorm();
    }
    return n;
}

ModelParams init_params(const ModelConfig& config, InitOptions options) {
    config.validate();
    ModelParams params;
    params.config = config;
    std::mt19937_64 rng(options.seed);
    const auto shapes = block_shapes(config);
    for (std::size_t i = 0; i < kNumParamBlocks; ++i) {
        const auto [rows, cols] = shapes[i];
        MatrixXd& m = params.blocks[i];
        m = MatrixXd::Zero(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
        const auto id = static_cast<ParamId>(i);
        if (is_bias(id)) {
            continue;
        }
        // att_v is stored as a column but acts as a 1 x A row vector.
        const double fan_in = id == ParamId::kAttV ? static_cast<double>(rows) : static_cast<double>(cols);
        std::uniform_real_distribution<double> dist(-1.0 / std::sqrt(fan_in), 1.0 / std::sqrt(fan_in));
        // Column-major fill keeps the draw order tied to storage order.
        for (Eigen::Index k = 0; k < m.size(); ++k) {
            m.data()[k] = dist(rng);
        }
    }
    return params;
}

AttentionMatrix::AttentionMatrix(std::size_t target_len, std::size_t source_len)
    : source_len_(source_len), values_(target_len * source_len, 0.0) {}

void AttentionMatrix::append_row(const VectorXd& row) {
    if (static_cast<std::size_t>(row.size()) != source_len_) {
        throw std::invalid_argument("attention row length does not match source length");
    }
    values_.insert(values_.end(), row.data(), row.data() + row.size());
}

void AttentionMatrix::pop_row() { values_.resize(values_.size() - source_len_); }

double AttentionMatrix::column_sum(std::size_t i, std::size_t rows) const {
    double s = 0.0;
    for (std::size_t j = 0; j < rows; ++j) {
        s += (*this)(j, i);
    }
    return s;
}

EncodedSource encode_source(const ModelParams& params, std::span<const TokenId> source) {
    return run_encoder(params, source, nullptr);
}

VectorXd initial_state(const ModelParams& params, const EncodedSource& encoded) {
    const VectorXd mean = encoded.annotations.rowwise().mean();
    return (params[ParamId::kInitW] * mean + params[ParamId::kInitB].col(0)).array().tanh();
}

StepOutput decode_step(const ModelParams& params, const EncodedSource& encoded, const VectorXd& state,
                       TokenId previous) {
    return step_impl(params, encoded, state, previous, nullptr);
}

ForcedResult score_steps(const ModelParams& params, std::span<const TokenId> source,
                         std::span<const TokenId> steps) {
    if (steps.empty()) {
        throw std::invalid_argument("empty target sequence");
    }
    const EncodedSource enc = encode_source(params, source);
    ForcedResult result;
    result.attention = AttentionMatrix(source.size());
    VectorXd state = initial_state(params, enc);
    TokenId previous = kBos;
    for (auto token : steps) {
        StepOutput out = decode_step(params, enc, state, previous);
        if (token < 0 || token >= out.log_probs.size()) {
            throw std::out_of_range("target token id " + std::to_string(token) + " outside vocabulary");
        }
        result.log_prob += out.log_probs[token];
        result.attention.append_row(out.attention);
        state = std::move(out.state);
        previous = token;
    }
    return result;
}

ForcedResult forward_logprob(const ModelParams& params, std::span<const TokenId> source,
                             std::span<const TokenId> target) {
    const TokenIds steps = with_eos(target);
    ForwardTape tape;
    ForcedResult result;
    result.attention = AttentionMatrix(source.size());
    result.log_prob = run_forward(params, source, steps, tape, &result.attention);
    return result;
}

double accumulate_gradient(const ModelParams& params, std::span<const TokenId> source,
                           std::span<const TokenId> steps, double scale, Gradient& grad) {
    ForwardTape tape;
    const double log_prob = run_forward(params, source, steps, tape, nullptr);
    run_backward(params, source, tape, scale, grad);
    return log_prob;
}

LogProbGradient grad_logprob(const ModelParams& params, std::span<const TokenId> source,
                             std::span<const TokenId> target) {
    LogProbGradient out{0.0, Gradient::zeros_like(params)};
    const TokenIds steps = with_eos(target);
    out.log_prob = accumulate_gradient(params, source, steps, 1.0, out.gradient);
    return out;
}

SampleSet sample_translations(const ModelParams& params, std::span<const TokenId> source, std::size_t k,
                              std::size_t max_len, std::uint64_t seed) {
    if (k == 0) {
        throw std::invalid_argument("sample count must be at least 1");
    }
    if (max_len == 0) {
        throw std::invalid_argument("max_len must be at least 1");
    }
    const EncodedSource enc = encode_source(params, source);
    const VectorXd init = initial_state(params, enc);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> uniform(0.0, 1.0);

    SampleSet set;
    set.source.assign(source.begin(), source.end());
    std::set<TokenIds> seen;
    for (std::size_t n = 0; n < k; ++n) {
        Hypothesis hyp;
        hyp.attention = AttentionMatrix(source.size());
        VectorXd state = init;
        TokenId previous = kBos;
        while (hyp.tokens.size() < max_len) {
            StepOutput out = decode_step(params, enc, state, previous);
            const double u = uniform(rng);
            double cumulative = 0.0;
            Eigen::Index choice = -1;
            for (Eigen::Index v = 0; v < out.log_probs.size(); ++v) {
                const double prob = std::exp(out.log_probs[v]);
                if (prob <= 0.0) {
                    continue;
                }
                choice = v;
                cumulative += prob;
                if (u < cumulative) {
                    break;
                }
            }
            const auto token = static_cast<TokenId>(choice);
            hyp.tokens.push_back(token);
            hyp.log_prob += out.log_probs[choice];
            hyp.attention.append_row(out.attention);
            if (token == kEos) {
                break;
            }
            state = std::move(out.state);
            previous = token;
        }
        if (seen.insert(hyp.tokens).second) {
            set.hypotheses.push_back(std::move(hyp));
        }
    }
    return set;
}

bool hypothesis_before(double score_a, const TokenIds& a, double score_b, const TokenIds& b) {
    if (score_a != score_b) {
        return score_a > score_b;
    }
    return a < b;
}

namespace {

struct LiveHyp {
    Hypothesis hyp;
    VectorXd state;
};

struct Candidate {
    double score;
    double log_prob;
    std::size_t parent;
    TokenId token;
};

}  // namespace

std::vector<Hypothesis> beam_search(const ModelParams& params, std::span<const TokenId> source,
                                    std::size_t beam_size, std::size_t max_len,
                                    const PruningScore& pruning_score) {
    if (beam_size == 0) {
        throw std::invalid_argument("beam size must be at least 1");
    }
    if (max_len == 0) {
        throw std::invalid_argument("max_len must be at least 1");
    }
    const EncodedSource enc = encode_source(params, source);
    std::vector<LiveHyp> live(1);
    live[0].hyp.attention = AttentionMatrix(source.size());
    live[0].state = initial_state(params, enc);
    std::vector<Hypothesis> finished;

    auto sort_finished = [](std::vector<Hypothesis>& hyps) {
        std::sort(hyps.begin(), hyps.end(), [](const Hypothesis& a, const Hypothesis& b) {
            return hypothesis_before(a.log_prob, a.tokens, b.log_prob, b.tokens);
        });
    };

    for (std::size_t step = 1; step <= max_len && !live.empty(); ++step) {
        std::vector<StepOutput> outputs;
        outputs.reserve(live.size());
        std::vector<Candidate> candidates;
        for (std::size_t h = 0; h < live.size(); ++h) {
            const TokenId previous = live[h].hyp.tokens.empty() ? kBos : live[h].hyp.tokens.back();
            outputs.push_back(decode_step(params, enc, live[h].state, previous));
            const VectorXd& lp = outputs.back().log_probs;
            for (Eigen::Index v = 0; v < lp.size(); ++v) {
                const double log_prob = live[h].hyp.log_prob + lp[v];
                candidates.push_back({log_prob, log_prob, h, static_cast<TokenId>(v)});
            }
        }
        auto materialize = [&](const Candidate& c) {
            Hypothesis hyp = live[c.parent].hyp;
            hyp.tokens.push_back(c.token);
            hyp.log_prob = c.log_prob;
            hyp.attention.append_row(outputs[c.parent].attention);
            return hyp;
        };
        if (pruning_score) {
            for (auto& c : candidates) {
                c.score = pruning_score(materialize(c));
            }
        }
        // Live tokens are distinct and of equal length, so ordering by
        // (parent tokens, token) is lexicographic order of the extended sequence.
        auto before = [&](const Candidate& a, const Candidate& b) {
            if (a.score != b.score) {
                return a.score > b.score;
            }
            if (a.parent != b.parent) {
                return live[a.parent].hyp.tokens < live[b.parent].hyp.tokens;
            }
            return a.token < b.token;
        };
        const std::size_t keep = std::min(beam_size, candidates.size());
        std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(keep),
                          candidates.end(), before);

        std::vector<LiveHyp> next;
        for (std::size_t n = 0; n < keep; ++n) {
            const Candidate& c = candidates[n];
            Hypothesis hyp = materialize(c);
            if (c.token == kEos || step == max_len) {
                finished.push_back(std::move(hyp));
            } else {
                next.push_back({std::move(hyp), outputs[c.parent].state});
            }
        }
        live = std::move(next);

        // Scores only decrease along a path, so once beam_size finished
        // hypotheses beat every live one the result is fixed.
        if (!pruning_score && !live.empty() && finished.size() >= beam_size) {
            sort_finished(finished);
            double best_live = live.front().hyp.log_prob;
            for (const auto& l : live) {
                best_live = std::max(best_live, l.hyp.log_prob);
            }
            if (best_live < finished[beam_size - 1].log_prob) {
                live.clear();
            }
        }
    }
    sort_finished(finished);
    if (finished.size() > beam_size) {
        finished.resize(beam_size);
    }
    return finished;
}

Hypothesis greedy_decode(const ModelParams& params, std::span<const TokenId> source, std::size_t max_len) {
    const EncodedSource enc = encode_source(params, source);
    Hypothesis hyp;
    hyp.attention = AttentionMatrix(source.size());
    VectorXd state = initial_state(params, enc);
    TokenId previous = kBos;
    while (hyp.tokens.size() < max_len) {
        StepOutput out = decode_step(params, enc, state, previous);
        Eigen::Index best = 0;
        for (Eigen::Index v = 1; v < out.log_probs.size(); ++v) {
            if (out.log_probs[v] > out.log_probs[best]) {
                best = v;
            }
        }
        hyp.tokens.push_back(static_cast<TokenId>(best));
        hyp.log_prob += out.log_probs[best];
        hyp.attention.append_row(out.attention);
        if (best == kEos) {
            break;
        }
        state = std::move(out.state);
        previous = static_cast<TokenId>(best);
    }
    return hyp;
}

}  // namespace prnmt
