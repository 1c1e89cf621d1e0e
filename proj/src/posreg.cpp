#include "prnmt/posreg.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <random>
#include <set>

#include "prnmt/rng.hpp"

namespace prnmt {

namespace {

std::vector<double> normalized_exp(std::span<const double> logits) {
    if (logits.empty()) {
        throw std::invalid_argument("cannot normalize over an empty sample set");
    }
    const double m = *std::max_element(logits.begin(), logits.end());
    std::vector<double> out(logits.size());
    double z = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        out[i] = std::exp(logits[i] - m);
        z += out[i];
    }
    for (auto& v : out) {
        v /= z;
    }
    return out;
}

std::vector<double> log_normalized(std::span<const double> logits) {
    const double m = *std::max_element(logits.begin(), logits.end());
    double z = 0.0;
    for (double l : logits) {
        z += std::exp(l - m);
    }
    const double lse = m + std::log(z);
    std::vector<double> out(logits.size());
    for (std::size_t i = 0; i < logits.size(); ++i) {
        out[i] = logits[i] - lse;
    }
    return out;
}

// KL value, Q~, P~ and the gamma gradient; everything except the theta part.
struct KlTerms {
    double kl = 0.0;
    std::vector<double> q;
    std::vector<double> p;
    FeatureWeights grad_gamma;
};

KlTerms kl_terms(const SampleSet& samples, std::span<const SparseFeatureVector> features,
                 const FeatureWeights& gamma, double alpha) {
    const std::size_t n = samples.hypotheses.size();
    if (n == 0 || features.size() != n) {
        throw std::invalid_argument("sample set and feature list differ in size or are empty");
    }
    std::vector<double> q_logits(n), p_logits(n);
    for (std::size_t y = 0; y < n; ++y) {
        q_logits[y] = features[y].dot(gamma);
        p_logits[y] = alpha * samples.hypotheses[y].log_prob;
    }
    KlTerms t;
    t.q = normalized_exp(q_logits);
    t.p = normalized_exp(p_logits);
    t.kl = kl_approx(t.q, t.p);

    const auto log_q = log_normalized(q_logits);
    const auto log_p = log_normalized(p_logits);
    std::set<FeatureId> keys;
    for (const auto& phi : features) {
        for (const auto& [id, v] : phi) {
            keys.insert(id);
        }
    }
    for (auto id : keys) {
        double mean = 0.0;
        for (std::size_t y = 0; y < n; ++y) {
            mean += t.q[y] * features[y].get(id);
        }
        double g = 0.0;
        for (std::size_t y = 0; y < n; ++y) {
            if (t.q[y] > 0.0) {
                g += t.q[y] * (log_q[y] - log_p[y]) * (features[y].get(id) - mean);
            }
        }
        t.grad_gamma.set(id, g);
    }
    return t;
}

TokenIds with_eos(const TokenIds& target) {
    TokenIds steps = target;
    steps.push_back(kEos);
    return steps;
}

double elapsed_seconds(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace

std::vector<double> q_tilde(const FeatureWeights& gamma, std::span<const SparseFeatureVector> features) {
    std::vector<double> logits;
    logits.reserve(features.size());
    for (const auto& phi : features) {
        logits.push_back(phi.dot(gamma));
    }
    return normalized_exp(logits);
}

std::vector<double> p_tilde(std::span<const double> log_probs, double alpha) {
    if (!(alpha > 0.0)) {
        throw std::invalid_argument("alpha must be positive");
    }
    std::vector<double> logits;
    logits.reserve(log_probs.size());
    for (double lp : log_probs) {
        logits.push_back(alpha * lp);
    }
    return normalized_exp(logits);
}

double kl_approx(std::span<const double> q, std::span<const double> p) {
    if (q.size() != p.size()) {
        throw std::invalid_argument("KL arguments differ in length");
    }
    double kl = 0.0;
    for (std::size_t i = 0; i < q.size(); ++i) {
        if (q[i] <= 0.0) {
            continue;
        }
        if (p[i] <= 0.0) {
            throw std::domain_error("KL undefined: q > 0 where p = 0");
        }
        kl += q[i] * std::log(q[i] / p[i]);
    }
    return kl;
}

KlGradients kl_gradients(const SampleSet& samples, std::span<const SparseFeatureVector> features,
                         const FeatureWeights& gamma, const ModelParams& theta, double alpha) {
    KlTerms t = kl_terms(samples, features, gamma, alpha);
    KlGradients out{t.kl, std::move(t.q), std::move(t.p), std::move(t.grad_gamma), Gradient::zeros_like(theta)};
    for (std::size_t y = 0; y < samples.hypotheses.size(); ++y) {
        const double weight = -alpha * (out.q[y] - out.p[y]);
        if (weight != 0.0) {
            accumulate_gradient(theta, samples.source, samples.hypotheses[y].tokens, weight, out.grad_theta);
        }
    }
    return out;
}

void write_trace(const std::string& path, std::span<const TraceRecord> trace) {
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("cannot write " + path);
    }
    out << "iteration\tmean_log_likelihood\tmean_kl\tgamma_norm\tseconds\tmean_token_log_likelihood\n";
    out << std::setprecision(10);
    for (const auto& r : trace) {
        out << r.iteration << '\t' << r.mean_log_likelihood << '\t' << r.mean_kl << '\t' << r.gamma_norm << '\t'
            << r.seconds << '\t' << r.mean_token_log_likelihood << '\n';
    }
}

SentenceStream::SentenceStream(std::size_t corpus_size, std::uint64_t seed) : size_(corpus_size), seed_(seed) {
    if (corpus_size == 0) {
        throw std::invalid_argument("empty training corpus");
    }
    reshuffle();
}

void SentenceStream::reshuffle() {
    order_.resize(size_);
    for (std::size_t i = 0; i < size_; ++i) {
        order_[i] = i;
    }
    std::mt19937_64 rng(derive_seed(seed_, "shuffle", epoch_));
    std::shuffle(order_.begin(), order_.end(), rng);
    pos_ = 0;
}

std::size_t SentenceStream::next() {
    if (pos_ == size_) {
        ++epoch_;
        reshuffle();
    }
    return order_[pos_++];
}

void MleConfig::validate() const {
    if (batch_size == 0) {
        throw std::invalid_argument("batch_size must be at least 1");
    }
    if (log_every == 0) {
        throw std::invalid_argument("log_every must be at least 1");
    }
}

MleResult train_mle(const MleConfig& config, std::span<const SentencePair> corpus, ModelParams params) {
    config.validate();
    MleResult result;
    if (config.iterations == 0) {
        result.params = std::move(params);
        return result;
    }
    const auto start = std::chrono::steady_clock::now();
    SentenceStream stream(corpus.size(), config.seed);
    AdaDelta optimizer(params, config.optimizer);
    Gradient grad = Gradient::zeros_like(params);
    const double scale = config.gradient_scale / static_cast<double>(config.batch_size);

    double interval_ll = 0.0;
    std::size_t interval_sentences = 0, interval_tokens = 0;
    for (std::size_t it = 1; it <= config.iterations; ++it) {
        grad.set_zero();
        for (std::size_t b = 0; b < config.batch_size; ++b) {
            const SentencePair& pair = corpus[stream.next()];
            const TokenIds steps = with_eos(pair.target);
            interval_ll += accumulate_gradient(params, pair.source, steps, scale, grad);
            interval_tokens += steps.size();
        }
        interval_sentences += config.batch_size;
        if (!std::isfinite(interval_ll)) {
            throw NumericalError("non-finite log-likelihood at MLE iteration " + std::to_string(it));
        }
        optimizer.ascend(params, grad);
        if (!params.all_finite()) {
            throw NumericalError("non-finite parameters after MLE iteration " + std::to_string(it));
        }
        if (it % config.log_every == 0 || it == config.iterations) {
            TraceRecord r;
            r.iteration = it;
            r.mean_log_likelihood = interval_ll / static_cast<double>(interval_sentences);
            r.mean_token_log_likelihood = interval_ll / static_cast<double>(interval_tokens);
            r.seconds = elapsed_seconds(start);
            result.trace.push_back(r);
            interval_ll = 0.0;
            interval_sentences = interval_tokens = 0;
        }
    }
    result.params = std::move(params);
    return result;
}

void PRConfig::validate() const {
    if (!(lambda1 >= 0.0) || !(lambda2 >= 0.0)) {
        throw std::invalid_argument("lambda1 and lambda2 must be non-negative");
    }
    if (!(alpha > 0.0)) {
        throw std::invalid_argument("alpha must be positive");
    }
    if (sample_size == 0) {
        throw std::invalid_argument("sample_size must be at least 1");
    }
    if (batch_size == 0) {
        throw std::invalid_argument("batch_size must be at least 1");
    }
    if (log_every == 0) {
        throw std::invalid_argument("log_every must be at least 1");
    }
}

SampleSet draw_sample_set(const ModelParams& params, const SentencePair& pair, std::size_t sample_size,
                          std::size_t max_len, bool include_reference, std::uint64_t seed) {
    SampleSet samples = sample_translations(params, pair.source, sample_size, max_len, seed);
    if (include_reference) {
        const TokenIds steps = with_eos(pair.target);
        const bool present = std::any_of(samples.hypotheses.begin(), samples.hypotheses.end(),
                                         [&](const Hypothesis& h) { return h.tokens == steps; });
        if (!present) {
            ForcedResult forced = score_steps(params, pair.source, steps);
            samples.hypotheses.push_back({steps, forced.log_prob, std::move(forced.attention)});
        }
    }
    return samples;
}

std::vector<SparseFeatureVector> sample_features(const SampleSet& samples, const KnowledgeResources& resources,
                                                 const FeatureConfig& features) {
    std::vector<SparseFeatureVector> out;
    out.reserve(samples.hypotheses.size());
    for (const auto& h : samples.hypotheses) {
        out.push_back(compute_features(samples.source, h.words(), h.attention, resources, features));
    }
    return out;
}

PRResult train_posreg(const PRConfig& config, std::span<const SentencePair> corpus,
                      const KnowledgeResources& resources, const FeatureConfig& features, ModelParams params,
                      FeatureWeights gamma) {
    config.validate();
    features.validate();
    PRResult result;
    if (config.iterations == 0) {
        result.params = std::move(params);
        result.gamma = std::move(gamma);
        return result;
    }
    const auto start = std::chrono::steady_clock::now();
    SentenceStream stream(corpus.size(), config.seed);
    AdaDelta optimizer(params, config.theta_optimizer);
    Gradient grad = Gradient::zeros_like(params);
    const auto batch = static_cast<double>(config.batch_size);
    const double ll_scale = config.lambda1 / batch;

    double interval_ll = 0.0, interval_kl = 0.0;
    std::size_t interval_sentences = 0, interval_tokens = 0;
    for (std::size_t it = 1; it <= config.iterations; ++it) {
        grad.set_zero();
        std::map<FeatureId, double> gamma_grad;
        for (std::size_t b = 0; b < config.batch_size; ++b) {
            const SentencePair& pair = corpus[stream.next()];
            const TokenIds steps = with_eos(pair.target);
            const double ll = accumulate_gradient(params, pair.source, steps, ll_scale, grad);
            interval_ll += ll;
            interval_tokens += steps.size();
            if (config.lambda2 == 0.0) {
                continue;
            }
            const std::size_t max_len =
                config.sample_max_len > 0 ? config.sample_max_len : default_max_len(pair.source.size());
            const std::uint64_t seed = derive_seed(config.seed, "sampling", (it - 1) * config.batch_size + b);
            const SampleSet samples =
                draw_sample_set(params, pair, config.sample_size, max_len, config.include_reference_in_samples, seed);
            const auto phi = sample_features(samples, resources, features);
            KlTerms terms = kl_terms(samples, phi, gamma, config.alpha);
            if (!std::isfinite(terms.kl)) {
                throw NumericalError("non-finite KL at PR iteration " + std::to_string(it));
            }
            interval_kl += terms.kl;
            // theta ascent on -lambda2 * KL: + lambda2 * alpha * (q - p) * g(y)
            for (std::size_t y = 0; y < samples.hypotheses.size(); ++y) {
                const double weight = config.lambda2 * config.alpha * (terms.q[y] - terms.p[y]) / batch;
                if (weight != 0.0) {
                    accumulate_gradient(params, samples.source, samples.hypotheses[y].tokens, weight, grad);
                }
            }
            for (const auto& [id, g] : terms.grad_gamma) {
                gamma_grad[id] += g;
            }
        }
        interval_sentences += config.batch_size;
        if (!std::isfinite(interval_ll)) {
            throw NumericalError("non-finite log-likelihood at PR iteration " + std::to_string(it));
        }
        for (const auto& [id, g] : gamma_grad) {
            gamma.add(id, -config.gamma_step_size * config.lambda2 * g / batch);
        }
        optimizer.ascend(params, grad);
        if (!params.all_finite() || !gamma.all_finite()) {
            throw NumericalError("non-finite parameters after PR iteration " + std::to_string(it));
        }
        if (it % config.log_every == 0 || it == config.iterations) {
            TraceRecord r;
            r.iteration = it;
            r.mean_log_likelihood = interval_ll / static_cast<double>(interval_sentences);
            r.mean_token_log_likelihood = interval_ll / static_cast<double>(interval_tokens);
            r.mean_kl = interval_kl / static_cast<double>(interval_sentences);
            r.gamma_norm = gamma.norm();
            r.seconds = elapsed_seconds(start);
            result.trace.push_back(r);
            interval_ll = interval_kl = 0.0;
            interval_sentences = interval_tokens = 0;
        }
    }
    result.params = std::move(params);
    result.gamma = std::move(gamma);
    return result;
}

double mean_sampled_kl(const ModelParams& params, const FeatureWeights& gamma,
                       std::span<const SentencePair> corpus, const KnowledgeResources& resources,
                       const FeatureConfig& features, std::size_t sample_size, double alpha, std::uint64_t seed) {
    if (corpus.empty()) {
        throw std::invalid_argument("empty corpus");
    }
    double total = 0.0;
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        const SampleSet samples = draw_sample_set(params, corpus[i], sample_size,
                                                  default_max_len(corpus[i].source.size()), false,
                                                  derive_seed(seed, "heldout_kl", i));
        const auto phi = sample_features(samples, resources, features);
        total += kl_terms(samples, phi, gamma, alpha).kl;
    }
    return total / static_cast<double>(corpus.size());
}

}  // namespace prnmt
