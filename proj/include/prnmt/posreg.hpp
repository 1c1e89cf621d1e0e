#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "prnmt/corpus.hpp"
#include "prnmt/features.hpp"
#include "prnmt/model.hpp"
#include "prnmt/optimizer.hpp"

namespace prnmt {

// Raised when a loss, objective or parameter becomes non-finite.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Q~: softmax of gamma . phi over the sample set.
std::vector<double> q_tilde(const FeatureWeights& gamma, std::span<const SparseFeatureVector> features);

// P~: proportional to exp(alpha * log P(y)) over the sample set.
std::vector<double> p_tilde(std::span<const double> log_probs, double alpha);

// sum_i q_i log(q_i / p_i), with 0 log 0 = 0.
double kl_approx(std::span<const double> q, std::span<const double> p);

struct KlGradients {
    double kl = 0.0;
    std::vector<double> q;
    std::vector<double> p;
    FeatureWeights grad_gamma;
    Gradient grad_theta;
};

// d KL(Q~ || P~) / d gamma and d theta on one sample set. Features are
// constants with respect to theta.
//   d/dgamma = E_Q[(phi - E_Q[phi]) (log Q~ - log P~)]
//   d/dtheta = -alpha (E_Q[g] - E_P[g]),  g = d log P(y|x) / d theta
KlGradients kl_gradients(const SampleSet& samples, std::span<const SparseFeatureVector> features,
                         const FeatureWeights& gamma, const ModelParams& theta, double alpha);

struct TraceRecord {
    std::size_t iteration = 0;
    double mean_log_likelihood = 0.0;        // per sentence
    double mean_token_log_likelihood = 0.0;  // per target token incl. EOS
    double mean_kl = 0.0;
    double gamma_norm = 0.0;
    double seconds = 0.0;
};

// One line per record: iteration, mean log-likelihood, mean sampled KL,
// gamma norm, wall-clock seconds, mean per-token log-likelihood.
void write_trace(const std::string& path, std::span<const TraceRecord> trace);

struct MleConfig {
    std::size_t batch_size = 80;
    std::size_t iterations = 0;
    std::uint64_t seed = 1;
    AdaDeltaConfig optimizer;
    // Multiplies the mean batch gradient before the optimizer sees it.
    double gradient_scale = 1.0;
    std::size_t log_every = 1;

    void validate() const;
};

struct MleResult {
    ModelParams params;
    std::vector<TraceRecord> trace;
};

MleResult train_mle(const MleConfig& config, std::span<const SentencePair> corpus, ModelParams params);

struct PRConfig {
    double lambda1 = 8e-5;
    double lambda2 = 2.5e-4;
    double alpha = 0.2;
    std::size_t sample_size = 80;
    std::size_t batch_size = 1;
    AdaDeltaConfig theta_optimizer;
    double gamma_step_size = 1e-2;
    std::size_t iterations = 0;
    std::uint64_t seed = 1;
    bool include_reference_in_samples = false;
    // Zero means default_max_len(|x|).
    std::size_t sample_max_len = 0;
    std::size_t log_every = 100;

    void validate() const;
};

struct PRResult {
    ModelParams params;
    FeatureWeights gamma;
    std::vector<TraceRecord> trace;
};

// Joint ascent of lambda1 * L(theta) - lambda2 * KL(Q~ || P~) over theta and
// gamma, one update per batch of sentences.
PRResult train_posreg(const PRConfig& config, std::span<const SentencePair> corpus,
                      const KnowledgeResources& resources, const FeatureConfig& features,
                      ModelParams init_params, FeatureWeights init_gamma);

// Sample set for one sentence as the trainer builds it.
SampleSet draw_sample_set(const ModelParams& params, const SentencePair& pair, std::size_t sample_size,
                          std::size_t max_len, bool include_reference, std::uint64_t seed);

std::vector<SparseFeatureVector> sample_features(const SampleSet& samples, const KnowledgeResources& resources,
                                                 const FeatureConfig& features);

// Mean sampled KL(Q~ || P~) over a corpus, with a fixed seed per sentence.
double mean_sampled_kl(const ModelParams& params, const FeatureWeights& gamma,
                       std::span<const SentencePair> corpus, const KnowledgeResources& resources,
                       const FeatureConfig& features, std::size_t sample_size, double alpha, std::uint64_t seed);

// Visits corpus indices in a fresh permutation per epoch.
class SentenceStream {
public:
    SentenceStream(std::size_t corpus_size, std::uint64_t seed);
    std::size_t next();

private:
    void reshuffle();

    std::size_t size_;
    std::uint64_t seed_;
    std::uint64_t epoch_ = 0;
    std::size_t pos_ = 0;
    std::vector<std::size_t> order_;
};

}  // namespace prnmt
