#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "prnmt/decode.hpp"
#include "prnmt/features.hpp"
#include "prnmt/model.hpp"
#include "prnmt/posreg.hpp"

namespace prnmt {

// Flat experiment configuration. Every key is also a command-line flag of
// the same name (--key value).
struct ExperimentConfig {
    std::optional<std::uint64_t> seed;
    std::string output_dir;

    std::string train_src;
    std::string train_tgt;
    std::string input;
    std::string hypotheses;
    std::vector<std::string> references;
    std::string src_vocab;
    std::string tgt_vocab;
    std::string checkpoint;
    std::string gamma;
    std::string dictionary;
    std::string phrase_table;

    std::size_t max_vocab = kDefaultMaxVocab;
    std::size_t max_sentence_length = kDefaultMaxSentenceLength;

    std::size_t embed_dim = 32;
    std::size_t hidden_dim = 64;
    std::size_t attention_dim = 0;
    std::size_t readout_dim = 0;

    double adadelta_decay = 0.95;
    double adadelta_epsilon = 1e-6;

    std::size_t mle_iterations = 0;
    std::size_t mle_batch_size = 80;
    double mle_gradient_scale = 1.0;
    std::size_t mle_log_every = 1;

    std::size_t pr_iterations = 0;
    double lambda1 = 8e-5;
    double lambda2 = 2.5e-4;
    double alpha = 0.2;
    std::size_t sample_size = 80;
    std::size_t pr_batch_size = 1;
    double gamma_step_size = 1e-2;
    bool include_reference_in_samples = false;
    std::size_t sample_max_len = 0;
    std::size_t pr_log_every = 100;

    double beta = 1.236;
    double cp_epsilon = 1e-6;
    bool use_dictionary = true;
    bool use_phrases = true;
    bool use_coverage = true;
    bool use_length_ratio = true;

    double dict_min_prob = 0.1;
    double phrase_min_prob = 0.5;
    std::size_t phrase_min_count = 10;
    std::size_t max_phrase_len = 4;

    std::size_t beam_size = 10;
    std::size_t max_len = 0;  // zero: 2|x| + 10
    double cp_weight = 0.0;   // > 0 decodes with the coverage penalty
    bool cp_during_pruning = false;

    bool lowercase = true;

    ModelConfig model_config(std::size_t src_vocab_size, std::size_t tgt_vocab_size) const;
    MleConfig mle_config() const;
    PRConfig pr_config() const;
    FeatureConfig feature_config() const;
    ResourceThresholds thresholds() const;
    CoverageDecodeOptions coverage_options() const;

    // Throws std::invalid_argument naming the first problem found.
    void validate(const std::string& command) const;
};

nlohmann::json config_to_json(const ExperimentConfig& config);
// Unknown keys and mistyped values throw std::invalid_argument.
ExperimentConfig config_from_json(const nlohmann::json& json);
ExperimentConfig load_config(const std::string& path);

inline const std::vector<std::string>& cli_commands() {
    static const std::vector<std::string> commands{"extract-resources", "train-mle", "train-pr",
                                                   "decode",            "rerank",    "eval"};
    return commands;
}

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitNumerical = 2;

// Runs one command; returns an exit code. Diagnostics go to std::cerr.
int run_command(const std::string& command, const ExperimentConfig& config);

// Parses "prnmt <command> [--config file] [--key value ...]".
int run_cli(int argc, char** argv);

}  // namespace prnmt
