#pragma once

#include <cstddef>
#include <ostream>
#include <span>
#include <vector>

#include "prnmt/features.hpp"
#include "prnmt/model.hpp"

namespace prnmt {

struct CandidateScore {
    double log_prob = 0.0;
    double gamma_phi = 0.0;
    double combined = 0.0;
};

struct RerankedResult {
    Hypothesis chosen;
    std::size_t chosen_index = 0;
    double combined_score = 0.0;
    std::vector<CandidateScore> breakdown;  // parallel to the k-best list
};

// argmax of logP + gamma . phi; ties go to higher logP, then lexicographic.
RerankedResult rerank(std::span<const Hypothesis> kbest, std::span<const TokenId> source,
                      const FeatureWeights& gamma, const KnowledgeResources& resources,
                      const FeatureConfig& config);

struct CoverageDecodeOptions {
    double cp_weight = 0.2;
    double cp_epsilon = 1e-6;
    // Also rank partial hypotheses by logP + cp_weight * CP while pruning.
    bool during_pruning = false;
};

double coverage_score(const Hypothesis& hyp, double cp_weight, double cp_epsilon);

// Finished hypothesis with the highest logP + cp_weight * CP.
Hypothesis select_with_coverage(std::span<const Hypothesis> finished, double cp_weight, double cp_epsilon);

Hypothesis decode_with_cp(const ModelParams& params, std::span<const TokenId> source, std::size_t beam_size,
                          std::size_t max_len, const CoverageDecodeOptions& options = {});

// "sentence_index ||| tokens ||| logP ||| gamma_phi ||| combined"
void write_kbest(std::ostream& out, std::size_t sentence_index, std::span<const Hypothesis> kbest,
                 std::span<const CandidateScore> scores, const Vocabulary& tgt_vocab);

}  // namespace prnmt
