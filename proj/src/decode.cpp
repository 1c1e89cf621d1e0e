#include "prnmt/decode.hpp"

#include <iomanip>
#include <stdexcept>

namespace prnmt {

RerankedResult rerank(std::span<const Hypothesis> kbest, std::span<const TokenId> source,
                      const FeatureWeights& gamma, const KnowledgeResources& resources,
                      const FeatureConfig& config) {
    if (kbest.empty()) {
        throw std::invalid_argument("rerank needs at least one candidate");
    }
    RerankedResult result;
    result.breakdown.reserve(kbest.size());
    for (const auto& hyp : kbest) {
        const SparseFeatureVector phi = compute_features(source, hyp.words(), hyp.attention, resources, config);
        CandidateScore s;
        s.log_prob = hyp.log_prob;
        s.gamma_phi = phi.dot(gamma);
        s.combined = s.log_prob + s.gamma_phi;
        result.breakdown.push_back(s);
    }
    std::size_t best = 0;
    for (std::size_t n = 1; n < kbest.size(); ++n) {
        const auto& a = result.breakdown[n];
        const auto& b = result.breakdown[best];
        bool better = a.combined > b.combined;
        if (a.combined == b.combined) {
            better = a.log_prob > b.log_prob || (a.log_prob == b.log_prob && kbest[n].tokens < kbest[best].tokens);
        }
        if (better) {
            best = n;
        }
    }
    result.chosen = kbest[best];
    result.chosen_index = best;
    result.combined_score = result.breakdown[best].combined;
    return result;
}

double coverage_score(const Hypothesis& hyp, double cp_weight, double cp_epsilon) {
    if (cp_weight == 0.0) {
        return hyp.log_prob;
    }
    return hyp.log_prob + cp_weight * coverage_penalty(hyp.attention, hyp.words().size(), cp_epsilon);
}

Hypothesis select_with_coverage(std::span<const Hypothesis> finished, double cp_weight, double cp_epsilon) {
    if (finished.empty()) {
        throw std::invalid_argument("no finished hypotheses");
    }
    std::size_t best = 0;
    double best_score = coverage_score(finished[0], cp_weight, cp_epsilon);
    for (std::size_t n = 1; n < finished.size(); ++n) {
        const double s = coverage_score(finished[n], cp_weight, cp_epsilon);
        if (hypothesis_before(s, finished[n].tokens, best_score, finished[best].tokens)) {
            best = n;
            best_score = s;
        }
    }
    return finished[best];
}

Hypothesis decode_with_cp(const ModelParams& params, std::span<const TokenId> source, std::size_t beam_size,
                          std::size_t max_len, const CoverageDecodeOptions& options) {
    if (!(options.cp_weight >= 0.0)) {
        throw std::invalid_argument("cp_weight must be non-negative");
    }
    PruningScore pruning;
    if (options.during_pruning) {
        pruning = [&](const Hypothesis& h) { return coverage_score(h, options.cp_weight, options.cp_epsilon); };
    }
    const auto finished = beam_search(params, source, beam_size, max_len, pruning);
    return select_with_coverage(finished, options.cp_weight, options.cp_epsilon);
}

void write_kbest(std::ostream& out, std::size_t sentence_index, std::span<const Hypothesis> kbest,
                 std::span<const CandidateScore> scores, const Vocabulary& tgt_vocab) {
    if (kbest.size() != scores.size()) {
        throw std::invalid_argument("k-best list and scores differ in size");
    }
    const auto flags = out.flags();
    const auto precision = out.precision();
    out << std::setprecision(6) << std::fixed;
    for (std::size_t n = 0; n < kbest.size(); ++n) {
        out << sentence_index << " ||| " << join_tokens(tgt_vocab.decode(kbest[n].words())) << " ||| "
            << scores[n].log_prob << " ||| " << scores[n].gamma_phi << " ||| " << scores[n].combined << '\n';
    }
    out.flags(flags);
    out.precision(precision);
}

}  // namespace prnmt
