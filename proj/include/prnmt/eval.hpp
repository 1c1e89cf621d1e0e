#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace prnmt {

using Sentence = std::vector<std::string>;

struct BleuReport {
    double bleu = 0.0;                 // percent
    std::vector<double> precisions;    // p_1..p_max_n as fractions
    std::vector<std::size_t> matches;  // clipped n-gram matches
    std::vector<std::size_t> totals;   // hypothesis n-grams
    double brevity_penalty = 1.0;
    double ratio = 0.0;  // hyp_len / ref_len
    std::size_t hyp_len = 0;
    std::size_t ref_len = 0;
};

// Corpus BLEU with clipped counts, closest reference length (shorter on
// ties) and no smoothing. references[s] holds every reference of sentence s.
BleuReport bleu_score(const std::vector<Sentence>& hypotheses, const std::vector<std::vector<Sentence>>& references,
                      std::size_t max_n = 4, bool lowercase = true);

// "BLEU = 50.81, 66.7/60.0/50.0/33.3 (BP=1.000, ratio=1.500, hyp_len=6, ref_len=4)"
std::string format_bleu(const BleuReport& report);

}  // namespace prnmt
