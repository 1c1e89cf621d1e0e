#include "prnmt/eval.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <map>
#include <stdexcept>

namespace prnmt {

namespace {

using NgramCounts = std::map<std::vector<std::string>, std::size_t>;

NgramCounts count_ngrams(const Sentence& s, std::size_t n) {
    NgramCounts counts;
    for (std::size_t i = 0; i + n <= s.size(); ++i) {
        ++counts[std::vector<std::string>(s.begin() + static_cast<std::ptrdiff_t>(i),
                                          s.begin() + static_cast<std::ptrdiff_t>(i + n))];
    }
    return counts;
}

Sentence fold_case(const Sentence& s) {
    Sentence out = s;
    for (auto& tok : out) {
        std::transform(tok.begin(), tok.end(), tok.begin(),
                       [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    }
    return out;
}

}  // namespace

BleuReport bleu_score(const std::vector<Sentence>& hypotheses, const std::vector<std::vector<Sentence>>& references,
                      std::size_t max_n, bool lowercase) {
    if (hypotheses.empty()) {
        throw std::invalid_argument("BLEU of an empty corpus is undefined");
    }
    if (hypotheses.size() != references.size()) {
        throw std::invalid_argument("hypothesis and reference counts differ");
    }
    if (max_n == 0) {
        throw std::invalid_argument("max_n must be at least 1");
    }
    BleuReport report;
    report.matches.assign(max_n, 0);
    report.totals.assign(max_n, 0);

    for (std::size_t s = 0; s < hypotheses.size(); ++s) {
        if (references[s].empty()) {
            throw std::invalid_argument("sentence " + std::to_string(s) + " has no reference");
        }
        const Sentence hyp = lowercase ? fold_case(hypotheses[s]) : hypotheses[s];
        std::vector<Sentence> refs;
        for (const auto& r : references[s]) {
            refs.push_back(lowercase ? fold_case(r) : r);
        }

        report.hyp_len += hyp.size();
        std::size_t closest = refs[0].size();
        for (const auto& r : refs) {
            const auto d = std::llabs(static_cast<long long>(r.size()) - static_cast<long long>(hyp.size()));
            const auto best = std::llabs(static_cast<long long>(closest) - static_cast<long long>(hyp.size()));
            if (d < best || (d == best && r.size() < closest)) {
                closest = r.size();
            }
        }
        report.ref_len += closest;

        for (std::size_t n = 1; n <= max_n; ++n) {
            const NgramCounts hyp_counts = count_ngrams(hyp, n);
            NgramCounts max_ref;
            for (const auto& r : refs) {
                for (const auto& [gram, c] : count_ngrams(r, n)) {
                    auto& m = max_ref[gram];
                    m = std::max(m, c);
                }
            }
            for (const auto& [gram, c] : hyp_counts) {
                report.totals[n - 1] += c;
                const auto it = max_ref.find(gram);
                if (it != max_ref.end()) {
                    report.matches[n - 1] += std::min(c, it->second);
                }
            }
        }
    }

    double log_sum = 0.0;
    bool any_zero = false;
    for (std::size_t n = 0; n < max_n; ++n) {
        const double p = report.totals[n] == 0 ? 0.0
                                               : static_cast<double>(report.matches[n]) /
                                                     static_cast<double>(report.totals[n]);
        report.precisions.push_back(p);
        if (p > 0.0) {
            log_sum += std::log(p);
        } else {
            any_zero = true;
        }
    }
    if (report.ref_len > 0) {
        report.ratio = static_cast<double>(report.hyp_len) / static_cast<double>(report.ref_len);
    }
    if (report.hyp_len == 0) {
        report.brevity_penalty = 0.0;
    } else if (report.hyp_len < report.ref_len) {
        report.brevity_penalty =
            std::exp(1.0 - static_cast<double>(report.ref_len) / static_cast<double>(report.hyp_len));
    }
    if (!any_zero) {
        report.bleu = 100.0 * report.brevity_penalty * std::exp(log_sum / static_cast<double>(max_n));
    }
    return report;
}

std::string format_bleu(const BleuReport& report) {
    std::string out(256, '\0');
    std::string precisions;
    for (std::size_t n = 0; n < report.precisions.size(); ++n) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%s%.1f", n == 0 ? "" : "/", 100.0 * report.precisions[n]);
        precisions += buf;
    }
    const int len = std::snprintf(out.data(), out.size(), "BLEU = %.2f, %s (BP=%.3f, ratio=%.3f, hyp_len=%zu, ref_len=%zu)",
                                  report.bleu, precisions.c_str(), report.brevity_penalty, report.ratio,
                                  report.hyp_len, report.ref_len);
    out.resize(static_cast<std::size_t>(std::max(len, 0)));
    return out;
}

}  // namespace prnmt
