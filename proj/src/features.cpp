#include "prnmt/features.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace prnmt {

namespace {

const std::vector<std::size_t> kNoEntries;

std::vector<std::string> split_tabs(const std::string& line) {
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
        const auto tab = line.find('\t', start);
        fields.push_back(line.substr(start, tab == std::string::npos ? std::string::npos : tab - start));
        if (tab == std::string::npos) {
            break;
        }
        start = tab + 1;
    }
    if (!fields.empty() && !fields.back().empty() && fields.back().back() == '\r') {
        fields.back().pop_back();
    }
    return fields;
}

[[noreturn]] void malformed(const std::string& path, std::size_t line_no, const std::string& what) {
    throw std::runtime_error(path + ":" + std::to_string(line_no) + ": " + what);
}

double parse_double(const std::string& s, const std::string& path, std::size_t line_no) {
    double value = 0.0;
    const auto* end = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(s.data(), end, value);
    if (ec != std::errc() || ptr != end || !std::isfinite(value)) {
        malformed(path, line_no, "bad number '" + s + "'");
    }
    return value;
}

std::size_t parse_count(const std::string& s, const std::string& path, std::size_t line_no) {
    std::size_t value = 0;
    const auto* end = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(s.data(), end, value);
    if (ec != std::errc() || ptr != end) {
        malformed(path, line_no, "bad count '" + s + "'");
    }
    return value;
}

bool in_vocab(const Vocabulary& vocab, const std::string& token) {
    return vocab.contains(token) && vocab.id(token) >= static_cast<TokenId>(kNumSpecials);
}

// Encodes a phrase; empty result when any token is out of vocabulary.
TokenIds encode_known(const Vocabulary& vocab, const std::vector<std::string>& tokens) {
    TokenIds ids;
    for (const auto& t : tokens) {
        if (!in_vocab(vocab, t)) {
            return {};
        }
        ids.push_back(vocab.id(t));
    }
    return ids;
}

std::string format_prob(double p) {
    std::ostringstream out;
    out << std::setprecision(17) << p;
    return out.str();
}

std::string phrase_text(const Vocabulary& vocab, std::span<const TokenId> ids) {
    const auto tokens = vocab.decode(ids);
    return join_tokens(tokens);
}

// Interns n-grams to dense ids.
class NgramTable {
public:
    std::uint32_t intern(std::span<const TokenId> ngram) {
        TokenIds key(ngram.begin(), ngram.end());
        auto [it, inserted] = ids_.try_emplace(key, static_cast<std::uint32_t>(ngrams_.size()));
        if (inserted) {
            ngrams_.push_back(std::move(key));
            counts_.push_back(0);
        }
        return it->second;
    }
    const TokenIds& ngram(std::uint32_t id) const { return ngrams_[id]; }
    std::size_t& count(std::uint32_t id) { return counts_[id]; }

private:
    std::map<TokenIds, std::uint32_t> ids_;
    std::vector<TokenIds> ngrams_;
    std::vector<std::size_t> counts_;
};

// Distinct n-grams (n <= max_n) of a sentence that contain no UNK.
std::vector<std::uint32_t> sentence_ngrams(const TokenIds& sentence, std::size_t max_n, NgramTable& table) {
    std::set<std::uint32_t> ids;
    for (std::size_t start = 0; start < sentence.size(); ++start) {
        for (std::size_t n = 1; n <= max_n && start + n <= sentence.size(); ++n) {
            if (sentence[start + n - 1] == kUnk) {
                break;
            }
            ids.insert(table.intern(std::span<const TokenId>(sentence).subspan(start, n)));
        }
    }
    return {ids.begin(), ids.end()};
}

struct Cooccurrence {
    NgramTable source;
    NgramTable target;
    std::map<std::pair<std::uint32_t, std::uint32_t>, std::size_t> joint;
};

Cooccurrence count_cooccurrences(const std::vector<SentencePair>& pairs, std::size_t max_n) {
    Cooccurrence co;
    for (const auto& pair : pairs) {
        const auto src = sentence_ngrams(pair.source, max_n, co.source);
        const auto tgt = sentence_ngrams(pair.target, max_n, co.target);
        for (auto s : src) {
            ++co.source.count(s);
        }
        for (auto t : tgt) {
            ++co.target.count(t);
        }
        for (auto s : src) {
            for (auto t : tgt) {
                ++co.joint[{s, t}];
            }
        }
    }
    return co;
}

}  // namespace

double SparseFeatureVector::get(FeatureId id) const {
    auto it = values_.find(id);
    return it == values_.end() ? 0.0 : it->second;
}

double SparseFeatureVector::dot(const FeatureWeights& weights) const {
    double s = 0.0;
    for (const auto& [id, value] : values_) {
        s += weights.get(id) * value;
    }
    return s;
}

double FeatureWeights::get(FeatureId id) const {
    auto it = values_.find(id);
    return it == values_.end() ? 0.0 : it->second;
}

void FeatureWeights::set(FeatureId id, double value) { values_[id] = value; }

double FeatureWeights::norm() const {
    double s = 0.0;
    for (const auto& [id, w] : values_) {
        s += w * w;
    }
    return std::sqrt(s);
}

bool FeatureWeights::all_finite() const {
    return std::all_of(values_.begin(), values_.end(), [](const auto& kv) { return std::isfinite(kv.second); });
}

KnowledgeResources::KnowledgeResources(Dictionary dictionary, PhraseTable phrases)
    : dictionary_(std::move(dictionary)), phrases_(std::move(phrases)) {
    for (std::size_t i = 0; i < dictionary_.entries.size(); ++i) {
        dict_index_[dictionary_.entries[i].source].push_back(i);
    }
    for (std::size_t i = 0; i < phrases_.entries.size(); ++i) {
        const auto& e = phrases_.entries[i];
        if (e.source.empty() || e.target.empty()) {
            throw std::invalid_argument("phrase table entry with an empty side");
        }
        phrase_index_[e.source.front()].push_back(i);
    }
}

const std::vector<std::size_t>& KnowledgeResources::dictionary_entries_for(TokenId source) const {
    auto it = dict_index_.find(source);
    return it == dict_index_.end() ? kNoEntries : it->second;
}

const std::vector<std::size_t>& KnowledgeResources::phrase_entries_for(TokenId first_source) const {
    auto it = phrase_index_.find(first_source);
    return it == phrase_index_.end() ? kNoEntries : it->second;
}

void FeatureConfig::validate() const {
    if (!(beta > 0.0) || !std::isfinite(beta)) {
        throw std::invalid_argument("beta must be positive");
    }
    if (!(cp_epsilon > 0.0 && cp_epsilon < 1.0)) {
        throw std::invalid_argument("cp_epsilon must lie in (0, 1)");
    }
}

Dictionary load_dictionary(const std::string& path, const Vocabulary& src_vocab, const Vocabulary& tgt_vocab,
                           const ResourceThresholds& thresholds) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open " + path);
    }
    Dictionary dict;
    std::set<std::pair<TokenId, TokenId>> seen;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") {
            continue;
        }
        const auto fields = split_tabs(line);
        if (fields.size() != 4) {
            malformed(path, line_no, "expected 4 tab-separated fields, got " + std::to_string(fields.size()));
        }
        if (split_tokens(fields[0]).size() != 1 || split_tokens(fields[1]).size() != 1) {
            malformed(path, line_no, "dictionary entries are single tokens");
        }
        const double p_st = parse_double(fields[2], path, line_no);
        const double p_ts = parse_double(fields[3], path, line_no);
        if (!in_vocab(src_vocab, fields[0]) || !in_vocab(tgt_vocab, fields[1])) {
            continue;
        }
        if (!(p_st > thresholds.dict_min_prob && p_ts > thresholds.dict_min_prob)) {
            continue;
        }
        const TokenId s = src_vocab.id(fields[0]);
        const TokenId t = tgt_vocab.id(fields[1]);
        if (seen.insert({s, t}).second) {
            dict.entries.push_back({s, t, p_st, p_ts});
        }
    }
    return dict;
}

void save_dictionary(const std::string& path, const Dictionary& dictionary, const Vocabulary& src_vocab,
                     const Vocabulary& tgt_vocab) {
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("cannot write " + path);
    }
    for (const auto& e : dictionary.entries) {
        out << src_vocab.token(e.source) << '\t' << tgt_vocab.token(e.target) << '\t'
            << format_prob(e.p_src_given_tgt) << '\t' << format_prob(e.p_tgt_given_src) << '\n';
    }
}

PhraseTable load_phrase_table(const std::string& path, const Vocabulary& src_vocab, const Vocabulary& tgt_vocab,
                              const ResourceThresholds& thresholds) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open " + path);
    }
    PhraseTable table;
    std::set<std::pair<TokenIds, TokenIds>> seen;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") {
            continue;
        }
        const auto fields = split_tabs(line);
        if (fields.size() != 5) {
            malformed(path, line_no, "expected 5 tab-separated fields, got " + std::to_string(fields.size()));
        }
        const auto src_tokens = split_tokens(fields[0]);
        const auto tgt_tokens = split_tokens(fields[1]);
        if (src_tokens.empty() || tgt_tokens.empty()) {
            malformed(path, line_no, "empty phrase");
        }
        const double p_st = parse_double(fields[2], path, line_no);
        const double p_ts = parse_double(fields[3], path, line_no);
        const std::size_t count = parse_count(fields[4], path, line_no);
        TokenIds src = encode_known(src_vocab, src_tokens);
        TokenIds tgt = encode_known(tgt_vocab, tgt_tokens);
        if (src.empty() || tgt.empty()) {
            continue;
        }
        if (count < thresholds.phrase_min_count ||
            !(p_st > thresholds.phrase_min_prob && p_ts > thresholds.phrase_min_prob)) {
            continue;
        }
        if (seen.insert({src, tgt}).second) {
            table.entries.push_back({std::move(src), std::move(tgt), p_st, p_ts, count});
        }
    }
    return table;
}

void save_phrase_table(const std::string& path, const PhraseTable& table, const Vocabulary& src_vocab,
                       const Vocabulary& tgt_vocab) {
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("cannot write " + path);
    }
    for (const auto& e : table.entries) {
        out << phrase_text(src_vocab, e.source) << '\t' << phrase_text(tgt_vocab, e.target) << '\t'
            << format_prob(e.p_src_given_tgt) << '\t' << format_prob(e.p_tgt_given_src) << '\t' << e.count << '\n';
    }
}

KnowledgeResources extract_resources(const RawCorpus& corpus, const Vocabulary& src_vocab,
                                     const Vocabulary& tgt_vocab, const ResourceThresholds& thresholds) {
    if (corpus.pairs.empty()) {
        throw std::invalid_argument("cannot extract resources from an empty corpus");
    }
    const auto pairs = encode_corpus(corpus, src_vocab, tgt_vocab);
    Cooccurrence co = count_cooccurrences(pairs, std::max<std::size_t>(1, thresholds.max_phrase_len));

    Dictionary dict;
    PhraseTable phrases;
    for (const auto& [key, joint] : co.joint) {
        const TokenIds& src = co.source.ngram(key.first);
        const TokenIds& tgt = co.target.ngram(key.second);
        const double p_tgt_given_src = static_cast<double>(joint) / static_cast<double>(co.source.count(key.first));
        const double p_src_given_tgt = static_cast<double>(joint) / static_cast<double>(co.target.count(key.second));
        if (src.size() == 1 && tgt.size() == 1 && p_src_given_tgt > thresholds.dict_min_prob &&
            p_tgt_given_src > thresholds.dict_min_prob) {
            dict.entries.push_back({src[0], tgt[0], p_src_given_tgt, p_tgt_given_src});
        }
        if (joint >= thresholds.phrase_min_count && p_src_given_tgt > thresholds.phrase_min_prob &&
            p_tgt_given_src > thresholds.phrase_min_prob) {
            phrases.entries.push_back({src, tgt, p_src_given_tgt, p_tgt_given_src, joint});
        }
    }
    auto by_tokens = [](const auto& a, const auto& b) {
        return std::tie(a.source, a.target) < std::tie(b.source, b.target);
    };
    std::sort(dict.entries.begin(), dict.entries.end(), by_tokens);
    std::sort(phrases.entries.begin(), phrases.entries.end(), by_tokens);
    return KnowledgeResources(std::move(dict), std::move(phrases));
}

double length_ratio(std::size_t source_len, std::size_t target_len, double beta) {
    const double expected = beta * static_cast<double>(source_len);
    const double actual = static_cast<double>(target_len);
    return expected < actual ? expected / actual : actual / expected;
}

double coverage_penalty(const AttentionMatrix& attention, std::size_t rows, double epsilon) {
    double cp = 0.0;
    for (std::size_t i = 0; i < attention.cols(); ++i) {
        const double mass = std::min(attention.column_sum(i, rows), 1.0);
        cp += std::log(std::max(mass, epsilon));
    }
    return cp;
}

bool contains_subsequence(std::span<const TokenId> haystack, std::span<const TokenId> needle) {
    if (needle.empty()) {
        return true;
    }
    return std::search(haystack.begin(), haystack.end(), needle.begin(), needle.end()) != haystack.end();
}

SparseFeatureVector compute_features(std::span<const TokenId> source, std::span<const TokenId> target,
                                     const AttentionMatrix& attention, const KnowledgeResources& resources,
                                     const FeatureConfig& config) {
    if (attention.cols() != source.size() ||
        (attention.rows() != target.size() && attention.rows() != target.size() + 1)) {
        throw std::invalid_argument("attention is " + std::to_string(attention.rows()) + "x" +
                                    std::to_string(attention.cols()) + " for a " + std::to_string(target.size()) +
                                    "-word target and " + std::to_string(source.size()) + "-word source");
    }
    SparseFeatureVector phi;
    if (config.use_coverage) {
        phi.set(FeatureId::coverage(), coverage_penalty(attention, target.size(), config.cp_epsilon));
    }
    if (config.use_length_ratio) {
        phi.set(FeatureId::length_ratio(), length_ratio(source.size(), target.size(), config.beta));
    }
    if (config.use_dictionary && !resources.dictionary().entries.empty()) {
        const std::unordered_set<TokenId> target_tokens(target.begin(), target.end());
        const std::set<TokenId> source_tokens(source.begin(), source.end());
        for (auto s : source_tokens) {
            for (auto idx : resources.dictionary_entries_for(s)) {
                if (target_tokens.contains(resources.dictionary().entries[idx].target)) {
                    phi.set(FeatureId::dictionary(idx), 1.0);
                }
            }
        }
    }
    if (config.use_phrases && !resources.phrases().entries.empty()) {
        const std::set<TokenId> firsts(source.begin(), source.end());
        for (auto s : firsts) {
            for (auto idx : resources.phrase_entries_for(s)) {
                const auto& e = resources.phrases().entries[idx];
                if (contains_subsequence(source, e.source) && contains_subsequence(target, e.target)) {
                    phi.set(FeatureId::phrase(idx), 1.0);
                }
            }
        }
    }
    return phi;
}

std::string feature_name(FeatureId id, const KnowledgeResources& resources, const Vocabulary& src_vocab,
                         const Vocabulary& tgt_vocab) {
    switch (id.kind) {
        case FeatureKind::kCoverage:
            return "CP";
        case FeatureKind::kLengthRatio:
            return "LR";
        case FeatureKind::kDictionary: {
            const auto& e = resources.dictionary().entries.at(id.entry);
            return "BD:" + src_vocab.token(e.source) + " ||| " + tgt_vocab.token(e.target);
        }
        case FeatureKind::kPhrase: {
            const auto& e = resources.phrases().entries.at(id.entry);
            return "PT:" + phrase_text(src_vocab, e.source) + " ||| " + phrase_text(tgt_vocab, e.target);
        }
    }
    throw std::logic_error("unknown feature kind");
}

void save_weights(const std::string& path, const FeatureWeights& weights, const KnowledgeResources& resources,
                  const Vocabulary& src_vocab, const Vocabulary& tgt_vocab) {
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("cannot write " + path);
    }
    out << std::setprecision(17);
    for (const auto& [id, w] : weights) {
        out << feature_name(id, resources, src_vocab, tgt_vocab) << '\t' << w << '\n';
    }
}

FeatureWeights load_weights(const std::string& path, const KnowledgeResources& resources,
                            const Vocabulary& src_vocab, const Vocabulary& tgt_vocab) {
    std::map<std::string, FeatureId> by_name;
    by_name.emplace("CP", FeatureId::coverage());
    by_name.emplace("LR", FeatureId::length_ratio());
    for (std::size_t i = 0; i < resources.dictionary().entries.size(); ++i) {
        by_name.emplace(feature_name(FeatureId::dictionary(i), resources, src_vocab, tgt_vocab),
                        FeatureId::dictionary(i));
    }
    for (std::size_t i = 0; i < resources.phrases().entries.size(); ++i) {
        by_name.emplace(feature_name(FeatureId::phrase(i), resources, src_vocab, tgt_vocab), FeatureId::phrase(i));
    }
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open " + path);
    }
    FeatureWeights weights;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) {
            continue;
        }
        const auto fields = split_tabs(line);
        if (fields.size() != 2) {
            malformed(path, line_no, "expected feature_id<TAB>weight");
        }
        auto it = by_name.find(fields[0]);
        if (it == by_name.end()) {
            malformed(path, line_no, "feature '" + fields[0] + "' not in the loaded resources");
        }
        weights.set(it->second, parse_double(fields[1], path, line_no));
    }
    return weights;
}

}  // namespace prnmt
