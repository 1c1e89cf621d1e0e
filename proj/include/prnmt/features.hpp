#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "prnmt/corpus.hpp"
#include "prnmt/model.hpp"

namespace prnmt {

enum class FeatureKind : std::uint8_t { kCoverage, kLengthRatio, kDictionary, kPhrase };

// CP and LR are global; BD and PT carry the index of their resource entry.
struct FeatureId {
    FeatureKind kind = FeatureKind::kCoverage;
    std::uint32_t entry = 0;

    static FeatureId coverage() { return {FeatureKind::kCoverage, 0}; }
    static FeatureId length_ratio() { return {FeatureKind::kLengthRatio, 0}; }
    static FeatureId dictionary(std::size_t i) { return {FeatureKind::kDictionary, static_cast<std::uint32_t>(i)}; }
    static FeatureId phrase(std::size_t i) { return {FeatureKind::kPhrase, static_cast<std::uint32_t>(i)}; }

    auto operator<=>(const FeatureId&) const = default;
};

class FeatureWeights;

class SparseFeatureVector {
public:
    using Map = std::map<FeatureId, double>;

    double get(FeatureId id) const;
    void set(FeatureId id, double value) { values_[id] = value; }
    bool contains(FeatureId id) const { return values_.contains(id); }
    std::size_t size() const { return values_.size(); }

    Map::const_iterator begin() const { return values_.begin(); }
    Map::const_iterator end() const { return values_.end(); }

    double dot(const FeatureWeights& weights) const;
    bool operator==(const SparseFeatureVector&) const = default;

private:
    Map values_;
};

// Log-linear weights; missing keys read as zero.
class FeatureWeights {
public:
    double get(FeatureId id) const;
    void set(FeatureId id, double value);
    void add(FeatureId id, double delta) { set(id, get(id) + delta); }
    std::size_t size() const { return values_.size(); }
    double norm() const;
    bool all_finite() const;

    std::map<FeatureId, double>::const_iterator begin() const { return values_.begin(); }
    std::map<FeatureId, double>::const_iterator end() const { return values_.end(); }

    bool operator==(const FeatureWeights&) const = default;

private:
    std::map<FeatureId, double> values_;
};

struct DictionaryEntry {
    TokenId source = kUnk;
    TokenId target = kUnk;
    double p_src_given_tgt = 0.0;
    double p_tgt_given_src = 0.0;
};

struct Dictionary {
    std::vector<DictionaryEntry> entries;
};

struct PhraseEntry {
    TokenIds source;
    TokenIds target;
    double p_src_given_tgt = 0.0;
    double p_tgt_given_src = 0.0;
    std::size_t count = 0;
};

struct PhraseTable {
    std::vector<PhraseEntry> entries;
};

// Retention thresholds. Probabilities must be strictly greater than the
// minimum in both directions; phrase counts must reach phrase_min_count.
struct ResourceThresholds {
    double dict_min_prob = 0.1;
    double phrase_min_prob = 0.5;
    std::size_t phrase_min_count = 10;
    std::size_t max_phrase_len = 4;
};

// Dictionary plus phrase table with lookup indexes keyed by source token.
class KnowledgeResources {
public:
    KnowledgeResources() = default;
    KnowledgeResources(Dictionary dictionary, PhraseTable phrases);

    const Dictionary& dictionary() const { return dictionary_; }
    const PhraseTable& phrases() const { return phrases_; }
    bool empty() const { return dictionary_.entries.empty() && phrases_.entries.empty(); }
    // 2 + |D| + |P|
    std::size_t num_features() const { return 2 + dictionary_.entries.size() + phrases_.entries.size(); }

    const std::vector<std::size_t>& dictionary_entries_for(TokenId source) const;
    const std::vector<std::size_t>& phrase_entries_for(TokenId first_source) const;

private:
    Dictionary dictionary_;
    PhraseTable phrases_;
    std::unordered_map<TokenId, std::vector<std::size_t>> dict_index_;
    std::unordered_map<TokenId, std::vector<std::size_t>> phrase_index_;
};

struct FeatureConfig {
    double beta = 1.236;
    double cp_epsilon = 1e-6;
    bool use_dictionary = true;
    bool use_phrases = true;
    bool use_coverage = true;
    bool use_length_ratio = true;

    void validate() const;
};

// TSV: src<TAB>tgt<TAB>p_src_given_tgt<TAB>p_tgt_given_src
Dictionary load_dictionary(const std::string& path, const Vocabulary& src_vocab, const Vocabulary& tgt_vocab,
                           const ResourceThresholds& thresholds = {});
void save_dictionary(const std::string& path, const Dictionary& dictionary, const Vocabulary& src_vocab,
                     const Vocabulary& tgt_vocab);

// TSV: src phrase<TAB>tgt phrase<TAB>p_src_given_tgt<TAB>p_tgt_given_src<TAB>count
PhraseTable load_phrase_table(const std::string& path, const Vocabulary& src_vocab, const Vocabulary& tgt_vocab,
                              const ResourceThresholds& thresholds = {});
void save_phrase_table(const std::string& path, const PhraseTable& table, const Vocabulary& src_vocab,
                       const Vocabulary& tgt_vocab);

// Sentence-level co-occurrence estimates: p(t|s) = c(s,t) / c(s) where c
// counts sentence pairs containing the item(s). Phrases are contiguous
// n-grams up to max_phrase_len on either side. Thresholds are applied.
KnowledgeResources extract_resources(const RawCorpus& corpus, const Vocabulary& src_vocab,
                                     const Vocabulary& tgt_vocab, const ResourceThresholds& thresholds = {});

double length_ratio(std::size_t source_len, std::size_t target_len, double beta);

// sum_i log(max(min(sum_{j < rows} a(j, i), 1), epsilon))
double coverage_penalty(const AttentionMatrix& attention, std::size_t rows, double epsilon);

bool contains_subsequence(std::span<const TokenId> haystack, std::span<const TokenId> needle);

// target excludes EOS. attention must have |source| columns and |target| or
// |target| + 1 rows (the extra row is the EOS step and is ignored).
SparseFeatureVector compute_features(std::span<const TokenId> source, std::span<const TokenId> target,
                                     const AttentionMatrix& attention, const KnowledgeResources& resources,
                                     const FeatureConfig& config);

std::string feature_name(FeatureId id, const KnowledgeResources& resources, const Vocabulary& src_vocab,
                         const Vocabulary& tgt_vocab);

// "feature_id<TAB>weight" lines.
void save_weights(const std::string& path, const FeatureWeights& weights, const KnowledgeResources& resources,
                  const Vocabulary& src_vocab, const Vocabulary& tgt_vocab);
FeatureWeights load_weights(const std::string& path, const KnowledgeResources& resources,
                            const Vocabulary& src_vocab, const Vocabulary& tgt_vocab);

}  // namespace prnmt
