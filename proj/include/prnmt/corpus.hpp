#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace prnmt {

using TokenId = std::int32_t;
using TokenIds = std::vector<TokenId>;

inline constexpr TokenId kPad = 0;
inline constexpr TokenId kBos = 1;
inline constexpr TokenId kEos = 2;
inline constexpr TokenId kUnk = 3;
inline constexpr std::size_t kNumSpecials = 4;

inline constexpr std::size_t kDefaultMaxVocab = 30000;
inline constexpr std::size_t kDefaultMaxSentenceLength = 50;

// Whitespace tokenization; runs of spaces/tabs collapse.
std::vector<std::string> split_tokens(std::string_view line);
std::string join_tokens(std::span<const std::string> tokens);

struct RawSentencePair {
    std::vector<std::string> source;
    std::vector<std::string> target;
};

struct RawCorpus {
    std::vector<RawSentencePair> pairs;
    std::size_t dropped = 0;
};

// Reads two line-aligned files. Pairs with an empty side or a side longer
// than max_len are dropped and counted; unequal line counts throw.
RawCorpus load_parallel_corpus(const std::string& src_path, const std::string& tgt_path,
                               std::size_t max_len = kDefaultMaxSentenceLength);

std::vector<std::vector<std::string>> load_sentences(const std::string& path);

enum class Side { kSource, kTarget };

class Vocabulary {
public:
    // Specials only.
    Vocabulary();

    // Ids 0-3 are PAD, BOS, EOS, UNK. Remaining ids by descending frequency,
    // ties by first occurrence in the token stream.
    static Vocabulary build(std::span<const std::vector<std::string>> sentences,
                            std::size_t max_size = kDefaultMaxVocab);

    static Vocabulary load(const std::string& path);
    void save(const std::string& path) const;

    TokenId id(std::string_view token) const;
    bool contains(std::string_view token) const;
    const std::string& token(TokenId id) const;
    std::size_t size() const { return id_to_token_.size(); }

    TokenIds encode(std::span<const std::string> tokens) const;
    std::vector<std::string> decode(std::span<const TokenId> ids) const;

    bool operator==(const Vocabulary& other) const { return id_to_token_ == other.id_to_token_; }

private:
    void add(std::string token);

    std::unordered_map<std::string, TokenId> token_to_id_;
    std::vector<std::string> id_to_token_;
};

Vocabulary build_vocab(const RawCorpus& corpus, Side side, std::size_t max_size = kDefaultMaxVocab);

TokenIds encode_tokens(const Vocabulary& vocab, std::span<const std::string> tokens);

struct SentencePair {
    TokenIds source;
    TokenIds target;
};

std::vector<SentencePair> encode_corpus(const RawCorpus& corpus, const Vocabulary& src_vocab,
                                        const Vocabulary& tgt_vocab);

// Drops a trailing EOS if present.
TokenIds strip_eos(std::span<const TokenId> tokens);

}  // namespace prnmt
