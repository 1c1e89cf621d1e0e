#include "prnmt/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <stdexcept>

namespace prnmt {

namespace {

constexpr std::string_view kSpecialTokens[kNumSpecials] = {"<pad>", "<s>", "</s>", "<unk>"};

std::ifstream open_input(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open " + path);
    }
    return in;
}

}  // namespace

std::vector<std::string> split_tokens(std::string_view line) {
    std::vector<std::string> tokens;
    std::size_t pos = 0;
    while (pos < line.size()) {
        while (pos < line.size() && (line[pos] == ' ' || line[pos] == '\t' || line[pos] == '\r')) {
            ++pos;
        }
        std::size_t end = pos;
        while (end < line.size() && line[end] != ' ' && line[end] != '\t' && line[end] != '\r') {
            ++end;
        }
        if (end > pos) {
            tokens.emplace_back(line.substr(pos, end - pos));
        }
        pos = end;
    }
    return tokens;
}

std::string join_tokens(std::span<const std::string> tokens) {
    std::string out;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (i > 0) {
            out += ' ';
        }
        out += tokens[i];
    }
    return out;
}

std::vector<std::vector<std::string>> load_sentences(const std::string& path) {
    auto in = open_input(path);
    std::vector<std::vector<std::string>> sentences;
    std::string line;
    while (std::getline(in, line)) {
        sentences.push_back(split_tokens(line));
    }
    if (in.bad()) {
        throw std::runtime_error("read error on " + path);
    }
    return sentences;
}

RawCorpus load_parallel_corpus(const std::string& src_path, const std::string& tgt_path,
                               std::size_t max_len) {
    auto src = load_sentences(src_path);
    auto tgt = load_sentences(tgt_path);
    if (src.size() != tgt.size()) {
        throw std::runtime_error("line count mismatch: " + src_path + " has " +
                                 std::to_string(src.size()) + " lines, " + tgt_path + " has " +
                                 std::to_string(tgt.size()));
    }
    RawCorpus corpus;
    for (std::size_t i = 0; i < src.size(); ++i) {
        const bool usable = !src[i].empty() && !tgt[i].empty() && src[i].size() <= max_len &&
                            tgt[i].size() <= max_len;
        if (!usable) {
            ++corpus.dropped;
            continue;
        }
        corpus.pairs.push_back({std::move(src[i]), std::move(tgt[i])});
    }
    if (corpus.dropped > 0) {
        std::clog << "corpus: dropped " << corpus.dropped << " of " << src.size()
                  << " pairs (empty side or longer than " << max_len << " tokens)\n";
    }
    return corpus;
}

Vocabulary::Vocabulary() {
    for (auto special : kSpecialTokens) {
        add(std::string(special));
    }
}

void Vocabulary::add(std::string token) {
    const auto id = static_cast<TokenId>(id_to_token_.size());
    token_to_id_.emplace(token, id);
    id_to_token_.push_back(std::move(token));
}

Vocabulary Vocabulary::build(std::span<const std::vector<std::string>> sentences,
                             std::size_t max_size) {
    if (max_size < kNumSpecials + 1) {
        throw std::invalid_argument("vocabulary max_size must be at least 5, got " +
                                    std::to_string(max_size));
    }
    struct Entry {
        std::size_t count = 0;
        std::size_t first_seen = 0;
    };
    std::unordered_map<std::string, Entry> stats;
    std::vector<std::string> order;
    Vocabulary vocab;
    for (const auto& sentence : sentences) {
        for (const auto& token : sentence) {
            if (vocab.contains(token)) {
                continue;  // literal special tokens stay special
            }
            auto [it, inserted] = stats.try_emplace(token, Entry{0, order.size()});
            if (inserted) {
                order.push_back(token);
            }
            ++it->second.count;
        }
    }
    std::stable_sort(order.begin(), order.end(), [&](const std::string& a, const std::string& b) {
        return stats.at(a).count > stats.at(b).count;
    });
    const std::size_t room = max_size - kNumSpecials;
    for (std::size_t i = 0; i < order.size() && i < room; ++i) {
        vocab.add(order[i]);
    }
    return vocab;
}

Vocabulary Vocabulary::load(const std::string& path) {
    auto in = open_input(path);
    Vocabulary vocab;
    vocab.token_to_id_.clear();
    vocab.id_to_token_.clear();
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) {
            continue;
        }
        const auto tab = line.find('\t');
        if (tab == std::string::npos) {
            throw std::runtime_error(path + ":" + std::to_string(line_no) + ": expected id<TAB>token");
        }
        const long id = std::stol(line.substr(0, tab));
        if (id != static_cast<long>(vocab.size())) {
            throw std::runtime_error(path + ":" + std::to_string(line_no) + ": ids must be dense and ordered");
        }
        vocab.add(line.substr(tab + 1));
    }
    if (vocab.size() < kNumSpecials) {
        throw std::runtime_error(path + ": missing special tokens");
    }
    for (std::size_t i = 0; i < kNumSpecials; ++i) {
        if (vocab.id_to_token_[i] != kSpecialTokens[i]) {
            throw std::runtime_error(path + ": special token mismatch at id " + std::to_string(i));
        }
    }
    return vocab;
}

void Vocabulary::save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("cannot write " + path);
    }
    for (std::size_t i = 0; i < id_to_token_.size(); ++i) {
        out << i << '\t' << id_to_token_[i] << '\n';
    }
}

TokenId Vocabulary::id(std::string_view token) const {
    auto it = token_to_id_.find(std::string(token));
    return it == token_to_id_.end() ? kUnk : it->second;
}

bool Vocabulary::contains(std::string_view token) const {
    return token_to_id_.contains(std::string(token));
}

const std::string& Vocabulary::token(TokenId id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= id_to_token_.size()) {
        throw std::out_of_range("token id " + std::to_string(id) + " outside vocabulary");
    }
    return id_to_token_[static_cast<std::size_t>(id)];
}

TokenIds Vocabulary::encode(std::span<const std::string> tokens) const {
    TokenIds ids;
    ids.reserve(tokens.size());
    for (const auto& t : tokens) {
        ids.push_back(id(t));
    }
    return ids;
}

std::vector<std::string> Vocabulary::decode(std::span<const TokenId> ids) const {
    std::vector<std::string> tokens;
    tokens.reserve(ids.size());
    for (auto i : ids) {
        tokens.push_back(token(i));
    }
    return tokens;
}

Vocabulary build_vocab(const RawCorpus& corpus, Side side, std::size_t max_size) {
    if (corpus.pairs.empty()) {
        throw std::invalid_argument("cannot build a vocabulary from an empty corpus");
    }
    std::vector<std::vector<std::string>> sentences;
    sentences.reserve(corpus.pairs.size());
    for (const auto& p : corpus.pairs) {
        sentences.push_back(side == Side::kSource ? p.source : p.target);
    }
    return Vocabulary::build(sentences, max_size);
}

TokenIds encode_tokens(const Vocabulary& vocab, std::span<const std::string> tokens) {
    return vocab.encode(tokens);
}

std::vector<SentencePair> encode_corpus(const RawCorpus& corpus, const Vocabulary& src_vocab,
                                        const Vocabulary& tgt_vocab) {
    std::vector<SentencePair> out;
    out.reserve(corpus.pairs.size());
    for (const auto& p : corpus.pairs) {
        out.push_back({src_vocab.encode(p.source), tgt_vocab.encode(p.target)});
    }
    return out;
}

TokenIds strip_eos(std::span<const TokenId> tokens) {
    if (!tokens.empty() && tokens.back() == kEos) {
        tokens = tokens.first(tokens.size() - 1);
    }
    return TokenIds(tokens.begin(), tokens.end());
}

}  // namespace prnmt
