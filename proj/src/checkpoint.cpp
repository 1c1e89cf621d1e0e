#include "prnmt/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>
#include <stdexcept>

#include <zlib.h>

namespace prnmt {

namespace {

constexpr char kMagic[8] = {'P', 'R', 'N', 'M', 'T', 'C', 'K', 'P'};

template <typename T>
void put_le(std::string& out, T value) {
    for (std::size_t i = 0; i < sizeof(T); ++i) {
        out.push_back(static_cast<char>((value >> (8 * i)) & 0xFF));
    }
}

std::uint32_t crc_of(const std::string& bytes, std::size_t len) {
    uLong crc = crc32(0L, Z_NULL, 0);
    crc = crc32(crc, reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(len));
    return static_cast<std::uint32_t>(crc);
}

class Reader {
public:
    explicit Reader(const std::string& bytes) : bytes_(bytes) {}

    template <typename T>
    T get_le() {
        need(sizeof(T));
        T value = 0;
        for (std::size_t i = 0; i < sizeof(T); ++i) {
            value |= static_cast<T>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
        }
        pos_ += sizeof(T);
        return value;
    }

    std::string get_bytes(std::size_t n) {
        need(n);
        std::string s = bytes_.substr(pos_, n);
        pos_ += n;
        return s;
    }

    std::size_t position() const { return pos_; }

private:
    void need(std::size_t n) const {
        if (pos_ + n > bytes_.size()) {
            throw std::runtime_error("checkpoint truncated");
        }
    }

    const std::string& bytes_;
    std::size_t pos_ = 0;
};

}  // namespace

std::string serialize_params(const ModelParams& params) {
    std::string out(kMagic, sizeof(kMagic));
    put_le<std::uint32_t>(out, kCheckpointVersion);
    const ModelConfig& c = params.config;
    for (std::uint64_t v : {c.src_vocab, c.tgt_vocab, c.embed_dim, c.hidden_dim, c.attention_dim, c.readout_dim}) {
        put_le<std::uint64_t>(out, v);
    }
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(kNumParamBlocks));
    for (std::size_t b = 0; b < kNumParamBlocks; ++b) {
        const auto name = param_name(static_cast<ParamId>(b));
        put_le<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
        out.append(name);
        const Eigen::MatrixXd& m = params.blocks[b];
        put_le<std::uint64_t>(out, static_cast<std::uint64_t>(m.rows()));
        put_le<std::uint64_t>(out, static_cast<std::uint64_t>(m.cols()));
        for (Eigen::Index k = 0; k < m.size(); ++k) {
            put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(m.data()[k]));
        }
    }
    put_le<std::uint32_t>(out, crc_of(out, out.size()));
    return out;
}

ModelParams deserialize_params(const std::string& bytes) {
    if (bytes.size() < sizeof(kMagic) + 8 || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
        throw std::runtime_error("not a checkpoint (bad magic)");
    }
    const std::size_t body = bytes.size() - 4;
    Reader trailer(bytes);
    trailer.get_bytes(body);
    if (trailer.get_le<std::uint32_t>() != crc_of(bytes, body)) {
        throw std::runtime_error("checkpoint checksum mismatch");
    }

    Reader in(bytes);
    in.get_bytes(sizeof(kMagic));
    const auto version = in.get_le<std::uint32_t>();
    if (version != kCheckpointVersion) {
        throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
    }
    ModelParams params;
    ModelConfig& c = params.config;
    c.src_vocab = in.get_le<std::uint64_t>();
    c.tgt_vocab = in.get_le<std::uint64_t>();
    c.embed_dim = in.get_le<std::uint64_t>();
    c.hidden_dim = in.get_le<std::uint64_t>();
    c.attention_dim = in.get_le<std::uint64_t>();
    c.readout_dim = in.get_le<std::uint64_t>();
    c.validate();

    const auto count = in.get_le<std::uint32_t>();
    if (count != kNumParamBlocks) {
        throw std::runtime_error("checkpoint has " + std::to_string(count) + " blocks, expected " +
                                 std::to_string(kNumParamBlocks));
    }
    const auto shapes = block_shapes(c);
    for (std::size_t b = 0; b < kNumParamBlocks; ++b) {
        const auto name_len = in.get_le<std::uint32_t>();
        const std::string name = in.get_bytes(name_len);
        if (name != param_name(static_cast<ParamId>(b))) {
            throw std::runtime_error("checkpoint block " + std::to_string(b) + " is '" + name + "', expected '" +
                                     std::string(param_name(static_cast<ParamId>(b))) + "'");
        }
        const auto rows = in.get_le<std::uint64_t>();
        const auto cols = in.get_le<std::uint64_t>();
        if (rows != shapes[b].first || cols != shapes[b].second) {
            throw std::runtime_error("checkpoint block '" + name + "' has shape " + std::to_string(rows) + "x" +
                                     std::to_string(cols) + ", configuration expects " +
                                     std::to_string(shapes[b].first) + "x" + std::to_string(shapes[b].second));
        }
        Eigen::MatrixXd& m = params.blocks[b];
        m.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
        for (Eigen::Index k = 0; k < m.size(); ++k) {
            m.data()[k] = std::bit_cast<double>(in.get_le<std::uint64_t>());
        }
    }
    if (in.position() != body) {
        throw std::runtime_error("checkpoint has trailing bytes");
    }
    return params;
}

void save_checkpoint(const std::string& path, const ModelParams& params) {
    const std::string bytes = serialize_params(params);
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw std::runtime_error("cannot write " + path);
    }
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
        throw std::runtime_error("write failed for " + path);
    }
}

ModelParams load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error("cannot open " + path);
    }
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return deserialize_params(bytes);
}

}  // namespace prnmt
