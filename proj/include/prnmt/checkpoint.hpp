#pragma once

#include <cstdint>
#include <string>

#include "prnmt/model.hpp"

namespace prnmt {

// Binary checkpoint layout, all integers and floats little-endian:
//   "PRNMTCKP" magic, u32 version
//   u64 src_vocab, tgt_vocab, embed_dim, hidden_dim, attention_dim, readout_dim
//   u32 block count, then per block: u32 name length, name bytes,
//     u64 rows, u64 cols, rows*cols f64 values in column-major order
//   u32 CRC-32 of every preceding byte
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::string& path, const ModelParams& params);
ModelParams load_checkpoint(const std::string& path);

// In-memory forms of the same container.
std::string serialize_params(const ModelParams& params);
ModelParams deserialize_params(const std::string& bytes);

}  // namespace prnmt
