#pragma once

#include <string>

#include "json.hpp"
#include "simt/data.hpp"
#include "simt/model.hpp"

namespace simt {

// Flat binary checkpoint container. All integers little-endian, scalars raw
// IEEE-754 little-endian. Layout:
//
//   8 bytes   magic "SIMTCKPT"
//   u32       format version (currently 1)
//   u32       scalar width in bytes (4 = float32, 8 = float64)
//   u64       metadata byte count M
//   M bytes   UTF-8 JSON {"model": <config>, "src_vocab": [...], "tgt_vocab": [...]}
//   u32       tensor count
//   per tensor:
//     u16     name length N, then N name bytes (traversal-order dotted name)
//     u32 u32 rows, cols
//     rows*cols scalars
//
// Tensors appear in for_each_parameter order; that order is part of the
// format contract and is verified on load.
inline constexpr char kCheckpointMagic[8] = {'S', 'I', 'M', 'T', 'C', 'K', 'P', 'T'};
inline constexpr uint32_t kCheckpointVersion = 1;

struct CheckpointInfo {
  uint32_t version = 0;
  int scalar_width = 0;
  ModelConfig config;
  Vocabulary src_vocab;
  Vocabulary tgt_vocab;
  std::string config_hash;  // experiment fingerprint, empty when unset
  uint64_t seed = 0;
};

nlohmann::json model_config_to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const nlohmann::json& j);

template <typename S>
void save_checkpoint(const std::string& path, const ModelParams<S>& params,
                     const Vocabulary& src_vocab, const Vocabulary& tgt_vocab,
                     const std::string& config_hash = "", uint64_t seed = 0);

// Header and metadata only (no tensor payload).
CheckpointInfo read_checkpoint_info(const std::string& path);

// Full load; throws std::runtime_error on bad magic, version, scalar-width
// mismatch with S, or any shape/name disagreement with the stored config.
template <typename S>
CheckpointInfo load_checkpoint(const std::string& path, ModelParams<S>& params);

// Human-readable summary (the dump-params verb): one line per tensor with
// shape and L2 norm, plus a header block.
std::string describe_checkpoint(const std::string& path);

}  // namespace simt
