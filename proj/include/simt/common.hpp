#pragma once

#include <cstdint>
#include <string>

namespace simt {

using TokenId = int32_t;

// Reserved vocabulary ids, fixed so golden files stay stable.
inline constexpr TokenId kPadId = 0;
inline constexpr TokenId kBosId = 1;
inline constexpr TokenId kEosId = 2;
inline constexpr TokenId kUnkId = 3;
inline constexpr int kNumReservedIds = 4;

inline constexpr const char* kPadToken = "<pad>";
inline constexpr const char* kBosToken = "<bos>";
inline constexpr const char* kEosToken = "<eos>";
inline constexpr const char* kUnkToken = "<unk>";

uint64_t fnv1a64(const void* data, size_t len);
uint64_t fnv1a64(const std::string& s);
std::string to_hex(uint64_t v);

// Mixes a base seed with a stream tag so sub-components draw from
// independent streams.
uint64_t mix_seed(uint64_t base, uint64_t tag);

}  // namespace simt
