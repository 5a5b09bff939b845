#include "simt/masking.hpp"

#include <stdexcept>

namespace simt {

MaskSet build_masks(const AdjustedPolicy& adjusted, int src_len, int tgt_len, int src_pad_to,
                    int tgt_pad_to) {
  if (adjusted.source_len != src_len) {
    throw std::invalid_argument("build_masks: policy source length " +
                                std::to_string(adjusted.source_len) + " != src_len " +
                                std::to_string(src_len));
  }
  if (adjusted.target_len() != tgt_len) {
    throw std::invalid_argument("build_masks: policy target length " +
                                std::to_string(adjusted.target_len()) + " != tgt_len " +
                                std::to_string(tgt_len));
  }
  if (src_pad_to < src_len || tgt_pad_to < tgt_len) {
    throw std::invalid_argument("build_masks: pad shape smaller than real lengths");
  }

  MaskSet m;
  m.src_len = src_len;
  m.tgt_len = tgt_len;
  m.src_pad = src_pad_to;
  m.tgt_pad = tgt_pad_to;
  m.cross.assign(static_cast<size_t>(tgt_pad_to) * src_pad_to, 0);
  m.enc_self.assign(static_cast<size_t>(src_pad_to) * src_pad_to, 0);
  m.dec_self.assign(static_cast<size_t>(tgt_pad_to) * tgt_pad_to, 0);

  for (int i = 0; i < tgt_len; ++i) {
    const int prefix = adjusted.base.g[i];
    for (int j = 0; j < prefix; ++j) m.cross[static_cast<size_t>(i) * src_pad_to + j] = 1;
    for (int pos : adjusted.extra_positions[i]) {
      if (pos < 1 || pos > src_len) {
        throw std::invalid_argument("build_masks: extra position " + std::to_string(pos) +
                                    " out of source range");
      }
      m.cross[static_cast<size_t>(i) * src_pad_to + (pos - 1)] = 1;
    }
  }
  for (int i = 0; i < src_len; ++i) {
    for (int j = 0; j <= i; ++j) m.enc_self[static_cast<size_t>(i) * src_pad_to + j] = 1;
  }
  for (int i = 0; i < tgt_len; ++i) {
    for (int j = 0; j <= i; ++j) m.dec_self[static_cast<size_t>(i) * tgt_pad_to + j] = 1;
  }
  return m;
}

MaskBatch batch_masks(std::vector<MaskSet> masks) {
  if (masks.empty()) throw std::invalid_argument("batch_masks: empty batch");
  MaskBatch b;
  b.src_pad = masks.front().src_pad;
  b.tgt_pad = masks.front().tgt_pad;
  for (const MaskSet& m : masks) {
    if (m.src_pad != b.src_pad || m.tgt_pad != b.tgt_pad) {
      throw std::invalid_argument("batch_masks: inconsistent pad shapes");
    }
  }
  b.sentences = std::move(masks);
  return b;
}

std::string mask_to_text(const MaskSet& m) {
  std::string out;
  out.reserve(static_cast<size_t>(m.tgt_len) * (m.src_pad + 1));
  for (int i = 0; i < m.tgt_len; ++i) {
    for (int j = 0; j < m.src_pad; ++j) out.push_back(m.cross_at(i, j) ? '1' : '0');
    out.push_back('\n');
  }
  return out;
}

}  // namespace simt
