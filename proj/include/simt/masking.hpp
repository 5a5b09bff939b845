#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "simt/curriculum.hpp"

namespace simt {

// Boolean attention masks for one sentence, padded to fixed shapes.
// true = attention permitted. Encoder self-attention is causal
// (unidirectional), which is what makes prefix states independent of future
// tokens and licenses single-pass training; see build_masks.
struct MaskSet {
  int src_len = 0;   // real source length
  int tgt_len = 0;   // real target length
  int src_pad = 0;   // padded source length
  int tgt_pad = 0;   // padded target length

  std::vector<uint8_t> cross;     // tgt_pad x src_pad
  std::vector<uint8_t> enc_self;  // src_pad x src_pad
  std::vector<uint8_t> dec_self;  // tgt_pad x tgt_pad

  bool cross_at(int i, int j) const { return cross[static_cast<size_t>(i) * src_pad + j] != 0; }
  bool enc_at(int i, int j) const { return enc_self[static_cast<size_t>(i) * src_pad + j] != 0; }
  bool dec_at(int i, int j) const { return dec_self[static_cast<size_t>(i) * tgt_pad + j] != 0; }
};

// cross[i][j] = true iff source position j+1 is in the readable set of target
// step i+1 (policy prefix plus glanced extras). Rows and columns of padded
// positions are entirely false. Self-attention masks are lower-triangular on
// the real region.
MaskSet build_masks(const AdjustedPolicy& adjusted, int src_len, int tgt_len, int src_pad_to,
                    int tgt_pad_to);

// Masks of a batch, all padded to one shape.
struct MaskBatch {
  int src_pad = 0;
  int tgt_pad = 0;
  std::vector<MaskSet> sentences;

  size_t size() const { return sentences.size(); }
  const MaskSet& at(size_t b) const { return sentences[b]; }
};

// Rejects empty input and inconsistent pad shapes.
MaskBatch batch_masks(std::vector<MaskSet> masks);

// Debug form of the cross mask: one row of '1'/'0' per target step.
std::string mask_to_text(const MaskSet& m);

}  // namespace simt
