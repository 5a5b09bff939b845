#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "simt/common.hpp"
#include "simt/decode.hpp"

namespace simt {

// Corpus-level BLEU-4: geometric mean of modified n-gram precisions times the
// brevity penalty, as a percentage. Smoothing is add-one on the n >= 2
// precisions only when that precision would otherwise be zero (including the
// no-n-gram-of-that-order case); a zero unigram precision or an empty
// hypothesis corpus scores 0. Tokens are compared as-is.
double corpus_bleu(const std::vector<std::vector<TokenId>>& hypotheses,
                   const std::vector<std::vector<TokenId>>& references, int max_n = 4);

// Average Lagging of one sentence. g_i is reads_at_write[i-1]; with
// gamma = target_len / source_len,
//   AL = (1/tau) * sum_{i=1..tau} (g_i - (i-1)/gamma),
// tau = first i whose g_i covers the whole source, or target_len when none
// does. Throws on an empty hypothesis or a trace inconsistent with the
// lengths.
double average_lagging(const TranslationTrace& trace, int source_len, int target_len);

// Corpus hallucination rate in [0, 1]. Hypothesis token i (0-based) of a
// sentence is hallucinated iff the source position aligned to reference step
// i had not been read when the token was written AND the token differs from
// the reference token; steps beyond the reference length are always
// hallucinated; unaligned steps (alignment 0) never are. The hypothesis is
// passed separately from the trace so an identical hypothesis can be scored
// under different read schedules. Sentences with no hypothesis tokens
// contribute nothing; an empty corpus scores 0.
double hallucination_rate(const std::vector<TranslationTrace>& traces,
                          const std::vector<std::vector<TokenId>>& hypotheses,
                          const std::vector<std::vector<int>>& alignments,
                          const std::vector<std::vector<TokenId>>& references);

// One evaluation condition (one policy on one corpus with one model).
struct EvalReport {
  double bleu = 0.0;
  double al = 0.0;  // mean sentence AL
  double hr = 0.0;
  bool has_hr = true;  // false when the corpus carries no alignments
  int sentences = 0;
  long hyp_tokens = 0;
  long ref_tokens = 0;
  std::string config_hash;
  uint64_t seed = 0;

  static std::string csv_header();  // "bleu,al,hr,sentences,tokens,config_hash,seed"
  std::string csv_row() const;      // matching value row; tokens = hyp_tokens
  std::string text_block() const;   // human-readable summary
};

// Scores decode traces against a reference corpus: BLEU over outputs,
// mean AL over sentences with nonempty hypotheses, HR when every pair
// carries an alignment (skipped as 0 with has_alignments false otherwise).
EvalReport evaluate_traces(const std::vector<TranslationTrace>& traces, const Corpus& corpus,
                           const std::string& config_hash, uint64_t seed);

}  // namespace simt
