#pragma once

#include <functional>
#include <string>
#include <vector>

#include "simt/data.hpp"
#include "simt/model.hpp"

namespace simt {

// The READ/WRITE record of one streamed sentence. actions holds every agent
// action in order, including the final WRITE that produced <eos>;
// reads_at_write and output cover content tokens only. reads_at_write
// counts raw source tokens (the end-of-source marker the model sees once
// the source is exhausted is bookkeeping, not a read).
struct TranslationTrace {
  std::string actions;              // 'R' / 'W' per action
  std::vector<int> reads_at_write;  // per content token, nondecreasing
  std::vector<TokenId> output;      // content tokens, <eos> excluded
  int source_len = 0;               // raw source tokens consumed
  bool truncated = false;           // max len reached without <eos>
};

// Yields the policy's g_i (model-level, 1-based step) on demand; decoding
// cannot know the hypothesis length in advance.
using PolicyGenerator = std::function<int(int step)>;
// Builds a generator once the model-level source length (raw + eos marker)
// is known.
using PolicyGeneratorFactory = std::function<PolicyGenerator(int model_source_len)>;

PolicyGeneratorFactory wait_k_factory(int k);
PolicyGeneratorFactory hmt_factory(int initial_read, int events_per_step);

// Executes the policy with greedy selection: before WRITE i exactly
// min(g_i, source length) raw READs have occurred; each step's distribution
// is computed with cross-attention restricted to the positions read so far
// (glancing never applies at inference). Stops at <eos> or after
// max_output_len content tokens (then flagged truncated). Ties in the
// argmax resolve to the lowest token id.
template <typename S>
TranslationTrace stream_decode(const ModelParams<S>& params, const std::vector<TokenId>& raw_src,
                               const PolicyGenerator& policy, int max_output_len);

// One trace per corpus pair, in corpus order. Per-sentence failures are
// rethrown with the sentence index prefixed.
template <typename S>
std::vector<TranslationTrace> batch_decode(const ModelParams<S>& params, const Corpus& corpus,
                                           const PolicyGeneratorFactory& factory,
                                           int max_output_len);

// One line per sentence: action string, then "J=<src_len>" and the
// reads_at_write integers, then the truncation flag.
// e.g. "RWRWRWW | J=3 1 2 3 | trunc=0"
std::string format_trace_line(const TranslationTrace& trace);
TranslationTrace parse_trace_line(const std::string& line);

// Space-joined surface forms of the trace outputs, one line per sentence.
std::string hypotheses_text(const std::vector<TranslationTrace>& traces, const Vocabulary& vocab);
std::string traces_text(const std::vector<TranslationTrace>& traces);

}  // namespace simt
