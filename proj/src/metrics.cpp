#include "simt/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>
#include <stdexcept>

namespace simt {

namespace {

using Ngram = std::vector<TokenId>;

std::map<Ngram, int> ngram_counts(const std::vector<TokenId>& sent, int n) {
  std::map<Ngram, int> counts;
  if (static_cast<int>(sent.size()) < n) return counts;
  for (size_t i = 0; i + n <= sent.size(); ++i) {
    ++counts[Ngram(sent.begin() + i, sent.begin() + i + n)];
  }
  return counts;
}

}  // namespace

double corpus_bleu(const std::vector<std::vector<TokenId>>& hypotheses,
                   const std::vector<std::vector<TokenId>>& references, int max_n) {
  if (hypotheses.empty()) throw std::invalid_argument("corpus_bleu: empty corpus");
  if (hypotheses.size() != references.size()) {
    throw std::invalid_argument("corpus_bleu: hypothesis/reference count mismatch");
  }
  if (max_n < 1) throw std::invalid_argument("corpus_bleu: max_n must be >= 1");

  std::vector<long> matches(max_n, 0), totals(max_n, 0);
  long hyp_len = 0, ref_len = 0;
  for (size_t s = 0; s < hypotheses.size(); ++s) {
    hyp_len += static_cast<long>(hypotheses[s].size());
    ref_len += static_cast<long>(references[s].size());
    for (int n = 1; n <= max_n; ++n) {
      const std::map<Ngram, int> hyp = ngram_counts(hypotheses[s], n);
      const std::map<Ngram, int> ref = ngram_counts(references[s], n);
      for (const auto& [gram, count] : hyp) {
        totals[n - 1] += count;
        const auto it = ref.find(gram);
        if (it != ref.end()) matches[n - 1] += std::min(count, it->second);
      }
    }
  }

  if (totals[0] == 0 || matches[0] == 0) return 0.0;  // unigram zero is not smoothed

  double log_precision_sum = 0.0;
  for (int n = 1; n <= max_n; ++n) {
    double m = static_cast<double>(matches[n - 1]);
    double t = static_cast<double>(totals[n - 1]);
    if (n >= 2 && matches[n - 1] == 0) {  // add-one smoothing, higher orders only
      m += 1.0;
      t += 1.0;
    }
    log_precision_sum += std::log(m / t);
  }
  const double brevity =
      hyp_len >= ref_len ? 1.0 : std::exp(1.0 - static_cast<double>(ref_len) / hyp_len);
  return 100.0 * brevity * std::exp(log_precision_sum / max_n);
}

double average_lagging(const TranslationTrace& trace, int source_len, int target_len) {
  if (target_len < 1) throw std::invalid_argument("average_lagging: empty hypothesis");
  if (source_len < 1) throw std::invalid_argument("average_lagging: empty source");
  if (static_cast<int>(trace.reads_at_write.size()) != target_len) {
    throw std::invalid_argument("average_lagging: trace has " +
                                std::to_string(trace.reads_at_write.size()) +
                                " writes, expected " + std::to_string(target_len));
  }
  for (int g : trace.reads_at_write) {
    if (g < 1 || g > source_len) {
      throw std::invalid_argument("average_lagging: reads outside [1, source_len]");
    }
  }

  int tau = target_len;
  for (int i = 1; i <= target_len; ++i) {
    if (trace.reads_at_write[i - 1] >= source_len) {
      tau = i;
      break;
    }
  }
  const double gamma = static_cast<double>(target_len) / source_len;
  double sum = 0.0;
  for (int i = 1; i <= tau; ++i) {
    sum += trace.reads_at_write[i - 1] - (i - 1) / gamma;
  }
  return sum / tau;
}

double hallucination_rate(const std::vector<TranslationTrace>& traces,
                          const std::vector<std::vector<TokenId>>& hypotheses,
                          const std::vector<std::vector<int>>& alignments,
                          const std::vector<std::vector<TokenId>>& references) {
  if (traces.size() != hypotheses.size() || traces.size() != alignments.size() ||
      traces.size() != references.size()) {
    throw std::invalid_argument("hallucination_rate: input counts differ");
  }
  long total = 0, hallucinated = 0;
  for (size_t s = 0; s < traces.size(); ++s) {
    const std::vector<TokenId>& hyp = hypotheses[s];
    const std::vector<TokenId>& ref = references[s];
    const std::vector<int>& align = alignments[s];
    if (traces[s].reads_at_write.size() != hyp.size()) {
      throw std::invalid_argument("hallucination_rate: sentence " + std::to_string(s) +
                                  ": trace does not match the hypothesis length");
    }
    if (align.size() != ref.size()) {
      throw std::invalid_argument("hallucination_rate: sentence " + std::to_string(s) +
                                  ": missing alignment");
    }
    for (size_t i = 0; i < hyp.size(); ++i) {
      ++total;
      if (i >= ref.size()) {  // no reference token can license this step
        ++hallucinated;
        continue;
      }
      if (hyp[i] == ref[i]) continue;  // correct tokens are exempt
      if (align[i] > traces[s].reads_at_write[i]) ++hallucinated;
    }
  }
  return total == 0 ? 0.0 : static_cast<double>(hallucinated) / total;
}

std::string EvalReport::csv_header() { return "bleu,al,hr,sentences,tokens,config_hash,seed"; }

std::string EvalReport::csv_row() const {
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%.6f,%.6f,%.6f,%d,%ld,", bleu, al, hr, sentences, hyp_tokens);
  return std::string(buf) + config_hash + "," + std::to_string(seed);
}

std::string EvalReport::text_block() const {
  char num[64];
  std::ostringstream out;
  std::snprintf(num, sizeof(num), "%.6f", bleu);
  out << "bleu: " << num << "\n";
  std::snprintf(num, sizeof(num), "%.6f", al);
  out << "al: " << num << " tokens\n";
  if (has_hr) {
    std::snprintf(num, sizeof(num), "%.6f", hr);
    out << "hr: " << num << "\n";
  } else {
    out << "hr: n/a (corpus has no alignments)\n";
  }
  out << "sentences: " << sentences << "\n";
  out << "hypothesis tokens: " << hyp_tokens << "\n";
  out << "reference tokens: " << ref_tokens << "\n";
  out << "config: " << config_hash << "\n";
  out << "seed: " << seed << "\n";
  return out.str();
}

EvalReport evaluate_traces(const std::vector<TranslationTrace>& traces, const Corpus& corpus,
                           const std::string& config_hash, uint64_t seed) {
  if (traces.size() != corpus.pairs.size()) {
    throw std::invalid_argument("evaluate_traces: trace count does not match the corpus");
  }
  if (traces.empty()) throw std::invalid_argument("evaluate_traces: empty corpus");

  EvalReport report;
  report.sentences = static_cast<int>(traces.size());
  report.config_hash = config_hash;
  report.seed = seed;

  std::vector<std::vector<TokenId>> hyps, refs;
  std::vector<std::vector<int>> aligns;
  hyps.reserve(traces.size());
  refs.reserve(traces.size());
  aligns.reserve(traces.size());
  bool any_alignment = false;
  double al_sum = 0.0;
  int al_sentences = 0;
  for (size_t s = 0; s < traces.size(); ++s) {
    const TranslationTrace& trace = traces[s];
    const ParallelPair& pair = corpus.pairs[s];
    hyps.push_back(trace.output);
    refs.push_back(pair.tgt);
    aligns.push_back(pair.alignment);
    if (!pair.alignment.empty()) any_alignment = true;
    report.hyp_tokens += static_cast<long>(trace.output.size());
    report.ref_tokens += static_cast<long>(pair.tgt.size());
    if (!trace.output.empty()) {
      al_sum += average_lagging(trace, static_cast<int>(pair.src.size()),
                                static_cast<int>(trace.output.size()));
      ++al_sentences;
    }
  }

  report.bleu = corpus_bleu(hyps, refs);
  report.al = al_sentences > 0 ? al_sum / al_sentences : 0.0;
  report.has_hr = any_alignment;
  report.hr = any_alignment ? hallucination_rate(traces, hyps, aligns, refs) : 0.0;
  return report;
}

}  // namespace simt
