#include "simt/decode.hpp"

#include <algorithm>
#include <sstream>
#include <stdexcept>

#include "simt/masking.hpp"
#include "simt/policy.hpp"

namespace simt {

PolicyGeneratorFactory wait_k_factory(int k) {
  if (k < 1) throw std::invalid_argument("wait_k_factory: k must be >= 1");
  return [k](int model_source_len) {
    return [k, model_source_len](int step) { return std::min(k + step - 1, model_source_len); };
  };
}

PolicyGeneratorFactory hmt_factory(int initial_read, int events_per_step) {
  if (initial_read < 1 || events_per_step < 1) {
    throw std::invalid_argument("hmt_factory: arguments must be >= 1");
  }
  // the lattice's first event column: g_{i,1} = min(L + (i-1), J)
  return [initial_read](int model_source_len) {
    return [initial_read, model_source_len](int step) {
      return std::min(initial_read + step - 1, model_source_len);
    };
  };
}

template <typename S>
TranslationTrace stream_decode(const ModelParams<S>& params, const std::vector<TokenId>& raw_src,
                               const PolicyGenerator& policy, int max_output_len) {
  if (raw_src.empty()) throw std::invalid_argument("stream_decode: empty source");
  if (max_output_len < 1) throw std::invalid_argument("stream_decode: max_output_len must be >= 1");

  const int j_raw = static_cast<int>(raw_src.size());
  const int j_model = j_raw + 1;
  std::vector<TokenId> src_model = raw_src;
  src_model.push_back(kEosId);

  TranslationTrace trace;
  trace.source_len = j_raw;
  std::vector<TokenId> tgt_in = {kBosId};
  std::vector<int> g_hist;  // model-level g per emitted step
  int reads_done = 0;

  for (int step = 1;; ++step) {
    int g = policy(step);
    if (g < 1) throw std::invalid_argument("stream_decode: policy returned g < 1");
    g = std::min(g, j_model);
    if (!g_hist.empty()) g = std::max(g, g_hist.back());  // policies never unread
    g_hist.push_back(g);

    const int raw_target = std::min(g, j_raw);
    while (reads_done < raw_target) {
      trace.actions.push_back('R');
      ++reads_done;
    }

    // per-row cross masks replay each earlier step's own prefix, matching
    // the single-pass training semantics
    AdjustedPolicy ap;
    ap.source_len = j_model;
    ap.base.source_len = j_model;
    ap.base.g = g_hist;
    ap.g_hat = g_hist;
    ap.extra_positions.assign(g_hist.size(), {});
    const int t = static_cast<int>(tgt_in.size());
    const MaskSet mask = build_masks(ap, j_model, t, j_model, t);

    ForwardCache<S> cache;
    forward(params, src_model, tgt_in, mask, cache);
    const S* row = cache.log_probs.row(t - 1);
    TokenId best = 0;
    for (int c = 1; c < cache.log_probs.cols(); ++c) {
      if (row[c] > row[best]) best = c;
    }

    trace.actions.push_back('W');
    if (best == kEosId) break;
    trace.output.push_back(best);
    trace.reads_at_write.push_back(raw_target);
    if (static_cast<int>(trace.output.size()) >= max_output_len) {
      trace.truncated = true;
      break;
    }
    tgt_in.push_back(best);
  }
  return trace;
}

template <typename S>
std::vector<TranslationTrace> batch_decode(const ModelParams<S>& params, const Corpus& corpus,
                                           const PolicyGeneratorFactory& factory,
                                           int max_output_len) {
  std::vector<TranslationTrace> traces;
  traces.reserve(corpus.pairs.size());
  for (size_t n = 0; n < corpus.pairs.size(); ++n) {
    try {
      const int j_model = static_cast<int>(corpus.pairs[n].src.size()) + 1;
      traces.push_back(
          stream_decode(params, corpus.pairs[n].src, factory(j_model), max_output_len));
    } catch (const std::exception& e) {
      throw std::runtime_error("sentence " + std::to_string(n) + ": " + e.what());
    }
  }
  return traces;
}

std::string format_trace_line(const TranslationTrace& trace) {
  std::ostringstream out;
  out << trace.actions << " | J=" << trace.source_len;
  for (int g : trace.reads_at_write) out << ' ' << g;
  out << " | trunc=" << (trace.truncated ? 1 : 0);
  return out.str();
}

TranslationTrace parse_trace_line(const std::string& line) {
  std::istringstream in(line);
  TranslationTrace trace;
  std::string actions, sep, field;
  if (!(in >> actions >> sep) || sep != "|") {
    throw std::invalid_argument("trace line: expected '<actions> | ...'");
  }
  trace.actions = actions;
  if (!(in >> field) || field.rfind("J=", 0) != 0) {
    throw std::invalid_argument("trace line: expected J=<len>");
  }
  trace.source_len = std::stoi(field.substr(2));
  std::string token;
  while (in >> token && token != "|") trace.reads_at_write.push_back(std::stoi(token));
  if (token != "|" || !(in >> field) || field.rfind("trunc=", 0) != 0) {
    throw std::invalid_argument("trace line: expected trunc=<0|1>");
  }
  trace.truncated = field.substr(6) == "1";
  for (char c : actions) {
    if (c != 'R' && c != 'W') throw std::invalid_argument("trace line: bad action character");
  }
  return trace;
}

std::string hypotheses_text(const std::vector<TranslationTrace>& traces, const Vocabulary& vocab) {
  std::string out;
  for (const TranslationTrace& trace : traces) {
    for (size_t i = 0; i < trace.output.size(); ++i) {
      if (i) out.push_back(' ');
      out += vocab.decode(trace.output[i]);
    }
    out.push_back('\n');
  }
  return out;
}

std::string traces_text(const std::vector<TranslationTrace>& traces) {
  std::string out;
  for (const TranslationTrace& trace : traces) {
    out += format_trace_line(trace);
    out.push_back('\n');
  }
  return out;
}

template TranslationTrace stream_decode<float>(const ModelParams<float>&,
                                               const std::vector<TokenId>&,
                                               const PolicyGenerator&, int);
template TranslationTrace stream_decode<double>(const ModelParams<double>&,
                                                const std::vector<TokenId>&,
                                                const PolicyGenerator&, int);
template std::vector<TranslationTrace> batch_decode<float>(const ModelParams<float>&,
                                                           const Corpus&,
                                                           const PolicyGeneratorFactory&, int);
template std::vector<TranslationTrace> batch_decode<double>(const ModelParams<double>&,
                                                            const Corpus&,
                                                            const PolicyGeneratorFactory&, int);

}  // namespace simt
