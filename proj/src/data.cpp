#include "simt/data.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

namespace simt {

Vocabulary::Vocabulary() {
  add(kPadToken);
  add(kBosToken);
  add(kEosToken);
  add(kUnkToken);
}

TokenId Vocabulary::add(const std::string& token) {
  auto it = token_to_id_.find(token);
  if (it != token_to_id_.end()) return it->second;
  const TokenId id = static_cast<TokenId>(id_to_token_.size());
  id_to_token_.push_back(token);
  token_to_id_.emplace(token, id);
  return id;
}

TokenId Vocabulary::encode(const std::string& token) const {
  auto it = token_to_id_.find(token);
  return it == token_to_id_.end() ? kUnkId : it->second;
}

const std::string& Vocabulary::decode(TokenId id) const {
  if (id < 0 || id >= size()) throw std::invalid_argument("Vocabulary::decode: id out of range");
  return id_to_token_[id];
}

bool Vocabulary::contains(const std::string& token) const {
  return token_to_id_.count(token) != 0;
}

Vocabulary Vocabulary::from_tokens(const std::vector<std::string>& tokens) {
  Vocabulary v;
  if (tokens.size() < kNumReservedIds || tokens[kPadId] != kPadToken || tokens[kBosId] != kBosToken ||
      tokens[kEosId] != kEosToken || tokens[kUnkId] != kUnkToken) {
    throw std::invalid_argument("Vocabulary::from_tokens: reserved ids missing or reordered");
  }
  for (size_t i = kNumReservedIds; i < tokens.size(); ++i) v.add(tokens[i]);
  if (v.size() != static_cast<int>(tokens.size())) {
    throw std::invalid_argument("Vocabulary::from_tokens: duplicate tokens");
  }
  return v;
}

TaskKind parse_task_kind(const std::string& name) {
  if (name == "copy") return TaskKind::Copy;
  if (name == "shifted_copy") return TaskKind::ShiftedCopy;
  if (name == "reversal_window") return TaskKind::ReversalWindow;
  throw std::invalid_argument("unknown task kind '" + name + "'");
}

std::string to_string(TaskKind kind) {
  switch (kind) {
    case TaskKind::Copy: return "copy";
    case TaskKind::ShiftedCopy: return "shifted_copy";
    case TaskKind::ReversalWindow: return "reversal_window";
  }
  return "?";
}

std::vector<std::vector<TokenId>> markov_successors(int vocab_size) {
  const int content = vocab_size - kNumReservedIds;
  if (content < kMarkovBranches + 1) {
    throw std::invalid_argument("markov_successors: vocabulary too small");
  }
  // Law depends on vocab_size only, not on any sampling seed.
  std::mt19937_64 rng(0x736f75726365ull ^ (static_cast<uint64_t>(vocab_size) * 0x9e3779b9ull));
  std::vector<std::vector<TokenId>> successors(content);
  std::vector<TokenId> pool(content);
  std::iota(pool.begin(), pool.end(), kNumReservedIds);
  for (int t = 0; t < content; ++t) {
    std::vector<TokenId> choices = pool;
    for (int b = 0; b < kMarkovBranches; ++b) {
      const size_t pick = b + static_cast<size_t>(rng() % (choices.size() - b));
      std::swap(choices[b], choices[pick]);
    }
    successors[t].assign(choices.begin(), choices.begin() + kMarkovBranches);
  }
  return successors;
}

namespace {

void validate_spec(const TaskSpec& spec) {
  if (spec.vocab_size <= kNumReservedIds + kMarkovBranches) {
    throw std::invalid_argument("generate: vocab_size too small");
  }
  if (spec.min_len < 1 || spec.max_len < spec.min_len) {
    throw std::invalid_argument("generate: invalid length range");
  }
  if (spec.num_pairs < 0) throw std::invalid_argument("generate: negative corpus size");
  if (spec.kind == TaskKind::ShiftedCopy) {
    if (spec.delta < 0) throw std::invalid_argument("generate: delta must be nonnegative");
    if (spec.delta >= spec.min_len) {
      throw std::invalid_argument("generate: delta " + std::to_string(spec.delta) +
                                  " must be below the minimum length " + std::to_string(spec.min_len));
    }
  }
  if (spec.kind == TaskKind::ReversalWindow && spec.window < 1) {
    throw std::invalid_argument("generate: window must be >= 1");
  }
}

std::vector<TokenId> sample_source(std::mt19937_64& rng, const TaskSpec& spec,
                                   const std::vector<std::vector<TokenId>>& successors) {
  const int content = spec.vocab_size - kNumReservedIds;
  std::uniform_int_distribution<int> uniform_content(0, content - 1);
  std::uniform_int_distribution<int> uniform_len(spec.min_len, spec.max_len);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<int> uniform_branch(0, kMarkovBranches - 1);

  const int len = uniform_len(rng);
  std::vector<TokenId> src(len);
  src[0] = kNumReservedIds + uniform_content(rng);
  for (int j = 1; j < len; ++j) {
    if (unit(rng) < kMarkovResetProb) {
      src[j] = kNumReservedIds + uniform_content(rng);
    } else {
      src[j] = successors[src[j - 1] - kNumReservedIds][uniform_branch(rng)];
    }
  }
  return src;
}

ParallelPair build_pair(std::vector<TokenId> src, const TaskSpec& spec) {
  ParallelPair pair;
  const int source_len = static_cast<int>(src.size());
  pair.src = std::move(src);
  switch (spec.kind) {
    case TaskKind::Copy:
      pair.tgt = pair.src;
      pair.alignment.resize(source_len);
      std::iota(pair.alignment.begin(), pair.alignment.end(), 1);
      break;
    case TaskKind::ShiftedCopy: {
      const int target_len = source_len - spec.delta;
      pair.tgt.resize(target_len);
      pair.alignment.resize(target_len);
      for (int i = 0; i < target_len; ++i) {
        pair.tgt[i] = pair.src[i + spec.delta];
        pair.alignment[i] = i + spec.delta + 1;
      }
      break;
    }
    case TaskKind::ReversalWindow: {
      pair.tgt.resize(source_len);
      pair.alignment.resize(source_len);
      for (int start = 0; start < source_len; start += spec.window) {
        const int end = std::min(start + spec.window, source_len);  // exclusive
        for (int i = start; i < end; ++i) {
          const int mirrored = start + (end - 1 - i);
          pair.tgt[i] = pair.src[mirrored];
          pair.alignment[i] = mirrored + 1;
        }
      }
      break;
    }
  }
  return pair;
}

std::string content_token_name(TokenId id) { return "w" + std::to_string(id); }

}  // namespace

Corpus generate(const TaskSpec& spec) {
  validate_spec(spec);
  Corpus corpus;
  for (TokenId id = kNumReservedIds; id < spec.vocab_size; ++id) {
    corpus.src_vocab.add(content_token_name(id));
    corpus.tgt_vocab.add(content_token_name(id));
  }
  const auto successors = markov_successors(spec.vocab_size);
  std::mt19937_64 rng(spec.seed);
  corpus.pairs.reserve(spec.num_pairs);
  for (int n = 0; n < spec.num_pairs; ++n) {
    corpus.pairs.push_back(build_pair(sample_source(rng, spec, successors), spec));
  }
  return corpus;
}

namespace {

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  return lines;
}

std::vector<std::string> split_tokens(const std::string& line) {
  std::istringstream is(line);
  std::vector<std::string> tokens;
  std::string t;
  while (is >> t) tokens.push_back(t);
  return tokens;
}

std::vector<int> parse_pharaoh(const std::string& line, int src_len, int tgt_len, size_t line_no) {
  std::vector<int> alignment(tgt_len, 0);
  std::istringstream is(line);
  std::string entry;
  while (is >> entry) {
    const size_t dash = entry.find('-');
    if (dash == std::string::npos || dash == 0 || dash + 1 >= entry.size()) {
      throw std::runtime_error("malformed alignment entry '" + entry + "' on line " +
                               std::to_string(line_no + 1));
    }
    int s = 0, t = 0;
    try {
      s = std::stoi(entry.substr(0, dash));
      t = std::stoi(entry.substr(dash + 1));
    } catch (const std::exception&) {
      throw std::runtime_error("malformed alignment entry '" + entry + "' on line " +
                               std::to_string(line_no + 1));
    }
    if (s < 0 || s >= src_len || t < 0 || t >= tgt_len) {
      throw std::runtime_error("alignment entry '" + entry + "' out of range on line " +
                               std::to_string(line_no + 1));
    }
    alignment[t] = std::max(alignment[t], s + 1);
  }
  return alignment;
}

Corpus load_corpus_impl(const std::string& src_path, const std::string& tgt_path,
                        const std::optional<std::string>& align_path, const Vocabulary* fixed_src,
                        const Vocabulary* fixed_tgt, int min_freq) {
  const auto src_lines = read_lines(src_path);
  const auto tgt_lines = read_lines(tgt_path);
  if (src_lines.size() != tgt_lines.size()) {
    throw std::runtime_error("line count mismatch: " + src_path + " has " +
                             std::to_string(src_lines.size()) + " lines, " + tgt_path + " has " +
                             std::to_string(tgt_lines.size()));
  }
  std::vector<std::string> align_lines;
  if (align_path) {
    align_lines = read_lines(*align_path);
    if (align_lines.size() != src_lines.size()) {
      throw std::runtime_error("line count mismatch between corpus and alignment file " + *align_path);
    }
  }

  std::vector<std::vector<std::string>> src_tokens(src_lines.size());
  std::vector<std::vector<std::string>> tgt_tokens(tgt_lines.size());
  for (size_t n = 0; n < src_lines.size(); ++n) {
    src_tokens[n] = split_tokens(src_lines[n]);
    tgt_tokens[n] = split_tokens(tgt_lines[n]);
  }

  Corpus corpus;
  if (fixed_src != nullptr) {
    corpus.src_vocab = *fixed_src;
    corpus.tgt_vocab = *fixed_tgt;
  } else {
    // frequency-thresholded vocabulary, insertion in first-seen order
    auto build = [&](const std::vector<std::vector<std::string>>& sentences) {
      std::unordered_map<std::string, int> freq;
      for (const auto& sent : sentences) {
        for (const auto& tok : sent) ++freq[tok];
      }
      Vocabulary vocab;
      for (const auto& sent : sentences) {
        for (const auto& tok : sent) {
          if (freq[tok] >= min_freq) vocab.add(tok);
        }
      }
      return vocab;
    };
    corpus.src_vocab = build(src_tokens);
    corpus.tgt_vocab = build(tgt_tokens);
  }

  corpus.pairs.resize(src_lines.size());
  for (size_t n = 0; n < src_lines.size(); ++n) {
    ParallelPair& pair = corpus.pairs[n];
    for (const auto& tok : src_tokens[n]) pair.src.push_back(corpus.src_vocab.encode(tok));
    for (const auto& tok : tgt_tokens[n]) pair.tgt.push_back(corpus.tgt_vocab.encode(tok));
    if (align_path) {
      pair.alignment = parse_pharaoh(align_lines[n], static_cast<int>(pair.src.size()),
                                     static_cast<int>(pair.tgt.size()), n);
    }
  }
  return corpus;
}

}  // namespace

Corpus load_corpus(const std::string& src_path, const std::string& tgt_path,
                   const std::optional<std::string>& align_path, int min_freq) {
  return load_corpus_impl(src_path, tgt_path, align_path, nullptr, nullptr, min_freq);
}

Corpus load_corpus_with_vocab(const std::string& src_path, const std::string& tgt_path,
                              const std::optional<std::string>& align_path,
                              const Vocabulary& src_vocab, const Vocabulary& tgt_vocab) {
  return load_corpus_impl(src_path, tgt_path, align_path, &src_vocab, &tgt_vocab, 1);
}

void write_corpus(const Corpus& corpus, const std::string& src_path, const std::string& tgt_path,
                  const std::optional<std::string>& align_path) {
  std::ofstream src_out(src_path), tgt_out(tgt_path);
  if (!src_out || !tgt_out) throw std::runtime_error("cannot write corpus files");
  std::ofstream align_out;
  if (align_path) {
    align_out.open(*align_path);
    if (!align_out) throw std::runtime_error("cannot write " + *align_path);
  }
  for (const ParallelPair& pair : corpus.pairs) {
    for (size_t j = 0; j < pair.src.size(); ++j) {
      src_out << (j ? " " : "") << corpus.src_vocab.decode(pair.src[j]);
    }
    src_out << '\n';
    for (size_t i = 0; i < pair.tgt.size(); ++i) {
      tgt_out << (i ? " " : "") << corpus.tgt_vocab.decode(pair.tgt[i]);
    }
    tgt_out << '\n';
    if (align_path) {
      bool first = true;
      for (size_t i = 0; i < pair.alignment.size(); ++i) {
        if (pair.alignment[i] < 1) continue;
        align_out << (first ? "" : " ") << (pair.alignment[i] - 1) << '-' << i;
        first = false;
      }
      align_out << '\n';
    }
  }
}

std::vector<Batch> make_batches(const Corpus& corpus, int max_tokens, uint64_t seed) {
  if (corpus.pairs.empty()) throw std::invalid_argument("make_batches: empty corpus");
  if (max_tokens < 1) throw std::invalid_argument("make_batches: max_tokens must be >= 1");

  // model-level length: source gains <eos>, target gains a <bos>/<eos> step
  auto padded_len = [&](int idx) {
    const ParallelPair& p = corpus.pairs[idx];
    return std::max(static_cast<int>(p.src.size()) + 1, static_cast<int>(p.tgt.size()) + 1);
  };
  for (size_t idx = 0; idx < corpus.pairs.size(); ++idx) {
    if (padded_len(static_cast<int>(idx)) > max_tokens) {
      throw std::invalid_argument("make_batches: pair " + std::to_string(idx) +
                                  " alone exceeds the token budget");
    }
  }

  std::vector<int> order(corpus.pairs.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  // bucket by length, keeping the shuffled order within equal lengths
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return padded_len(a) < padded_len(b); });

  std::vector<Batch> batches;
  Batch current;
  int current_max_len = 0;
  auto flush = [&]() {
    if (current.pair_indices.empty()) return;
    current.src_pad = 0;
    current.tgt_pad = 0;
    for (int idx : current.pair_indices) {
      current.src_pad = std::max(current.src_pad, static_cast<int>(corpus.pairs[idx].src.size()) + 1);
      current.tgt_pad = std::max(current.tgt_pad, static_cast<int>(corpus.pairs[idx].tgt.size()) + 1);
    }
    batches.push_back(std::move(current));
    current = Batch{};
    current_max_len = 0;
  };
  for (int idx : order) {
    const int len = padded_len(idx);
    const int new_max = std::max(current_max_len, len);
    const int new_count = static_cast<int>(current.pair_indices.size()) + 1;
    if (!current.pair_indices.empty() && new_max * new_count > max_tokens) flush();
    current.pair_indices.push_back(idx);
    current_max_len = std::max(current_max_len, len);
  }
  flush();
  std::shuffle(batches.begin(), batches.end(), rng);
  return batches;
}

}  // namespace simt
