#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "simt/common.hpp"

namespace simt {

class Vocabulary {
 public:
  Vocabulary();

  // Returns the id, inserting the token if absent.
  TokenId add(const std::string& token);
  // Returns the id, or kUnkId for out-of-vocabulary tokens.
  TokenId encode(const std::string& token) const;
  const std::string& decode(TokenId id) const;
  bool contains(const std::string& token) const;
  int size() const { return static_cast<int>(id_to_token_.size()); }

  const std::vector<std::string>& tokens() const { return id_to_token_; }
  static Vocabulary from_tokens(const std::vector<std::string>& tokens);

 private:
  std::vector<std::string> id_to_token_;
  std::unordered_map<std::string, TokenId> token_to_id_;
};

// One sentence pair. alignment[i] is the 1-based source position of target
// token i+1; 0 marks an unaligned token. Empty when no alignment is known.
struct ParallelPair {
  std::vector<TokenId> src;
  std::vector<TokenId> tgt;
  std::vector<int> alignment;
};

struct Corpus {
  Vocabulary src_vocab;
  Vocabulary tgt_vocab;
  std::vector<ParallelPair> pairs;
};

enum class TaskKind { Copy, ShiftedCopy, ReversalWindow };

TaskKind parse_task_kind(const std::string& name);
std::string to_string(TaskKind kind);

// Synthetic parallel-task description. Sources are drawn from a sparse
// Markov law over the content vocabulary (see markov_successors); targets
// are a deterministic function of the source per task kind.
struct TaskSpec {
  TaskKind kind = TaskKind::Copy;
  int delta = 0;        // shifted_copy: target step i requires source i+delta
  int window = 2;       // reversal_window width
  int vocab_size = 50;  // includes the reserved ids
  int min_len = 5;
  int max_len = 12;
  uint64_t seed = 1;
  int num_pairs = 100;
};

// The source law: every content token has kMarkovBranches likely successors,
// derived from vocab_size alone so corpora of the same vocabulary share the
// law regardless of their sampling seed. With probability kMarkovResetProb a
// position restarts from the uniform distribution instead.
inline constexpr int kMarkovBranches = 2;
inline constexpr double kMarkovResetProb = 0.1;
std::vector<std::vector<TokenId>> markov_successors(int vocab_size);

Corpus generate(const TaskSpec& spec);

// Plain-text loader: UTF-8, one sentence per line, whitespace tokens.
// Builds vocabularies from the files; tokens with frequency < min_freq map
// to the unknown id. Alignments are Pharaoh "src-tgt" 0-indexed pairs,
// converted to 1-indexed per-target source positions (the largest aligned
// source position wins when a target token is aligned more than once).
Corpus load_corpus(const std::string& src_path, const std::string& tgt_path,
                   const std::optional<std::string>& align_path = std::nullopt, int min_freq = 1);

// Same files, but encoded with fixed vocabularies (evaluation against a
// trained checkpoint). Out-of-vocabulary tokens map to the unknown id.
Corpus load_corpus_with_vocab(const std::string& src_path, const std::string& tgt_path,
                              const std::optional<std::string>& align_path,
                              const Vocabulary& src_vocab, const Vocabulary& tgt_vocab);

void write_corpus(const Corpus& corpus, const std::string& src_path, const std::string& tgt_path,
                  const std::optional<std::string>& align_path = std::nullopt);

// Indices into Corpus::pairs plus the common padded lengths for the batch.
// Model-level sequences append <eos> to the source and wrap the target with
// <bos>/<eos>, hence the +1 in the padded lengths.
struct Batch {
  std::vector<int> pair_indices;
  int src_pad = 0;  // padded model source length (raw + eos)
  int tgt_pad = 0;  // padded model target-step count (raw + eos step)
};

// Length-bucketed, seed-shuffled batches; every pair appears exactly once.
// max_tokens bounds sentences-per-batch times the padded length. Throws when
// a single pair alone exceeds the budget, naming the pair index.
std::vector<Batch> make_batches(const Corpus& corpus, int max_tokens, uint64_t seed);

}  // namespace simt
