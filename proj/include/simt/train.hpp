#pragma once

#include <functional>
#include <string>
#include <vector>

#include "simt/curriculum.hpp"
#include "simt/data.hpp"
#include "simt/model.hpp"
#include "simt/policy.hpp"

namespace simt {

struct OptimizerConfig {
  double lr = 2e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  int warmup_steps = 0;   // linear warmup to lr, constant afterwards
  double grad_clip = 1.0; // global L2 clip; <= 0 disables
};

// Maps a sentence's model-level lengths to its base read policy.
using PolicyFn = std::function<PolicyVector(int target_len, int source_len)>;

PolicyFn make_wait_k_policy_fn(int k);
PolicyFn make_hmt_policy_fn(int initial_read, int events_per_step);

// One training-log row; alpha is the glance ratio the step trained with.
struct TrainLogRow {
  long step = 0;
  double loss = 0.0;
  double alpha = 0.0;
};

// Model-level sequence framing: the source gains a final <eos> so the
// policy can expose end-of-source timing; the decoder input is
// [<bos>, y*_1..y*_I] and the gold rows are [y*_1..y*_I, <eos>].
struct ModelSequences {
  std::vector<TokenId> src;
  std::vector<TokenId> tgt_in;
  std::vector<TokenId> gold;
};
ModelSequences frame_pair(const ParallelPair& pair);

// Owns the parameters, Adam moments, curriculum state and update counter.
// One train_step call = one optimizer update; the counter advances exactly
// once per call and alpha_at(counter) governs that step's glancing.
template <typename S>
class Trainer {
 public:
  Trainer(ModelParams<S> params, OptimizerConfig opt, CurriculumSchedule schedule,
          PolicyFn policy_fn, uint64_t dropout_seed);

  TrainLogRow train_step(const Corpus& corpus, const Batch& batch);

  const ModelParams<S>& params() const { return params_; }
  ModelParams<S>& params() { return params_; }
  long update_count() const { return update_count_; }
  const CurriculumSchedule& schedule() const { return schedule_; }

 private:
  ModelParams<S> params_;
  ModelParams<S> grads_;
  ModelParams<S> moment1_;
  ModelParams<S> moment2_;
  OptimizerConfig opt_;
  CurriculumSchedule schedule_;
  PolicyFn policy_fn_;
  DropoutState dropout_;
  long update_count_ = 0;
};

extern template class Trainer<float>;
extern template class Trainer<double>;

}  // namespace simt
