#include "simt/train.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "doctest.h"

using namespace simt;

namespace {

ModelConfig small_config(int vocab, uint64_t seed) {
  ModelConfig cfg;
  cfg.src_vocab = vocab;
  cfg.tgt_vocab = vocab;
  cfg.d_model = 16;
  cfg.n_heads = 2;
  cfg.d_ff = 32;
  cfg.enc_layers = 1;
  cfg.dec_layers = 1;
  cfg.dropout = 0.0;
  cfg.label_smoothing = 0.1;
  cfg.init_seed = seed;
  return cfg;
}

CurriculumSchedule schedule_with(double alpha_min, long d, GlanceStrategy strategy,
                                 bool constant = false) {
  CurriculumSchedule s;
  s.alpha_min = alpha_min;
  s.decay_updates = d;
  s.strategy = strategy;
  s.rng_seed = 77;
  s.constant_alpha = constant;
  return s;
}

Corpus copy_corpus(int vocab, int pairs, uint64_t seed) {
  TaskSpec spec;
  spec.kind = TaskKind::Copy;
  spec.vocab_size = vocab;
  spec.min_len = 3;
  spec.max_len = 6;
  spec.seed = seed;
  spec.num_pairs = pairs;
  return generate(spec);
}

}  // namespace

TEST_CASE("frame_pair appends source eos and wraps the target with bos/eos") {
  ParallelPair pair;
  pair.src = {4, 5, 6};
  pair.tgt = {7, 8};
  const ModelSequences seq = frame_pair(pair);
  CHECK(seq.src == std::vector<TokenId>{4, 5, 6, kEosId});
  CHECK(seq.tgt_in == std::vector<TokenId>{kBosId, 7, 8});
  CHECK(seq.gold == std::vector<TokenId>{7, 8, kEosId});
}

TEST_CASE("step 0 trains with alpha = 1 and saturation reaches alpha_min exactly") {
  const int vocab = 20;
  const Corpus corpus = copy_corpus(vocab, 24, 5);
  const auto batches = make_batches(corpus, 64, 1);
  Trainer<double> trainer(init_params<double>(small_config(vocab, 3)), OptimizerConfig{},
                          schedule_with(0.05, 3, GlanceStrategy::Adjacency),
                          make_wait_k_policy_fn(2), 11);
  std::vector<TrainLogRow> rows;
  for (int step = 0; step < 5; ++step) {
    rows.push_back(trainer.train_step(corpus, batches[step % batches.size()]));
  }
  CHECK(rows[0].step == 0);
  CHECK(rows[0].alpha == 1.0);
  CHECK(rows[1].alpha == doctest::Approx(0.05 + 0.95 * (1.0 - 1.0 / 3.0)).epsilon(1e-15));
  CHECK(rows[3].alpha == 0.05);  // step >= d saturates
  CHECK(rows[4].alpha == 0.05);
  CHECK(trainer.update_count() == 5);  // exactly one increment per call
  for (const TrainLogRow& row : rows) CHECK(std::isfinite(row.loss));
}

TEST_CASE("constant-alpha ablation holds alpha at alpha_min from step 0") {
  const int vocab = 20;
  const Corpus corpus = copy_corpus(vocab, 16, 6);
  const auto batches = make_batches(corpus, 64, 2);
  Trainer<double> trainer(init_params<double>(small_config(vocab, 4)), OptimizerConfig{},
                          schedule_with(0.05, 1000, GlanceStrategy::Adjacency, true),
                          make_wait_k_policy_fn(2), 12);
  for (int step = 0; step < 3; ++step) {
    const TrainLogRow row = trainer.train_step(corpus, batches[step % batches.size()]);
    CHECK(row.alpha == 0.05);
  }
}

TEST_CASE("copy-task loss decreases over 200 steps (50-step moving average)") {
  const int vocab = 20;
  const Corpus corpus = copy_corpus(vocab, 200, 7);
  const auto batches = make_batches(corpus, 100, 3);
  OptimizerConfig opt;
  opt.lr = 2e-3;
  Trainer<double> trainer(init_params<double>(small_config(vocab, 5)), opt,
                          schedule_with(0.05, 150, GlanceStrategy::Adjacency),
                          make_wait_k_policy_fn(3), 13);
  std::vector<double> losses;
  for (int step = 0; step < 200; ++step) {
    losses.push_back(trainer.train_step(corpus, batches[step % batches.size()]).loss);
  }
  const auto avg = [&](int from, int to) {
    double acc = 0.0;
    for (int i = from; i < to; ++i) acc += losses[i];
    return acc / (to - from);
  };
  const double head = avg(0, 50);
  const double tail = avg(150, 200);
  CHECK(tail < head);
  CHECK(tail < 0.8 * head);
}

TEST_CASE("training is bitwise deterministic given identical seeds, including dropout") {
  const int vocab = 18;
  const Corpus corpus = copy_corpus(vocab, 30, 8);
  const auto batches = make_batches(corpus, 64, 4);
  ModelConfig cfg = small_config(vocab, 6);
  cfg.dropout = 0.1;
  auto make = [&]() {
    return Trainer<double>(init_params<double>(cfg), OptimizerConfig{},
                           schedule_with(0.05, 50, GlanceStrategy::Randomization),
                           make_wait_k_policy_fn(2), 21);
  };
  Trainer<double> a = make(), b = make();
  for (int step = 0; step < 10; ++step) {
    const TrainLogRow ra = a.train_step(corpus, batches[step % batches.size()]);
    const TrainLogRow rb = b.train_step(corpus, batches[step % batches.size()]);
    CHECK(ra.loss == rb.loss);
  }
  bool identical = true;
  std::vector<const Matrix<double>*> lhs, rhs;
  a.params().for_each_parameter(
      [&](const std::string&, const Matrix<double>& m) { lhs.push_back(&m); });
  b.params().for_each_parameter(
      [&](const std::string&, const Matrix<double>& m) { rhs.push_back(&m); });
  for (size_t t = 0; t < lhs.size(); ++t) {
    for (size_t i = 0; i < lhs[t]->size(); ++i) {
      if (lhs[t]->data()[i] != rhs[t]->data()[i]) identical = false;
    }
  }
  CHECK(identical);
}

TEST_CASE("every glance strategy trains, including HMT policies") {
  const int vocab = 18;
  const Corpus corpus = copy_corpus(vocab, 20, 9);
  const auto batches = make_batches(corpus, 64, 5);
  for (GlanceStrategy strategy :
       {GlanceStrategy::Adjacency, GlanceStrategy::Attention, GlanceStrategy::Randomization}) {
    Trainer<double> trainer(init_params<double>(small_config(vocab, 7)), OptimizerConfig{},
                            schedule_with(0.05, 100, strategy), make_wait_k_policy_fn(2), 31);
    const TrainLogRow row = trainer.train_step(corpus, batches[0]);
    CHECK(std::isfinite(row.loss));
    CHECK(trainer.update_count() == 1);
  }
  Trainer<double> hmt(init_params<double>(small_config(vocab, 8)), OptimizerConfig{},
                      schedule_with(0.05, 100, GlanceStrategy::Adjacency),
                      make_hmt_policy_fn(2, 2), 32);
  CHECK(std::isfinite(hmt.train_step(corpus, batches[0]).loss));
}

TEST_CASE("divergence aborts with the step index in the message") {
  const int vocab = 18;
  const Corpus corpus = copy_corpus(vocab, 10, 10);
  const auto batches = make_batches(corpus, 64, 6);
  Trainer<double> trainer(init_params<double>(small_config(vocab, 9)), OptimizerConfig{},
                          schedule_with(0.05, 100, GlanceStrategy::Adjacency),
                          make_wait_k_policy_fn(1), 41);
  trainer.params().src_embed(4, 0) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_WITH_AS(trainer.train_step(corpus, batches[0]), doctest::Contains("train_step 0"),
                       std::runtime_error);
}

TEST_CASE("float trainer runs and stays finite") {
  const int vocab = 18;
  const Corpus corpus = copy_corpus(vocab, 20, 11);
  const auto batches = make_batches(corpus, 64, 7);
  Trainer<float> trainer(init_params<float>(small_config(vocab, 10)), OptimizerConfig{},
                         schedule_with(0.05, 100, GlanceStrategy::Adjacency),
                         make_wait_k_policy_fn(2), 51);
  for (int step = 0; step < 5; ++step) {
    CHECK(std::isfinite(trainer.train_step(corpus, batches[step % batches.size()]).loss));
  }
}
