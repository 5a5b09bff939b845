#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "json.hpp"
#include "simt/data.hpp"
#include "simt/metrics.hpp"
#include "simt/model.hpp"

namespace simt {

// Data source: a synthetic task (generated into the workspace) or external
// pre-tokenized corpus files. eval_seed 0 means task.seed + 1.
struct DataConfig {
  bool synthetic = true;
  TaskSpec task;
  int eval_num_pairs = 500;
  uint64_t eval_seed = 0;
  std::string train_src, train_tgt, train_align;  // external mode
  std::string eval_src, eval_tgt, eval_align;
  int min_freq = 1;
};

struct PolicyConfig {
  std::string type = "wait_k";  // "wait_k" or "hmt"
  int k = 3;
  int hmt_initial_read = 2;
  int hmt_events = 2;
};

struct CurriculumConfig {
  double alpha_min = 0.05;
  long decay_updates = 160000;
  std::string strategy = "adjacency";
  bool constant_alpha = false;
};

struct TrainingConfig {
  int steps = 1000;
  int batch_tokens = 512;
  double lr = 2e-3;
  int warmup_steps = 0;
  double grad_clip = 1.0;
  uint64_t seed = 0;  // mandatory in config files
  int log_every = 50;
};

struct EvalSettings {
  std::vector<int> k_test = {1, 3, 5};
  int max_output_len = 0;  // 0 means model max_len - 1
};

// One sweep axis value: a named JSON merge-patch over the base config.
struct SweepVariant {
  std::string name;
  nlohmann::json patch;
};

struct SweepConfig {
  std::vector<SweepVariant> variants;
  int workers = 1;
  bool force_plots = false;
};

// The complete experiment description. out_dir locates artifacts; data_dir
// locates the corpus files (defaults to out_dir; sweep cells point it at the
// shared corpus while writing their own artifacts). Neither directory enters
// the fingerprint: the hash identifies the experiment's content, not its
// location on disk.
struct ExperimentConfig {
  std::string out_dir = "out";
  std::string data_dir;  // runtime-only; empty means out_dir
  DataConfig data;
  ModelConfig model;  // vocab sizes and init_seed are derived, not configured
  PolicyConfig policy;
  CurriculumConfig curriculum;
  TrainingConfig training;
  EvalSettings eval;
  SweepConfig sweep;

  std::string corpus_dir() const { return data_dir.empty() ? out_dir : data_dir; }
};

// Strict parse: unknown keys are errors, training.seed is mandatory.
// Throws std::invalid_argument with the offending key path.
ExperimentConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const ExperimentConfig& config);
ExperimentConfig load_config_file(const std::string& path);

// FNV-1a64 over the canonical (sorted-key) dump, location fields excluded.
std::string config_fingerprint(const ExperimentConfig& config);

// Fixed artifact names under a directory.
struct ArtifactPaths {
  std::string dir;
  std::string train_src() const { return dir + "/train.src"; }
  std::string train_tgt() const { return dir + "/train.tgt"; }
  std::string train_align() const { return dir + "/train.align"; }
  std::string eval_src() const { return dir + "/eval.src"; }
  std::string eval_tgt() const { return dir + "/eval.tgt"; }
  std::string eval_align() const { return dir + "/eval.align"; }
  std::string checkpoint() const { return dir + "/model.ckpt"; }
  std::string train_log() const { return dir + "/train_log.csv"; }
  std::string eval_csv() const { return dir + "/eval.csv"; }
  std::string config_echo() const { return dir + "/config.json"; }
  std::string hyp(int k) const { return dir + "/hyp_k" + std::to_string(k) + ".txt"; }
  std::string trace(int k) const { return dir + "/trace_k" + std::to_string(k) + ".txt"; }
  std::string sweep_csv() const { return dir + "/sweep.csv"; }
  std::string sweep_errors() const { return dir + "/sweep_errors.log"; }
  std::string sweep_plot_bleu() const { return dir + "/sweep_bleu_vs_al.svg"; }
  std::string sweep_plot_hr() const { return dir + "/sweep_hr_vs_al.svg"; }
  std::string sweep_cell(const std::string& name) const { return dir + "/sweep/" + name; }
};

// Orchestration entry points. Each returns a process exit code: 0 success,
// 1 configuration error, 2 runtime failure, 3 partial sweep failure.
// Progress and diagnostics go to `log`.
int run_generate(const ExperimentConfig& config, std::ostream& log);
int run_train(const ExperimentConfig& config, std::ostream& log);
int run_evaluate(const ExperimentConfig& config, std::ostream& log);
int run_sweep(const ExperimentConfig& config, std::ostream& log);

// Teacher-forced argmax accuracy over the corpus under wait-k eval masks:
// the fraction of gold tokens (including the final <eos> of each sentence)
// the model ranks first given the gold prefix and the policy's read prefix.
double teacher_forced_accuracy(const ModelParams<double>& params, const Corpus& corpus, int k);

}  // namespace simt
