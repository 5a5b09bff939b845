#include "simt/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "simt/checkpoint.hpp"
#include "simt/decode.hpp"
#include "simt/masking.hpp"
#include "simt/plot.hpp"
#include "simt/train.hpp"

namespace fs = std::filesystem;

namespace simt {

namespace {

// Independent RNG streams derived from the one mandatory seed.
const uint64_t kTagInit = fnv1a64(std::string("init"));
const uint64_t kTagGlance = fnv1a64(std::string("glance"));
const uint64_t kTagDropout = fnv1a64(std::string("dropout"));
const uint64_t kTagBatch = fnv1a64(std::string("batch"));

std::string g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void check_keys(const nlohmann::json& j, const std::string& section,
                std::initializer_list<const char*> allowed) {
  if (!j.is_object()) {
    throw std::invalid_argument("config: section '" + section + "' must be an object");
  }
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool known = false;
    for (const char* key : allowed) {
      if (it.key() == key) {
        known = true;
        break;
      }
    }
    if (!known) {
      throw std::invalid_argument("config: unknown key '" + section + "." + it.key() + "'");
    }
  }
}

template <typename T>
void read_field(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw std::runtime_error("write failed for " + path);
}

void require_file(const std::string& path, const std::string& what) {
  if (!fs::exists(path)) {
    throw std::invalid_argument(what + " not found: " + path +
                                " (run the generate step or fix the config)");
  }
}

bool valid_variant_name(const std::string& name) {
  if (name.empty()) return false;
  for (char c : name) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
                    c == '_' || c == '-' || c == '.';
    if (!ok) return false;
  }
  return true;
}

int exit_code_for(const std::exception& e, std::ostream& log) {
  log << "error: " << e.what() << "\n";
  if (dynamic_cast<const std::logic_error*>(&e) != nullptr) return 1;
  if (dynamic_cast<const nlohmann::json::exception*>(&e) != nullptr) return 1;
  return 2;
}

}  // namespace

ExperimentConfig config_from_json(const nlohmann::json& j) {
  check_keys(j, "<top>",
             {"out_dir", "data", "model", "policy", "curriculum", "training", "eval", "sweep",
              "_fingerprint"});
  ExperimentConfig c;
  read_field(j, "out_dir", c.out_dir);

  if (j.contains("data")) {
    const nlohmann::json& d = j.at("data");
    check_keys(d, "data",
               {"synthetic", "task", "eval_num_pairs", "eval_seed", "train_src", "train_tgt",
                "train_align", "eval_src", "eval_tgt", "eval_align", "min_freq"});
    read_field(d, "synthetic", c.data.synthetic);
    if (d.contains("task")) {
      const nlohmann::json& t = d.at("task");
      check_keys(t, "data.task",
                 {"kind", "delta", "window", "vocab_size", "min_len", "max_len", "seed",
                  "num_pairs"});
      std::string kind = to_string(c.data.task.kind);
      read_field(t, "kind", kind);
      c.data.task.kind = parse_task_kind(kind);
      read_field(t, "delta", c.data.task.delta);
      read_field(t, "window", c.data.task.window);
      read_field(t, "vocab_size", c.data.task.vocab_size);
      read_field(t, "min_len", c.data.task.min_len);
      read_field(t, "max_len", c.data.task.max_len);
      read_field(t, "seed", c.data.task.seed);
      read_field(t, "num_pairs", c.data.task.num_pairs);
    }
    read_field(d, "eval_num_pairs", c.data.eval_num_pairs);
    read_field(d, "eval_seed", c.data.eval_seed);
    read_field(d, "train_src", c.data.train_src);
    read_field(d, "train_tgt", c.data.train_tgt);
    read_field(d, "train_align", c.data.train_align);
    read_field(d, "eval_src", c.data.eval_src);
    read_field(d, "eval_tgt", c.data.eval_tgt);
    read_field(d, "eval_align", c.data.eval_align);
    read_field(d, "min_freq", c.data.min_freq);
  }

  if (j.contains("model")) {
    const nlohmann::json& m = j.at("model");
    check_keys(m, "model",
               {"d_model", "n_heads", "d_ff", "enc_layers", "dec_layers", "max_len", "dropout",
                "label_smoothing"});
    read_field(m, "d_model", c.model.d_model);
    read_field(m, "n_heads", c.model.n_heads);
    read_field(m, "d_ff", c.model.d_ff);
    read_field(m, "enc_layers", c.model.enc_layers);
    read_field(m, "dec_layers", c.model.dec_layers);
    read_field(m, "max_len", c.model.max_len);
    read_field(m, "dropout", c.model.dropout);
    read_field(m, "label_smoothing", c.model.label_smoothing);
  }

  if (j.contains("policy")) {
    const nlohmann::json& p = j.at("policy");
    check_keys(p, "policy", {"type", "k", "hmt_initial_read", "hmt_events"});
    read_field(p, "type", c.policy.type);
    read_field(p, "k", c.policy.k);
    read_field(p, "hmt_initial_read", c.policy.hmt_initial_read);
    read_field(p, "hmt_events", c.policy.hmt_events);
    if (c.policy.type != "wait_k" && c.policy.type != "hmt") {
      throw std::invalid_argument("config: policy.type must be 'wait_k' or 'hmt', got '" +
                                  c.policy.type + "'");
    }
    if (c.policy.type == "wait_k" && c.policy.k < 1) {
      throw std::invalid_argument("config: policy.k must be >= 1");
    }
    if (c.policy.type == "hmt" && (c.policy.hmt_initial_read < 1 || c.policy.hmt_events < 1)) {
      throw std::invalid_argument(
          "config: policy.hmt_initial_read and policy.hmt_events must be >= 1");
    }
  }

  if (j.contains("curriculum")) {
    const nlohmann::json& cur = j.at("curriculum");
    check_keys(cur, "curriculum", {"alpha_min", "decay_updates", "strategy", "constant_alpha"});
    read_field(cur, "alpha_min", c.curriculum.alpha_min);
    read_field(cur, "decay_updates", c.curriculum.decay_updates);
    read_field(cur, "strategy", c.curriculum.strategy);
    read_field(cur, "constant_alpha", c.curriculum.constant_alpha);
    parse_glance_strategy(c.curriculum.strategy);  // validates
  }

  if (!j.contains("training") || !j.at("training").contains("seed")) {
    throw std::invalid_argument("config: training.seed is mandatory");
  }
  {
    const nlohmann::json& t = j.at("training");
    check_keys(t, "training",
               {"steps", "batch_tokens", "lr", "warmup_steps", "grad_clip", "seed", "log_every"});
    read_field(t, "steps", c.training.steps);
    read_field(t, "batch_tokens", c.training.batch_tokens);
    read_field(t, "lr", c.training.lr);
    read_field(t, "warmup_steps", c.training.warmup_steps);
    read_field(t, "grad_clip", c.training.grad_clip);
    read_field(t, "seed", c.training.seed);
    read_field(t, "log_every", c.training.log_every);
    if (c.training.steps < 1) throw std::invalid_argument("config: training.steps must be >= 1");
    if (c.training.log_every < 1) {
      throw std::invalid_argument("config: training.log_every must be >= 1");
    }
  }

  if (j.contains("eval")) {
    const nlohmann::json& e = j.at("eval");
    check_keys(e, "eval", {"k_test", "max_output_len"});
    read_field(e, "k_test", c.eval.k_test);
    read_field(e, "max_output_len", c.eval.max_output_len);
    if (c.eval.k_test.empty()) throw std::invalid_argument("config: eval.k_test must be nonempty");
    for (int k : c.eval.k_test) {
      if (k < 1) throw std::invalid_argument("config: eval.k_test values must be >= 1");
    }
  }

  if (j.contains("sweep")) {
    const nlohmann::json& s = j.at("sweep");
    check_keys(s, "sweep", {"variants", "k_train", "workers", "force_plots"});
    if (s.contains("k_train")) {
      for (int k : s.at("k_train").get<std::vector<int>>()) {
        SweepVariant v;
        v.name = "k" + std::to_string(k);
        v.patch = nlohmann::json{{"policy", {{"type", "wait_k"}, {"k", k}}}};
        c.sweep.variants.push_back(std::move(v));
      }
    }
    if (s.contains("variants")) {
      for (const nlohmann::json& vj : s.at("variants")) {
        check_keys(vj, "sweep.variants[]", {"name", "patch"});
        SweepVariant v;
        v.name = vj.at("name").get<std::string>();
        v.patch = vj.value("patch", nlohmann::json::object());
        c.sweep.variants.push_back(std::move(v));
      }
    }
    read_field(s, "workers", c.sweep.workers);
    read_field(s, "force_plots", c.sweep.force_plots);
    if (c.sweep.workers < 1) throw std::invalid_argument("config: sweep.workers must be >= 1");
    for (size_t i = 0; i < c.sweep.variants.size(); ++i) {
      if (!valid_variant_name(c.sweep.variants[i].name)) {
        throw std::invalid_argument("config: sweep variant " + std::to_string(i) +
                                    " has an invalid name");
      }
      for (size_t p = 0; p < i; ++p) {
        if (c.sweep.variants[p].name == c.sweep.variants[i].name) {
          throw std::invalid_argument("config: duplicate sweep variant name '" +
                                      c.sweep.variants[i].name + "'");
        }
      }
    }
  }

  // vocab sizes are derived from the corpus at training time; validate the
  // configurable dimensions with stand-ins
  ModelConfig probe = c.model;
  probe.src_vocab = kNumReservedIds + 1;
  probe.tgt_vocab = kNumReservedIds + 1;
  probe.validate();
  return c;
}

nlohmann::json config_to_json(const ExperimentConfig& c) {
  nlohmann::json j;
  j["out_dir"] = c.out_dir;
  j["data"] = {{"synthetic", c.data.synthetic},
               {"task",
                {{"kind", to_string(c.data.task.kind)},
                 {"delta", c.data.task.delta},
                 {"window", c.data.task.window},
                 {"vocab_size", c.data.task.vocab_size},
                 {"min_len", c.data.task.min_len},
                 {"max_len", c.data.task.max_len},
                 {"seed", c.data.task.seed},
                 {"num_pairs", c.data.task.num_pairs}}},
               {"eval_num_pairs", c.data.eval_num_pairs},
               {"eval_seed", c.data.eval_seed},
               {"train_src", c.data.train_src},
               {"train_tgt", c.data.train_tgt},
               {"train_align", c.data.train_align},
               {"eval_src", c.data.eval_src},
               {"eval_tgt", c.data.eval_tgt},
               {"eval_align", c.data.eval_align},
               {"min_freq", c.data.min_freq}};
  j["model"] = {{"d_model", c.model.d_model},
                {"n_heads", c.model.n_heads},
                {"d_ff", c.model.d_ff},
                {"enc_layers", c.model.enc_layers},
                {"dec_layers", c.model.dec_layers},
                {"max_len", c.model.max_len},
                {"dropout", c.model.dropout},
                {"label_smoothing", c.model.label_smoothing}};
  j["policy"] = {{"type", c.policy.type},
                 {"k", c.policy.k},
                 {"hmt_initial_read", c.policy.hmt_initial_read},
                 {"hmt_events", c.policy.hmt_events}};
  j["curriculum"] = {{"alpha_min", c.curriculum.alpha_min},
                     {"decay_updates", c.curriculum.decay_updates},
                     {"strategy", c.curriculum.strategy},
                     {"constant_alpha", c.curriculum.constant_alpha}};
  j["training"] = {{"steps", c.training.steps},       {"batch_tokens", c.training.batch_tokens},
                   {"lr", c.training.lr},             {"warmup_steps", c.training.warmup_steps},
                   {"grad_clip", c.training.grad_clip}, {"seed", c.training.seed},
                   {"log_every", c.training.log_every}};
  j["eval"] = {{"k_test", c.eval.k_test}, {"max_output_len", c.eval.max_output_len}};
  nlohmann::json variants = nlohmann::json::array();
  for (const SweepVariant& v : c.sweep.variants) {
    variants.push_back({{"name", v.name}, {"patch", v.patch}});
  }
  j["sweep"] = {{"variants", variants},
                {"workers", c.sweep.workers},
                {"force_plots", c.sweep.force_plots}};
  return j;
}

std::string config_fingerprint(const ExperimentConfig& config) {
  nlohmann::json j = config_to_json(config);
  j.erase("out_dir");  // location-independent identity
  return to_hex(fnv1a64(j.dump()));
}

ExperimentConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("config: cannot open " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument("config: " + path + " is not valid JSON: " + e.what());
  }
  return config_from_json(j);
}

namespace {

void echo_config(const ExperimentConfig& cfg, const ArtifactPaths& paths) {
  nlohmann::json j = config_to_json(cfg);
  j["_fingerprint"] = config_fingerprint(cfg);
  write_text_file(paths.config_echo(), j.dump(2) + "\n");
}

TaskSpec eval_task_spec(const DataConfig& data) {
  TaskSpec spec = data.task;
  spec.seed = data.eval_seed != 0 ? data.eval_seed : data.task.seed + 1;
  spec.num_pairs = data.eval_num_pairs;
  return spec;
}

Corpus load_train_corpus(const ExperimentConfig& cfg) {
  const ArtifactPaths data_paths{cfg.corpus_dir()};
  std::string src = cfg.data.synthetic ? data_paths.train_src() : cfg.data.train_src;
  std::string tgt = cfg.data.synthetic ? data_paths.train_tgt() : cfg.data.train_tgt;
  std::string align = cfg.data.synthetic ? data_paths.train_align() : cfg.data.train_align;
  require_file(src, "training source corpus");
  require_file(tgt, "training target corpus");
  std::optional<std::string> align_opt;
  if (!align.empty()) {
    require_file(align, "training alignment file");
    align_opt = align;
  }
  return load_corpus(src, tgt, align_opt, cfg.data.min_freq);
}

Corpus load_eval_corpus(const ExperimentConfig& cfg, const Vocabulary& src_vocab,
                        const Vocabulary& tgt_vocab) {
  const ArtifactPaths data_paths{cfg.corpus_dir()};
  std::string src = cfg.data.synthetic ? data_paths.eval_src() : cfg.data.eval_src;
  std::string tgt = cfg.data.synthetic ? data_paths.eval_tgt() : cfg.data.eval_tgt;
  std::string align = cfg.data.synthetic ? data_paths.eval_align() : cfg.data.eval_align;
  require_file(src, "evaluation source corpus");
  require_file(tgt, "evaluation target corpus");
  std::optional<std::string> align_opt;
  if (!align.empty()) {
    require_file(align, "evaluation alignment file");
    align_opt = align;
  }
  Corpus corpus = load_corpus_with_vocab(src, tgt, align_opt, src_vocab, tgt_vocab);
  if (cfg.data.synthetic) {
    // synthetic eval data shares the generator's vocabulary; an unknown token
    // means the checkpoint belongs to a different task setup
    for (const ParallelPair& pair : corpus.pairs) {
      for (TokenId id : pair.src) {
        if (id == kUnkId) throw std::runtime_error("vocab mismatch: eval source token unknown to the checkpoint");
      }
      for (TokenId id : pair.tgt) {
        if (id == kUnkId) throw std::runtime_error("vocab mismatch: eval target token unknown to the checkpoint");
      }
    }
  }
  return corpus;
}

void validate_lengths(const Corpus& corpus, const ModelConfig& model) {
  for (size_t i = 0; i < corpus.pairs.size(); ++i) {
    const int src_len = static_cast<int>(corpus.pairs[i].src.size()) + 1;
    const int tgt_len = static_cast<int>(corpus.pairs[i].tgt.size()) + 1;
    if (src_len > model.max_len || tgt_len > model.max_len) {
      throw std::invalid_argument("pair " + std::to_string(i) + " needs " +
                                  std::to_string(std::max(src_len, tgt_len)) +
                                  " positions; raise model.max_len (" +
                                  std::to_string(model.max_len) + ")");
    }
  }
}

PolicyFn policy_fn_for(const PolicyConfig& policy) {
  if (policy.type == "hmt") {
    return make_hmt_policy_fn(policy.hmt_initial_read, policy.hmt_events);
  }
  return make_wait_k_policy_fn(policy.k);
}

}  // namespace

int run_generate(const ExperimentConfig& config, std::ostream& log) {
  try {
    if (!config.data.synthetic) {
      throw std::invalid_argument("generate requires data.synthetic = true");
    }
    const ArtifactPaths paths{config.out_dir};
    fs::create_directories(config.out_dir);

    const Corpus train = generate(config.data.task);
    write_corpus(train, paths.train_src(), paths.train_tgt(), paths.train_align());
    const Corpus eval = generate(eval_task_spec(config.data));
    write_corpus(eval, paths.eval_src(), paths.eval_tgt(), paths.eval_align());
    echo_config(config, paths);

    log << "generate: " << train.pairs.size() << " train pairs, " << eval.pairs.size()
        << " eval pairs (" << to_string(config.data.task.kind) << ", vocab "
        << config.data.task.vocab_size << ") -> " << config.out_dir << "\n";
    return 0;
  } catch (const std::exception& e) {
    return exit_code_for(e, log);
  }
}

int run_train(const ExperimentConfig& config, std::ostream& log) {
  try {
    const ArtifactPaths paths{config.out_dir};
    fs::create_directories(config.out_dir);
    const std::string hash = config_fingerprint(config);
    const uint64_t seed = config.training.seed;

    const Corpus corpus = load_train_corpus(config);
    if (corpus.pairs.empty()) throw std::invalid_argument("training corpus is empty");

    ModelConfig model = config.model;
    model.src_vocab = corpus.src_vocab.size();
    model.tgt_vocab = corpus.tgt_vocab.size();
    model.init_seed = mix_seed(seed, kTagInit);
    validate_lengths(corpus, model);

    OptimizerConfig opt;
    opt.lr = config.training.lr;
    opt.warmup_steps = config.training.warmup_steps;
    opt.grad_clip = config.training.grad_clip;

    CurriculumSchedule schedule;
    schedule.alpha_min = config.curriculum.alpha_min;
    schedule.decay_updates = config.curriculum.decay_updates;
    schedule.strategy = parse_glance_strategy(config.curriculum.strategy);
    schedule.constant_alpha = config.curriculum.constant_alpha;
    schedule.rng_seed = mix_seed(seed, kTagGlance);

    Trainer<double> trainer(init_params<double>(model), opt, schedule,
                            policy_fn_for(config.policy), mix_seed(seed, kTagDropout));

    const long steps = config.training.steps;
    std::vector<TrainLogRow> rows;
    // "last good" means the parameters that produced the most recent logged
    // finite loss; a post-update snapshot could already be poisoned
    ModelParams<double> last_good = trainer.params();
    long last_good_step = -1;
    std::string failure;

    long step = 0;
    for (uint64_t epoch = 0; step < steps && failure.empty(); ++epoch) {
      const std::vector<Batch> batches =
          make_batches(corpus, config.training.batch_tokens, mix_seed(mix_seed(seed, kTagBatch), epoch));
      for (const Batch& batch : batches) {
        if (step >= steps) break;
        const long this_step = trainer.update_count();
        const bool will_log =
            this_step % config.training.log_every == 0 || this_step == steps - 1;
        ModelParams<double> before;
        if (will_log) before = trainer.params();
        TrainLogRow row;
        try {
          row = trainer.train_step(corpus, batch);
        } catch (const std::exception& e) {
          failure = e.what();
          break;
        }
        if (!std::isfinite(row.loss)) {
          failure = "non-finite loss at step " + std::to_string(row.step);
          break;
        }
        if (will_log) {
          rows.push_back(row);
          last_good = std::move(before);
          last_good_step = row.step;
        }
        ++step;
      }
    }

    std::ostringstream csv;
    csv << "# simtlab train-log v1 config=" << hash << " seed=" << seed << "\n";
    csv << "step,loss,alpha\n";
    for (const TrainLogRow& row : rows) {
      csv << row.step << ',' << g17(row.loss) << ',' << g17(row.alpha) << "\n";
    }
    write_text_file(paths.train_log(), csv.str());
    echo_config(config, paths);

    if (!failure.empty()) {
      // retain the last checkpoint that logged a finite loss
      save_checkpoint(paths.checkpoint(), last_good, corpus.src_vocab, corpus.tgt_vocab, hash,
                      seed);
      log << "train: aborted (" << failure << "); checkpoint retained from step "
          << last_good_step << "\n";
      return 2;
    }

    save_checkpoint(paths.checkpoint(), trainer.params(), corpus.src_vocab, corpus.tgt_vocab,
                    hash, seed);
    log << "train: " << steps << " updates, final loss " << g17(rows.back().loss) << " -> "
        << paths.checkpoint() << "\n";
    return 0;
  } catch (const std::exception& e) {
    return exit_code_for(e, log);
  }
}

namespace {

std::vector<std::pair<int, EvalReport>> do_evaluate(const ExperimentConfig& config,
                                                    std::ostream& log) {
  const ArtifactPaths paths{config.out_dir};
  const std::string hash = config_fingerprint(config);
  const uint64_t seed = config.training.seed;

  require_file(paths.checkpoint(), "checkpoint");
  ModelParams<double> params;
  const CheckpointInfo info = load_checkpoint<double>(paths.checkpoint(), params);
  const Corpus corpus = load_eval_corpus(config, info.src_vocab, info.tgt_vocab);
  if (corpus.pairs.empty()) throw std::invalid_argument("evaluation corpus is empty");

  for (size_t i = 0; i < corpus.pairs.size(); ++i) {
    if (static_cast<int>(corpus.pairs[i].src.size()) + 1 > params.config.max_len) {
      throw std::runtime_error("eval pair " + std::to_string(i) +
                               " exceeds the checkpoint's max_len");
    }
  }
  int max_out = params.config.max_len - 1;
  if (config.eval.max_output_len > 0) max_out = std::min(max_out, config.eval.max_output_len);

  std::vector<std::pair<int, EvalReport>> reports;
  std::ostringstream csv;
  csv << "# simtlab eval v1 k_test=";
  for (size_t i = 0; i < config.eval.k_test.size(); ++i) {
    if (i) csv << ';';
    csv << config.eval.k_test[i];
  }
  csv << "\n" << EvalReport::csv_header() << "\n";

  for (int k : config.eval.k_test) {
    const std::vector<TranslationTrace> traces =
        batch_decode(params, corpus, wait_k_factory(k), max_out);
    const EvalReport report = evaluate_traces(traces, corpus, hash, seed);
    csv << report.csv_row() << "\n";
    write_text_file(paths.hyp(k), hypotheses_text(traces, corpus.tgt_vocab));
    write_text_file(paths.trace(k), traces_text(traces));
    char line[160];
    std::snprintf(line, sizeof(line), "evaluate: k=%d bleu=%.2f al=%.2f hr=%.4f\n", k,
                  report.bleu, report.al, report.hr);
    log << line;
    reports.emplace_back(k, report);
  }
  write_text_file(paths.eval_csv(), csv.str());
  echo_config(config, paths);
  return reports;
}

}  // namespace

int run_evaluate(const ExperimentConfig& config, std::ostream& log) {
  try {
    do_evaluate(config, log);
    return 0;
  } catch (const std::exception& e) {
    return exit_code_for(e, log);
  }
}

double teacher_forced_accuracy(const ModelParams<double>& params, const Corpus& corpus, int k) {
  if (corpus.pairs.empty()) throw std::invalid_argument("teacher_forced_accuracy: empty corpus");
  long correct = 0, total = 0;
  for (const ParallelPair& pair : corpus.pairs) {
    const ModelSequences seqs = frame_pair(pair);
    const int j_model = static_cast<int>(seqs.src.size());
    const int t_len = static_cast<int>(seqs.gold.size());
    const PolicyVector pol = wait_k_policy(k, t_len, j_model);
    AdjustedPolicy ap;
    ap.source_len = j_model;
    ap.base = pol;
    ap.g_hat = pol.g;
    ap.extra_positions.assign(pol.g.size(), {});
    const MaskSet mask = build_masks(ap, j_model, t_len, j_model, t_len);
    ForwardCache<double> cache;
    forward(params, seqs.src, seqs.tgt_in, mask, cache);
    for (int i = 0; i < t_len; ++i) {
      const double* row = cache.log_probs.row(i);
      TokenId best = 0;
      for (int c = 1; c < cache.log_probs.cols(); ++c) {
        if (row[c] > row[best]) best = c;
      }
      if (best == seqs.gold[i]) ++correct;
      ++total;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(total);
}

namespace {

struct SweepRow {
  std::string variant;
  int k_train = -1;
  int k_test = 0;
  bool ok = false;
  EvalReport report;
  std::string error;
};

std::string sweep_row_csv(const SweepRow& row) {
  std::ostringstream out;
  out << row.variant << ',' << row.k_train << ',' << row.k_test << ','
      << (row.ok ? "ok" : "failed") << ',' << row.report.csv_row();
  return out.str();
}

}  // namespace

int run_sweep(const ExperimentConfig& config, std::ostream& log) {
  try {
    const ArtifactPaths paths{config.out_dir};
    fs::create_directories(config.out_dir);
    if (config.sweep.variants.empty()) {
      throw std::invalid_argument("sweep: no variants configured (sweep.variants or sweep.k_train)");
    }
    const std::string base_hash = config_fingerprint(config);

    struct Cell {
      std::string name;
      ExperimentConfig cfg;
      bool config_ok = false;
      std::string error;
      std::vector<std::pair<int, EvalReport>> reports;
      std::string log_text;
    };
    std::vector<Cell> cells(config.sweep.variants.size());

    nlohmann::json base_json = config_to_json(config);
    base_json.erase("sweep");  // cells do not recurse
    for (size_t i = 0; i < cells.size(); ++i) {
      const SweepVariant& variant = config.sweep.variants[i];
      cells[i].name = variant.name;
      nlohmann::json cell_json = base_json;
      cell_json.merge_patch(variant.patch);
      try {
        cells[i].cfg = config_from_json(cell_json);
        cells[i].cfg.out_dir = paths.sweep_cell(variant.name);
        cells[i].cfg.data_dir = config.corpus_dir();
        cells[i].config_ok = true;
      } catch (const std::exception& e) {
        cells[i].error = std::string("config: ") + e.what();
      }
    }

    std::atomic<size_t> next{0};
    auto worker = [&cells, &next]() {
      for (size_t i = next.fetch_add(1); i < cells.size(); i = next.fetch_add(1)) {
        Cell& cell = cells[i];
        if (!cell.config_ok) continue;
        std::ostringstream cell_log;
        const int train_rc = run_train(cell.cfg, cell_log);
        if (train_rc != 0) {
          cell.error = "training failed (exit " + std::to_string(train_rc) + ")";
        } else {
          try {
            cell.reports = do_evaluate(cell.cfg, cell_log);
          } catch (const std::exception& e) {
            cell.error = std::string("evaluation failed: ") + e.what();
          }
        }
        cell.log_text = cell_log.str();
      }
    };
    const int worker_count =
        std::max(1, std::min<int>(config.sweep.workers, static_cast<int>(cells.size())));
    std::vector<std::thread> threads;
    threads.reserve(worker_count);
    for (int w = 0; w < worker_count; ++w) threads.emplace_back(worker);
    for (std::thread& t : threads) t.join();

    std::vector<SweepRow> rows;
    std::vector<std::string> failures;
    for (const Cell& cell : cells) {
      if (!cell.log_text.empty()) {
        std::istringstream lines(cell.log_text);
        std::string one;
        while (std::getline(lines, one)) log << "  [" << cell.name << "] " << one << "\n";
      }
      const int k_train = cell.config_ok && cell.cfg.policy.type == "wait_k" ? cell.cfg.policy.k : -1;
      if (!cell.error.empty()) {
        failures.push_back(cell.name + ": " + cell.error);
        const std::vector<int>& ks =
            cell.config_ok ? cell.cfg.eval.k_test : config.eval.k_test;
        for (int k : ks) {
          SweepRow row;
          row.variant = cell.name;
          row.k_train = k_train;
          row.k_test = k;
          row.ok = false;
          row.report.config_hash = cell.config_ok ? config_fingerprint(cell.cfg) : base_hash;
          row.report.seed = config.training.seed;
          row.error = cell.error;
          rows.push_back(std::move(row));
        }
        continue;
      }
      for (const auto& [k, report] : cell.reports) {
        SweepRow row;
        row.variant = cell.name;
        row.k_train = k_train;
        row.k_test = k;
        row.ok = true;
        row.report = report;
        rows.push_back(std::move(row));
      }
    }

    std::sort(rows.begin(), rows.end(), [](const SweepRow& a, const SweepRow& b) {
      if (a.variant != b.variant) return a.variant < b.variant;
      return a.k_test < b.k_test;
    });

    std::ostringstream csv;
    csv << "# simtlab sweep v1 config=" << base_hash << " seed=" << config.training.seed << "\n";
    csv << "variant,k_train,k_test,status," << EvalReport::csv_header() << "\n";
    for (const SweepRow& row : rows) csv << sweep_row_csv(row) << "\n";
    write_text_file(paths.sweep_csv(), csv.str());
    echo_config(config, paths);

    if (!failures.empty()) {
      std::string error_text;
      for (const std::string& f : failures) error_text += f + "\n";
      write_text_file(paths.sweep_errors(), error_text);
    }

    long ok_rows = 0;
    for (const SweepRow& row : rows) ok_rows += row.ok ? 1 : 0;
    if (ok_rows >= 2 || (config.sweep.force_plots && ok_rows >= 1)) {
      std::vector<PlotSeries> bleu_series, hr_series;
      for (const Cell& cell : cells) {
        if (!cell.error.empty() || cell.reports.empty()) continue;
        PlotSeries bleu{cell.name, {}}, hr{cell.name, {}};
        std::vector<std::pair<int, EvalReport>> sorted = cell.reports;
        std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) {
          return a.second.al < b.second.al;
        });
        for (const auto& [k, report] : sorted) {
          bleu.points.emplace_back(report.al, report.bleu);
          hr.points.emplace_back(report.al, report.hr);
        }
        bleu_series.push_back(std::move(bleu));
        hr_series.push_back(std::move(hr));
      }
      std::sort(bleu_series.begin(), bleu_series.end(),
                [](const PlotSeries& a, const PlotSeries& b) { return a.label < b.label; });
      std::sort(hr_series.begin(), hr_series.end(),
                [](const PlotSeries& a, const PlotSeries& b) { return a.label < b.label; });
      if (!bleu_series.empty()) {
        const std::string provenance = "config=" + base_hash + " seed=" +
                                       std::to_string(config.training.seed);
        write_text_file(paths.sweep_plot_bleu(),
                        svg_line_plot("Quality vs latency", "AL (tokens)", "BLEU", bleu_series,
                                      provenance));
        write_text_file(paths.sweep_plot_hr(),
                        svg_line_plot("Hallucination vs latency", "AL (tokens)", "HR", hr_series,
                                      provenance));
      }
    }

    log << "sweep: " << rows.size() << " rows (" << ok_rows << " ok) -> " << paths.sweep_csv()
        << "\n";
    return failures.empty() ? 0 : 3;
  } catch (const std::exception& e) {
    return exit_code_for(e, log);
  }
}

}  // namespace simt
