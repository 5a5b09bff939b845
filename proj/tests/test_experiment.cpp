#include "simt/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "simt/checkpoint.hpp"
#include "simt/decode.hpp"
#include "simt/metrics.hpp"

using namespace simt;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("simt_exp_" + std::to_string(::getpid()) + "_" + std::to_string(counter()++));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  std::string sub(const std::string& name) const { return (path / name).string(); }
  static int& counter() {
    static int c = 0;
    return c;
  }
};

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> lines;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  return lines;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) fields.push_back(field);
  return fields;
}

// Small but real end-to-end configuration: copy task, one layer each side.
nlohmann::json base_json(const std::string& out_dir) {
  return nlohmann::json{
      {"out_dir", out_dir},
      {"data",
       {{"synthetic", true},
        {"task",
         {{"kind", "copy"},
          {"vocab_size", 20},
          {"min_len", 3},
          {"max_len", 6},
          {"seed", 11},
          {"num_pairs", 40}}},
        {"eval_num_pairs", 12}}},
      {"model",
       {{"d_model", 16},
        {"n_heads", 2},
        {"d_ff", 24},
        {"enc_layers", 1},
        {"dec_layers", 1},
        {"max_len", 16},
        {"dropout", 0.0},
        {"label_smoothing", 0.0}}},
      {"policy", {{"type", "wait_k"}, {"k", 2}}},
      {"curriculum", {{"alpha_min", 0.05}, {"decay_updates", 8}}},
      {"training",
       {{"steps", 12}, {"batch_tokens", 128}, {"lr", 1e-3}, {"seed", 77}, {"log_every", 1}}},
      {"eval", {{"k_test", {1, 3}}, {"max_output_len", 8}}}};
}

ExperimentConfig make_ready(const TempDir& dir, const std::string& name = "a") {
  ExperimentConfig cfg = config_from_json(base_json(dir.sub(name)));
  std::ostringstream log;
  REQUIRE(run_generate(cfg, log) == 0);
  return cfg;
}

}  // namespace

TEST_CASE("experiment config: strict parsing") {
  SUBCASE("round-trips through json") {
    ExperimentConfig cfg = config_from_json(base_json("somewhere"));
    CHECK(cfg.out_dir == "somewhere");
    CHECK(cfg.data.task.kind == TaskKind::Copy);
    CHECK(cfg.training.seed == 77);
    CHECK(cfg.eval.k_test == std::vector<int>{1, 3});
    ExperimentConfig again = config_from_json(config_to_json(cfg));
    CHECK(config_to_json(again) == config_to_json(cfg));
  }

  SUBCASE("training.seed is mandatory") {
    nlohmann::json j = base_json("x");
    j["training"].erase("seed");
    CHECK_THROWS_WITH_AS(config_from_json(j), doctest::Contains("training.seed"),
                         std::invalid_argument);
    j.erase("training");
    CHECK_THROWS_AS(config_from_json(j), std::invalid_argument);
  }

  SUBCASE("unknown keys are rejected with their path") {
    nlohmann::json j = base_json("x");
    j["model"]["n_head"] = 4;  // typo
    CHECK_THROWS_WITH_AS(config_from_json(j), doctest::Contains("model.n_head"),
                         std::invalid_argument);
    nlohmann::json top = base_json("x");
    top["trainign"] = nlohmann::json::object();
    CHECK_THROWS_WITH_AS(config_from_json(top), doctest::Contains("trainign"),
                         std::invalid_argument);
  }

  SUBCASE("invalid values are config errors") {
    nlohmann::json j = base_json("x");
    j["policy"]["type"] = "adaptive";
    CHECK_THROWS_AS(config_from_json(j), std::invalid_argument);
    j = base_json("x");
    j["policy"]["k"] = 0;
    CHECK_THROWS_AS(config_from_json(j), std::invalid_argument);
    j = base_json("x");
    j["eval"]["k_test"] = nlohmann::json::array();
    CHECK_THROWS_AS(config_from_json(j), std::invalid_argument);
    j = base_json("x");
    j["model"]["d_model"] = 15;  // not divisible by n_heads
    CHECK_THROWS_AS(config_from_json(j), std::invalid_argument);
    j = base_json("x");
    j["curriculum"]["strategy"] = "psychic";
    CHECK_THROWS_AS(config_from_json(j), std::invalid_argument);
  }

  SUBCASE("fingerprint ignores location, tracks content") {
    ExperimentConfig a = config_from_json(base_json("dir_one"));
    ExperimentConfig b = config_from_json(base_json("dir_two"));
    b.data_dir = "elsewhere";
    CHECK(config_fingerprint(a) == config_fingerprint(b));
    ExperimentConfig c = a;
    c.training.seed = 78;
    CHECK(config_fingerprint(c) != config_fingerprint(a));
    ExperimentConfig d = a;
    d.policy.k = 3;
    CHECK(config_fingerprint(d) != config_fingerprint(a));
    CHECK(config_fingerprint(a).size() == 16);  // 64-bit hex
  }

  SUBCASE("load_config_file") {
    TempDir dir;
    const std::string path = dir.sub("cfg.json");
    {
      std::ofstream out(path);
      out << base_json(dir.sub("out")).dump(2);
    }
    ExperimentConfig cfg = load_config_file(path);
    CHECK(cfg.training.steps == 12);
    CHECK_THROWS_AS(load_config_file(dir.sub("missing.json")), std::invalid_argument);
    {
      std::ofstream out(path);
      out << "{ not json";
    }
    CHECK_THROWS_WITH_AS(load_config_file(path), doctest::Contains("not valid JSON"),
                         std::invalid_argument);
  }
}

TEST_CASE("run_generate writes a reproducible corpus") {
  TempDir dir;
  // out dir does not exist yet: created on demand (nested path)
  ExperimentConfig cfg = config_from_json(base_json(dir.sub("nested/out")));
  std::ostringstream log;
  REQUIRE(run_generate(cfg, log) == 0);

  const ArtifactPaths paths{cfg.out_dir};
  for (const std::string& p : {paths.train_src(), paths.train_tgt(), paths.train_align(),
                               paths.eval_src(), paths.eval_tgt(), paths.eval_align()}) {
    CHECK(fs::exists(p));
  }
  CHECK(lines_of(read_file(paths.train_src())).size() == 40);
  CHECK(lines_of(read_file(paths.train_tgt())).size() == 40);
  CHECK(lines_of(read_file(paths.train_align())).size() == 40);
  CHECK(lines_of(read_file(paths.eval_src())).size() == 12);
  CHECK(fs::exists(paths.config_echo()));

  SUBCASE("rerun into a fresh directory is byte-identical") {
    ExperimentConfig cfg2 = config_from_json(base_json(dir.sub("other")));
    std::ostringstream log2;
    REQUIRE(run_generate(cfg2, log2) == 0);
    const ArtifactPaths paths2{cfg2.out_dir};
    CHECK(read_file(paths2.train_src()) == read_file(paths.train_src()));
    CHECK(read_file(paths2.train_tgt()) == read_file(paths.train_tgt()));
    CHECK(read_file(paths2.train_align()) == read_file(paths.train_align()));
    CHECK(read_file(paths2.eval_src()) == read_file(paths.eval_src()));
  }

  SUBCASE("external data mode cannot generate") {
    ExperimentConfig ext = cfg;
    ext.data.synthetic = false;
    std::ostringstream elog;
    CHECK(run_generate(ext, elog) == 1);
    CHECK(elog.str().find("synthetic") != std::string::npos);
  }
}

TEST_CASE("run_train produces a checkpoint and an exact curriculum log") {
  TempDir dir;
  ExperimentConfig cfg = make_ready(dir);
  std::ostringstream log;
  REQUIRE(run_train(cfg, log) == 0);

  const ArtifactPaths paths{cfg.out_dir};
  REQUIRE(fs::exists(paths.checkpoint()));
  REQUIRE(fs::exists(paths.train_log()));

  const std::vector<std::string> lines = lines_of(read_file(paths.train_log()));
  REQUIRE(lines.size() == 2 + 12);  // comment + header + one row per step (log_every=1)
  CHECK(lines[0] == "# simtlab train-log v1 config=" + config_fingerprint(cfg) + " seed=77");
  CHECK(lines[1] == "step,loss,alpha");

  SUBCASE("alpha column matches the decay law exactly") {
    for (size_t i = 2; i < lines.size(); ++i) {
      const std::vector<std::string> fields = split_csv(lines[i]);
      REQUIRE(fields.size() == 3);
      const long step = std::stol(fields[0]);
      CHECK(step == static_cast<long>(i) - 2);
      const double loss = std::strtod(fields[1].c_str(), nullptr);
      CHECK(std::isfinite(loss));
      CHECK(loss > 0.0);
      const double alpha = std::strtod(fields[2].c_str(), nullptr);
      const double progress = 1.0 - static_cast<double>(step) / 8.0;
      const double expect = 0.05 + (1.0 - 0.05) * std::max(progress, 0.0);
      CHECK(alpha == expect);  // %.17g round-trips doubles exactly
    }
    // endpoints: full glancing at step 0, floor at and past decay_updates
    CHECK(std::strtod(split_csv(lines[2])[2].c_str(), nullptr) == 1.0);
    CHECK(std::strtod(split_csv(lines.back())[2].c_str(), nullptr) == 0.05);
  }

  SUBCASE("checkpoint carries the fingerprint and seed") {
    const CheckpointInfo info = read_checkpoint_info(paths.checkpoint());
    CHECK(info.config_hash == config_fingerprint(cfg));
    CHECK(info.seed == 77);
    CHECK(info.config.src_vocab >= 4);
  }

  SUBCASE("same seed, fresh directory: byte-identical checkpoint and log") {
    ExperimentConfig cfg2 = make_ready(dir, "b");
    std::ostringstream log2;
    REQUIRE(run_train(cfg2, log2) == 0);
    const ArtifactPaths paths2{cfg2.out_dir};
    CHECK(read_file(paths2.checkpoint()) == read_file(paths.checkpoint()));
    CHECK(read_file(paths2.train_log()) == read_file(paths.train_log()));
  }

  SUBCASE("constant-alpha ablation pins the column at alpha_min") {
    ExperimentConfig flat = make_ready(dir, "flat");
    flat.curriculum.constant_alpha = true;
    std::ostringstream flog;
    REQUIRE(run_train(flat, flog) == 0);
    const std::vector<std::string> flat_lines =
        lines_of(read_file(ArtifactPaths{flat.out_dir}.train_log()));
    for (size_t i = 2; i < flat_lines.size(); ++i) {
      CHECK(std::strtod(split_csv(flat_lines[i])[2].c_str(), nullptr) == 0.05);
    }
  }
}

TEST_CASE("run_train error handling") {
  TempDir dir;

  SUBCASE("missing corpus is a config error") {
    ExperimentConfig cfg = config_from_json(base_json(dir.sub("never_generated")));
    std::ostringstream log;
    CHECK(run_train(cfg, log) == 1);
    CHECK(log.str().find("not found") != std::string::npos);
  }

  SUBCASE("sequence longer than model.max_len is a config error") {
    ExperimentConfig cfg = make_ready(dir);
    cfg.model.max_len = 5;  // raw sources go up to 6 (+<eos> = 7)
    std::ostringstream log;
    CHECK(run_train(cfg, log) == 1);
    CHECK(log.str().find("max_len") != std::string::npos);
  }

  SUBCASE("divergence aborts with exit 2 and keeps the last good checkpoint") {
    ExperimentConfig cfg = make_ready(dir, "diverge");
    cfg.training.lr = 1e300;  // one update overflows the next forward pass
    cfg.training.steps = 40;
    std::ostringstream log;
    CHECK(run_train(cfg, log) == 2);
    const ArtifactPaths paths{cfg.out_dir};
    CHECK(fs::exists(paths.checkpoint()));  // last good parameters retained
    ModelParams<double> params;
    CHECK_NOTHROW(load_checkpoint<double>(paths.checkpoint(), params));
    params.for_each_parameter([](const std::string&, const Matrix<double>& m) {
      for (long i = 0; i < m.size(); ++i) CHECK(std::isfinite(m.data()[i]));
    });
  }
}

TEST_CASE("run_evaluate emits the pinned CSV and is deterministic") {
  TempDir dir;
  ExperimentConfig cfg = make_ready(dir);
  std::ostringstream log;
  REQUIRE(run_train(cfg, log) == 0);
  REQUIRE(run_evaluate(cfg, log) == 0);

  const ArtifactPaths paths{cfg.out_dir};
  const std::vector<std::string> lines = lines_of(read_file(paths.eval_csv()));
  REQUIRE(lines.size() == 2 + 2);  // comment + header + one row per k_test
  CHECK(lines[0].rfind("# simtlab eval v1", 0) == 0);
  CHECK(lines[1] == "bleu,al,hr,sentences,tokens,config_hash,seed");
  for (size_t i = 2; i < lines.size(); ++i) {
    const std::vector<std::string> fields = split_csv(lines[i]);
    REQUIRE(fields.size() == 7);
    CHECK(fields[3] == "12");  // sentences
    CHECK(fields[5] == config_fingerprint(cfg));
    CHECK(fields[6] == "77");
  }
  for (int k : {1, 3}) {
    CHECK(fs::exists(paths.hyp(k)));
    CHECK(fs::exists(paths.trace(k)));
    const std::vector<std::string> trace_lines = lines_of(read_file(paths.trace(k)));
    REQUIRE(trace_lines.size() == 12);
    for (const std::string& line : trace_lines) CHECK_NOTHROW(parse_trace_line(line));
  }

  SUBCASE("second invocation reproduces every artifact byte for byte") {
    const std::string csv_before = read_file(paths.eval_csv());
    const std::string hyp_before = read_file(paths.hyp(1));
    const std::string trace_before = read_file(paths.trace(3));
    std::ostringstream log2;
    REQUIRE(run_evaluate(cfg, log2) == 0);
    CHECK(read_file(paths.eval_csv()) == csv_before);
    CHECK(read_file(paths.hyp(1)) == hyp_before);
    CHECK(read_file(paths.trace(3)) == trace_before);
  }

  SUBCASE("k_test at or beyond the longest source saturates to full-sentence reads") {
    ExperimentConfig sat = cfg;
    sat.eval.k_test = {99};
    std::ostringstream slog;
    REQUIRE(run_evaluate(sat, slog) == 0);
    const std::vector<std::string> trace_lines = lines_of(read_file(paths.trace(99)));
    REQUIRE(trace_lines.size() == 12);
    for (const std::string& line : trace_lines) {
      const TranslationTrace trace = parse_trace_line(line);
      for (int reads : trace.reads_at_write) CHECK(reads == trace.source_len);
      if (!trace.output.empty()) {
        // AL under saturation equals the full-sentence AL for this sentence
        TranslationTrace full = trace;
        std::fill(full.reads_at_write.begin(), full.reads_at_write.end(), trace.source_len);
        CHECK(average_lagging(trace, trace.source_len,
                              static_cast<int>(trace.output.size())) ==
              average_lagging(full, full.source_len, static_cast<int>(full.output.size())));
      }
    }
  }

  SUBCASE("missing checkpoint is a config error") {
    ExperimentConfig fresh = config_from_json(base_json(dir.sub("no_ckpt")));
    std::ostringstream elog;
    CHECK(run_evaluate(fresh, elog) == 1);
  }

  SUBCASE("vocabulary mismatch is a runtime failure") {
    // corpus regenerated with a larger vocabulary: tokens unknown to the checkpoint
    nlohmann::json big = base_json(dir.sub("bigvocab"));
    big["data"]["task"]["vocab_size"] = 60;
    ExperimentConfig big_cfg = config_from_json(big);
    std::ostringstream glog;
    REQUIRE(run_generate(big_cfg, glog) == 0);
    ExperimentConfig mismatched = cfg;
    mismatched.data_dir = big_cfg.out_dir;  // eval corpus from the 60-token task
    std::ostringstream elog;
    CHECK(run_evaluate(mismatched, elog) == 2);
    CHECK(elog.str().find("vocab mismatch") != std::string::npos);
  }
}

TEST_CASE("teacher_forced_accuracy improves with training") {
  TempDir dir;
  ExperimentConfig cfg = make_ready(dir);
  cfg.training.steps = 120;
  cfg.training.lr = 3e-3;
  cfg.training.log_every = 40;
  std::ostringstream log;
  REQUIRE(run_train(cfg, log) == 0);

  const ArtifactPaths paths{cfg.out_dir};
  ModelParams<double> trained;
  const CheckpointInfo info = load_checkpoint<double>(paths.checkpoint(), trained);
  const Corpus corpus = load_corpus_with_vocab(paths.eval_src(), paths.eval_tgt(), std::nullopt,
                                               info.src_vocab, info.tgt_vocab);

  ModelConfig untrained_cfg = trained.config;
  untrained_cfg.init_seed = 12345;
  const ModelParams<double> untrained = init_params<double>(untrained_cfg);

  const double before = teacher_forced_accuracy(untrained, corpus, 3);
  const double after = teacher_forced_accuracy(trained, corpus, 3);
  CHECK(before >= 0.0);
  CHECK(before <= 1.0);
  CHECK(after > before);
  CHECK(after > 0.2);  // copy task trains fast even at this scale

  CHECK_THROWS_AS(teacher_forced_accuracy(trained, Corpus{}, 3), std::invalid_argument);
}

TEST_CASE("run_sweep covers the grid, isolates failures, reproduces") {
  TempDir dir;
  nlohmann::json j = base_json(dir.sub("grid"));
  j["training"]["steps"] = 8;
  j["eval"]["k_test"] = {1, 3, 5};
  j["sweep"] = {{"k_train", {1, 3, 5}}, {"workers", 2}};
  ExperimentConfig cfg = config_from_json(j);
  std::ostringstream log;
  REQUIRE(run_generate(cfg, log) == 0);
  REQUIRE(run_sweep(cfg, log) == 0);

  const ArtifactPaths paths{cfg.out_dir};
  const std::vector<std::string> lines = lines_of(read_file(paths.sweep_csv()));
  REQUIRE(lines.size() == 2 + 9);  // comment + header + 3x3 grid
  CHECK(lines[0].rfind("# simtlab sweep v1 config=", 0) == 0);
  CHECK(lines[1] == "variant,k_train,k_test,status,bleu,al,hr,sentences,tokens,config_hash,seed");

  std::vector<std::pair<std::string, std::string>> order;
  for (size_t i = 2; i < lines.size(); ++i) {
    const std::vector<std::string> fields = split_csv(lines[i]);
    REQUIRE(fields.size() == 11);
    CHECK(fields[3] == "ok");
    CHECK(fields[0] == "k" + fields[1]);  // shorthand variants named after k_train
    order.emplace_back(fields[0], fields[2]);
  }
  CHECK(std::is_sorted(order.begin(), order.end()));
  // distinct variants carry distinct fingerprints
  CHECK(split_csv(lines[2])[9] != split_csv(lines[5])[9]);

  SUBCASE("per-cell artifacts exist") {
    for (const std::string& name : {"k1", "k3", "k5"}) {
      const ArtifactPaths cell{paths.sweep_cell(name)};
      CHECK(fs::exists(cell.checkpoint()));
      CHECK(fs::exists(cell.train_log()));
      CHECK(fs::exists(cell.eval_csv()));
    }
  }

  SUBCASE("plots accompany multi-row sweeps") {
    CHECK(fs::exists(paths.sweep_plot_bleu()));
    CHECK(fs::exists(paths.sweep_plot_hr()));
    const std::string svg = read_file(paths.sweep_plot_bleu());
    CHECK(svg.find("<svg") != std::string::npos);
    CHECK(svg.find("BLEU") != std::string::npos);
  }

  SUBCASE("rerun reproduces the CSV byte for byte") {
    const std::string before = read_file(paths.sweep_csv());
    const std::string cell_csv_before = read_file(ArtifactPaths{paths.sweep_cell("k3")}.eval_csv());
    std::ostringstream log2;
    REQUIRE(run_sweep(cfg, log2) == 0);
    CHECK(read_file(paths.sweep_csv()) == before);
    CHECK(read_file(ArtifactPaths{paths.sweep_cell("k3")}.eval_csv()) == cell_csv_before);
  }
}

TEST_CASE("run_sweep partial failure semantics") {
  TempDir dir;
  nlohmann::json j = base_json(dir.sub("grid"));
  j["training"]["steps"] = 8;
  j["eval"]["k_test"] = {1};
  j["sweep"] = {{"variants",
                 {{{"name", "good"}, {"patch", {{"policy", {{"k", 1}}}}}},
                  {{"name", "bad"}, {"patch", {{"model", {{"d_model", 15}}}}}}}},
                {"workers", 2}};
  ExperimentConfig cfg = config_from_json(j);
  std::ostringstream log;
  REQUIRE(run_generate(cfg, log) == 0);
  CHECK(run_sweep(cfg, log) == 3);

  const ArtifactPaths paths{cfg.out_dir};
  const std::vector<std::string> lines = lines_of(read_file(paths.sweep_csv()));
  REQUIRE(lines.size() == 2 + 2);
  const std::vector<std::string> bad_row = split_csv(lines[2]);
  CHECK(bad_row[0] == "bad");
  CHECK(bad_row[3] == "failed");
  const std::vector<std::string> good_row = split_csv(lines[3]);
  CHECK(good_row[0] == "good");
  CHECK(good_row[3] == "ok");
  CHECK(fs::exists(ArtifactPaths{paths.sweep_cell("good")}.checkpoint()));
  REQUIRE(fs::exists(paths.sweep_errors()));
  CHECK(read_file(paths.sweep_errors()).find("bad:") != std::string::npos);

  SUBCASE("single-row sweep omits plots unless forced") {
    nlohmann::json one = base_json(dir.sub("single"));
    one["training"]["steps"] = 8;
    one["eval"]["k_test"] = {1};
    one["sweep"] = {{"k_train", {2}}};
    ExperimentConfig single = config_from_json(one);
    std::ostringstream slog;
    REQUIRE(run_generate(single, slog) == 0);
    REQUIRE(run_sweep(single, slog) == 0);
    const ArtifactPaths spaths{single.out_dir};
    CHECK(lines_of(read_file(spaths.sweep_csv())).size() == 2 + 1);
    CHECK_FALSE(fs::exists(spaths.sweep_plot_bleu()));

    single.sweep.force_plots = true;
    std::ostringstream flog;
    REQUIRE(run_sweep(single, flog) == 0);
    CHECK(fs::exists(spaths.sweep_plot_bleu()));
    CHECK(fs::exists(spaths.sweep_plot_hr()));
  }

  SUBCASE("duplicate variant names are config errors") {
    nlohmann::json dup = base_json(dir.sub("dup"));
    dup["sweep"] = {{"variants",
                     {{{"name", "same"}, {"patch", nlohmann::json::object()}},
                      {{"name", "same"}, {"patch", nlohmann::json::object()}}}}};
    CHECK_THROWS_WITH_AS(config_from_json(dup), doctest::Contains("duplicate"),
                         std::invalid_argument);
  }
}
