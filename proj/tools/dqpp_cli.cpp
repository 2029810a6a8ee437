// dqpp: query performance prediction workbench.
//
// Subcommands compose the pipeline: featurize -> split -> train -> predict
// -> evaluate, plus unsupervised baselines and hyper-parameter sweeps.
// Exit codes: 0 success, 1 usage, 2 data error, 3 numeric failure.

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "dqpp/baselines.hpp"
#include "dqpp/config.hpp"
#include "dqpp/convnet.hpp"
#include "dqpp/error.hpp"
#include "dqpp/eval.hpp"
#include "dqpp/interaction.hpp"
#include "dqpp/ir_data.hpp"
#include "dqpp/manifest.hpp"
#include "dqpp/reshape.hpp"
#include "dqpp/training.hpp"

namespace fs = std::filesystem;
using namespace dqpp;

namespace {

// ---------------------------------------------------------------------
// Shared option bundles
// ---------------------------------------------------------------------

struct RawInputOpts {
  std::string run_path, qrels_path, queries_path, corpus_path, emb_path;
  std::string stats_cache;
};

struct TensorOpts {
  InteractionConfig cfg;
};

struct NetOpts {
  int c1 = 8, c2 = 16, hidden = 128;
  double dropout = 0.2;
};

void add_tensor_flags(CLI::App* cmd, TensorOpts& opts) {
  cmd->add_option("--t", opts.cfg.t, "top-ranked documents per query");
  cmd->add_option("--b", opts.cfg.b, "bottom-ranked documents per query");
  cmd->add_option("--n-limit", opts.cfg.n_limit,
                  "rank anchor for the bottom block");
  cmd->add_option("--p", opts.cfg.p, "similarity histogram bins");
  cmd->add_option("--k", opts.cfg.k, "query term limit (rows per matrix)");
  cmd->add_flag("--idf,!--no-idf", opts.cfg.idf_on,
                "weight histogram rows by idf");
}

void add_net_flags(CLI::App* cmd, NetOpts& opts) {
  cmd->add_option("--c1", opts.c1, "first conv layer channels");
  cmd->add_option("--c2", opts.c2, "second conv layer channels");
  cmd->add_option("--hidden", opts.hidden, "fully connected layer width");
  cmd->add_option("--dropout", opts.dropout, "dropout rate on branch features");
}

// ---------------------------------------------------------------------
// Input loading and tensor construction
// ---------------------------------------------------------------------

struct LoadedInputs {
  RunFile runs;
  QuerySet queries;
  DocCorpus corpus;
  EmbeddingTable emb;
  CollectionStats stats;
};

CollectionStats stats_for(const DocCorpus& corpus, const std::string& cache) {
  if (!cache.empty() && fs::exists(cache)) return load_stats(cache);
  CollectionStats stats = compute_collection_stats(corpus);
  if (!cache.empty()) save_stats(stats, cache);
  return stats;
}

LoadedInputs load_raw_inputs(const RawInputOpts& opts) {
  LoadedInputs in;
  in.runs = parse_run(opts.run_path);
  in.queries = parse_queries(opts.queries_path);
  in.corpus = parse_corpus(opts.corpus_path);
  in.emb = load_embeddings(opts.emb_path);
  in.stats = stats_for(in.corpus, opts.stats_cache);
  return in;
}

std::size_t worker_count(std::size_t jobs) {
  unsigned n = std::thread::hardware_concurrency();
  if (n == 0) n = 1;
  if (const char* env = std::getenv("DQPP_THREADS")) {
    char* end = nullptr;
    long v = std::strtol(env, &end, 10);
    if (end != env && v >= 1) n = static_cast<unsigned>(v);
  }
  return std::max<std::size_t>(1, std::min<std::size_t>(n, jobs));
}

// Builds one tensor per id; pure per-query work distributed over
// DQPP_THREADS workers.
TensorMap build_tensor_map(const std::vector<std::string>& ids,
                           const LoadedInputs& in, const InteractionConfig& cfg) {
  std::vector<InteractionTensor> built(ids.size());
  std::atomic<std::size_t> next{0};
  std::mutex err_mu;
  std::exception_ptr error;
  auto work = [&]() {
    for (;;) {
      std::size_t i = next.fetch_add(1);
      if (i >= ids.size()) return;
      try {
        const std::string& qid = ids[i];
        auto q = in.queries.find(qid);
        if (q == in.queries.end())
          throw DataError("query " + qid + " is not in the queries file");
        built[i] = build_tensor(q->second, in.runs.at(qid), in.corpus, in.emb,
                                cfg, in.stats);
      } catch (...) {
        std::scoped_lock lock(err_mu);
        if (!error) error = std::current_exception();
        return;
      }
    }
  };
  std::vector<std::thread> threads;
  for (std::size_t w = 0; w < worker_count(ids.size()); ++w)
    threads.emplace_back(work);
  for (auto& t : threads) t.join();
  if (error) std::rethrow_exception(error);
  TensorMap map;
  for (std::size_t i = 0; i < ids.size(); ++i)
    map[ids[i]] = std::move(built[i]);
  return map;
}

// ---------------------------------------------------------------------
// Tensor directory (featurize output)
// ---------------------------------------------------------------------

void write_tensor_dir(const TensorMap& tensors, const InteractionConfig& cfg,
                      const std::string& dir) {
  fs::create_directories(dir);
  std::ofstream manifest(fs::path(dir) / "manifest.tsv");
  if (!manifest) throw UsageError("cannot write manifest in " + dir);
  manifest << "query_id\tfile\tt\tb\tp\tk\tidf\n";
  for (const auto& [qid, tensor] : tensors) {
    std::string file = qid + ".itn";
    save_tensor(tensor, (fs::path(dir) / file).string());
    manifest << qid << '\t' << file << '\t' << cfg.t << '\t' << cfg.b << '\t'
             << cfg.p << '\t' << cfg.k << '\t' << (cfg.idf_on ? 1 : 0) << '\n';
  }
}

struct TensorDir {
  TensorMap tensors;
  InteractionConfig cfg;
};

TensorDir read_tensor_dir(const std::string& dir) {
  auto manifest_path = fs::path(dir) / "manifest.tsv";
  std::ifstream manifest(manifest_path);
  if (!manifest)
    throw UsageError("cannot open manifest: " + manifest_path.string());
  TensorDir out;
  std::string line;
  std::size_t lineno = 0;
  bool first = true;
  while (std::getline(manifest, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.rfind("query_id\t", 0) == 0) continue;
    std::vector<std::string> fields;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= line.size(); ++i)
      if (i == line.size() || line[i] == '\t') {
        fields.push_back(line.substr(start, i - start));
        start = i + 1;
      }
    if (fields.size() != 7)
      throw ParseError(manifest_path.string(), lineno,
                       "expected 7 tab-separated fields");
    InteractionConfig cfg;
    cfg.t = std::stoi(fields[2]);
    cfg.b = std::stoi(fields[3]);
    cfg.p = std::stoi(fields[4]);
    cfg.k = std::stoi(fields[5]);
    cfg.idf_on = fields[6] == "1";
    if (first) {
      out.cfg = cfg;
      first = false;
    } else if (cfg.t != out.cfg.t || cfg.b != out.cfg.b || cfg.p != out.cfg.p ||
               cfg.k != out.cfg.k || cfg.idf_on != out.cfg.idf_on) {
      throw ParseError(manifest_path.string(), lineno,
                       "inconsistent tensor configuration");
    }
    out.tensors[fields[0]] =
        load_tensor((fs::path(dir) / fields[1]).string(), fields[0]);
  }
  if (out.tensors.empty())
    throw DataError("tensor directory " + dir + " is empty");
  return out;
}

// ---------------------------------------------------------------------
// Evaluation helpers
// ---------------------------------------------------------------------

std::vector<std::string> usable_ids(const std::vector<std::string>& ids,
                                    const QueryEffectiveness& eff,
                                    const TensorMap* tensors) {
  std::vector<std::string> out;
  for (const auto& qid : ids)
    if (eff.has(qid) && (!tensors || tensors->count(qid))) out.push_back(qid);
  return out;
}

std::uint64_t eval_pair_seed(std::uint64_t plan_seed, std::size_t split_index) {
  return plan_seed ^ (0x45564131ull + split_index);
}

std::string format_double(double d) { return dqpp::detail::format_double(d); }

void write_loss_log(const TrainResult& result, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw UsageError("cannot write file: " + path);
  bool pointwise = !result.epoch_hinge_indicator.empty();
  os << "epoch\tmean_loss" << (pointwise ? "\thinge_indicator" : "") << '\n';
  for (std::size_t e = 0; e < result.epoch_loss.size(); ++e) {
    os << (e + 1) << '\t' << format_double(result.epoch_loss[e]);
    if (pointwise) os << '\t' << format_double(result.epoch_hinge_indicator[e]);
    os << '\n';
  }
}

void print_report(const EvalReport& report, std::ostream& os) {
  auto row = [&](const char* name, const MetricSummary& s) {
    os << name << ": mean " << s.mean << "  stddev " << s.stddev << "  over "
       << s.per_split.size() << " split(s)";
    if (!s.skipped.empty()) os << "  (" << s.skipped.size() << " skipped)";
    os << "\n  per-split:";
    for (double v : s.per_split) os << ' ' << v;
    os << '\n';
  };
  os << "target metric: " << report.metric_name << '\n';
  if (report.accuracy) row("pairwise accuracy", *report.accuracy);
  if (report.pearson) row("pearson rho", *report.pearson);
  if (report.kendall) row("kendall tau", *report.kendall);
}

std::string model_file(const std::string& dir, std::size_t index) {
  char name[32];
  std::snprintf(name, sizeof(name), "model_%03zu.ckpt", index);
  return (fs::path(dir) / name).string();
}

// ---------------------------------------------------------------------
// Subcommand state
// ---------------------------------------------------------------------

struct FeaturizeArgs {
  RawInputOpts raw;
  TensorOpts tensor;
  std::string out_dir;
};

struct SplitArgs {
  std::string run_path, qrels_path, metric = "ap100", out_path;
  int n_splits = 30;
  double ratio = 0.5;
  std::uint64_t seed = 42;
};

struct TrainArgs {
  RawInputOpts raw;
  TensorOpts tensor;
  NetOpts net;
  std::string tensors_dir;
  std::string metric = "ap100", objective = "pairwise", reshape = "sdmq";
  int epochs = 20, batch = 32;
  double lr = 1e-3;
  std::uint64_t seed = 42;
  bool filter_ties = false;
  std::string split_path;
  int split_index = -1;
  std::string out_path;
};

struct PredictArgs {
  std::string model_path, tensors_dir;
  RawInputOpts raw;
  std::string split_path;
  int split_index = 0;
  std::string out_path;
};

struct EvaluateArgs {
  std::string models_path, tensors_dir;
  RawInputOpts raw;
  std::string split_path;
  int split_index = -1;
  bool allow_skip = false;
  std::string out_path;
};

struct BaselineArgs {
  std::string method = "nqc";
  std::string run_path, qrels_path, queries_path;
  std::string metric = "ap100";
  std::vector<int> grid = default_cutoff_grid();
  std::string split_path;
  std::string out_dir;
};

struct SweepArgs {
  RawInputOpts raw;
  NetOpts net;
  std::string metric = "ap100", reshape = "sdmq";
  std::vector<std::string> tb_cells{"10:10"};
  std::vector<int> p_grid{30};
  int k = 5, n_limit = 100;
  bool idf_on = true;
  int epochs = 20, batch = 32;
  double lr = 1e-3;
  std::uint64_t seed = 42;
  std::string split_path;
  int max_splits = -1;
  std::string out_path;
};

// ---------------------------------------------------------------------
// featurize
// ---------------------------------------------------------------------

int cmd_featurize(const FeaturizeArgs& args) {
  LoadedInputs in = load_raw_inputs(args.raw);
  std::vector<std::string> ids;
  for (const auto& [qid, rl] : in.runs) ids.push_back(qid);
  TensorMap tensors = build_tensor_map(ids, in, args.tensor.cfg);
  write_tensor_dir(tensors, args.tensor.cfg, args.out_dir);
  std::cerr << "featurize: wrote " << tensors.size() << " tensors to "
            << args.out_dir << '\n';
  return 0;
}

// ---------------------------------------------------------------------
// split
// ---------------------------------------------------------------------

int cmd_split(const SplitArgs& args) {
  RunFile runs = parse_run(args.run_path);
  Qrels qrels = parse_qrels(args.qrels_path);
  QueryEffectiveness eff =
      compute_effectiveness(runs, qrels, parse_target_metric(args.metric));
  std::vector<std::string> ids;
  for (const auto& [qid, value] : eff.values) ids.push_back(qid);
  SplitPlan plan = make_splits(ids, args.n_splits, args.ratio, args.seed);
  save_split_plan(plan, args.out_path);
  std::cerr << "split: " << plan.splits.size() << " partitions of "
            << ids.size() << " usable queries -> " << args.out_path << '\n';
  return 0;
}

// ---------------------------------------------------------------------
// train
// ---------------------------------------------------------------------

TrainConfig config_from_args(const TrainArgs& args,
                             const InteractionConfig& interaction) {
  TrainConfig cfg;
  cfg.interaction = interaction;
  cfg.mode = parse_reshape_mode(args.reshape);
  cfg.objective = parse_objective(args.objective);
  cfg.metric = parse_target_metric(args.metric);
  cfg.epochs = args.epochs;
  cfg.lr = args.lr;
  cfg.batch_size = args.batch;
  cfg.dropout = args.net.dropout;
  cfg.seed = args.seed;
  cfg.conv1_channels = args.net.c1;
  cfg.conv2_channels = args.net.c2;
  cfg.hidden = args.net.hidden;
  cfg.filter_ties = args.filter_ties;
  return cfg;
}

ExperimentManifest manifest_for(const TrainArgs& args, const TrainConfig& cfg) {
  ExperimentManifest m;
  m.config = cfg;
  m.inputs["run"] = args.raw.run_path;
  m.inputs["qrels"] = args.raw.qrels_path;
  if (!args.tensors_dir.empty()) {
    m.inputs["tensor_manifest"] =
        (fs::path(args.tensors_dir) / "manifest.tsv").string();
  } else {
    m.inputs["queries"] = args.raw.queries_path;
    m.inputs["corpus"] = args.raw.corpus_path;
    m.inputs["embeddings"] = args.raw.emb_path;
  }
  m.split_plan_path = args.split_path;
  m.split_index = args.split_index;
  return m;
}

int cmd_train(const TrainArgs& args) {
  RunFile runs = parse_run(args.raw.run_path);
  Qrels qrels = parse_qrels(args.raw.qrels_path);
  QueryEffectiveness eff =
      compute_effectiveness(runs, qrels, parse_target_metric(args.metric));

  TensorMap tensors;
  InteractionConfig interaction = args.tensor.cfg;
  if (!args.tensors_dir.empty()) {
    TensorDir dir = read_tensor_dir(args.tensors_dir);
    tensors = std::move(dir.tensors);
    interaction.t = dir.cfg.t;
    interaction.b = dir.cfg.b;
    interaction.p = dir.cfg.p;
    interaction.k = dir.cfg.k;
    interaction.idf_on = dir.cfg.idf_on;
  } else {
    if (args.raw.queries_path.empty() || args.raw.corpus_path.empty() ||
        args.raw.emb_path.empty())
      throw UsageError(
          "train needs either --tensors or --queries/--corpus/--embeddings");
    LoadedInputs in = load_raw_inputs(args.raw);
    std::vector<std::string> ids;
    for (const auto& [qid, value] : eff.values)
      if (in.queries.count(qid)) ids.push_back(qid);
    tensors = build_tensor_map(ids, in, interaction);
  }

  TrainConfig cfg = config_from_args(args, interaction);

  if (!args.split_path.empty() && args.split_index < 0) {
    // one model per split
    SplitPlan plan = load_split_plan(args.split_path);
    fs::create_directories(args.out_path);
    for (std::size_t s = 0; s < plan.splits.size(); ++s) {
      TrainResult result = train(cfg, tensors, eff, plan.splits[s]);
      save_checkpoint({cfg, result.params}, model_file(args.out_path, s));
      char loss_name[32];
      std::snprintf(loss_name, sizeof(loss_name), "loss_%03zu.tsv", s);
      write_loss_log(result, (fs::path(args.out_path) / loss_name).string());
      std::cerr << "train: split " << s << " final loss "
                << (result.epoch_loss.empty() ? 0.0 : result.epoch_loss.back())
                << '\n';
    }
    save_manifest(manifest_for(args, cfg),
                  (fs::path(args.out_path) / "manifest.json").string());
    return 0;
  }

  Split split;
  if (!args.split_path.empty()) {
    SplitPlan plan = load_split_plan(args.split_path);
    if (args.split_index >= static_cast<int>(plan.splits.size()))
      throw UsageError("--split-index out of range (plan has " +
                       std::to_string(plan.splits.size()) + " splits)");
    split = plan.splits[args.split_index];
  } else {
    for (const auto& [qid, tensor] : tensors)
      if (eff.has(qid)) split.train_ids.push_back(qid);
  }
  TrainResult result = train(cfg, tensors, eff, split);
  save_checkpoint({cfg, result.params}, args.out_path);
  write_loss_log(result, args.out_path + ".loss.tsv");
  save_manifest(manifest_for(args, cfg), args.out_path + ".manifest.json");
  std::cerr << "train: " << result.epoch_loss.size() << " epochs, final loss "
            << (result.epoch_loss.empty() ? 0.0 : result.epoch_loss.back())
            << " -> " << args.out_path << '\n';
  return 0;
}

// ---------------------------------------------------------------------
// predict / evaluate
// ---------------------------------------------------------------------

TensorMap tensors_for_model(const TrainedModel& model,
                            const std::string& tensors_dir,
                            const RawInputOpts& raw,
                            const QueryEffectiveness& eff) {
  if (!tensors_dir.empty()) {
    TensorDir dir = read_tensor_dir(tensors_dir);
    const InteractionConfig& a = dir.cfg;
    const InteractionConfig& b = model.config.interaction;
    if (a.t != b.t || a.b != b.b || a.p != b.p || a.k != b.k ||
        a.idf_on != b.idf_on)
      throw DataError(
          "tensor directory configuration does not match the checkpoint");
    return std::move(dir.tensors);
  }
  if (raw.queries_path.empty() || raw.corpus_path.empty() ||
      raw.emb_path.empty())
    throw UsageError(
        "need either --tensors or --queries/--corpus/--embeddings");
  LoadedInputs in = load_raw_inputs(raw);
  std::vector<std::string> ids;
  for (const auto& [qid, value] : eff.values)
    if (in.queries.count(qid)) ids.push_back(qid);
  return build_tensor_map(ids, in, model.config.interaction);
}

SplitPredictions predict_split(const TrainedModel& model,
                               const TensorMap& tensors,
                               const QueryEffectiveness& eff,
                               const Split& split, std::uint64_t pair_seed) {
  SplitPredictions preds;
  std::vector<std::string> test = usable_ids(split.test_ids, eff, &tensors);
  if (model.config.objective == Objective::pairwise) {
    if (test.size() < 2)
      throw DataError("fewer than 2 usable test queries in split");
    Rng rng(pair_seed);
    for (const PairInstance& pi : make_pairs(test, eff, rng))
      preds.pairs.push_back({pi.qa_id, pi.qb_id,
                             predict_pair(model, tensors, pi.qa_id, pi.qb_id),
                             pi.label});
  } else {
    for (const std::string& qid : test)
      preds.scores[qid] = predict_score(model, tensors, qid);
  }
  return preds;
}

int cmd_predict(const PredictArgs& args) {
  TrainedModel model = load_checkpoint(args.model_path);
  RunFile runs = parse_run(args.raw.run_path);
  Qrels qrels = parse_qrels(args.raw.qrels_path);
  QueryEffectiveness eff =
      compute_effectiveness(runs, qrels, model.config.metric);
  TensorMap tensors = tensors_for_model(model, args.tensors_dir, args.raw, eff);

  Split split;
  std::uint64_t pair_seed = model.config.seed;
  if (!args.split_path.empty()) {
    SplitPlan plan = load_split_plan(args.split_path);
    if (args.split_index < 0 ||
        args.split_index >= static_cast<int>(plan.splits.size()))
      throw UsageError("--split-index out of range");
    split = plan.splits[args.split_index];
    pair_seed = eval_pair_seed(plan.seed, args.split_index);
  } else {
    for (const auto& [qid, tensor] : tensors) split.test_ids.push_back(qid);
  }

  SplitPredictions preds = predict_split(model, tensors, eff, split, pair_seed);
  std::ofstream os(args.out_path);
  if (!os) throw UsageError("cannot write file: " + args.out_path);
  if (model.config.objective == Objective::pairwise) {
    os << "qa\tqb\tyhat\tlabel\n";
    for (const PairPrediction& pp : preds.pairs)
      os << pp.qa_id << '\t' << pp.qb_id << '\t' << format_double(pp.yhat)
         << '\t' << pp.label << '\n';
    std::cerr << "predict: " << preds.pairs.size() << " pairs -> "
              << args.out_path << '\n';
  } else {
    os << "query_id\tscore\n";
    for (const auto& [qid, score] : preds.scores)
      os << qid << '\t' << format_double(score) << '\n';
    std::cerr << "predict: " << preds.scores.size() << " scores -> "
              << args.out_path << '\n';
  }
  return 0;
}

int cmd_evaluate(const EvaluateArgs& args) {
  SplitPlan plan = load_split_plan(args.split_path);
  bool models_is_dir = fs::is_directory(args.models_path);
  if (!models_is_dir && args.split_index < 0 && plan.splits.size() > 1)
    throw UsageError(
        "--models is a single checkpoint; pass --split-index to pick its split");

  // restrict the plan when evaluating a single split
  std::vector<std::size_t> split_indices;
  if (args.split_index >= 0) {
    if (args.split_index >= static_cast<int>(plan.splits.size()))
      throw UsageError("--split-index out of range");
    split_indices.push_back(args.split_index);
  } else {
    for (std::size_t s = 0; s < plan.splits.size(); ++s)
      split_indices.push_back(s);
  }

  TrainedModel first = load_checkpoint(
      models_is_dir ? model_file(args.models_path, split_indices.front())
                    : args.models_path);
  RunFile runs = parse_run(args.raw.run_path);
  Qrels qrels = parse_qrels(args.raw.qrels_path);
  QueryEffectiveness eff =
      compute_effectiveness(runs, qrels, first.config.metric);
  TensorMap tensors = tensors_for_model(first, args.tensors_dir, args.raw, eff);

  SplitPlan sub_plan;
  sub_plan.seed = plan.seed;
  sub_plan.ratio = plan.ratio;
  std::vector<SplitPredictions> preds;
  for (std::size_t s : split_indices) {
    TrainedModel model =
        models_is_dir ? load_checkpoint(model_file(args.models_path, s)) : first;
    sub_plan.splits.push_back(plan.splits[s]);
    preds.push_back(predict_split(model, tensors, eff, plan.splits[s],
                                  eval_pair_seed(plan.seed, s)));
  }

  EvalReport report = cross_val_evaluate(sub_plan, preds, eff, args.allow_skip);
  print_report(report, std::cout);
  if (!args.out_path.empty()) {
    std::ofstream os(args.out_path);
    if (!os) throw UsageError("cannot write file: " + args.out_path);
    os << eval_report_to_json(report).dump(2) << '\n';
  }
  return 0;
}

// ---------------------------------------------------------------------
// baseline
// ---------------------------------------------------------------------

int cmd_baseline(const BaselineArgs& args) {
  BaselineMethod method = parse_baseline_method(args.method);
  RunFile runs = parse_run(args.run_path);
  Qrels qrels = parse_qrels(args.qrels_path);
  QueryEffectiveness eff =
      compute_effectiveness(runs, qrels, parse_target_metric(args.metric));
  QuerySet queries;
  if (!args.queries_path.empty()) queries = parse_queries(args.queries_path);
  if (method == BaselineMethod::wig && queries.empty())
    throw UsageError("wig needs --queries for the query-length normalizer");
  if (args.grid.empty()) throw UsageError("empty cutoff grid");

  std::vector<std::string> ids;
  for (const auto& [qid, value] : eff.values)
    if (runs.count(qid)) ids.push_back(qid);
  if (ids.size() < 2) throw DataError("fewer than 2 usable queries");

  auto query_len = [&](const std::string& qid) -> std::size_t {
    auto it = queries.find(qid);
    return it == queries.end() ? 1
                               : std::max<std::size_t>(1, it->second.terms.size());
  };

  fs::create_directories(args.out_dir);
  {
    std::ofstream os(fs::path(args.out_dir) / "scores.tsv");
    if (!os) throw UsageError("cannot write scores.tsv in " + args.out_dir);
    os << "query_id";
    for (int m : args.grid) os << "\tM" << m;
    os << '\n';
    for (const std::string& qid : ids) {
      os << qid;
      for (int m : args.grid)
        os << '\t'
           << format_double(
                  baseline_score(method, runs.at(qid), m, query_len(qid)));
      os << '\n';
    }
  }

  nlohmann::json report{{"method", to_string(method)},
                        {"metric", eff.metric_name},
                        {"grid", args.grid}};
  if (!args.split_path.empty()) {
    SplitPlan plan = load_split_plan(args.split_path);
    std::vector<SplitPredictions> preds;
    std::vector<int> tuned;
    for (std::size_t s = 0; s < plan.splits.size(); ++s) {
      std::vector<std::string> train = usable_ids(plan.splits[s].train_ids, eff,
                                                  nullptr);
      int best =
          tune_cutoff(method, runs, eff, queries, train, args.grid);
      tuned.push_back(best);
      SplitPredictions sp;
      std::vector<std::string> test;
      for (const std::string& qid : plan.splits[s].test_ids)
        if (eff.has(qid) && runs.count(qid)) test.push_back(qid);
      for (const std::string& qid : test)
        sp.scores[qid] =
            baseline_score(method, runs.at(qid), best, query_len(qid));
      // binary order predictions for the accuracy column
      if (test.size() >= 2) {
        Rng rng(eval_pair_seed(plan.seed, s));
        for (const PairInstance& pi : make_pairs(test, eff, rng))
          sp.pairs.push_back(
              {pi.qa_id, pi.qb_id,
               sp.scores[pi.qa_id] > sp.scores[pi.qb_id] ? 1.0 : 0.0,
               pi.label});
      }
      preds.push_back(std::move(sp));
    }
    EvalReport eval = cross_val_evaluate(plan, preds, eff, true);
    print_report(eval, std::cout);
    report["tuned_cutoffs"] = tuned;
    report["evaluation"] = eval_report_to_json(eval);
  } else {
    int best = tune_cutoff(method, runs, eff, queries, ids, args.grid);
    report["tuned_cutoff"] = best;
    std::cout << "tuned cutoff M = " << best << " over " << ids.size()
              << " queries\n";
  }
  std::ofstream os(fs::path(args.out_dir) / "report.json");
  if (!os) throw UsageError("cannot write report.json in " + args.out_dir);
  os << report.dump(2) << '\n';
  return 0;
}

// ---------------------------------------------------------------------
// sweep
// ---------------------------------------------------------------------

std::pair<int, int> parse_tb_cell(const std::string& cell) {
  auto colon = cell.find(':');
  if (colon == std::string::npos)
    throw UsageError("bad --tb cell '" + cell + "', expected t:b");
  try {
    int t = std::stoi(cell.substr(0, colon));
    int b = std::stoi(cell.substr(colon + 1));
    if (t < 0 || b < 0) throw UsageError("negative --tb cell " + cell);
    return {t, b};
  } catch (const std::logic_error&) {
    throw UsageError("bad --tb cell '" + cell + "', expected t:b");
  }
}

int cmd_sweep(const SweepArgs& args) {
  LoadedInputs in = load_raw_inputs(args.raw);
  Qrels qrels = parse_qrels(args.raw.qrels_path);
  QueryEffectiveness eff =
      compute_effectiveness(in.runs, qrels, parse_target_metric(args.metric));
  SplitPlan plan = load_split_plan(args.split_path);
  std::size_t n_splits = plan.splits.size();
  if (args.max_splits > 0)
    n_splits = std::min<std::size_t>(n_splits, args.max_splits);

  std::ofstream os(args.out_path);
  if (!os) throw UsageError("cannot write file: " + args.out_path);
  os << "t\tb\tp\tsplits\tmean_accuracy\tstddev\n";

  for (const std::string& cell : args.tb_cells) {
    auto [t, b] = parse_tb_cell(cell);
    for (int p : args.p_grid) {
      TrainConfig cfg;
      cfg.interaction = {t, b, args.n_limit, p, args.k, args.idf_on};
      cfg.mode = parse_reshape_mode(args.reshape);
      cfg.objective = Objective::pairwise;
      cfg.metric = parse_target_metric(args.metric);
      cfg.epochs = args.epochs;
      cfg.lr = args.lr;
      cfg.batch_size = args.batch;
      cfg.dropout = args.net.dropout;
      cfg.seed = args.seed;
      cfg.conv1_channels = args.net.c1;
      cfg.conv2_channels = args.net.c2;
      cfg.hidden = args.net.hidden;

      const bool ablation = t + b == 0;
      TensorMap tensors;
      if (!ablation) {
        std::vector<std::string> ids;
        for (const auto& [qid, value] : eff.values)
          if (in.queries.count(qid)) ids.push_back(qid);
        tensors = build_tensor_map(ids, in, cfg.interaction);
      }

      std::vector<double> accs;
      for (std::size_t s = 0; s < n_splits; ++s) {
        const Split& split = plan.splits[s];
        std::vector<double> yhats;
        std::vector<int> labels;
        if (ablation) {
          TrainResult result = train_query_ablation(cfg, in.queries, in.emb,
                                                    in.stats, eff, split);
          TrainedModel model{cfg, result.params};
          std::vector<std::string> test;
          for (const std::string& qid : split.test_ids)
            if (eff.has(qid) && in.queries.count(qid)) test.push_back(qid);
          if (test.size() < 2)
            throw DataError("fewer than 2 usable test queries in split " +
                            std::to_string(s));
          Rng rng(eval_pair_seed(plan.seed, s));
          for (const PairInstance& pi : make_pairs(test, eff, rng)) {
            yhats.push_back(predict_pair_ablation(model, in.queries, in.emb,
                                                  in.stats, pi.qa_id, pi.qb_id));
            labels.push_back(pi.label);
          }
        } else {
          TrainResult result = train(cfg, tensors, eff, split);
          TrainedModel model{cfg, result.params};
          SplitPredictions sp = predict_split(model, tensors, eff, split,
                                              eval_pair_seed(plan.seed, s));
          for (const PairPrediction& pp : sp.pairs) {
            yhats.push_back(pp.yhat);
            labels.push_back(pp.label);
          }
        }
        accs.push_back(pairwise_accuracy(yhats, labels));
      }
      double mean = 0.0;
      for (double a : accs) mean += a;
      mean /= static_cast<double>(accs.size());
      double ss = 0.0;
      for (double a : accs) ss += (a - mean) * (a - mean);
      double sd = std::sqrt(ss / static_cast<double>(accs.size()));
      os << t << '\t' << b << '\t' << p << '\t' << accs.size() << '\t'
         << format_double(mean) << '\t' << format_double(sd) << '\n';
      os.flush();
      std::cerr << "sweep: t=" << t << " b=" << b << " p=" << p
                << " accuracy " << mean << '\n';
    }
  }

  ExperimentManifest manifest;
  manifest.inputs["run"] = args.raw.run_path;
  manifest.inputs["qrels"] = args.raw.qrels_path;
  manifest.inputs["queries"] = args.raw.queries_path;
  manifest.inputs["corpus"] = args.raw.corpus_path;
  manifest.inputs["embeddings"] = args.raw.emb_path;
  manifest.config.mode = parse_reshape_mode(args.reshape);
  manifest.config.metric = parse_target_metric(args.metric);
  manifest.config.epochs = args.epochs;
  manifest.config.lr = args.lr;
  manifest.config.batch_size = args.batch;
  manifest.config.seed = args.seed;
  manifest.split_plan_path = args.split_path;
  save_manifest(manifest, args.out_path + ".manifest.json");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"query performance prediction workbench"};
  app.require_subcommand(1);

  FeaturizeArgs featurize_args;
  auto* featurize = app.add_subcommand(
      "featurize", "build interaction tensors from a run and corpus");
  featurize->add_option("--run,--runs", featurize_args.raw.run_path, "TREC run file")
      ->required();
  featurize->add_option("--queries", featurize_args.raw.queries_path,
                        "query TSV (id<TAB>text)")
      ->required();
  featurize->add_option("--corpus", featurize_args.raw.corpus_path,
                        "corpus TSV (id<TAB>text)")
      ->required();
  featurize->add_option("--embeddings", featurize_args.raw.emb_path,
                        "word2vec text embeddings")
      ->required();
  featurize->add_option("--stats-cache", featurize_args.raw.stats_cache,
                        "collection stats cache (loaded if present, else written)");
  add_tensor_flags(featurize, featurize_args.tensor);
  featurize->add_option("--out", featurize_args.out_dir, "output directory")
      ->required();

  SplitArgs split_args;
  auto* split = app.add_subcommand("split", "emit a cross-validation split plan");
  split->add_option("--run,--runs", split_args.run_path, "TREC run file")->required();
  split->add_option("--qrels", split_args.qrels_path, "TREC qrels")->required();
  split->add_option("--metric", split_args.metric, "ap100 or ndcg20");
  split->add_option("--n-splits", split_args.n_splits, "number of partitions");
  split->add_option("--ratio", split_args.ratio, "train-side fraction");
  split->add_option("--seed", split_args.seed, "rng seed");
  split->add_option("--out", split_args.out_path, "plan JSON path")->required();

  TrainArgs train_args;
  auto* train_cmd = app.add_subcommand("train", "train a comparator model");
  train_cmd->add_option("--run,--runs", train_args.raw.run_path, "TREC run file")
      ->required();
  train_cmd->add_option("--qrels", train_args.raw.qrels_path, "TREC qrels")
      ->required();
  train_cmd->add_option("--tensors", train_args.tensors_dir,
                        "featurize output directory (alternative to raw inputs)");
  train_cmd->add_option("--queries", train_args.raw.queries_path, "query TSV");
  train_cmd->add_option("--corpus", train_args.raw.corpus_path, "corpus TSV");
  train_cmd->add_option("--embeddings", train_args.raw.emb_path,
                        "word2vec text embeddings");
  train_cmd->add_option("--stats-cache", train_args.raw.stats_cache,
                        "collection stats cache");
  add_tensor_flags(train_cmd, train_args.tensor);
  add_net_flags(train_cmd, train_args.net);
  train_cmd->add_option("--metric", train_args.metric, "ap100 or ndcg20");
  train_cmd->add_option("--objective", train_args.objective,
                        "pairwise or pointwise");
  train_cmd->add_option("--reshape", train_args.reshape,
                        "mdmq, sdmq, mdsq or sdsq");
  train_cmd->add_option("--epochs", train_args.epochs, "training epochs");
  train_cmd->add_option("--lr", train_args.lr, "learning rate");
  train_cmd->add_option("--batch", train_args.batch, "minibatch size");
  train_cmd->add_option("--seed", train_args.seed, "rng seed");
  train_cmd->add_flag("--filter-ties", train_args.filter_ties,
                      "drop equal-metric pairs from training");
  train_cmd->add_option("--split", train_args.split_path, "split plan JSON");
  train_cmd->add_option("--split-index", train_args.split_index,
                        "train on one split only (default: all splits)");
  train_cmd->add_option("--out", train_args.out_path,
                        "checkpoint path (or directory when training all splits)")
      ->required();

  PredictArgs predict_args;
  auto* predict = app.add_subcommand("predict", "emit model predictions");
  predict->add_option("--model", predict_args.model_path, "checkpoint")
      ->required();
  predict->add_option("--run,--runs", predict_args.raw.run_path, "TREC run file")
      ->required();
  predict->add_option("--qrels", predict_args.raw.qrels_path, "TREC qrels")
      ->required();
  predict->add_option("--tensors", predict_args.tensors_dir,
                      "featurize output directory");
  predict->add_option("--queries", predict_args.raw.queries_path, "query TSV");
  predict->add_option("--corpus", predict_args.raw.corpus_path, "corpus TSV");
  predict->add_option("--embeddings", predict_args.raw.emb_path,
                      "word2vec text embeddings");
  predict->add_option("--stats-cache", predict_args.raw.stats_cache,
                      "collection stats cache");
  predict->add_option("--split", predict_args.split_path, "split plan JSON");
  predict->add_option("--split-index", predict_args.split_index,
                      "which split's test side to predict");
  predict->add_option("--out", predict_args.out_path, "output TSV")->required();

  EvaluateArgs evaluate_args;
  auto* evaluate = app.add_subcommand(
      "evaluate", "cross-validated evaluation of trained models");
  evaluate->add_option("--models", evaluate_args.models_path,
                       "checkpoint directory from train, or a single checkpoint")
      ->required();
  evaluate->add_option("--run,--runs", evaluate_args.raw.run_path, "TREC run file")
      ->required();
  evaluate->add_option("--qrels", evaluate_args.raw.qrels_path, "TREC qrels")
      ->required();
  evaluate->add_option("--split", evaluate_args.split_path, "split plan JSON")
      ->required();
  evaluate->add_option("--split-index", evaluate_args.split_index,
                       "evaluate a single split");
  evaluate->add_option("--tensors", evaluate_args.tensors_dir,
                       "featurize output directory");
  evaluate->add_option("--queries", evaluate_args.raw.queries_path, "query TSV");
  evaluate->add_option("--corpus", evaluate_args.raw.corpus_path, "corpus TSV");
  evaluate->add_option("--embeddings", evaluate_args.raw.emb_path,
                       "word2vec text embeddings");
  evaluate->add_option("--stats-cache", evaluate_args.raw.stats_cache,
                       "collection stats cache");
  evaluate->add_flag("--allow-skip", evaluate_args.allow_skip,
                     "skip splits with undefined correlations instead of failing");
  evaluate->add_option("--out", evaluate_args.out_path, "report JSON path");

  BaselineArgs baseline_args;
  auto* baseline = app.add_subcommand(
      "baseline", "unsupervised score-distribution predictors (nqc, wig)");
  baseline->add_option("--method", baseline_args.method, "nqc or wig")
      ->required();
  baseline->add_option("--run,--runs", baseline_args.run_path, "TREC run file")
      ->required();
  baseline->add_option("--qrels", baseline_args.qrels_path, "TREC qrels")
      ->required();
  baseline->add_option("--queries", baseline_args.queries_path,
                       "query TSV (required for wig)");
  baseline->add_option("--metric", baseline_args.metric, "ap100 or ndcg20");
  baseline->add_option("--grid", baseline_args.grid,
                       "cutoff grid for tuning")
      ->delimiter(',');
  baseline->add_option("--split", baseline_args.split_path,
                       "split plan JSON (per-split tuning and evaluation)");
  baseline->add_option("--out", baseline_args.out_dir, "output directory")
      ->required();

  SweepArgs sweep_args;
  auto* sweep = app.add_subcommand(
      "sweep", "pairwise accuracy across a (t,b) x p grid");
  sweep->add_option("--run,--runs", sweep_args.raw.run_path, "TREC run file")
      ->required();
  sweep->add_option("--qrels", sweep_args.raw.qrels_path, "TREC qrels")
      ->required();
  sweep->add_option("--queries", sweep_args.raw.queries_path, "query TSV")
      ->required();
  sweep->add_option("--corpus", sweep_args.raw.corpus_path, "corpus TSV")
      ->required();
  sweep->add_option("--embeddings", sweep_args.raw.emb_path,
                    "word2vec text embeddings")
      ->required();
  sweep->add_option("--stats-cache", sweep_args.raw.stats_cache,
                    "collection stats cache");
  sweep->add_option("--metric", sweep_args.metric, "ap100 or ndcg20");
  sweep->add_option("--reshape", sweep_args.reshape, "reshaping mode");
  sweep->add_option("--tb", sweep_args.tb_cells,
                    "t:b cells, e.g. 0:0,5:5,10:10 (0:0 uses query-only interactions)")
      ->delimiter(',');
  sweep->add_option("--p-grid", sweep_args.p_grid, "histogram bin counts")
      ->delimiter(',');
  sweep->add_option("--k", sweep_args.k, "query term limit");
  sweep->add_option("--n-limit", sweep_args.n_limit, "bottom anchor");
  sweep->add_flag("--idf,!--no-idf", sweep_args.idf_on, "idf weighting");
  sweep->add_option("--epochs", sweep_args.epochs, "training epochs");
  sweep->add_option("--lr", sweep_args.lr, "learning rate");
  sweep->add_option("--batch", sweep_args.batch, "minibatch size");
  sweep->add_option("--seed", sweep_args.seed, "rng seed");
  add_net_flags(sweep, sweep_args.net);
  sweep->add_option("--split", sweep_args.split_path, "split plan JSON")
      ->required();
  sweep->add_option("--max-splits", sweep_args.max_splits,
                    "cap the number of splits per cell");
  sweep->add_option("--out", sweep_args.out_path, "output TSV")->required();

  try {
    app.parse(argc, argv);
    if (featurize->parsed()) return cmd_featurize(featurize_args);
    if (split->parsed()) return cmd_split(split_args);
    if (train_cmd->parsed()) return cmd_train(train_args);
    if (predict->parsed()) return cmd_predict(predict_args);
    if (evaluate->parsed()) return cmd_evaluate(evaluate_args);
    if (baseline->parsed()) return cmd_baseline(baseline_args);
    if (sweep->parsed()) return cmd_sweep(sweep_args);
    return 1;
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 1;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return 3;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
}
