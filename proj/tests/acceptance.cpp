// Acceptance suite: one pass/fail line per criterion, nonzero exit when any
// criterion fails. Runs against the library plus the CLI binary and bundled
// toy fixture:
//
//   dqpp_acceptance --cli <path-to-dqpp> --fixture <data/toy> --workdir <dir>

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "dqpp/baselines.hpp"
#include "dqpp/convnet.hpp"
#include "dqpp/eval.hpp"
#include "dqpp/interaction.hpp"
#include "dqpp/ir_data.hpp"
#include "dqpp/reshape.hpp"
#include "dqpp/training.hpp"
#include "testutil.hpp"

namespace fs = std::filesystem;
using namespace dqpp;
using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

int g_failures = 0;

void criterion(int number, const std::string& name,
               const std::function<Outcome()>& body) {
  Outcome outcome;
  try {
    outcome = body();
  } catch (const std::exception& e) {
    outcome = {false, std::string("exception: ") + e.what()};
  }
  if (!outcome.pass) ++g_failures;
  std::cout << (outcome.pass ? "PASS" : "FAIL") << " criterion " << number
            << ": " << name;
  if (!outcome.detail.empty()) std::cout << " (" << outcome.detail << ")";
  std::cout << std::endl;
}

std::string fmt(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

// ---------------------------------------------------------------------
// Synthetic task shared by criteria 6, 7 and 10: the planted per-query
// quality drives both the comparison labels and the tensor signature
// (top-slab mass concentrated in the high-similarity bins).
// ---------------------------------------------------------------------

struct SyntheticTask {
  TensorMap tensors;
  QueryEffectiveness eff;
  std::vector<std::string> ids;
};

SyntheticTask make_synthetic_task(int n, std::size_t m, std::size_t k,
                                  std::size_t p, std::uint64_t seed,
                                  bool permute_labels) {
  SyntheticTask task;
  task.eff.metric_name = "AP@100";
  Rng rng(seed);
  std::vector<double> quality(n);
  for (double& q : quality) q = next_uniform(rng);
  std::vector<double> label_quality = quality;
  if (permute_labels) {
    // decouples labels from the tensor signature while keeping the
    // comparisons transitive
    Rng prng(seed ^ 0xabcdefull);
    for (std::size_t i = label_quality.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(next_uniform(prng) * i);
      if (j >= i) j = i - 1;
      std::swap(label_quality[i - 1], label_quality[j]);
    }
  }
  for (int qi = 0; qi < n; ++qi) {
    std::string qid = "q" + std::to_string(10000 + qi);
    double u = quality[qi];
    Tensor3 t(m, k, p);
    for (std::size_t j = 0; j < k; ++j) {
      t.at(0, j, p - 1) = u + 0.05 * next_uniform(rng);
      t.at(0, j, p - 2) = 0.5 * u + 0.05 * next_uniform(rng);
      t.at(0, j, 0) = (1.0 - u) + 0.05 * next_uniform(rng);
      t.at(0, j, 1) = 0.5 * (1.0 - u) + 0.05 * next_uniform(rng);
      for (std::size_t beta = 2; beta + 2 < p; ++beta)
        t.at(0, j, beta) = 0.1 * next_uniform(rng);
      for (std::size_t i = 1; i < m; ++i)
        for (std::size_t beta = 0; beta < p; ++beta)
          t.at(i, j, beta) = 0.5 * next_uniform(rng);
    }
    task.tensors[qid] = InteractionTensor{qid, std::move(t)};
    task.eff.values[qid] = label_quality[qi];
    task.ids.push_back(qid);
  }
  return task;
}

TrainConfig synthetic_config(Objective objective) {
  TrainConfig cfg;
  cfg.interaction = {1, 1, 100, 10, 3, true};
  cfg.mode = ReshapeMode::sdmq;
  cfg.objective = objective;
  cfg.epochs = 20;
  cfg.lr = 1e-3;
  cfg.batch_size = 32;
  cfg.dropout = 0.2;
  cfg.seed = 7;
  cfg.conv1_channels = 4;
  cfg.conv2_channels = 8;
  cfg.hidden = 32;
  return cfg;
}

constexpr std::uint64_t kTaskSeed = 424242;
constexpr std::uint64_t kSplitSeed = 99;
constexpr std::uint64_t kEvalPairSeed = 12345;

double heldout_pair_accuracy(const SyntheticTask& task, const TrainedModel& model,
                             const Split& split) {
  Rng rng(kEvalPairSeed);
  std::vector<double> yhats;
  std::vector<int> labels;
  for (const PairInstance& pi : make_pairs(split.test_ids, task.eff, rng)) {
    yhats.push_back(predict_pair(model, task.tensors, pi.qa_id, pi.qb_id));
    labels.push_back(pi.label);
  }
  return pairwise_accuracy(yhats, labels);
}

// ---------------------------------------------------------------------
// Planted runs for baseline cutoff tuning (criterion 9): the score
// distribution encodes effectiveness only within ranks 6..10, so the
// optimal cutoff is 10.
// ---------------------------------------------------------------------

struct PlantedBaselines {
  RunFile runs;
  QueryEffectiveness eff;
  QuerySet queries;
  std::vector<std::string> ids;
};

PlantedBaselines make_planted_baselines(BaselineMethod method) {
  PlantedBaselines data;
  data.eff.metric_name = "AP@100";
  const int n_queries = 30;
  for (int q = 0; q < n_queries; ++q) {
    std::string qid = "q" + std::to_string(100 + q);
    double e = static_cast<double>(q + 1) / (n_queries + 1);
    std::vector<double> scores;
    for (int r = 1; r <= 5; ++r) scores.push_back(10.0);
    for (int r = 6; r <= 10; ++r) {
      double slope = method == BaselineMethod::nqc ? e : 1.0 - e;
      scores.push_back(10.0 - slope * (r - 5));
    }
    double top_sum = 0.0;
    for (double v : scores) top_sum += v;
    double d = (top_sum + 500.0) / 4095.0;  // pins the full-list mean at -5
    double noise = 0.9 * d * std::fmod(0.618033988749895 * (q + 1), 1.0);
    for (int j = 1; j <= 90; ++j) {
      double v = -d * j;
      if (j == 1) v += noise;
      if (j == 50) v -= noise;
      scores.push_back(v);
    }
    RankedList rl;
    rl.query_id = qid;
    for (std::size_t i = 0; i < scores.size(); ++i)
      rl.entries.push_back(
          {"d" + std::to_string(i + 1), static_cast<int>(i) + 1, scores[i]});
    data.runs[qid] = std::move(rl);
    data.eff.values[qid] = e;
    data.queries[qid] = Query{qid, {"w1", "w2", "w3", "w4"}, "w1 w2 w3 w4"};
    data.ids.push_back(qid);
  }
  return data;
}

// ---------------------------------------------------------------------
// CLI driving for the end-to-end smoke
// ---------------------------------------------------------------------

int run_command(const std::string& cmd) {
  int rc = std::system((cmd + " > /dev/null 2>&1").c_str());
  return rc;
}

}  // namespace

int main(int argc, char** argv) {
  std::string cli_path, fixture_dir, workdir;
  for (int i = 1; i + 1 < argc; i += 2) {
    std::string flag = argv[i];
    if (flag == "--cli") cli_path = argv[i + 1];
    else if (flag == "--fixture") fixture_dir = argv[i + 1];
    else if (flag == "--workdir") workdir = argv[i + 1];
  }
  if (cli_path.empty() || fixture_dir.empty() || workdir.empty()) {
    std::cerr << "usage: dqpp_acceptance --cli PATH --fixture DIR --workdir DIR\n";
    return 2;
  }
  fs::remove_all(workdir);
  fs::create_directories(workdir);

  criterion(1, "similarity histogram equals the brute-force interval oracle",
            [] {
    auto start = Clock::now();
    Rng rng(1001);
    const int p_values[] = {2, 4, 5, 30};
    int cases = 0;
    for (int p : p_values)
      for (int trial = 0; trial < 250; ++trial, ++cases) {
        EmbeddingTable emb;
        emb.dim = 8;
        emb.vectors["q"] = testutil::random_vector(rng, 8);
        std::vector<std::string> doc;
        int n_terms = 1 + static_cast<int>(next_uniform(rng) * 30);
        for (int i = 0; i < n_terms; ++i) {
          doc.push_back("w" + std::to_string(i));
          emb.vectors[doc.back()] = testutil::random_vector(rng, 8);
        }
        std::vector<double> hist = term_doc_histogram("q", doc, emb, p);
        std::vector<double> expected(p, 0.0);
        for (const auto& tok : doc)
          expected[testutil::bin_oracle(
              cosine(emb.vectors["q"], emb.vectors[tok]), p)] += 1.0;
        if (hist != expected)
          return Outcome{false, "mismatch at case " + std::to_string(cases)};
      }
    double secs = seconds_since(start);
    return Outcome{cases == 1000 && secs < 5.0,
                   std::to_string(cases) + " cases in " + fmt(secs) + "s"};
  });

  criterion(2, "worked binning example: p=4, sims {0.2,-0.3,0.4} -> (0,1,2,0)",
            [] {
    EmbeddingTable emb;
    emb.dim = 2;
    emb.vectors["q"] = {1.0, 0.0};
    for (auto& [token, c] : std::vector<std::pair<std::string, double>>{
             {"w1", 0.2}, {"w2", -0.3}, {"w3", 0.4}})
      emb.vectors[token] = {std::cos(std::acos(c)), std::sin(std::acos(c))};
    std::vector<double> hist =
        term_doc_histogram("q", {"w1", "w2", "w3"}, emb, 4);
    bool pass = hist == std::vector<double>{0.0, 1.0, 2.0, 0.0};
    std::string got = "(";
    for (std::size_t i = 0; i < hist.size(); ++i)
      got += (i ? "," : "") + fmt(hist[i]);
    return Outcome{pass, "got " + got + ")"};
  });

  criterion(3, "idf weighting scales the raw histogram exactly", [] {
    Rng rng(1003);
    for (int trial = 0; trial < 200; ++trial) {
      int p = 2 + static_cast<int>(next_uniform(rng) * 29);
      EmbeddingTable emb;
      emb.dim = 8;
      emb.vectors["q"] = testutil::random_vector(rng, 8);
      std::vector<std::string> doc;
      int n_terms = 1 + static_cast<int>(next_uniform(rng) * 25);
      for (int i = 0; i < n_terms; ++i) {
        doc.push_back("w" + std::to_string(i));
        emb.vectors[doc.back()] = testutil::random_vector(rng, 8);
      }
      CollectionStats stats;
      stats.n0 = 1 + static_cast<std::size_t>(next_uniform(rng) * 100000);
      stats.df["q"] = 1 + static_cast<std::size_t>(next_uniform(rng) * stats.n0);
      double w = std::log(static_cast<double>(stats.n0) /
                          static_cast<double>(stats.df["q"]));
      std::vector<double> plain = term_doc_histogram("q", doc, emb, p);
      std::vector<double> weighted =
          term_doc_histogram_idf("q", doc, emb, p, stats);
      for (int beta = 0; beta < p; ++beta) {
        if (weighted[beta] != w * plain[beta])
          return Outcome{false, "componentwise mismatch, trial " +
                                     std::to_string(trial)};
        if (static_cast<float>(weighted[beta]) !=
            static_cast<float>(w * plain[beta]))
          return Outcome{false, "float32 mismatch, trial " +
                                     std::to_string(trial)};
      }
    }
    return Outcome{true, "200 cases"};
  });

  criterion(4, "all four reshapings are bijective and lossless", [] {
    Rng rng(1004);
    for (int trial = 0; trial < 500; ++trial) {
      std::size_t m = 1 + static_cast<std::size_t>(next_uniform(rng) * 4);
      std::size_t k = 1 + static_cast<std::size_t>(next_uniform(rng) * 6);
      std::size_t p = 1 + static_cast<std::size_t>(next_uniform(rng) * 8);
      Tensor3 t(m, k, p);
      for (double& x : t.v) x = next_uniform(rng) * 20.0 - 10.0;
      for (ReshapeMode mode : kAllReshapeModes) {
        Tensor3 back = inverse_reshape(reshape(t, mode), m, k, p);
        if (back.v != t.v)
          return Outcome{false, std::string("round-trip mismatch in ") +
                                     to_string(mode)};
      }
    }
    return Outcome{true, "500 tensors x 4 modes"};
  });

  criterion(5, "analytic gradients match central finite differences", [] {
    auto start = Clock::now();
    Rng rng(1005);
    const double eps = 1e-5, rel = 1e-3, abs_floor = 1e-6;
    double worst = 0.0;
    int models = 0;
    for (ReshapeMode mode : kAllReshapeModes)
      for (Objective obj : {Objective::pairwise, Objective::pointwise})
        for (int trial = 0; trial < 20; ++trial, ++models) {
          testutil::TinyModel tm = testutil::make_tiny_model(mode, obj, rng);
          int label = next_uniform(rng) < 0.5 ? 0 : 1;
          ModelParams grads = zeros_like(tm.params);
          std::vector<double> fd;
          if (obj == Objective::pairwise) {
            PairTrace trace;
            double yhat = pair_forward(tm.slices_a, tm.slices_b, tm.params,
                                       0.0, true, nullptr, &trace);
            pair_backward(trace, tm.params, -2.0 * (label - yhat), grads);
            fd = testutil::finite_diff_grads(
                tm.params, eps, [&](const ModelParams& p) {
                  double y = pair_forward(tm.slices_a, tm.slices_b, p, 0.0,
                                          true, nullptr, nullptr);
                  return (label - y) * (label - y);
                });
          } else {
            PointTrace ta, tb;
            double sa =
                point_forward(tm.slices_a, tm.params, 0.0, true, nullptr, &ta);
            double sb =
                point_forward(tm.slices_b, tm.params, 0.0, true, nullptr, &tb);
            double sgn = 2.0 * label - 1.0;
            if (1.0 - sgn * (sa - sb) > 0.0) {
              point_backward(ta, tm.params, -sgn, grads);
              point_backward(tb, tm.params, sgn, grads);
            }
            fd = testutil::finite_diff_grads(
                tm.params, eps, [&](const ModelParams& p) {
                  double a =
                      point_forward(tm.slices_a, p, 0.0, true, nullptr, nullptr);
                  double b =
                      point_forward(tm.slices_b, p, 0.0, true, nullptr, nullptr);
                  double margin = 1.0 - sgn * (a - b);
                  return margin > 0.0 ? margin : 0.0;
                });
          }
          double err = testutil::max_gradient_error(
              testutil::flatten_params(grads), fd, rel, abs_floor);
          worst = std::max(worst, err);
          if (err > rel)
            return Outcome{false, "model " + std::to_string(models) +
                                       " relative error " + fmt(err)};
        }
    double secs = seconds_since(start);
    return Outcome{secs < 120.0, std::to_string(models) +
                                     " models, worst rel err " + fmt(worst) +
                                     ", " + fmt(secs) + "s"};
  });

  // shared by criteria 6 and 10
  SyntheticTask learn_task = make_synthetic_task(200, 2, 3, 10, kTaskSeed, false);
  SplitPlan learn_plan = make_splits(learn_task.ids, 1, 0.5, kSplitSeed);
  TrainConfig learn_cfg = synthetic_config(Objective::pairwise);

  criterion(6, "pairwise model learns the planted synthetic ordering", [&] {
    auto start = Clock::now();
    TrainResult result =
        train(learn_cfg, learn_task.tensors, learn_task.eff, learn_plan.splits[0]);
    double acc = heldout_pair_accuracy(learn_task, {learn_cfg, result.params},
                                       learn_plan.splits[0]);
    double secs = seconds_since(start);

    SyntheticTask control_task =
        make_synthetic_task(200, 2, 3, 10, kTaskSeed, true);
    TrainResult control = train(learn_cfg, control_task.tensors,
                                control_task.eff, learn_plan.splits[0]);
    double control_acc = heldout_pair_accuracy(
        control_task, {learn_cfg, control.params}, learn_plan.splits[0]);

    bool pass = acc >= 0.90 && secs < 300.0 && control_acc >= 0.45 &&
                control_acc <= 0.55;
    return Outcome{pass, "accuracy " + fmt(acc) + " in " + fmt(secs) +
                             "s, permuted-label control " + fmt(control_acc)};
  });

  criterion(7, "pointwise model ranks held-out queries by planted quality",
            [&] {
    TrainConfig cfg = synthetic_config(Objective::pointwise);
    TrainResult result =
        train(cfg, learn_task.tensors, learn_task.eff, learn_plan.splits[0]);
    TrainedModel model{cfg, result.params};
    std::vector<double> truth, predicted;
    for (const std::string& qid : learn_plan.splits[0].test_ids) {
      truth.push_back(learn_task.eff.value(qid));
      predicted.push_back(predict_score(model, learn_task.tensors, qid));
    }
    double tau = kendall_tau(truth, predicted);
    return Outcome{tau >= 0.70, "kendall tau " + fmt(tau)};
  });

  criterion(8, "correlation and rank-metric oracles", [] {
    Rng rng(1008);
    for (int trial = 0; trial < 200; ++trial) {
      std::size_t n = 2 + static_cast<std::size_t>(next_uniform(rng) * 198);
      std::vector<double> x(n), y(n);
      for (std::size_t i = 0; i < n; ++i) {
        x[i] = std::floor(next_uniform(rng) * 15.0);
        y[i] = std::floor(next_uniform(rng) * 15.0);
      }
      // O(n^2) enumeration oracle
      long long c = 0, d = 0, tx = 0, ty = 0;
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
          bool xt = x[i] == x[j], yt = y[i] == y[j];
          if (xt) ++tx;
          if (yt) ++ty;
          if (xt || yt) continue;
          ((x[i] < x[j]) == (y[i] < y[j])) ? ++c : ++d;
        }
      long long n0 = static_cast<long long>(n) * (n - 1) / 2;
      if (n0 == tx || n0 == ty) continue;
      double oracle = static_cast<double>(c - d) /
                      std::sqrt(static_cast<double>((n0 - tx) * (n0 - ty)));
      if (kendall_tau(x, y) != oracle)
        return Outcome{false, "tau mismatch at trial " + std::to_string(trial)};

      double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
      for (std::size_t i = 0; i < n; ++i) {
        sx += x[i];
        sy += y[i];
        sxx += x[i] * x[i];
        syy += y[i] * y[i];
        sxy += x[i] * y[i];
      }
      double nn = static_cast<double>(n);
      double vx = sxx - sx * sx / nn, vy = syy - sy * sy / nn;
      if (vx == 0.0 || vy == 0.0) continue;
      double direct = (sxy - sx * sy / nn) / std::sqrt(vx * vy);
      if (std::fabs(pearson_rho(x, y) - direct) > 1e-12)
        return Outcome{false, "rho mismatch at trial " + std::to_string(trial)};
    }

    Qrels qrels;
    qrels.judgments["q"] = {{"d1", 1}, {"d3", 1}};
    RankedList run;
    run.query_id = "q";
    run.entries = {{"d1", 1, 3.0}, {"d2", 2, 2.0}, {"d3", 3, 1.0}};
    double ap = average_precision_at(run, qrels, 100);
    double nd = ndcg_at(run, qrels, 20);
    if (std::fabs(ap - 0.8333) > 1e-4)
      return Outcome{false, "AP " + fmt(ap)};
    if (std::fabs(nd - 0.9197) > 1e-4)
      return Outcome{false, "nDCG " + fmt(nd)};
    return Outcome{true, "tau/rho oracles, AP " + fmt(ap) + ", nDCG " + fmt(nd)};
  });

  criterion(9, "baseline sanity: degenerate values, invariance, tuning", [] {
    RankedList constant;
    constant.query_id = "q";
    for (int r = 1; r <= 20; ++r)
      constant.entries.push_back({"d" + std::to_string(r), r, 4.0});
    if (nqc_score(constant, 10) != 0.0)
      return Outcome{false, "NQC of constant scores is not 0"};

    Rng rng(1009);
    for (int trial = 0; trial < 50; ++trial) {
      RankedList run;
      run.query_id = "q";
      double s = 10.0;
      for (int r = 1; r <= 60; ++r) {
        s -= next_uniform(rng);
        run.entries.push_back({"d" + std::to_string(r), r, s});
      }
      double shift = 50.0 * next_uniform(rng) - 25.0;
      RankedList shifted = run;
      for (auto& e : shifted.entries) e.score += shift;
      if (std::fabs(wig_score(shifted, 10, 3) - wig_score(run, 10, 3)) > 1e-12)
        return Outcome{false, "WIG translation invariance violated"};
    }

    for (BaselineMethod method : {BaselineMethod::nqc, BaselineMethod::wig}) {
      PlantedBaselines data = make_planted_baselines(method);
      int best = tune_cutoff(method, data.runs, data.eff, data.queries,
                             data.ids, default_cutoff_grid());
      if (best != 10)
        return Outcome{false, std::string(to_string(method)) +
                                  " tuned to M=" + std::to_string(best) +
                                  ", planted optimum 10"};
    }
    return Outcome{true, "NQC=0, WIG shift-invariant, tuned M=10 recovered"};
  });

  criterion(10, "identical seeds give byte-identical checkpoints and loss logs",
            [&] {
    auto train_once = [&](const std::string& tag) {
      TrainResult result = train(learn_cfg, learn_task.tensors, learn_task.eff,
                                 learn_plan.splits[0]);
      std::string ckpt = (fs::path(workdir) / (tag + ".ckpt")).string();
      save_checkpoint({learn_cfg, result.params}, ckpt);
      std::ostringstream log;
      for (std::size_t e = 0; e < result.epoch_loss.size(); ++e)
        log << (e + 1) << '\t'
            << dqpp::detail::format_double(result.epoch_loss[e]) << '\n';
      std::string log_path = (fs::path(workdir) / (tag + ".loss.tsv")).string();
      std::ofstream(log_path) << log.str();
      return std::make_pair(ckpt, log_path);
    };
    auto read_bytes = [](const std::string& path) {
      std::ifstream is(path, std::ios::binary);
      std::ostringstream buf;
      buf << is.rdbuf();
      return buf.str();
    };
    auto [ckpt1, log1] = train_once("run1");
    auto [ckpt2, log2] = train_once("run2");
    std::string b1 = read_bytes(ckpt1), b2 = read_bytes(ckpt2);
    std::string l1 = read_bytes(log1), l2 = read_bytes(log2);
    bool pass = !b1.empty() && b1 == b2 && !l1.empty() && l1 == l2;
    return Outcome{pass, "checkpoints " + std::to_string(b1.size()) +
                             " bytes, logs " + std::to_string(l1.size()) +
                             " bytes"};
  });

  criterion(11, "toy fixture flows featurize -> split -> train -> evaluate",
            [&] {
    auto start = Clock::now();
    fs::path work = fs::path(workdir) / "e2e";
    fs::create_directories(work);
    std::string run = (fs::path(fixture_dir) / "run.txt").string();
    std::string qrels = (fs::path(fixture_dir) / "qrels.txt").string();
    std::string queries = (fs::path(fixture_dir) / "queries.tsv").string();
    std::string corpus = (fs::path(fixture_dir) / "corpus.tsv").string();
    std::string emb = (fs::path(fixture_dir) / "embeddings.txt").string();
    std::string tensors = (work / "tensors").string();
    std::string plan = (work / "plan.json").string();
    std::string models = (work / "models").string();
    std::string report = (work / "report.json").string();

    if (run_command(cli_path + " featurize --run " + run + " --queries " +
                    queries + " --corpus " + corpus + " --embeddings " + emb +
                    " --t 5 --b 5 --p 20 --k 4 --out " + tensors) != 0)
      return Outcome{false, "featurize failed"};
    if (run_command(cli_path + " split --run " + run + " --qrels " + qrels +
                    " --n-splits 4 --seed 17 --out " + plan) != 0)
      return Outcome{false, "split failed"};
    if (run_command(cli_path + " train --run " + run + " --qrels " + qrels +
                    " --tensors " + tensors + " --split " + plan +
                    " --epochs 2 --seed 3 --out " + models) != 0)
      return Outcome{false, "train failed"};
    if (run_command(cli_path + " evaluate --models " + models + " --run " +
                    run + " --qrels " + qrels + " --tensors " + tensors +
                    " --split " + plan + " --out " + report) != 0)
      return Outcome{false, "evaluate failed"};

    std::ifstream is(report);
    if (!is) return Outcome{false, "missing report.json"};
    nlohmann::json j;
    try {
      is >> j;
    } catch (const nlohmann::json::exception& e) {
      return Outcome{false, std::string("malformed report: ") + e.what()};
    }
    if (!j.contains("accuracy") || !j.contains("metric"))
      return Outcome{false, "report lacks accuracy/metric fields"};
    auto per_split = j["accuracy"]["per_split"];
    if (per_split.size() != 4)
      return Outcome{false, "expected 4 per-split accuracies"};
    for (double v : per_split)
      if (v < 0.0 || v > 1.0)
        return Outcome{false, "accuracy out of [0,1]"};
    double secs = seconds_since(start);
    return Outcome{secs < 60.0, "4 splits, mean accuracy " +
                                    fmt(j["accuracy"]["mean"].get<double>()) +
                                    ", " + fmt(secs) + "s"};
  });

  std::cout << (g_failures == 0 ? "ALL CRITERIA PASSED"
                                : std::to_string(g_failures) + " CRITERIA FAILED")
            << std::endl;
  return g_failures == 0 ? 0 : 1;
}
