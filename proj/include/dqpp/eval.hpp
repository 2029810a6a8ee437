#pragma once

#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "dqpp/error.hpp"
#include "dqpp/ir_data.hpp"
#include "dqpp/training.hpp"

namespace dqpp {

// Fraction of predictions whose 0.5-binarization matches the label;
// yhat = 0.5 exactly counts as a prediction of 1.
inline double pairwise_accuracy(const std::vector<double>& predictions,
                                const std::vector<int>& labels) {
  if (predictions.empty())
    throw DataError("pairwise_accuracy: empty prediction list");
  if (predictions.size() != labels.size())
    throw DataError("pairwise_accuracy: length mismatch");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i)
    if ((predictions[i] >= 0.5 ? 1 : 0) == labels[i]) ++correct;
  return static_cast<double>(correct) / static_cast<double>(predictions.size());
}

inline double pearson_rho(const std::vector<double>& x,
                          const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2)
    throw DataError("pearson_rho: need two equal-length vectors of size >= 2");
  double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    double dx = x[i] - mx, dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0)
    throw UndefinedMetricError("pearson_rho: zero variance input");
  return sxy / std::sqrt(sxx * syy);
}

// Kendall's tau-b: (C - D) / sqrt((n0 - n1)(n0 - n2)) where n1, n2 count
// tied pairs within x and y respectively.
inline double kendall_tau(const std::vector<double>& x,
                          const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2)
    throw DataError("kendall_tau: need two equal-length vectors of size >= 2");
  long long concordant = 0, discordant = 0, ties_x = 0, ties_y = 0;
  for (std::size_t i = 0; i < x.size(); ++i)
    for (std::size_t j = i + 1; j < x.size(); ++j) {
      double dx = x[i] - x[j], dy = y[i] - y[j];
      if (dx == 0.0 && dy == 0.0) {
        ++ties_x;
        ++ties_y;
      } else if (dx == 0.0) {
        ++ties_x;
      } else if (dy == 0.0) {
        ++ties_y;
      } else if ((dx > 0.0) == (dy > 0.0)) {
        ++concordant;
      } else {
        ++discordant;
      }
    }
  long long n0 =
      static_cast<long long>(x.size()) * static_cast<long long>(x.size() - 1) / 2;
  double denom =
      std::sqrt(static_cast<double>((n0 - ties_x) * (n0 - ties_y)));
  if (denom == 0.0)
    throw UndefinedMetricError("kendall_tau: an input vector is entirely tied");
  return static_cast<double>(concordant - discordant) / denom;
}

// ---------------------------------------------------------------------
// Cross-validated report
// ---------------------------------------------------------------------

struct PairPrediction {
  std::string qa_id, qb_id;
  double yhat = 0.0;
  int label = 0;
};

// One split's worth of test-side predictions: pair predictions for pairwise
// models, per-query scores for pointwise ones.
struct SplitPredictions {
  std::vector<PairPrediction> pairs;
  std::map<std::string, double> scores;
};

struct MetricSummary {
  std::vector<double> per_split;       // one value per evaluated split
  std::vector<std::size_t> skipped;    // split indices with undefined metric
  double mean = 0.0;
  double stddev = 0.0;
};

struct EvalReport {
  std::string metric_name;
  std::optional<MetricSummary> accuracy;
  std::optional<MetricSummary> pearson;
  std::optional<MetricSummary> kendall;
};

namespace detail {

inline void summarize(MetricSummary& s) {
  double n = static_cast<double>(s.per_split.size());
  double sum = 0.0;
  for (double v : s.per_split) sum += v;
  s.mean = n > 0 ? sum / n : 0.0;
  double ss = 0.0;
  for (double v : s.per_split) ss += (v - s.mean) * (v - s.mean);
  s.stddev = n > 0 ? std::sqrt(ss / n) : 0.0;
}

}  // namespace detail

// Aggregates per-split test-side metrics. Pair predictions yield accuracy;
// score predictions yield Pearson/Kendall correlations against the target
// metric. Undefined per-split metrics throw unless allow_skip is set, in
// which case the split is recorded as skipped for that metric.
inline EvalReport cross_val_evaluate(const SplitPlan& plan,
                                     const std::vector<SplitPredictions>& preds,
                                     const QueryEffectiveness& eff,
                                     bool allow_skip = false) {
  if (preds.size() != plan.splits.size())
    throw DataError("cross_val_evaluate: got predictions for " +
                    std::to_string(preds.size()) + " splits, plan has " +
                    std::to_string(plan.splits.size()));
  EvalReport report;
  report.metric_name = eff.metric_name;
  MetricSummary acc, rho, tau;
  bool any_pairs = false, any_scores = false;
  for (std::size_t s = 0; s < plan.splits.size(); ++s) {
    const Split& split = plan.splits[s];
    const SplitPredictions& sp = preds[s];
    std::set<std::string> test_ids(split.test_ids.begin(), split.test_ids.end());
    std::set<std::string> usable;
    for (const std::string& qid : split.test_ids)
      if (eff.has(qid)) usable.insert(qid);

    if (!sp.pairs.empty()) {
      any_pairs = true;
      std::set<std::pair<std::string, std::string>> covered;
      std::vector<double> yhats;
      std::vector<int> labels;
      for (const PairPrediction& pp : sp.pairs) {
        if (!test_ids.count(pp.qa_id) || !test_ids.count(pp.qb_id))
          throw DataError("split " + std::to_string(s) + ": pair (" +
                          pp.qa_id + ", " + pp.qb_id +
                          ") references a non-test query");
        covered.insert({std::min(pp.qa_id, pp.qb_id),
                        std::max(pp.qa_id, pp.qb_id)});
        yhats.push_back(pp.yhat);
        labels.push_back(pp.label);
      }
      std::size_t expected = usable.size() * (usable.size() - 1) / 2;
      if (covered.size() < expected)
        throw DataError("split " + std::to_string(s) + ": predictions cover " +
                        std::to_string(covered.size()) + " of " +
                        std::to_string(expected) + " test pairs");
      acc.per_split.push_back(pairwise_accuracy(yhats, labels));
    }

    if (!sp.scores.empty()) {
      any_scores = true;
      std::vector<double> truth, predicted;
      for (const std::string& qid : usable) {
        auto it = sp.scores.find(qid);
        if (it == sp.scores.end())
          throw DataError("split " + std::to_string(s) +
                          ": no predicted score for test query " + qid);
        truth.push_back(eff.value(qid));
        predicted.push_back(it->second);
      }
      for (const auto& [qid, score] : sp.scores)
        if (!test_ids.count(qid))
          throw DataError("split " + std::to_string(s) + ": score for " + qid +
                          " which is not a test query");
      try {
        rho.per_split.push_back(pearson_rho(truth, predicted));
      } catch (const UndefinedMetricError&) {
        if (!allow_skip) throw;
        rho.skipped.push_back(s);
      }
      try {
        tau.per_split.push_back(kendall_tau(truth, predicted));
      } catch (const UndefinedMetricError&) {
        if (!allow_skip) throw;
        tau.skipped.push_back(s);
      }
    }
  }
  if (any_pairs) {
    detail::summarize(acc);
    report.accuracy = std::move(acc);
  }
  if (any_scores) {
    detail::summarize(rho);
    detail::summarize(tau);
    report.pearson = std::move(rho);
    report.kendall = std::move(tau);
  }
  return report;
}

inline nlohmann::json eval_report_to_json(const EvalReport& report) {
  nlohmann::json j{{"metric", report.metric_name}};
  auto put = [&](const char* name, const std::optional<MetricSummary>& s) {
    if (!s) return;
    j[name] = {{"per_split", s->per_split},
               {"mean", s->mean},
               {"stddev", s->stddev},
               {"skipped_splits", s->skipped}};
  };
  put("accuracy", report.accuracy);
  put("pearson_rho", report.pearson);
  put("kendall_tau", report.kendall);
  return j;
}

}  // namespace dqpp
