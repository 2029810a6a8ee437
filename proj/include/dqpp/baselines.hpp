#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "dqpp/error.hpp"
#include "dqpp/eval.hpp"
#include "dqpp/ir_data.hpp"

namespace dqpp {

enum class BaselineMethod { nqc, wig };

inline const char* to_string(BaselineMethod m) {
  return m == BaselineMethod::nqc ? "nqc" : "wig";
}

inline BaselineMethod parse_baseline_method(const std::string& s) {
  if (s == "nqc") return BaselineMethod::nqc;
  if (s == "wig") return BaselineMethod::wig;
  throw UsageError("unknown baseline method: " + s);
}

inline const std::vector<int>& default_cutoff_grid() {
  static const std::vector<int> grid{5, 10, 15, 20, 25, 50, 100, 300, 500, 1000};
  return grid;
}

namespace detail {

inline double full_list_mean(const RankedList& run) {
  double sum = 0.0;
  for (const auto& e : run.entries) sum += e.score;
  return sum / static_cast<double>(run.entries.size());
}

}  // namespace detail

// Population standard deviation of the top-M retrieval scores, normalized by
// the absolute mean score of the full ranked list (a collection-score
// surrogate). Falls back to the unnormalized deviation when the surrogate
// is zero. M is clamped to the run length.
inline double nqc_score(const RankedList& run, int cutoff) {
  if (run.entries.size() < 2)
    throw DataError("nqc_score: query " + run.query_id +
                    " has fewer than 2 retrieved documents");
  if (cutoff < 2) throw DataError("nqc_score: cutoff must be >= 2");
  std::size_t m = std::min<std::size_t>(cutoff, run.entries.size());
  double mean_top = 0.0;
  for (std::size_t i = 0; i < m; ++i) mean_top += run.entries[i].score;
  mean_top /= static_cast<double>(m);
  double var = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    double d = run.entries[i].score - mean_top;
    var += d * d;
  }
  double sd = std::sqrt(var / static_cast<double>(m));
  double surrogate = std::fabs(detail::full_list_mean(run));
  return surrogate == 0.0 ? sd : sd / surrogate;
}

// Mean score gain of the top-M documents over the full-list mean score,
// normalized by sqrt(|Q|).
inline double wig_score(const RankedList& run, int cutoff,
                        std::size_t query_len) {
  if (run.entries.size() < 2)
    throw DataError("wig_score: query " + run.query_id +
                    " has fewer than 2 retrieved documents");
  if (cutoff < 1) throw DataError("wig_score: cutoff must be >= 1");
  if (query_len < 1) throw DataError("wig_score: query length must be >= 1");
  std::size_t m = std::min<std::size_t>(cutoff, run.entries.size());
  double collection = detail::full_list_mean(run);
  double gain = 0.0;
  for (std::size_t i = 0; i < m; ++i)
    gain += run.entries[i].score - collection;
  return gain / static_cast<double>(m) /
         std::sqrt(static_cast<double>(query_len));
}

inline double baseline_score(BaselineMethod method, const RankedList& run,
                             int cutoff, std::size_t query_len) {
  return method == BaselineMethod::nqc ? nqc_score(run, cutoff)
                                       : wig_score(run, cutoff, query_len);
}

// Grid search for the cutoff that maximizes Pearson's rho between baseline
// scores and the target metric over the training queries; ties and grid
// points with undefined correlation resolve toward the smallest cutoff.
inline int tune_cutoff(BaselineMethod method, const RunFile& runs,
                       const QueryEffectiveness& eff, const QuerySet& queries,
                       const std::vector<std::string>& train_ids,
                       const std::vector<int>& grid) {
  if (grid.empty()) throw DataError("tune_cutoff: empty grid");
  if (train_ids.empty()) throw DataError("tune_cutoff: empty train set");
  std::vector<int> sorted_grid = grid;
  std::sort(sorted_grid.begin(), sorted_grid.end());
  double best_rho = 0.0;
  int best_m = -1;
  for (int cutoff : sorted_grid) {
    std::vector<double> scores, truth;
    for (const std::string& qid : train_ids) {
      auto run_it = runs.find(qid);
      if (run_it == runs.end() || !eff.has(qid)) continue;
      std::size_t qlen = 1;
      if (auto q_it = queries.find(qid); q_it != queries.end())
        qlen = std::max<std::size_t>(1, q_it->second.terms.size());
      scores.push_back(baseline_score(method, run_it->second, cutoff, qlen));
      truth.push_back(eff.value(qid));
    }
    if (scores.size() < 2) continue;
    double rho;
    try {
      rho = pearson_rho(scores, truth);
    } catch (const UndefinedMetricError&) {
      continue;
    }
    if (best_m < 0 || rho > best_rho) {
      best_rho = rho;
      best_m = cutoff;
    }
  }
  if (best_m < 0)
    throw UndefinedMetricError(
        "tune_cutoff: correlation undefined for every grid point");
  return best_m;
}

}  // namespace dqpp
