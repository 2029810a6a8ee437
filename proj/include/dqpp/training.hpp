#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "dqpp/config.hpp"
#include "dqpp/convnet.hpp"
#include "dqpp/error.hpp"
#include "dqpp/interaction.hpp"
#include "dqpp/ir_data.hpp"
#include "dqpp/reshape.hpp"

namespace dqpp {

// ---------------------------------------------------------------------
// Pair instances and labels
// ---------------------------------------------------------------------

struct PairInstance {
  std::string qa_id, qb_id;
  int label = 0;  // 1 iff M(qa) > M(qb)
};

inline int make_labels(const QueryEffectiveness& eff, const std::string& qa,
                       const std::string& qb) {
  return eff.value(qa) > eff.value(qb) ? 1 : 0;
}

// All m(m-1)/2 unordered pairs. The (first, second) orientation of each pair
// is randomized so a position cue cannot leak the label into the
// order-sensitive head; the label is computed after orientation.
inline std::vector<PairInstance> make_pairs(const std::vector<std::string>& ids,
                                            const QueryEffectiveness& eff,
                                            Rng& rng) {
  if (ids.size() < 2)
    throw DataError("make_pairs: need at least 2 queries, got " +
                    std::to_string(ids.size()));
  std::vector<PairInstance> pairs;
  pairs.reserve(ids.size() * (ids.size() - 1) / 2);
  for (std::size_t a = 0; a < ids.size(); ++a)
    for (std::size_t b = a + 1; b < ids.size(); ++b) {
      bool flip = next_uniform(rng) < 0.5;
      const std::string& qa = flip ? ids[b] : ids[a];
      const std::string& qb = flip ? ids[a] : ids[b];
      pairs.push_back({qa, qb, make_labels(eff, qa, qb)});
    }
  return pairs;
}

// ---------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------

inline double pairwise_loss(int y, double yhat) {
  double d = y - yhat;
  return d * d;
}

inline double pairwise_loss_grad(int y, double yhat) {
  return -2.0 * (y - yhat);
}

// Differentiable surrogate of the pairwise hinge: max(0, 1 - s*(sa - sb))
// with s = 2y - 1 in {-1, +1}.
inline double pointwise_hinge_loss(int y, double sa, double sb) {
  double s = 2.0 * y - 1.0;
  double margin = 1.0 - s * (sa - sb);
  return margin > 0.0 ? margin : 0.0;
}

// Subgradients w.r.t. (sa, sb): (-s, +s) when the margin is violated, else 0.
inline std::pair<double, double> pointwise_hinge_grad(int y, double sa,
                                                      double sb) {
  double s = 2.0 * y - 1.0;
  if (1.0 - s * (sa - sb) > 0.0) return {-s, s};
  return {0.0, 0.0};
}

// Indicator-valued margin loss: 0 when the score difference agrees with the
// label strictly, 1 otherwise. Piecewise constant, so it is logged as a
// diagnostic only and never trained on.
inline double hinge_indicator_loss(int y, double sa, double sb) {
  double s = 2.0 * y - 1.0;
  return s * (sa - sb) > 0.0 ? 0.0 : 1.0;
}

// ---------------------------------------------------------------------
// Split protocol
// ---------------------------------------------------------------------

struct Split {
  std::vector<std::string> train_ids;
  std::vector<std::string> test_ids;
};

struct SplitPlan {
  std::uint64_t seed = 0;
  double ratio = 0.5;
  std::vector<Split> splits;
};

// Repeated random partitions; with ratio 0.5 and odd m the train side gets
// the extra query.
inline SplitPlan make_splits(const std::vector<std::string>& ids, int n_splits,
                             double ratio, std::uint64_t seed) {
  if (ids.size() < 4)
    throw DataError("make_splits: need at least 4 queries, got " +
                    std::to_string(ids.size()));
  if (n_splits < 1) throw DataError("make_splits: need at least 1 split");
  if (ratio <= 0.0 || ratio >= 1.0)
    throw DataError("make_splits: ratio must be in (0, 1)");
  SplitPlan plan;
  plan.seed = seed;
  plan.ratio = ratio;
  Rng rng(seed);
  std::vector<std::string> pool(ids.begin(), ids.end());
  std::sort(pool.begin(), pool.end());  // seed-only determinism
  std::size_t n_train =
      static_cast<std::size_t>(std::ceil(ratio * static_cast<double>(pool.size())));
  for (int s = 0; s < n_splits; ++s) {
    // Fisher-Yates with the portable uniform draw
    for (std::size_t i = pool.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(next_uniform(rng) * i);
      if (j >= i) j = i - 1;
      std::swap(pool[i - 1], pool[j]);
    }
    Split split;
    split.train_ids.assign(pool.begin(), pool.begin() + n_train);
    split.test_ids.assign(pool.begin() + n_train, pool.end());
    std::sort(split.train_ids.begin(), split.train_ids.end());
    std::sort(split.test_ids.begin(), split.test_ids.end());
    plan.splits.push_back(std::move(split));
  }
  return plan;
}

inline nlohmann::json split_plan_to_json(const SplitPlan& plan) {
  nlohmann::json splits = nlohmann::json::array();
  for (const Split& s : plan.splits)
    splits.push_back({{"train", s.train_ids}, {"test", s.test_ids}});
  return nlohmann::json{
      {"seed", plan.seed}, {"ratio", plan.ratio}, {"splits", splits}};
}

inline SplitPlan split_plan_from_json(const nlohmann::json& j) {
  SplitPlan plan;
  plan.seed = j.at("seed").get<std::uint64_t>();
  plan.ratio = j.at("ratio").get<double>();
  for (const auto& s : j.at("splits")) {
    Split split;
    split.train_ids = s.at("train").get<std::vector<std::string>>();
    split.test_ids = s.at("test").get<std::vector<std::string>>();
    plan.splits.push_back(std::move(split));
  }
  return plan;
}

inline void save_split_plan(const SplitPlan& plan, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw UsageError("cannot write file: " + path);
  os << split_plan_to_json(plan).dump(2) << '\n';
}

inline SplitPlan load_split_plan(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw UsageError("cannot open file: " + path);
  nlohmann::json j;
  try {
    is >> j;
    return split_plan_from_json(j);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
}

// ---------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------

using TensorMap = std::map<std::string, InteractionTensor>;

struct TrainResult {
  ModelParams params;
  std::vector<double> epoch_loss;             // mean objective loss per epoch
  std::vector<double> epoch_hinge_indicator;  // pointwise diagnostic, else empty
};

namespace detail {

inline const InteractionTensor& tensor_for(const TensorMap& tensors,
                                           const std::string& qid) {
  auto it = tensors.find(qid);
  if (it == tensors.end())
    throw DataError("no interaction tensor for query " + qid);
  return it->second;
}

inline void check_tensor_shape(const InteractionTensor& t, std::size_t m,
                               std::size_t k, std::size_t p) {
  if (t.data.slabs != m || t.data.rows != k || t.data.bins != p)
    throw DataError("tensor for query " + t.query_id + " has shape (" +
                    std::to_string(t.data.slabs) + "," +
                    std::to_string(t.data.rows) + "," +
                    std::to_string(t.data.bins) + "), expected (" +
                    std::to_string(m) + "," + std::to_string(k) + "," +
                    std::to_string(p) + ")");
}

inline std::vector<std::string> usable_train_ids(const Split& split,
                                                 const QueryEffectiveness& eff) {
  std::vector<std::string> usable;
  for (const std::string& qid : split.train_ids)
    if (eff.has(qid)) usable.push_back(qid);
  if (usable.size() < 2)
    throw DataError("train: fewer than 2 train queries with defined " +
                    eff.metric_name);
  return usable;
}

inline std::vector<PairInstance> training_pairs(
    const TrainConfig& cfg, const std::vector<std::string>& usable,
    const QueryEffectiveness& eff) {
  Rng pair_rng(cfg.seed ^ 0x9e3779b97f4a7c15ull);
  std::vector<PairInstance> pairs = make_pairs(usable, eff, pair_rng);
  if (cfg.filter_ties) {
    std::erase_if(pairs, [&](const PairInstance& pi) {
      return eff.value(pi.qa_id) == eff.value(pi.qb_id);
    });
    if (pairs.empty()) throw DataError("train: all pairs are ties");
  }
  return pairs;
}

// Shared minibatch loop. `pair_slices` maps a pair instance to the two
// branch inputs; single-threaded with seeded shuffles and dropout, so the
// trajectory is deterministic for a fixed config.
template <typename PairSlices>
TrainResult train_core(const TrainConfig& cfg, std::vector<PairInstance> pairs,
                       PairSlices&& pair_slices) {
  if (cfg.epochs < 0) throw DataError("train: negative epoch count");
  if (cfg.batch_size < 1) throw DataError("train: batch size must be >= 1");
  TrainResult result;
  result.params = init_params(net_geometry(cfg), cfg.seed);
  AdamState adam = make_adam_state(result.params);
  Rng shuffle_rng(cfg.seed ^ 0xbf58476d1ce4e5b9ull);
  Rng dropout_rng(cfg.seed ^ 0x94d049bb133111ebull);
  const bool pointwise = cfg.objective == Objective::pointwise;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = pairs.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(next_uniform(shuffle_rng) * i);
      if (j >= i) j = i - 1;
      std::swap(pairs[i - 1], pairs[j]);
    }
    double loss_sum = 0.0;
    double indicator_sum = 0.0;
    std::size_t done = 0;
    while (done < pairs.size()) {
      std::size_t batch_end =
          std::min(done + static_cast<std::size_t>(cfg.batch_size), pairs.size());
      ModelParams grads = zeros_like(result.params);
      for (std::size_t i = done; i < batch_end; ++i) {
        const PairInstance& pi = pairs[i];
        auto [sa_ptr, sb_ptr] = pair_slices(pi);
        const SliceSet& sa = *sa_ptr;
        const SliceSet& sb = *sb_ptr;
        if (pointwise) {
          PointTrace ta, tb;
          double score_a = point_forward(sa, result.params, cfg.dropout, true,
                                         &dropout_rng, &ta);
          double score_b = point_forward(sb, result.params, cfg.dropout, true,
                                         &dropout_rng, &tb);
          loss_sum += pointwise_hinge_loss(pi.label, score_a, score_b);
          indicator_sum += hinge_indicator_loss(pi.label, score_a, score_b);
          auto [da, db] = pointwise_hinge_grad(pi.label, score_a, score_b);
          if (da != 0.0) point_backward(ta, result.params, da, grads);
          if (db != 0.0) point_backward(tb, result.params, db, grads);
        } else {
          PairTrace trace;
          double yhat = pair_forward(sa, sb, result.params, cfg.dropout, true,
                                     &dropout_rng, &trace);
          loss_sum += pairwise_loss(pi.label, yhat);
          pair_backward(trace, result.params,
                        pairwise_loss_grad(pi.label, yhat), grads);
        }
      }
      double inv = 1.0 / static_cast<double>(batch_end - done);
      for_each_array(grads, [&](std::vector<double>& a) {
        for (double& x : a) x *= inv;
      });
      optimizer_step(result.params, grads, adam, cfg.lr);
      done = batch_end;
    }
    double mean_loss = loss_sum / static_cast<double>(pairs.size());
    if (!std::isfinite(mean_loss))
      throw NumericError("train: non-finite mean loss " +
                         std::to_string(mean_loss) + " at epoch " +
                         std::to_string(epoch + 1));
    result.epoch_loss.push_back(mean_loss);
    if (pointwise)
      result.epoch_hinge_indicator.push_back(
          indicator_sum / static_cast<double>(pairs.size()));
  }
  return result;
}

}  // namespace detail

// Minibatch training over the train-side query pairs of one split.
inline TrainResult train(const TrainConfig& cfg, const TensorMap& tensors,
                         const QueryEffectiveness& eff, const Split& split) {
  std::vector<std::string> usable = detail::usable_train_ids(split, eff);

  // Reshape each train tensor once.
  std::map<std::string, SliceSet> slices;
  std::size_t m = 0, k = 0, p = 0;
  for (const std::string& qid : usable) {
    const InteractionTensor& t = detail::tensor_for(tensors, qid);
    if (m == 0) {
      m = t.data.slabs;
      k = t.data.rows;
      p = t.data.bins;
    }
    detail::check_tensor_shape(t, m, k, p);
    slices[qid] = reshape(t.data, cfg.mode);
  }

  return detail::train_core(
      cfg, detail::training_pairs(cfg, usable, eff),
      [&](const PairInstance& pi) {
        return std::make_pair(&slices.at(pi.qa_id), &slices.at(pi.qb_id));
      });
}

// (t, b) = (0, 0) ablation: no retrieved documents are used; each pair is
// represented by the two query-query interaction tensors, one per
// orientation. Pairwise objective only (a lone query has no input here).
inline TrainResult train_query_ablation(const TrainConfig& cfg,
                                        const QuerySet& queries,
                                        const EmbeddingTable& emb,
                                        const CollectionStats& stats,
                                        const QueryEffectiveness& eff,
                                        const Split& split) {
  if (cfg.objective != Objective::pairwise)
    throw DataError(
        "query-pair ablation supports only the pairwise objective");
  std::vector<std::string> usable;
  for (const std::string& qid : detail::usable_train_ids(split, eff))
    if (queries.count(qid)) usable.push_back(qid);
  if (usable.size() < 2)
    throw DataError("train: fewer than 2 usable train queries with terms");

  const InteractionConfig& ic = cfg.interaction;
  std::map<std::pair<std::string, std::string>, SliceSet> slices;
  auto oriented = [&](const std::string& qa, const std::string& qb)
      -> const SliceSet& {
    auto key = std::make_pair(qa, qb);
    auto it = slices.find(key);
    if (it == slices.end()) {
      InteractionTensor t = build_query_pair_tensor(
          queries.at(qa), queries.at(qb), emb, ic.p, ic.k, stats, ic.idf_on);
      it = slices.emplace(key, reshape(t.data, cfg.mode)).first;
    }
    return it->second;
  };
  std::vector<PairInstance> pairs = detail::training_pairs(cfg, usable, eff);
  for (const PairInstance& pi : pairs) {
    oriented(pi.qa_id, pi.qb_id);
    oriented(pi.qb_id, pi.qa_id);
  }
  return detail::train_core(cfg, std::move(pairs), [&](const PairInstance& pi) {
    return std::make_pair(&slices.at({pi.qa_id, pi.qb_id}),
                          &slices.at({pi.qb_id, pi.qa_id}));
  });
}

inline double predict_pair_ablation(const TrainedModel& model,
                                    const QuerySet& queries,
                                    const EmbeddingTable& emb,
                                    const CollectionStats& stats,
                                    const std::string& qa,
                                    const std::string& qb) {
  const InteractionConfig& ic = model.config.interaction;
  SliceSet sa = reshape(
      build_query_pair_tensor(queries.at(qa), queries.at(qb), emb, ic.p, ic.k,
                              stats, ic.idf_on)
          .data,
      model.config.mode);
  SliceSet sb = reshape(
      build_query_pair_tensor(queries.at(qb), queries.at(qa), emb, ic.p, ic.k,
                              stats, ic.idf_on)
          .data,
      model.config.mode);
  return pair_forward(sa, sb, model.params, 0.0, false, nullptr, nullptr);
}

// ---------------------------------------------------------------------
// Prediction (eval mode: no dropout, deterministic)
// ---------------------------------------------------------------------

inline double predict_pair(const TrainedModel& model, const TensorMap& tensors,
                           const std::string& qa, const std::string& qb) {
  if (model.config.objective != Objective::pairwise)
    throw DataError("predict_pair: model was trained with the pointwise objective");
  SliceSet sa = reshape(detail::tensor_for(tensors, qa).data, model.config.mode);
  SliceSet sb = reshape(detail::tensor_for(tensors, qb).data, model.config.mode);
  return pair_forward(sa, sb, model.params, 0.0, false, nullptr, nullptr);
}

inline double predict_score(const TrainedModel& model, const TensorMap& tensors,
                            const std::string& q) {
  if (model.config.objective != Objective::pointwise)
    throw DataError("predict_score: model was trained with the pairwise objective");
  SliceSet s = reshape(detail::tensor_for(tensors, q).data, model.config.mode);
  return point_forward(s, model.params, 0.0, false, nullptr, nullptr);
}

}  // namespace dqpp
