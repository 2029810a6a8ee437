#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "dqpp/core.hpp"
#include "dqpp/error.hpp"
#include "dqpp/ir_data.hpp"

namespace dqpp {

// Tensor-building knobs: top/bottom document counts, bottom anchor, bin
// count, query-term limit, idf toggle.
struct InteractionConfig {
  int t = 10;
  int b = 10;
  int n_limit = 100;
  int p = 30;
  int k = 5;
  bool idf_on = true;
};

inline double cosine(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size())
    throw DataError("cosine: vector lengths differ (" +
                    std::to_string(u.size()) + " vs " +
                    std::to_string(v.size()) + ")");
  double dot = 0.0, nu = 0.0, nv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    dot += u[i] * v[i];
    nu += u[i] * u[i];
    nv += v[i] * v[i];
  }
  if (nu == 0.0 || nv == 0.0) return 0.0;
  double c = dot / (std::sqrt(nu) * std::sqrt(nv));
  // rounding can push |c| a hair past 1
  return c < -1.0 ? -1.0 : (c > 1.0 ? 1.0 : c);
}

// Histogram bin of a similarity over p equi-spaced intervals of [-1, 1).
// A similarity of exactly 1 is clamped into the last bin.
inline int bin_index(double sim, int p) {
  if (p < 1) throw DataError("bin_index: p must be >= 1");
  constexpr double kTol = 1e-9;
  if (sim < -1.0 - kTol || sim > 1.0 + kTol)
    throw DataError("bin_index: similarity " + std::to_string(sim) +
                    " outside [-1, 1]");
  int b = static_cast<int>(std::floor(p * (sim + 1.0) / 2.0));
  if (b < 0) b = 0;
  if (b >= p) b = p - 1;
  return b;
}

// Count of document terms whose cosine with q_term lands in each bin.
// Document terms without embeddings contribute nothing.
inline std::vector<double> term_doc_histogram(const std::string& q_term,
                                              const std::vector<std::string>& doc,
                                              const EmbeddingTable& emb, int p) {
  const std::vector<double>* qv = emb.find(q_term);
  if (!qv)
    throw DataError("term_doc_histogram: no embedding for query term '" +
                    q_term + "'");
  std::vector<double> bins(p, 0.0);
  for (const auto& w : doc) {
    const std::vector<double>* wv = emb.find(w);
    if (!wv) continue;
    bins[bin_index(cosine(*qv, *wv), p)] += 1.0;
  }
  return bins;
}

// Natural-log idf weight, with a df floor of 1 for unseen terms.
inline double idf_weight(const std::string& term, const CollectionStats& stats) {
  auto it = stats.df.find(term);
  std::size_t df = it == stats.df.end() ? 1 : std::max<std::size_t>(1, it->second);
  return std::log(static_cast<double>(stats.n0) / static_cast<double>(df));
}

inline std::vector<double> term_doc_histogram_idf(
    const std::string& q_term, const std::vector<std::string>& doc,
    const EmbeddingTable& emb, int p, const CollectionStats& stats) {
  std::vector<double> bins = term_doc_histogram(q_term, doc, emb, p);
  double w = idf_weight(q_term, stats);
  for (double& x : bins) x *= w;
  return bins;
}

namespace detail {

// Common k x p matrix assembly: row j is the histogram of query term j
// against `doc_tokens`; rows past |Q| stay zero, terms past k are dropped,
// and OOV query terms leave their row zero.
inline Matrix interaction_matrix(const Query& query,
                                 const std::vector<std::string>& doc_tokens,
                                 const EmbeddingTable& emb, int p, int k,
                                 const CollectionStats& stats, bool idf_on) {
  if (p < 1 || k < 1) throw DataError("interaction matrix needs p >= 1, k >= 1");
  Matrix m(static_cast<std::size_t>(k), static_cast<std::size_t>(p));
  std::size_t n_terms = std::min<std::size_t>(query.terms.size(),
                                              static_cast<std::size_t>(k));
  for (std::size_t j = 0; j < n_terms; ++j) {
    const std::string& term = query.terms[j];
    if (!emb.find(term)) continue;
    std::vector<double> bins =
        idf_on ? term_doc_histogram_idf(term, doc_tokens, emb, p, stats)
               : term_doc_histogram(term, doc_tokens, emb, p);
    for (int beta = 0; beta < p; ++beta) m.at(j, beta) = bins[beta];
  }
  return m;
}

}  // namespace detail

inline Matrix query_doc_matrix(const Query& query, const std::string& doc_id,
                               const DocCorpus& corpus, const EmbeddingTable& emb,
                               int p, int k, const CollectionStats& stats,
                               bool idf_on) {
  auto it = corpus.docs.find(doc_id);
  if (it == corpus.docs.end())
    throw DataError("document " + doc_id + " not present in corpus");
  return detail::interaction_matrix(query, it->second, emb, p, k, stats, idf_on);
}

// Query-query interaction: the second query's term sequence plays the role
// of the document. Input for the (t, b) = (0, 0) ablation.
inline Matrix query_query_matrix(const Query& qa, const Query& qb,
                                 const EmbeddingTable& emb, int p, int k,
                                 const CollectionStats& stats, bool idf_on) {
  if (qa.terms.empty() || qb.terms.empty())
    throw DataError("query_query_matrix: queries must be non-empty");
  return detail::interaction_matrix(qa, qb.terms, emb, p, k, stats, idf_on);
}

struct DocSelection {
  int t = 0;
  int b = 0;
  int n_limit = 0;
  std::vector<std::string> selected;  // top block first, then bottom block
};

// Top block: ranks 1..t. Bottom block: ranks N'-b+1..N' where N' is the
// bottom anchor clamped to the run length. Blocks must not overlap.
inline DocSelection select_documents(const RankedList& run, int t, int b,
                                     int n_limit) {
  if (t < 0 || b < 0 || t + b < 1)
    throw DataError("select_documents: need t >= 0, b >= 0, t + b >= 1");
  int n = static_cast<int>(run.entries.size());
  if (n < t + b)
    throw DataError("query " + run.query_id + ": run has " + std::to_string(n) +
                    " documents, need at least " + std::to_string(t + b));
  int n_eff = std::min(n_limit, n);
  if (t > n_eff - b)
    throw DataError("query " + run.query_id +
                    ": top and bottom blocks overlap (t=" + std::to_string(t) +
                    ", b=" + std::to_string(b) +
                    ", anchor=" + std::to_string(n_eff) + ")");
  DocSelection sel{t, b, n_limit, {}};
  sel.selected.reserve(static_cast<std::size_t>(t + b));
  for (int r = 1; r <= t; ++r) sel.selected.push_back(run.entries[r - 1].doc_id);
  for (int r = n_eff - b + 1; r <= n_eff; ++r)
    sel.selected.push_back(run.entries[r - 1].doc_id);
  return sel;
}

// Order-3 interaction structure between one query and its selected documents.
struct InteractionTensor {
  std::string query_id;
  Tensor3 data;  // (M, k, p), slabs in document-selection order
};

inline InteractionTensor build_tensor(const Query& query, const RankedList& run,
                                      const DocCorpus& corpus,
                                      const EmbeddingTable& emb,
                                      const InteractionConfig& cfg,
                                      const CollectionStats& stats) {
  DocSelection sel = select_documents(run, cfg.t, cfg.b, cfg.n_limit);
  InteractionTensor tensor;
  tensor.query_id = query.id;
  tensor.data = Tensor3(sel.selected.size(), static_cast<std::size_t>(cfg.k),
                        static_cast<std::size_t>(cfg.p));
  for (std::size_t i = 0; i < sel.selected.size(); ++i) {
    Matrix m = query_doc_matrix(query, sel.selected[i], corpus, emb, cfg.p,
                                cfg.k, stats, cfg.idf_on);
    for (std::size_t j = 0; j < m.rows; ++j)
      for (std::size_t beta = 0; beta < m.cols; ++beta)
        tensor.data.at(i, j, beta) = m.at(j, beta);
  }
  return tensor;
}

// Single-slab tensor wrapping a query-query interaction matrix, used by the
// (t, b) = (0, 0) sweep cell.
inline InteractionTensor build_query_pair_tensor(const Query& qa, const Query& qb,
                                                 const EmbeddingTable& emb,
                                                 int p, int k,
                                                 const CollectionStats& stats,
                                                 bool idf_on) {
  Matrix m = query_query_matrix(qa, qb, emb, p, k, stats, idf_on);
  InteractionTensor tensor;
  tensor.query_id = qa.id;
  tensor.data = Tensor3(1, m.rows, m.cols);
  for (std::size_t j = 0; j < m.rows; ++j)
    for (std::size_t beta = 0; beta < m.cols; ++beta)
      tensor.data.at(0, j, beta) = m.at(j, beta);
  return tensor;
}

// --- .itn file format -------------------------------------------------
// magic "DQPPTNSR", version u32, M, k, p as u32, then M*k*p float32
// little-endian values in slab-row-bin order.

inline constexpr char kTensorMagic[8] = {'D', 'Q', 'P', 'P', 'T', 'N', 'S', 'R'};
inline constexpr std::uint32_t kTensorVersion = 1;

inline void save_tensor(const InteractionTensor& tensor, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw UsageError("cannot write file: " + path);
  os.write(kTensorMagic, 8);
  write_u32_le(os, kTensorVersion);
  write_u32_le(os, static_cast<std::uint32_t>(tensor.data.slabs));
  write_u32_le(os, static_cast<std::uint32_t>(tensor.data.rows));
  write_u32_le(os, static_cast<std::uint32_t>(tensor.data.bins));
  for (double x : tensor.data.v) write_f32_le(os, static_cast<float>(x));
  if (!os) throw UsageError("write failed: " + path);
}

inline InteractionTensor load_tensor(const std::string& path,
                                     const std::string& query_id) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw UsageError("cannot open file: " + path);
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kTensorMagic, 8) != 0)
    throw ParseError(path + ": not a tensor file (bad magic)");
  std::uint32_t version = read_u32_le(is);
  if (version != kTensorVersion)
    throw ParseError(path + ": unsupported tensor version " +
                     std::to_string(version));
  std::uint32_t m = read_u32_le(is);
  std::uint32_t k = read_u32_le(is);
  std::uint32_t p = read_u32_le(is);
  if (m == 0 || k == 0 || p == 0)
    throw ParseError(path + ": degenerate tensor shape");
  InteractionTensor tensor;
  tensor.query_id = query_id;
  tensor.data = Tensor3(m, k, p);
  for (double& x : tensor.data.v) x = read_f32_le(is);
  return tensor;
}

}  // namespace dqpp
