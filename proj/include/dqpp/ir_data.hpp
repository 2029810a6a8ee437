#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "dqpp/core.hpp"
#include "dqpp/error.hpp"

namespace dqpp {

struct Query {
  std::string id;
  std::vector<std::string> terms;  // lowercase tokens, in order
  std::string raw;
};

using QuerySet = std::map<std::string, Query>;

struct RunEntry {
  std::string doc_id;
  int rank = 0;
  double score = 0.0;
};

// One ranked list per query; ranks 1..n contiguous, scores non-increasing.
struct RankedList {
  std::string query_id;
  std::vector<RunEntry> entries;
};

using RunFile = std::map<std::string, RankedList>;

struct Qrels {
  // query_id -> doc_id -> grade (> 0); unjudged and grade-0 pairs are absent.
  std::map<std::string, std::map<std::string, int>> judgments;

  int grade(const std::string& qid, const std::string& doc_id) const {
    auto q = judgments.find(qid);
    if (q == judgments.end()) return 0;
    auto d = q->second.find(doc_id);
    return d == q->second.end() ? 0 : d->second;
  }

  int relevant_count(const std::string& qid) const {
    auto q = judgments.find(qid);
    return q == judgments.end() ? 0 : static_cast<int>(q->second.size());
  }
};

struct DocCorpus {
  std::map<std::string, std::vector<std::string>> docs;
};

struct EmbeddingTable {
  std::size_t dim = 0;
  std::unordered_map<std::string, std::vector<double>> vectors;

  const std::vector<double>* find(const std::string& token) const {
    auto it = vectors.find(token);
    return it == vectors.end() ? nullptr : &it->second;
  }
};

struct CollectionStats {
  std::size_t n0 = 0;  // total document count
  std::unordered_map<std::string, std::size_t> df;
};

enum class TargetMetric { ap100, ndcg20 };

inline const char* to_string(TargetMetric m) {
  return m == TargetMetric::ap100 ? "AP@100" : "nDCG@20";
}

inline TargetMetric parse_target_metric(const std::string& s) {
  if (s == "ap100" || s == "AP@100") return TargetMetric::ap100;
  if (s == "ndcg20" || s == "nDCG@20") return TargetMetric::ndcg20;
  throw UsageError("unknown target metric: " + s);
}

struct QueryEffectiveness {
  std::string metric_name;
  std::map<std::string, double> values;

  bool has(const std::string& qid) const { return values.count(qid) > 0; }
  double value(const std::string& qid) const {
    auto it = values.find(qid);
    if (it == values.end())
      throw UndefinedMetricError("no " + metric_name + " value for query " + qid);
    return it->second;
  }
};

namespace detail {

inline std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t') ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

inline bool parse_int(std::string_view s, long& out) {
  auto r = std::from_chars(s.data(), s.data() + s.size(), out);
  return r.ec == std::errc() && r.ptr == s.data() + s.size();
}

inline bool parse_double(std::string_view s, double& out) {
  auto r = std::from_chars(s.data(), s.data() + s.size(), out);
  return r.ec == std::errc() && r.ptr == s.data() + s.size();
}

inline std::string format_double(double d) {
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof(buf), d);
  return std::string(buf, r.ptr);
}

inline std::ifstream open_input(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open file: " + path);
  return in;
}

inline void strip_cr(std::string& line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
}

}  // namespace detail

// Lowercase, split on non-alphanumeric (ASCII), drop empty tokens.
inline std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : text) {
    unsigned char u = static_cast<unsigned char>(c);
    bool alnum = (u >= '0' && u <= '9') || (u >= 'a' && u <= 'z') ||
                 (u >= 'A' && u <= 'Z');
    if (alnum) {
      cur.push_back(u >= 'A' && u <= 'Z' ? static_cast<char>(u - 'A' + 'a')
                                         : c);
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

// TREC run format: "qid Q0 docid rank score tag", whitespace-separated.
inline RunFile parse_run(const std::string& path) {
  auto in = detail::open_input(path);
  RunFile runs;
  std::map<std::string, std::unordered_set<std::string>> seen_docs;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    detail::strip_cr(line);
    auto fields = detail::split_ws(line);
    if (fields.empty()) continue;
    if (fields.size() != 6)
      throw ParseError(path, lineno,
                       "expected 6 fields, got " + std::to_string(fields.size()));
    long rank;
    double score;
    if (!detail::parse_int(fields[3], rank) || rank < 1)
      throw ParseError(path, lineno,
                       "bad rank '" + std::string(fields[3]) + "'");
    if (!detail::parse_double(fields[4], score))
      throw ParseError(path, lineno,
                       "bad score '" + std::string(fields[4]) + "'");
    std::string qid(fields[0]);
    std::string doc(fields[2]);
    if (!seen_docs[qid].insert(doc).second)
      throw ParseError(path, lineno,
                       "duplicate document " + doc + " for query " + qid);
    auto& rl = runs[qid];
    rl.query_id = qid;
    rl.entries.push_back({std::move(doc), static_cast<int>(rank), score});
  }
  for (auto& [qid, rl] : runs) {
    std::sort(rl.entries.begin(), rl.entries.end(),
              [](const RunEntry& a, const RunEntry& b) { return a.rank < b.rank; });
    for (std::size_t i = 0; i < rl.entries.size(); ++i) {
      if (rl.entries[i].rank != static_cast<int>(i) + 1)
        throw ParseError(path + ": query " + qid +
                         ": ranks are not contiguous from 1");
      if (i > 0 && rl.entries[i].score > rl.entries[i - 1].score)
        throw ParseError(path + ": query " + qid + ": score increases at rank " +
                         std::to_string(rl.entries[i].rank));
    }
  }
  return runs;
}

inline void write_run(const RunFile& runs, std::ostream& os,
                      const std::string& tag = "dqpp") {
  for (const auto& [qid, rl] : runs)
    for (const auto& e : rl.entries)
      os << qid << " Q0 " << e.doc_id << ' ' << e.rank << ' '
         << detail::format_double(e.score) << ' ' << tag << '\n';
}

inline void write_run(const RunFile& runs, const std::string& path,
                      const std::string& tag = "dqpp") {
  std::ofstream os(path);
  if (!os) throw UsageError("cannot write file: " + path);
  write_run(runs, os, tag);
}

// TREC qrels format: "qid 0 docid grade".
inline Qrels parse_qrels(const std::string& path) {
  auto in = detail::open_input(path);
  Qrels qrels;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    detail::strip_cr(line);
    auto fields = detail::split_ws(line);
    if (fields.empty()) continue;
    if (fields.size() != 4)
      throw ParseError(path, lineno,
                       "expected 4 fields, got " + std::to_string(fields.size()));
    long grade;
    if (!detail::parse_int(fields[3], grade) || grade < 0)
      throw ParseError(path, lineno,
                       "bad relevance grade '" + std::string(fields[3]) + "'");
    std::string qid(fields[0]);
    std::string doc(fields[2]);
    if (grade > 0)
      qrels.judgments[qid][doc] = static_cast<int>(grade);
    else
      qrels.judgments[qid].erase(doc);  // grade 0 is equivalent to absence
  }
  // Drop queries whose every judgment was grade 0.
  for (auto it = qrels.judgments.begin(); it != qrels.judgments.end();)
    it = it->second.empty() ? qrels.judgments.erase(it) : std::next(it);
  return qrels;
}

namespace detail {

// Shared TSV reader for queries and corpus files: "id<TAB>text".
template <typename OnRecord>
void parse_id_text_tsv(const std::string& path, OnRecord&& on_record) {
  auto in = open_input(path);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    strip_cr(line);
    if (line.empty()) continue;
    auto tab = line.find('\t');
    if (tab == std::string::npos)
      throw ParseError(path, lineno, "missing TAB separator");
    std::string id = line.substr(0, tab);
    std::string text = line.substr(tab + 1);
    if (id.empty()) throw ParseError(path, lineno, "empty id");
    auto terms = tokenize(text);
    if (terms.empty())
      throw ParseError(path, lineno, "record '" + id + "' has no tokens");
    on_record(lineno, std::move(id), std::move(text), std::move(terms));
  }
}

}  // namespace detail

inline QuerySet parse_queries(const std::string& path) {
  QuerySet queries;
  detail::parse_id_text_tsv(
      path, [&](std::size_t lineno, std::string id, std::string text,
                std::vector<std::string> terms) {
        if (queries.count(id))
          throw ParseError(path, lineno, "duplicate query id " + id);
        queries[id] = Query{id, std::move(terms), std::move(text)};
      });
  return queries;
}

inline DocCorpus parse_corpus(const std::string& path) {
  DocCorpus corpus;
  detail::parse_id_text_tsv(
      path, [&](std::size_t lineno, std::string id, std::string,
                std::vector<std::string> terms) {
        if (corpus.docs.count(id))
          throw ParseError(path, lineno, "duplicate doc id " + id);
        corpus.docs[id] = std::move(terms);
      });
  return corpus;
}

// word2vec text format: header "vocab_size dim", then "token v1 ... vdim".
inline EmbeddingTable load_embeddings(const std::string& path) {
  auto in = detail::open_input(path);
  std::string line;
  if (!std::getline(in, line)) throw ParseError(path, 1, "missing header");
  detail::strip_cr(line);
  auto header = detail::split_ws(line);
  long vocab_size, dim;
  if (header.size() != 2 || !detail::parse_int(header[0], vocab_size) ||
      !detail::parse_int(header[1], dim) || vocab_size < 0 || dim < 1)
    throw ParseError(path, 1, "bad header '" + line + "'");
  EmbeddingTable table;
  table.dim = static_cast<std::size_t>(dim);
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    detail::strip_cr(line);
    auto fields = detail::split_ws(line);
    if (fields.empty()) continue;
    if (fields.size() != table.dim + 1)
      throw ParseError(path, lineno,
                       "expected " + std::to_string(table.dim + 1) +
                           " fields, got " + std::to_string(fields.size()));
    std::vector<double> vec(table.dim);
    for (std::size_t i = 0; i < table.dim; ++i)
      if (!detail::parse_double(fields[i + 1], vec[i]))
        throw ParseError(path, lineno,
                         "bad value '" + std::string(fields[i + 1]) + "'");
    std::string token(fields[0]);
    if (!table.vectors.emplace(std::move(token), std::move(vec)).second)
      throw ParseError(path, lineno,
                       "duplicate token '" + std::string(fields[0]) + "'");
  }
  if (table.vectors.size() != static_cast<std::size_t>(vocab_size))
    throw ParseError(path + ": header declares " + std::to_string(vocab_size) +
                     " vectors, file has " + std::to_string(table.vectors.size()));
  return table;
}

inline CollectionStats compute_collection_stats(const DocCorpus& corpus) {
  if (corpus.docs.empty())
    throw DataError("cannot compute collection statistics of an empty corpus");
  CollectionStats stats;
  stats.n0 = corpus.docs.size();
  std::unordered_set<std::string> seen;
  for (const auto& [doc_id, tokens] : corpus.docs) {
    seen.clear();
    for (const auto& t : tokens)
      if (seen.insert(t).second) ++stats.df[t];
  }
  return stats;
}

// Stats cache: "#N0 <n>" header line, then "token<TAB>df".
inline void save_stats(const CollectionStats& stats, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw UsageError("cannot write file: " + path);
  os << "#N0 " << stats.n0 << '\n';
  std::map<std::string, std::size_t> sorted(stats.df.begin(), stats.df.end());
  for (const auto& [token, df] : sorted) os << token << '\t' << df << '\n';
}

inline CollectionStats load_stats(const std::string& path) {
  auto in = detail::open_input(path);
  std::string line;
  if (!std::getline(in, line)) throw ParseError(path, 1, "missing #N0 header");
  detail::strip_cr(line);
  auto header = detail::split_ws(line);
  long n0;
  if (header.size() != 2 || header[0] != "#N0" ||
      !detail::parse_int(header[1], n0) || n0 < 1)
    throw ParseError(path, 1, "bad #N0 header '" + line + "'");
  CollectionStats stats;
  stats.n0 = static_cast<std::size_t>(n0);
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    detail::strip_cr(line);
    if (line.empty()) continue;
    auto tab = line.find('\t');
    if (tab == std::string::npos)
      throw ParseError(path, lineno, "missing TAB separator");
    long df;
    if (!detail::parse_int(std::string_view(line).substr(tab + 1), df) ||
        df < 1 || df > n0)
      throw ParseError(path, lineno, "df out of range [1, N0]");
    stats.df[line.substr(0, tab)] = static_cast<std::size_t>(df);
  }
  return stats;
}

// AP with the summation truncated at `cutoff`; denominator is the total
// judged-relevant count for the query, uncapped (trec_eval convention).
inline double average_precision_at(const RankedList& run, const Qrels& qrels,
                                   int cutoff) {
  if (cutoff < 1) throw DataError("cutoff must be >= 1");
  int total_relevant = qrels.relevant_count(run.query_id);
  if (total_relevant == 0)
    throw UndefinedMetricError("query " + run.query_id +
                               " has no judged-relevant documents");
  double sum = 0.0;
  int seen_relevant = 0;
  for (const auto& e : run.entries) {
    if (e.rank > cutoff) break;
    if (qrels.grade(run.query_id, e.doc_id) > 0) {
      ++seen_relevant;
      sum += static_cast<double>(seen_relevant) / e.rank;
    }
  }
  return sum / total_relevant;
}

// nDCG with linear gain and 1/log2(rank+1) discount; the ideal ranking uses
// all judged-relevant grades sorted descending, truncated at `cutoff`.
inline double ndcg_at(const RankedList& run, const Qrels& qrels, int cutoff) {
  if (cutoff < 1) throw DataError("cutoff must be >= 1");
  auto q = qrels.judgments.find(run.query_id);
  if (q == qrels.judgments.end() || q->second.empty())
    throw UndefinedMetricError("query " + run.query_id +
                               " has no judged-relevant documents");
  double dcg = 0.0;
  for (const auto& e : run.entries) {
    if (e.rank > cutoff) break;
    int g = qrels.grade(run.query_id, e.doc_id);
    if (g > 0) dcg += g / std::log2(e.rank + 1.0);
  }
  std::vector<int> grades;
  grades.reserve(q->second.size());
  for (const auto& [doc, g] : q->second) grades.push_back(g);
  std::sort(grades.begin(), grades.end(), std::greater<int>());
  double idcg = 0.0;
  for (std::size_t i = 0; i < grades.size() && i < static_cast<std::size_t>(cutoff); ++i)
    idcg += grades[i] / std::log2(i + 2.0);
  return dcg / idcg;
}

// Per-query target metric values; queries with no judged-relevant documents
// are excluded (their metric is undefined).
inline QueryEffectiveness compute_effectiveness(const RunFile& runs,
                                                const Qrels& qrels,
                                                TargetMetric metric) {
  QueryEffectiveness eff;
  eff.metric_name = to_string(metric);
  for (const auto& [qid, rl] : runs) {
    try {
      eff.values[qid] = metric == TargetMetric::ap100
                            ? average_precision_at(rl, qrels, 100)
                            : ndcg_at(rl, qrels, 20);
    } catch (const UndefinedMetricError&) {
      // excluded from training and evaluation
    }
  }
  return eff;
}

}  // namespace dqpp
