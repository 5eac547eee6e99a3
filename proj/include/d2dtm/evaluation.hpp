#ifndef D2DTM_EVALUATION_HPP
#define D2DTM_EVALUATION_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "d2dtm/data.hpp"
#include "d2dtm/domain.hpp"
#include "d2dtm/model.hpp"

namespace d2dtm {

inline const std::vector<std::size_t> kDefaultKs = {10, 20, 30, 40, 50};

/// Indices of the k largest scores, descending; ties go to the lower index.
/// k larger than the row returns the full ranking.
inline std::vector<std::size_t> top_k(std::span<const double> scores, std::size_t k) {
  if (k == 0) throw std::invalid_argument("top_k: k must be >= 1");
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  const std::size_t n = std::min(k, idx.size());
  auto better = [&](std::size_t a, std::size_t b) {
    return scores[a] > scores[b] || (scores[a] == scores[b] && a < b);
  };
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n), idx.end(), better);
  idx.resize(n);
  return idx;
}

namespace detail {
inline bool contains_sorted(std::span<const std::uint32_t> truth, std::size_t item) {
  return std::binary_search(truth.begin(), truth.end(), static_cast<std::uint32_t>(item));
}
}  // namespace detail

/// |topk ∩ truth| / |truth|. `truth` is sorted ascending and non-empty.
inline double recall_at_k(std::span<const std::size_t> topk, std::span<const std::uint32_t> truth) {
  if (truth.empty()) throw std::invalid_argument("recall_at_k: empty ground truth");
  std::size_t hits = 0;
  for (auto i : topk) hits += detail::contains_sorted(truth, i) ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(truth.size());
}

/// Binary-relevance DCG over the first k positions of `topk`, normalized by
/// the ideal DCG over min(|truth|, k) positions.
inline double ndcg_at_k(std::span<const std::size_t> topk, std::span<const std::uint32_t> truth, std::size_t k) {
  if (truth.empty()) throw std::invalid_argument("ndcg_at_k: empty ground truth");
  double dcg = 0.0;
  const std::size_t n = std::min(k, topk.size());
  for (std::size_t i = 0; i < n; ++i) {
    if (detail::contains_sorted(truth, topk[i])) dcg += 1.0 / std::log2(static_cast<double>(i) + 2.0);
  }
  double idcg = 0.0;
  const std::size_t ideal = std::min(k, truth.size());
  for (std::size_t i = 0; i < ideal; ++i) idcg += 1.0 / std::log2(static_cast<double>(i) + 2.0);
  return dcg / idcg;
}

struct RankingReport {
  Direction direction = Direction::a2b;
  std::vector<std::size_t> k_values;
  std::vector<double> recall;
  std::vector<double> ndcg;
  std::size_t n_users = 0;

  double recall_at(std::size_t k) const {
    for (std::size_t i = 0; i < k_values.size(); ++i) {
      if (k_values[i] == k) return recall[i];
    }
    throw std::out_of_range("no recall recorded for K=" + std::to_string(k));
  }
  double ndcg_at(std::size_t k) const {
    for (std::size_t i = 0; i < k_values.size(); ++i) {
      if (k_values[i] == k) return ndcg[i];
    }
    throw std::out_of_range("no ndcg recorded for K=" + std::to_string(k));
  }

  bool operator==(const RankingReport&) const = default;
};

/// Produces target-domain score rows for a batch of users, given their
/// positions in the evaluated dataset and their source-domain click rows.
using Scorer = std::function<Matrix(std::span<const std::size_t> users, const Matrix& source_clicks)>;

/// Scores every user of `ds` from its full source click vector and averages
/// Recall@K / NDCG@K over users against the full target click set.
inline RankingReport evaluate_scores(const Scorer& scorer, const DualDomainDataset& ds, Direction direction,
                                     std::span<const std::size_t> k_values, std::size_t batch_size = 256) {
  if (k_values.empty()) throw std::invalid_argument("evaluate: empty K list");
  const auto& src = ds.domain(source_of(direction));
  const auto& dst = ds.domain(target_of(direction));
  RankingReport rep;
  rep.direction = direction;
  rep.k_values.assign(k_values.begin(), k_values.end());
  rep.recall.assign(k_values.size(), 0.0);
  rep.ndcg.assign(k_values.size(), 0.0);
  rep.n_users = ds.n_users();
  if (rep.n_users == 0) return rep;
  const std::size_t max_k = *std::max_element(k_values.begin(), k_values.end());

  for (std::size_t start = 0; start < ds.n_users(); start += batch_size) {
    const std::size_t end = std::min(ds.n_users(), start + batch_size);
    std::vector<std::size_t> users(end - start);
    std::iota(users.begin(), users.end(), start);
    const Matrix scores = scorer(users, src.dense(users));
    if (scores.rows() != users.size() || scores.cols() != dst.n_items()) {
      throw ShapeError("scorer returned " + scores.shape() + ", expected " +
                       Matrix::shape_string(users.size(), dst.n_items()));
    }
    for (std::size_t r = 0; r < users.size(); ++r) {
      const auto ranked = top_k(scores.row(r), max_k);
      const auto& truth = dst.rows[users[r]];
      for (std::size_t ki = 0; ki < k_values.size(); ++ki) {
        const std::size_t k = k_values[ki];
        const std::span<const std::size_t> head(ranked.data(), std::min(k, ranked.size()));
        rep.recall[ki] += recall_at_k(head, truth);
        rep.ndcg[ki] += ndcg_at_k(head, truth, k);
      }
    }
  }
  for (std::size_t ki = 0; ki < k_values.size(); ++ki) {
    rep.recall[ki] /= static_cast<double>(rep.n_users);
    rep.ndcg[ki] /= static_cast<double>(rep.n_users);
  }
  return rep;
}

inline Scorer model_scorer(const D2DParams& params, Direction direction, ReconLoss kind = ReconLoss::multinomial) {
  return [&params, direction, kind](std::span<const std::size_t>, const Matrix& x) {
    return predict_cross(source_of(direction), x, params, kind);
  };
}

inline RankingReport evaluate_direction(const D2DParams& params, const DualDomainDataset& ds, Direction direction,
                                        std::span<const std::size_t> k_values,
                                        ReconLoss kind = ReconLoss::multinomial) {
  return evaluate_scores(model_scorer(params, direction, kind), ds, direction, k_values);
}

/// Global click counts of each item of domain `d` in `train`.
inline std::vector<double> item_popularity(const DualDomainDataset& train, Domain d) {
  const auto& m = train.domain(d);
  std::vector<double> counts(m.n_items(), 0.0);
  for (const auto& r : m.rows) {
    for (auto c : r) counts[c] += 1.0;
  }
  return counts;
}

/// Ranks target items by their click count in `train`, the same for every user.
inline Scorer popularity_scorer(const DualDomainDataset& train, Direction direction) {
  auto counts = item_popularity(train, target_of(direction));
  return [counts = std::move(counts)](std::span<const std::size_t> users, const Matrix&) {
    Matrix out(users.size(), counts.size());
    for (std::size_t r = 0; r < users.size(); ++r) std::copy(counts.begin(), counts.end(), out.row(r).begin());
    return out;
  };
}

/// Scores equal to the ground-truth indicator of `ds`; an upper bound used in tests.
inline Scorer oracle_scorer(const DualDomainDataset& ds, Direction direction) {
  return [&ds, direction](std::span<const std::size_t> users, const Matrix&) {
    return ds.domain(target_of(direction)).dense(users);
  };
}

// CSV with columns direction,K,recall,ndcg,n_users; metrics use 6 decimals.
inline void write_report_csv(std::ostream& out, std::span<const RankingReport> reports, bool header = true) {
  if (header) out << "direction,K,recall,ndcg,n_users\n";
  char buf[128];
  for (const auto& r : reports) {
    for (std::size_t i = 0; i < r.k_values.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%s,%zu,%.6f,%.6f,%zu\n", direction_name(r.direction).c_str(), r.k_values[i],
                    r.recall[i], r.ndcg[i], r.n_users);
      out << buf;
    }
  }
}

inline std::vector<RankingReport> parse_report_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != "direction,K,recall,ndcg,n_users") {
    throw ParseError(1, "missing metric CSV header");
  }
  std::vector<RankingReport> out;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = detail::split(line, ",");
    if (f.size() != 5) throw ParseError(line_no, "expected 5 columns");
    const Direction dir = parse_direction(f[0]);
    std::size_t k = 0, n = 0;
    double rec = 0, ndcg = 0;
    if (!detail::parse_number(f[1], k) || !detail::parse_number(f[2], rec) || !detail::parse_number(f[3], ndcg) ||
        !detail::parse_number(f[4], n)) {
      throw ParseError(line_no, "malformed metric row");
    }
    if (out.empty() || out.back().direction != dir) {
      out.push_back({});
      out.back().direction = dir;
      out.back().n_users = n;
    }
    auto& r = out.back();
    r.k_values.push_back(k);
    r.recall.push_back(rec);
    r.ndcg.push_back(ndcg);
  }
  return out;
}

}  // namespace d2dtm

#endif  // D2DTM_EVALUATION_HPP
