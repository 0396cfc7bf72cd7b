#pragma once

// Brute-force reference implementations shared by the unit tests and the
// acceptance binary. They are written for clarity, not speed, and share no
// code with the library's ranking path.

#include <algorithm>
#include <set>
#include <utility>
#include <vector>

#include "deepe/data.hpp"
#include "deepe/eval.hpp"

namespace deepe::oracle {

// Sort all surviving candidates by descending score and read off the block
// of positions holding the gold score.
template <typename T>
double sorted_rank(const std::vector<T>& scores, int gold, const std::set<int>& known,
                   TieMode ties) {
  std::vector<std::pair<T, int>> candidates;
  for (int e = 0; e < static_cast<int>(scores.size()); ++e)
    if (e == gold || !known.contains(e)) candidates.push_back({scores[static_cast<std::size_t>(e)], e});
  std::stable_sort(candidates.begin(), candidates.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  const T g = scores[static_cast<std::size_t>(gold)];
  std::size_t first = candidates.size(), last = 0;
  for (std::size_t i = 0; i < candidates.size(); ++i)
    if (candidates[i].first == g) {
      first = std::min(first, i);
      last = std::max(last, i);
    }
  switch (ties) {
    case TieMode::optimistic:
      return static_cast<double>(first + 1);
    case TieMode::pessimistic:
      return static_cast<double>(last + 1);
    case TieMode::average:
      break;
  }
  return (static_cast<double>(first) + static_cast<double>(last)) / 2.0 + 1.0;
}

struct OracleMetrics {
  std::size_t count = 0;
  double mr = 0, mrr = 0, hit1 = 0, hit10 = 0;
};

inline OracleMetrics summarize(const std::vector<double>& ranks) {
  OracleMetrics m;
  m.count = ranks.size();
  if (ranks.empty()) return m;
  for (double r : ranks) {
    m.mr += r;
    m.mrr += 1.0 / r;
    m.hit1 += r <= 1.0 ? 1.0 : 0.0;
    m.hit10 += r <= 10.0 ? 1.0 : 0.0;
  }
  const double n = static_cast<double>(ranks.size());
  m.mr /= n;
  m.mrr /= n;
  m.hit1 /= n;
  m.hit10 /= n;
  return m;
}

struct OracleReport {
  std::vector<double> ranks;  // tail query then head query per triple
  OracleMetrics overall;
  OracleMetrics by_category[4][2];
  OracleMetrics by_degree[kDegreeBuckets.size()];
};

// score(head, augmented_relation) returns one score per entity.
template <typename T, typename ScoreOne>
OracleReport brute_force_evaluate(const Dataset& ds, Split split, ScoreOne&& score,
                                  TieMode ties) {
  const auto nr = static_cast<int>(ds.num_relations());
  // Known answers from a direct scan over all three splits.
  auto known_tails = [&](int head, int rel) {
    std::set<int> out;
    for (const auto* s : {&ds.train, &ds.valid, &ds.test})
      for (const auto& t : *s) {
        if (t.head == head && t.relation == rel) out.insert(t.tail);
        if (t.tail == head && t.relation + nr == rel) out.insert(t.head);
      }
    return out;
  };
  auto degree = [&](int e) {
    int d = 0;
    for (const auto& t : ds.train) d += (t.head == e) + (t.tail == e);
    return d;
  };
  auto bucket = [](int d) {
    for (std::size_t i = 0; i < kDegreeBuckets.size(); ++i)
      if (d >= kDegreeBuckets[i].min_degree && d <= kDegreeBuckets[i].max_degree) return i;
    return kDegreeBuckets.size();
  };

  OracleReport out;
  std::vector<double> cat_ranks[4][2];
  std::vector<double> deg_ranks[kDegreeBuckets.size()];
  for (const auto& t : ds.split(split)) {
    const auto cat = static_cast<std::size_t>(ds.categories.category[static_cast<std::size_t>(t.relation)]);
    const std::pair<int, int> queries[2] = {{t.head, t.relation}, {t.tail, t.relation + nr}};
    const int golds[2] = {t.tail, t.head};
    for (int dir = 0; dir < 2; ++dir) {
      const std::vector<T> s = score(queries[dir].first, queries[dir].second);
      const double r = sorted_rank(s, golds[dir], known_tails(queries[dir].first, queries[dir].second), ties);
      out.ranks.push_back(r);
      cat_ranks[cat][dir].push_back(r);
      deg_ranks[bucket(degree(golds[dir]))].push_back(r);
    }
  }
  out.overall = summarize(out.ranks);
  for (int c = 0; c < 4; ++c)
    for (int d = 0; d < 2; ++d) out.by_category[c][d] = summarize(cat_ranks[c][d]);
  for (std::size_t b = 0; b < kDegreeBuckets.size(); ++b) out.by_degree[b] = summarize(deg_ranks[b]);
  return out;
}

}  // namespace deepe::oracle
