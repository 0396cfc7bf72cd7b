#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <exception>
#include <filesystem>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "deepe/data.hpp"
#include "deepe/matrix.hpp"
#include "deepe/model.hpp"

namespace deepe {

// average: 1 + #greater + #ties/2; pessimistic: all ties rank above gold;
// optimistic: no tie ranks above gold.
enum class TieMode { average, pessimistic, optimistic };
TieMode parse_tie_mode(std::string_view name);
std::string_view tie_mode_name(TieMode mode);

// Rank of scores[gold] among all entities except the known-true ones in
// `filter` (sorted ascending). gold itself is always a candidate even when
// it appears in filter. A non-finite gold score ranks last.
template <typename T>
double filtered_rank(std::span<const T> scores, int gold,
                     std::span<const int> filter, TieMode ties = TieMode::average);

enum class Direction { tail = 0, head = 1 };
std::string_view direction_name(Direction d);

struct Metrics {
  std::size_t count = 0;
  double sum_rank = 0.0;
  double sum_reciprocal = 0.0;
  std::size_t hits1 = 0;
  std::size_t hits10 = 0;

  void add(double rank);
  void merge(const Metrics& other);
  double mr() const { return count ? sum_rank / static_cast<double>(count) : 0.0; }
  double mrr() const { return count ? sum_reciprocal / static_cast<double>(count) : 0.0; }
  double hit1() const { return count ? static_cast<double>(hits1) / static_cast<double>(count) : 0.0; }
  double hit10() const { return count ? static_cast<double>(hits10) / static_cast<double>(count) : 0.0; }

  bool operator==(const Metrics&) const = default;
};

struct DegreeBucket {
  std::string_view label;
  int min_degree;
  int max_degree;
};
// Degree 0 covers entities that never occur in train.
inline constexpr std::array<DegreeBucket, 7> kDegreeBuckets = {{
    {"0", 0, 0},
    {"1", 1, 1},
    {"2", 2, 2},
    {"3-5", 3, 5},
    {"6-10", 6, 10},
    {"11-100", 11, 100},
    {">100", 101, std::numeric_limits<int>::max()},
}};
std::size_t degree_bucket(int degree);

struct EvalReport {
  Split split = Split::test;
  TieMode ties = TieMode::average;
  Metrics overall;
  std::array<Metrics, 2> by_direction{};                  // [Direction]
  std::array<std::array<Metrics, 2>, 4> by_category{};    // [category][Direction]
  std::array<Metrics, kDegreeBuckets.size()> by_degree{};  // bucket of predicted entity
  // Per query: 2i is the tail query of triple i, 2i+1 its head query.
  std::vector<double> ranks;

  Metrics category(RelationCategory c) const;
  bool operator==(const EvalReport&) const = default;
};

struct EvalQuery {
  int head;      // entity the query starts from
  int relation;  // augmented relation id
  int gold;      // entity to rank
  int original_relation;
  Direction direction;
};

std::vector<EvalQuery> make_queries(const Dataset& ds, Split split);

// Folds per-query ranks (same order as queries) into a report.
EvalReport aggregate_ranks(const Dataset& ds, Split split, TieMode ties,
                           std::span<const EvalQuery> queries,
                           std::vector<double> ranks);

struct EvalOptions {
  TieMode ties = TieMode::average;
  // 0 means "use DEEPE_NUM_WORKERS, else hardware concurrency".
  std::size_t workers = 0;
  std::size_t batch_size = 256;
};

// DEEPE_NUM_WORKERS if set and positive, capped by hardware concurrency.
std::size_t default_eval_workers();

// Filtered evaluation with any batch scorer:
//   Matrix<T> score(std::span<const int> heads, std::span<const int> relations)
// returning batch × |E|. Batches are spread over workers; the result does
// not depend on the worker count.
template <typename T, typename ScoreFn>
EvalReport evaluate_with(const Dataset& ds, Split split, ScoreFn&& score,
                         const EvalOptions& options = {}) {
  const std::vector<EvalQuery> queries = make_queries(ds, split);
  std::vector<double> ranks(queries.size(), 0.0);
  const std::size_t batch = options.batch_size ? options.batch_size : 256;
  const std::size_t n_batches = (queries.size() + batch - 1) / batch;
  std::size_t workers = options.workers ? options.workers : default_eval_workers();
  workers = std::max<std::size_t>(1, std::min(workers, n_batches));

  auto run = [&](std::size_t worker) {
    std::vector<int> heads, relations;
    for (std::size_t b = worker; b < n_batches; b += workers) {
      const std::size_t begin = b * batch;
      const std::size_t end = std::min(queries.size(), begin + batch);
      heads.clear();
      relations.clear();
      for (std::size_t q = begin; q < end; ++q) {
        heads.push_back(queries[q].head);
        relations.push_back(queries[q].relation);
      }
      const Matrix<T> scores = score(std::span<const int>(heads),
                                     std::span<const int>(relations));
      for (std::size_t q = begin; q < end; ++q) {
        const EvalQuery& query = queries[q];
        ranks[q] = filtered_rank<T>(scores.row(q - begin), query.gold,
                                    ds.filter.tails(query.head, query.relation),
                                    options.ties);
      }
    }
  };
  if (workers == 1) {
    run(0);
  } else {
    std::vector<std::exception_ptr> errors(workers);
    {
      std::vector<std::jthread> pool;
      for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
          try {
            run(w);
          } catch (...) {
            errors[w] = std::current_exception();
          }
        });
      }
    }
    for (const auto& e : errors)
      if (e) std::rethrow_exception(e);
  }
  return aggregate_ranks(ds, split, options.ties, queries, std::move(ranks));
}

// Eval-mode model evaluation; t' is computed once per call.
template <typename T>
EvalReport evaluate(const Model<T>& model, const Dataset& ds, Split split,
                    const EvalOptions& options = {});

// Writes overall.csv, by_category.csv and by_degree.csv into dir.
void emit_report(const EvalReport& report, const std::filesystem::path& dir);

// "%.6g"
std::string format_metric(double value);

}  // namespace deepe
