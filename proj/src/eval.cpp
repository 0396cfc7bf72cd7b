#include "deepe/eval.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <stdexcept>

namespace deepe {

TieMode parse_tie_mode(std::string_view name) {
  if (name == "average") return TieMode::average;
  if (name == "pessimistic") return TieMode::pessimistic;
  if (name == "optimistic") return TieMode::optimistic;
  throw std::invalid_argument("unknown tie mode '" + std::string(name) +
                              "' (expected average, pessimistic or optimistic)");
}

std::string_view tie_mode_name(TieMode mode) {
  switch (mode) {
    case TieMode::average: return "average";
    case TieMode::pessimistic: return "pessimistic";
    case TieMode::optimistic: return "optimistic";
  }
  return "?";
}

std::string_view direction_name(Direction d) {
  return d == Direction::tail ? "tail" : "head";
}

template <typename T>
double filtered_rank(std::span<const T> scores, int gold,
                     std::span<const int> filter, TieMode ties) {
  if (gold < 0 || static_cast<std::size_t>(gold) >= scores.size()) {
    throw std::out_of_range("filtered_rank: gold id " + std::to_string(gold) +
                            " outside " + std::to_string(scores.size()) +
                            " entities");
  }
  const T target = scores[static_cast<std::size_t>(gold)];
  std::size_t filtered_out = 0;
  for (int f : filter)
    if (f != gold) ++filtered_out;
  if (!std::isfinite(target)) {
    return static_cast<double>(scores.size() - filtered_out);
  }
  std::size_t greater = 0;
  std::size_t equal = 0;
  for (std::size_t e = 0; e < scores.size(); ++e) {
    if (scores[e] > target) ++greater;
    else if (scores[e] == target) ++equal;
  }
  --equal;  // gold itself
  for (int f : filter) {
    if (f == gold) continue;
    const T s = scores[static_cast<std::size_t>(f)];
    if (s > target) --greater;
    else if (s == target) --equal;
  }
  const double base = 1.0 + static_cast<double>(greater);
  switch (ties) {
    case TieMode::average: return base + static_cast<double>(equal) / 2.0;
    case TieMode::pessimistic: return base + static_cast<double>(equal);
    case TieMode::optimistic: return base;
  }
  return base;
}

void Metrics::add(double rank) {
  ++count;
  sum_rank += rank;
  sum_reciprocal += 1.0 / rank;
  if (rank <= 1.0) ++hits1;
  if (rank <= 10.0) ++hits10;
}

void Metrics::merge(const Metrics& o) {
  count += o.count;
  sum_rank += o.sum_rank;
  sum_reciprocal += o.sum_reciprocal;
  hits1 += o.hits1;
  hits10 += o.hits10;
}

std::size_t degree_bucket(int degree) {
  for (std::size_t i = 0; i < kDegreeBuckets.size(); ++i) {
    if (degree >= kDegreeBuckets[i].min_degree &&
        degree <= kDegreeBuckets[i].max_degree)
      return i;
  }
  return 0;
}

Metrics EvalReport::category(RelationCategory c) const {
  Metrics m = by_category[static_cast<std::size_t>(c)][0];
  m.merge(by_category[static_cast<std::size_t>(c)][1]);
  return m;
}

std::vector<EvalQuery> make_queries(const Dataset& ds, Split split) {
  const auto& triples = ds.split(split);
  const std::size_t nr = ds.num_relations();
  std::vector<EvalQuery> out;
  out.reserve(2 * triples.size());
  for (const auto& t : triples) {
    out.push_back({t.head, t.relation, t.tail, t.relation, Direction::tail});
    const Triple rev = reverse_triple(t, nr);
    out.push_back({rev.head, rev.relation, rev.tail, t.relation, Direction::head});
  }
  return out;
}

EvalReport aggregate_ranks(const Dataset& ds, Split split, TieMode ties,
                           std::span<const EvalQuery> queries,
                           std::vector<double> ranks) {
  if (ranks.size() != queries.size()) {
    throw std::invalid_argument("aggregate_ranks: rank/query count mismatch");
  }
  EvalReport report;
  report.split = split;
  report.ties = ties;
  for (std::size_t i = 0; i < queries.size(); ++i) {
    const EvalQuery& q = queries[i];
    const double rank = ranks[i];
    const auto dir = static_cast<std::size_t>(q.direction);
    const auto cat = static_cast<std::size_t>(
        ds.categories.category[static_cast<std::size_t>(q.original_relation)]);
    report.overall.add(rank);
    report.by_direction[dir].add(rank);
    report.by_category[cat][dir].add(rank);
    report.by_degree[degree_bucket(ds.degrees.total[static_cast<std::size_t>(q.gold)])]
        .add(rank);
  }
  report.ranks = std::move(ranks);
  return report;
}

std::size_t default_eval_workers() {
  std::size_t hw = std::thread::hardware_concurrency();
  if (hw == 0) hw = 1;
  if (const char* env = std::getenv("DEEPE_NUM_WORKERS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && v > 0) return std::min<std::size_t>(hw, static_cast<std::size_t>(v));
  }
  return hw;
}

template <typename T>
EvalReport evaluate(const Model<T>& model, const Dataset& ds, Split split,
                    const EvalOptions& options) {
  if (model.num_entities() != ds.num_entities() ||
      model.num_relations() != ds.num_relations()) {
    throw std::invalid_argument("evaluate: model vocabulary sizes do not match dataset");
  }
  const Matrix<T> projected = model.project_infer();
  return evaluate_with<T>(
      ds, split,
      [&](std::span<const int> heads, std::span<const int> relations) {
        return model.score_infer(heads, relations, projected);
      },
      options);
}

std::string format_metric(double value) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", value);
  return buf;
}

namespace {

std::ofstream open_csv(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

void write_metrics(std::ostream& out, const Metrics& m) {
  out << m.count << ',' << format_metric(m.mr()) << ',' << format_metric(m.mrr())
      << ',' << format_metric(m.hit1()) << ',' << format_metric(m.hit10()) << '\n';
}

}  // namespace

void emit_report(const EvalReport& r, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create " + dir.string() + ": " + ec.message());
  const std::string split(split_name(r.split));

  auto overall = open_csv(dir / "overall.csv");
  overall << "split,direction,count,mr,mrr,hits1,hits10\n";
  overall << split << ",both,";
  write_metrics(overall, r.overall);
  for (auto d : {Direction::head, Direction::tail}) {
    overall << split << ',' << direction_name(d) << ',';
    write_metrics(overall, r.by_direction[static_cast<std::size_t>(d)]);
  }

  auto by_cat = open_csv(dir / "by_category.csv");
  by_cat << "split,category,direction,count,mr,mrr,hits1,hits10\n";
  for (auto c : kAllCategories) {
    for (auto d : {Direction::head, Direction::tail}) {
      by_cat << split << ',' << category_name(c) << ',' << direction_name(d) << ',';
      write_metrics(by_cat,
                    r.by_category[static_cast<std::size_t>(c)][static_cast<std::size_t>(d)]);
    }
  }

  auto by_deg = open_csv(dir / "by_degree.csv");
  by_deg << "split,degree_bucket,min_degree,max_degree,count,mr,mrr,hits1,hits10\n";
  for (std::size_t i = 0; i < kDegreeBuckets.size(); ++i) {
    const auto& b = kDegreeBuckets[i];
    by_deg << split << ',' << b.label << ',' << b.min_degree << ',';
    if (b.max_degree == std::numeric_limits<int>::max()) by_deg << "inf";
    else by_deg << b.max_degree;
    by_deg << ',';
    write_metrics(by_deg, r.by_degree[i]);
  }
  if (!overall || !by_cat || !by_deg) {
    throw std::runtime_error("failed writing report files in " + dir.string());
  }
}

template double filtered_rank(std::span<const float>, int, std::span<const int>, TieMode);
template double filtered_rank(std::span<const double>, int, std::span<const int>, TieMode);
template EvalReport evaluate(const Model<float>&, const Dataset&, Split, const EvalOptions&);
template EvalReport evaluate(const Model<double>&, const Dataset&, Split, const EvalOptions&);

}  // namespace deepe
