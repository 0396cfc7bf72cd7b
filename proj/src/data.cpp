#include "deepe/data.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>
#include <utility>

#include "deepe/hash.hpp"

namespace deepe {

std::uint64_t hash_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  Fnv1a h;
  std::array<char, 1 << 16> buf{};
  while (in) {
    in.read(buf.data(), buf.size());
    const auto got = static_cast<std::size_t>(in.gcount());
    h.update({reinterpret_cast<const unsigned char*>(buf.data()), got});
  }
  return h.digest();
}

std::string hex64(std::uint64_t value) {
  std::ostringstream out;
  out << std::hex << std::setw(16) << std::setfill('0') << value;
  return out.str();
}

Triple reverse_triple(const Triple& t, std::size_t num_relations) {
  const int r = static_cast<int>(num_relations);
  return {t.tail, t.relation < r ? t.relation + r : t.relation - r, t.head};
}

std::string_view split_name(Split split) {
  switch (split) {
    case Split::train: return "train";
    case Split::valid: return "valid";
    case Split::test: return "test";
  }
  return "?";
}

Split parse_split(std::string_view name) {
  if (name == "train") return Split::train;
  if (name == "valid") return Split::valid;
  if (name == "test") return Split::test;
  throw std::invalid_argument("unknown split '" + std::string(name) +
                              "' (expected train, valid or test)");
}

std::string_view category_name(RelationCategory c) {
  switch (c) {
    case RelationCategory::one_to_one: return "1-1";
    case RelationCategory::one_to_many: return "1-N";
    case RelationCategory::many_to_one: return "N-1";
    case RelationCategory::many_to_many: return "N-N";
  }
  return "?";
}

RelationCategory transpose(RelationCategory c) {
  switch (c) {
    case RelationCategory::one_to_many: return RelationCategory::many_to_one;
    case RelationCategory::many_to_one: return RelationCategory::one_to_many;
    default: return c;
  }
}

// ---------------------------------------------------------------- Vocabulary

int Vocabulary::intern(const std::string& name) {
  auto [it, inserted] = ids_.try_emplace(name, static_cast<int>(names_.size()));
  if (inserted) names_.push_back(name);
  return it->second;
}

int Vocabulary::find(const std::string& name) const {
  const auto it = ids_.find(name);
  return it == ids_.end() ? -1 : it->second;
}

std::uint64_t Vocabulary::fingerprint() const {
  Fnv1a h;
  for (const auto& n : names_) {
    h.update(n);
    h.update(std::string_view("\n"));
  }
  return h.digest();
}

// ---------------------------------------------------------------- FilterIndex

void FilterIndex::add(int head, int relation, int tail) {
  map_[key(head, relation)].push_back(tail);
}

void FilterIndex::finalize() {
  for (auto& [k, tails] : map_) {
    std::sort(tails.begin(), tails.end());
    tails.erase(std::unique(tails.begin(), tails.end()), tails.end());
  }
}

std::span<const int> FilterIndex::tails(int head, int relation) const {
  const auto it = map_.find(key(head, relation));
  if (it == map_.end()) return {};
  return it->second;
}

bool FilterIndex::contains(int head, int relation, int tail) const {
  const auto t = tails(head, relation);
  return std::binary_search(t.begin(), t.end(), tail);
}

// ---------------------------------------------------------------- Dataset

const std::vector<Triple>& Dataset::split(Split s) const {
  switch (s) {
    case Split::train: return train;
    case Split::valid: return valid;
    case Split::test: return test;
  }
  return test;
}

std::vector<Triple> augment_with_reverse(std::span<const Triple> triples,
                                         std::size_t num_relations) {
  std::vector<Triple> out(triples.begin(), triples.end());
  out.reserve(2 * triples.size());
  for (const auto& t : triples) out.push_back(reverse_triple(t, num_relations));
  return out;
}

Dataset Dataset::from_named(const std::vector<NamedTriple>& train,
                            const std::vector<NamedTriple>& valid,
                            const std::vector<NamedTriple>& test) {
  Dataset ds;
  auto convert = [&ds](const std::vector<NamedTriple>& named,
                       std::vector<Triple>& out) {
    out.reserve(named.size());
    for (const auto& n : named) {
      const int h = ds.entities.intern(n.head);
      const int r = ds.relations.intern(n.relation);
      const int t = ds.entities.intern(n.tail);
      out.push_back({h, r, t});
    }
  };
  convert(train, ds.train);
  convert(valid, ds.valid);
  convert(test, ds.test);
  ds.train_augmented = augment_with_reverse(ds.train, ds.num_relations());
  ds.filter = build_filter_index(ds);
  ds.categories = categorize_relations(ds);
  ds.degrees = entity_degrees(ds);
  return ds;
}

std::vector<NamedTriple> read_triples_tsv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open triple file " + path.string());
  std::vector<NamedTriple> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::array<std::string, 3> fields;
    std::size_t count = 0;
    std::size_t start = 0;
    while (true) {
      const std::size_t tab = line.find('\t', start);
      const std::string_view field =
          std::string_view(line).substr(start, tab == std::string::npos
                                                   ? std::string::npos
                                                   : tab - start);
      if (count < 3) fields[count] = std::string(field);
      ++count;
      if (tab == std::string::npos) break;
      start = tab + 1;
    }
    if (count != 3) {
      throw DataError(path.string() + ":" + std::to_string(line_no) +
                      ": expected 3 tab-separated fields, got " +
                      std::to_string(count));
    }
    out.push_back({std::move(fields[0]), std::move(fields[1]), std::move(fields[2])});
  }
  return out;
}

void write_triples_tsv(const std::filesystem::path& path,
                       const std::vector<NamedTriple>& triples) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  for (const auto& t : triples) out << t.head << '\t' << t.relation << '\t' << t.tail << '\n';
  if (!out) throw DataError("write failed for " + path.string());
}

Dataset load_tsv(const std::filesystem::path& train_path,
                 const std::filesystem::path& valid_path,
                 const std::filesystem::path& test_path) {
  return Dataset::from_named(read_triples_tsv(train_path),
                             read_triples_tsv(valid_path),
                             read_triples_tsv(test_path));
}

Dataset load_tsv_dir(const std::filesystem::path& dir) {
  return load_tsv(dir / "train.txt", dir / "valid.txt", dir / "test.txt");
}

FilterIndex build_filter_index(const Dataset& ds) {
  FilterIndex index(ds.augmented_relation_count());
  const std::size_t nr = ds.num_relations();
  for (const auto* split : {&ds.train, &ds.valid, &ds.test}) {
    for (const auto& t : *split) {
      index.add(t.head, t.relation, t.tail);
      const Triple rev = reverse_triple(t, nr);
      index.add(rev.head, rev.relation, rev.tail);
    }
  }
  index.finalize();
  return index;
}

RelationCategories categorize_relations(const Dataset& ds) {
  const std::size_t nr = ds.num_relations();
  std::vector<std::set<std::pair<int, int>>> train_pairs(nr), other_pairs(nr);
  for (const auto& t : ds.train)
    train_pairs[static_cast<std::size_t>(t.relation)].insert({t.head, t.tail});
  for (const auto* split : {&ds.valid, &ds.test})
    for (const auto& t : *split)
      other_pairs[static_cast<std::size_t>(t.relation)].insert({t.head, t.tail});

  RelationCategories out;
  out.category.resize(2 * nr);
  out.tails_per_head.resize(nr);
  out.heads_per_tail.resize(nr);
  out.from_fallback.resize(nr);
  for (std::size_t r = 0; r < nr; ++r) {
    const bool fallback = train_pairs[r].empty();
    const auto& pairs = fallback ? other_pairs[r] : train_pairs[r];
    std::set<int> heads, tails;
    for (const auto& [h, t] : pairs) {
      heads.insert(h);
      tails.insert(t);
    }
    const double n = static_cast<double>(pairs.size());
    const double tph = heads.empty() ? 0.0 : n / static_cast<double>(heads.size());
    const double hpt = tails.empty() ? 0.0 : n / static_cast<double>(tails.size());
    const bool many_tails = tph >= kCategoryThreshold;
    const bool many_heads = hpt >= kCategoryThreshold;
    RelationCategory c = RelationCategory::one_to_one;
    if (many_tails && many_heads) c = RelationCategory::many_to_many;
    else if (many_tails) c = RelationCategory::one_to_many;
    else if (many_heads) c = RelationCategory::many_to_one;
    out.category[r] = c;
    out.category[r + nr] = transpose(c);
    out.tails_per_head[r] = tph;
    out.heads_per_tail[r] = hpt;
    out.from_fallback[r] = fallback;
  }
  return out;
}

Degrees entity_degrees(const Dataset& ds) {
  Degrees d;
  const std::size_t ne = ds.num_entities();
  d.total.assign(ne, 0);
  d.in.assign(ne, 0);
  d.out.assign(ne, 0);
  for (const auto& t : ds.train) {
    ++d.total[static_cast<std::size_t>(t.head)];
    ++d.total[static_cast<std::size_t>(t.tail)];
    ++d.out[static_cast<std::size_t>(t.head)];
    ++d.in[static_cast<std::size_t>(t.tail)];
  }
  return d;
}

DatasetStats dataset_stats(const Dataset& ds) {
  return {ds.num_entities(), ds.num_relations(), ds.train.size(),
          ds.valid.size(), ds.test.size()};
}

std::string stats_report(const Dataset& ds) {
  const DatasetStats s = dataset_stats(ds);
  std::ostringstream out;
  out << "entities=" << s.entities << '\n'
      << "relations=" << s.relations << '\n'
      << "train=" << s.train << '\n'
      << "valid=" << s.valid << '\n'
      << "test=" << s.test << '\n'
      << "train_augmented=" << ds.train_augmented.size() << '\n';

  auto fraction_below = [&](const std::vector<int>& deg, int bound) {
    if (deg.empty()) return 0.0;
    const auto n = std::count_if(deg.begin(), deg.end(),
                                 [bound](int v) { return v < bound; });
    return static_cast<double>(n) / static_cast<double>(deg.size());
  };
  out << std::setprecision(6)
      << "degree_lt10_fraction=" << fraction_below(ds.degrees.total, 10) << '\n'
      << "indegree_lt10_fraction=" << fraction_below(ds.degrees.in, 10) << '\n';

  std::array<std::size_t, 4> counts{};
  for (std::size_t r = 0; r < ds.num_relations(); ++r)
    ++counts[static_cast<std::size_t>(ds.categories.category[r])];
  for (auto c : kAllCategories) {
    out << "relations_" << category_name(c) << '='
        << counts[static_cast<std::size_t>(c)] << '\n';
  }
  const auto fallback = std::count(ds.categories.from_fallback.begin(),
                                   ds.categories.from_fallback.end(), true);
  out << "relations_categorized_without_train=" << fallback << '\n';
  return out.str();
}

}  // namespace deepe
