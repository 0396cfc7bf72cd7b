#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace deepe {

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Triple {
  int head = 0;
  int relation = 0;
  int tail = 0;

  bool operator==(const Triple&) const = default;
};

// (t, r', h) for (h, r, t); r' = r + |R| and (r')' = r.
Triple reverse_triple(const Triple& t, std::size_t num_relations);

struct NamedTriple {
  std::string head;
  std::string relation;
  std::string tail;
};

enum class Split { train, valid, test };
std::string_view split_name(Split split);
Split parse_split(std::string_view name);

enum class RelationCategory { one_to_one, one_to_many, many_to_one, many_to_many };
inline constexpr RelationCategory kAllCategories[] = {
    RelationCategory::one_to_one, RelationCategory::one_to_many,
    RelationCategory::many_to_one, RelationCategory::many_to_many};
std::string_view category_name(RelationCategory c);
RelationCategory transpose(RelationCategory c);

// Names to dense ids in first-appearance order.
class Vocabulary {
 public:
  int intern(const std::string& name);
  // -1 when absent.
  int find(const std::string& name) const;
  const std::string& name(int id) const { return names_.at(static_cast<std::size_t>(id)); }
  std::size_t size() const noexcept { return names_.size(); }
  // Order-sensitive fingerprint of the name list.
  std::uint64_t fingerprint() const;

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, int> ids_;
};

// (head, relation incl. reverse) -> sorted set of true tails.
class FilterIndex {
 public:
  FilterIndex() = default;
  explicit FilterIndex(std::size_t augmented_relations)
      : relations_(augmented_relations) {}

  void add(int head, int relation, int tail);
  // Sorts and de-duplicates every tail list.
  void finalize();
  std::span<const int> tails(int head, int relation) const;
  bool contains(int head, int relation, int tail) const;
  std::size_t key_count() const noexcept { return map_.size(); }

 private:
  std::uint64_t key(int head, int relation) const {
    return static_cast<std::uint64_t>(head) * relations_ +
           static_cast<std::uint64_t>(relation);
  }
  std::uint64_t relations_ = 0;
  std::unordered_map<std::uint64_t, std::vector<int>> map_;
};

struct RelationCategories {
  // Indexed by augmented relation id (2|R| entries).
  std::vector<RelationCategory> category;
  // Per original relation: tails-per-head and heads-per-tail.
  std::vector<double> tails_per_head;
  std::vector<double> heads_per_tail;
  // Per original relation: true when it has no train triples and was
  // categorized from valid/test instead.
  std::vector<bool> from_fallback;
};

struct Degrees {
  std::vector<int> total;  // head + tail occurrences in original train triples
  std::vector<int> in;     // tail occurrences
  std::vector<int> out;    // head occurrences
};

struct Dataset {
  Vocabulary entities;
  Vocabulary relations;
  std::vector<Triple> train;
  std::vector<Triple> valid;
  std::vector<Triple> test;
  std::vector<Triple> train_augmented;
  FilterIndex filter;
  RelationCategories categories;
  Degrees degrees;

  std::size_t num_entities() const noexcept { return entities.size(); }
  std::size_t num_relations() const noexcept { return relations.size(); }
  std::size_t augmented_relation_count() const noexcept {
    return 2 * relations.size();
  }
  const std::vector<Triple>& split(Split s) const;

  // Builds vocabularies (train -> valid -> test, first appearance) and all
  // derived indices.
  static Dataset from_named(const std::vector<NamedTriple>& train,
                            const std::vector<NamedTriple>& valid,
                            const std::vector<NamedTriple>& test);
};

// One head<TAB>relation<TAB>tail per line. Blank lines are skipped.
std::vector<NamedTriple> read_triples_tsv(const std::filesystem::path& path);
void write_triples_tsv(const std::filesystem::path& path,
                       const std::vector<NamedTriple>& triples);

Dataset load_tsv(const std::filesystem::path& train_path,
                 const std::filesystem::path& valid_path,
                 const std::filesystem::path& test_path);
// Convenience for <dir>/{train,valid,test}.txt.
Dataset load_tsv_dir(const std::filesystem::path& dir);

std::vector<Triple> augment_with_reverse(std::span<const Triple> triples,
                                         std::size_t num_relations);
FilterIndex build_filter_index(const Dataset& dataset);
// Bordes convention: tph/hpt thresholded at 1.5, reverse relations get the
// transposed category.
RelationCategories categorize_relations(const Dataset& dataset);
Degrees entity_degrees(const Dataset& dataset);

inline constexpr double kCategoryThreshold = 1.5;

struct DatasetStats {
  std::size_t entities = 0;
  std::size_t relations = 0;
  std::size_t train = 0;
  std::size_t valid = 0;
  std::size_t test = 0;
};
DatasetStats dataset_stats(const Dataset& dataset);

// Line-oriented key=value report: split sizes, degree fractions (total and
// in-degree), category counts.
std::string stats_report(const Dataset& dataset);

}  // namespace deepe
