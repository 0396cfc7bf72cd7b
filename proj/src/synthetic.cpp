#include "deepe/synthetic.hpp"

#include <stdexcept>
#include <string>

#include "deepe/rng.hpp"

namespace deepe {

NamedSplits make_rule_kg(const SyntheticKgOptions& o) {
  if (o.groups < 2 || o.entities < 4 * o.groups) {
    throw std::invalid_argument("synthetic kg: need groups >= 2 and entities >= 4*groups");
  }
  if (o.valid_fraction < 0 || o.test_fraction < 0 ||
      o.valid_fraction + o.test_fraction >= 1.0) {
    throw std::invalid_argument("synthetic kg: bad split fractions");
  }
  const auto n = static_cast<long>(o.entities);
  const auto g = static_cast<long>(o.groups);
  auto name = [](long i) { return "e" + std::to_string(i); };
  auto wrap = [n](long i) { return ((i % n) + n) % n; };

  std::vector<NamedTriple> all;
  for (long i = 0; i < n; ++i) {
    all.push_back({name(i), "next", name(wrap(i + 1))});
    all.push_back({name(i), "prev", name(wrap(i - 1))});
  }
  for (long j = g; j < n; ++j) {
    all.push_back({name(j % g), "member", name(j)});
    all.push_back({name(j), "group_of", name(j % g)});
  }
  for (long i = 0; i < n; ++i) {
    for (long step : {g, -g, 2 * g, -2 * g, 3 * g, -3 * g})
      all.push_back({name(i), "near", name(wrap(i + step))});
  }
  for (std::size_t k = 0; k < o.extra_one_to_many; ++k) {
    const std::string rel = "shift_" + std::to_string(k);
    const long offset = static_cast<long>(k) + 1;
    for (long hub = 0; hub < g; ++hub) {
      const long target = (hub + offset) % g;
      for (long j = g; j < n; ++j)
        if (j % g == target) all.push_back({name(hub), rel, name(j)});
    }
  }

  Rng rng(o.seed);
  shuffle(std::span<NamedTriple>(all), rng);
  const auto total = all.size();
  const auto n_valid = static_cast<std::size_t>(o.valid_fraction * static_cast<double>(total));
  const auto n_test = static_cast<std::size_t>(o.test_fraction * static_cast<double>(total));
  const std::size_t n_train = total - n_valid - n_test;

  NamedSplits out;
  out.train.assign(all.begin(), all.begin() + static_cast<long>(n_train));
  out.valid.assign(all.begin() + static_cast<long>(n_train),
                   all.begin() + static_cast<long>(n_train + n_valid));
  out.test.assign(all.begin() + static_cast<long>(n_train + n_valid), all.end());
  return out;
}

Dataset make_rule_dataset(const SyntheticKgOptions& options) {
  const NamedSplits s = make_rule_kg(options);
  return Dataset::from_named(s.train, s.valid, s.test);
}

void write_splits(const NamedSplits& splits, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_triples_tsv(dir / "train.txt", splits.train);
  write_triples_tsv(dir / "valid.txt", splits.valid);
  write_triples_tsv(dir / "test.txt", splits.test);
}

}  // namespace deepe
