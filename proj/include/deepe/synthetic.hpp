#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "deepe/data.hpp"

namespace deepe {

// Rule-generated toy knowledge graph. Entities e0..e{N-1} sit on a ring and
// in `groups` residue classes; entities 0..groups-1 are the group hubs.
//   next     i -> i+1 (mod N)                         1-1
//   prev     i -> i-1 (mod N)                         1-1, inverse of next
//   member   hub g -> every non-hub j with j%G == g   1-N
//   group_of non-hub j -> hub j%G                     N-1, inverse of member
//   near     i -> i±G, i±2G, i±3G (mod N)             N-N, symmetric
//   shift_k  hub g -> members of group (g+k+1)%G      1-N (optional extras)
// The shift relations cannot be fit by a feature map that is affine in
// (h || r): they need a relation-specific transformation of the head.
struct SyntheticKgOptions {
  std::size_t entities = 50;
  std::size_t groups = 5;
  std::size_t extra_one_to_many = 0;
  double valid_fraction = 0.1;
  double test_fraction = 0.1;
  std::uint64_t seed = 7;
};

struct NamedSplits {
  std::vector<NamedTriple> train;
  std::vector<NamedTriple> valid;
  std::vector<NamedTriple> test;
};

NamedSplits make_rule_kg(const SyntheticKgOptions& options);
Dataset make_rule_dataset(const SyntheticKgOptions& options);
// Writes train.txt, valid.txt and test.txt into dir (created if needed).
void write_splits(const NamedSplits& splits, const std::filesystem::path& dir);

}  // namespace deepe
