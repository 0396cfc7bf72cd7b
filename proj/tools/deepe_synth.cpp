// Writes the rule-generated toy knowledge graph as train/valid/test TSV files.
#include <CLI11.hpp>

#include <iostream>

#include "deepe/synthetic.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Generate the rule-based toy knowledge graph", "deepe-synth"};
  deepe::SyntheticKgOptions o;
  std::string out;
  app.add_option("--out", out, "Output directory")->required();
  app.add_option("--entities", o.entities);
  app.add_option("--groups", o.groups);
  app.add_option("--extra-one-to-many", o.extra_one_to_many, "Number of shift_k relations");
  app.add_option("--valid-fraction", o.valid_fraction);
  app.add_option("--test-fraction", o.test_fraction);
  app.add_option("--seed", o.seed);
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }
  try {
    const auto splits = deepe::make_rule_kg(o);
    deepe::write_splits(splits, out);
    std::cout << "train=" << splits.train.size() << " valid=" << splits.valid.size()
              << " test=" << splits.test.size() << "\n";
  } catch (const std::exception& e) {
    std::cerr << "deepe-synth: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
