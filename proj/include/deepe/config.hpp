#pragma once

#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "deepe/model.hpp"
#include "deepe/train.hpp"

namespace deepe {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Everything a run needs besides data paths.
struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  int precision = 32;  // 32 or 64

  void validate() const;
};

// Every recognised key, in the order to_config_text() writes them.
std::span<const std::string_view> config_keys();

// Throws ConfigError for unknown keys or unparsable values. The `seed` key
// sets both the model and the training seed.
void apply_config_value(RunConfig& config, std::string_view key, std::string_view value);

// key=value lines; '#' starts a comment, blank lines are ignored.
RunConfig parse_config_text(std::string_view text, RunConfig base = {});
RunConfig load_config_file(const std::filesystem::path& path, RunConfig base = {});

// Round-trips through parse_config_text exactly (doubles use %.17g).
std::string to_config_text(const RunConfig& config);
std::string config_value(const RunConfig& config, std::string_view key);

// Published per-dataset settings: "fb15k-237", "wn18rr", "yago3-10".
RunConfig preset_config(std::string_view dataset);

}  // namespace deepe
