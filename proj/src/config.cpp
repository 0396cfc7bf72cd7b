#include "deepe/config.hpp"

#include <array>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace deepe {

namespace {

constexpr std::array<std::string_view, 25> kKeys = {
    "dim",           "deepe_blocks",       "resnet_blocks",   "resnet_inner",
    "drop_input_fc", "drop_identity",      "drop_resnet_fc",  "feature_block_kind",
    "gate_linear",   "gate_nonlinear",     "activation",      "bn_momentum",
    "lr",            "l2",                 "batch_size",      "seed",
    "max_epochs",    "plateau_factor",     "plateau_patience", "early_stop_patience",
    "eval_every",    "label_smoothing",    "loss",            "ties",
    "precision",
};

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

[[noreturn]] void bad_value(std::string_view key, std::string_view value,
                            std::string_view expected) {
  throw ConfigError("config key '" + std::string(key) + "': cannot parse '" +
                    std::string(value) + "' as " + std::string(expected));
}

template <typename Int>
Int parse_int(std::string_view key, std::string_view value) {
  Int out{};
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || ptr != value.data() + value.size()) bad_value(key, value, "an integer");
  return out;
}

double parse_double(std::string_view key, std::string_view value) {
  const std::string s(value);
  char* end = nullptr;
  const double out = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size()) bad_value(key, value, "a number");
  return out;
}

bool parse_bool(std::string_view key, std::string_view value) {
  if (value == "true" || value == "1" || value == "on") return true;
  if (value == "false" || value == "0" || value == "off") return false;
  bad_value(key, value, "a boolean");
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void RunConfig::validate() const {
  model.validate();
  train.validate();
  if (precision != 32 && precision != 64) {
    throw ConfigError("precision must be 32 or 64");
  }
}

std::span<const std::string_view> config_keys() { return kKeys; }

void apply_config_value(RunConfig& c, std::string_view key, std::string_view raw) {
  const std::string_view value = trim(raw);
  auto& m = c.model;
  auto& t = c.train;
  try {
    if (key == "dim") m.dim = parse_int<std::size_t>(key, value);
    else if (key == "deepe_blocks") m.deepe_blocks = parse_int<std::size_t>(key, value);
    else if (key == "resnet_blocks") m.resnet_blocks = parse_int<std::size_t>(key, value);
    else if (key == "resnet_inner") m.resnet_inner = parse_int<std::size_t>(key, value);
    else if (key == "drop_input_fc") m.drop_input_fc = parse_double(key, value);
    else if (key == "drop_identity") m.drop_identity = parse_double(key, value);
    else if (key == "drop_resnet_fc") m.drop_resnet_fc = parse_double(key, value);
    else if (key == "feature_block_kind") {
      if (value == "deepe") m.feature_block_kind = FeatureBlockKind::deepe;
      else if (value == "resnet") m.feature_block_kind = FeatureBlockKind::resnet;
      else bad_value(key, value, "deepe or resnet");
    } else if (key == "gate_linear") m.gate_linear = parse_bool(key, value);
    else if (key == "gate_nonlinear") m.gate_nonlinear = parse_bool(key, value);
    else if (key == "activation") {
      if (value == "relu") m.activation = Activation::relu;
      else if (value == "identity") m.activation = Activation::identity;
      else bad_value(key, value, "relu or identity");
    } else if (key == "bn_momentum") m.bn_momentum = parse_double(key, value);
    else if (key == "lr") t.lr = parse_double(key, value);
    else if (key == "l2") t.l2 = parse_double(key, value);
    else if (key == "batch_size") t.batch_size = parse_int<std::size_t>(key, value);
    else if (key == "seed") {
      t.seed = parse_int<std::uint64_t>(key, value);
      m.seed = t.seed;
    } else if (key == "max_epochs") t.max_epochs = parse_int<int>(key, value);
    else if (key == "plateau_factor") t.plateau_factor = parse_double(key, value);
    else if (key == "plateau_patience") t.plateau_patience = parse_int<int>(key, value);
    else if (key == "early_stop_patience") t.early_stop_patience = parse_int<int>(key, value);
    else if (key == "eval_every") t.eval_every = parse_int<int>(key, value);
    else if (key == "label_smoothing") t.label_smoothing = parse_double(key, value);
    else if (key == "loss") t.loss = parse_loss_kind(value);
    else if (key == "ties") t.ties = parse_tie_mode(value);
    else if (key == "precision") c.precision = parse_int<int>(key, value);
    else throw ConfigError("unknown config key '" + std::string(key) + "'");
  } catch (const ConfigError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw ConfigError("config key '" + std::string(key) + "': " + e.what());
  }
}

RunConfig parse_config_text(std::string_view text, RunConfig base) {
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + ": expected key=value");
    }
    apply_config_value(base, trim(line.substr(0, eq)), line.substr(eq + 1));
  }
  return base;
}

RunConfig load_config_file(const std::filesystem::path& path, RunConfig base) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  try {
    return parse_config_text(buf.str(), std::move(base));
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

std::string config_value(const RunConfig& c, std::string_view key) {
  const auto& m = c.model;
  const auto& t = c.train;
  auto b = [](bool v) { return std::string(v ? "true" : "false"); };
  if (key == "dim") return std::to_string(m.dim);
  if (key == "deepe_blocks") return std::to_string(m.deepe_blocks);
  if (key == "resnet_blocks") return std::to_string(m.resnet_blocks);
  if (key == "resnet_inner") return std::to_string(m.resnet_inner);
  if (key == "drop_input_fc") return format_double(m.drop_input_fc);
  if (key == "drop_identity") return format_double(m.drop_identity);
  if (key == "drop_resnet_fc") return format_double(m.drop_resnet_fc);
  if (key == "feature_block_kind")
    return m.feature_block_kind == FeatureBlockKind::deepe ? "deepe" : "resnet";
  if (key == "gate_linear") return b(m.gate_linear);
  if (key == "gate_nonlinear") return b(m.gate_nonlinear);
  if (key == "activation") return m.activation == Activation::relu ? "relu" : "identity";
  if (key == "bn_momentum") return format_double(m.bn_momentum);
  if (key == "lr") return format_double(t.lr);
  if (key == "l2") return format_double(t.l2);
  if (key == "batch_size") return std::to_string(t.batch_size);
  if (key == "seed") return std::to_string(t.seed);
  if (key == "max_epochs") return std::to_string(t.max_epochs);
  if (key == "plateau_factor") return format_double(t.plateau_factor);
  if (key == "plateau_patience") return std::to_string(t.plateau_patience);
  if (key == "early_stop_patience") return std::to_string(t.early_stop_patience);
  if (key == "eval_every") return std::to_string(t.eval_every);
  if (key == "label_smoothing") return format_double(t.label_smoothing);
  if (key == "loss") return std::string(loss_kind_name(t.loss));
  if (key == "ties") return std::string(tie_mode_name(t.ties));
  if (key == "precision") return std::to_string(c.precision);
  throw ConfigError("unknown config key '" + std::string(key) + "'");
}

std::string to_config_text(const RunConfig& c) {
  std::string out;
  for (auto key : kKeys) {
    out += key;
    out += '=';
    out += config_value(c, key);
    out += '\n';
  }
  return out;
}

RunConfig preset_config(std::string_view dataset) {
  RunConfig c;
  auto& m = c.model;
  if (dataset == "fb15k-237") {
    m.dim = 300;
    c.train.l2 = 5e-8;
    m.deepe_blocks = 40;
    m.resnet_blocks = 1;
    m.resnet_inner = 2;
    m.drop_input_fc = 0.4;
    m.drop_identity = 0.01;
    m.drop_resnet_fc = 0.4;
  } else if (dataset == "wn18rr") {
    m.dim = 250;
    c.train.l2 = 5e-5;
    m.deepe_blocks = 1;
    m.resnet_blocks = 2;
    m.resnet_inner = 3;
    m.drop_input_fc = 0.4;
    m.drop_identity = 0.0;
    m.drop_resnet_fc = 0.0;
  } else if (dataset == "yago3-10") {
    m.dim = 500;
    c.train.l2 = 5e-8;
    m.deepe_blocks = 2;
    m.resnet_blocks = 1;
    m.resnet_inner = 2;
    m.drop_input_fc = 0.4;
    m.drop_identity = 0.0;
    m.drop_resnet_fc = 0.0;
  } else {
    throw ConfigError("unknown preset '" + std::string(dataset) +
                      "' (expected fb15k-237, wn18rr or yago3-10)");
  }
  return c;
}

}  // namespace deepe
