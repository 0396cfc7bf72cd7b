#include "deepe/cli.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>

#include "deepe/checkpoint.hpp"
#include "deepe/config.hpp"
#include "deepe/data.hpp"
#include "deepe/eval.hpp"
#include "deepe/gradcheck.hpp"
#include "deepe/hash.hpp"
#include "deepe/train.hpp"

namespace deepe {

namespace fs = std::filesystem;

namespace {

// Thrown for bad flag combinations detected after parsing.
class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct DataArgs {
  std::string dir;
  std::string train;
  std::string valid;
  std::string test;

  void add_to(CLI::App& app) {
    app.add_option("--data-dir", dir, "Directory holding train.txt, valid.txt, test.txt");
    app.add_option("--train", train, "Train triples (TSV)");
    app.add_option("--valid", valid, "Valid triples (TSV)");
    app.add_option("--test", test, "Test triples (TSV)");
  }

  std::array<fs::path, 3> paths() const {
    if (!dir.empty()) {
      if (!train.empty() || !valid.empty() || !test.empty())
        throw UsageError("--data-dir cannot be combined with --train/--valid/--test");
      return {fs::path(dir) / "train.txt", fs::path(dir) / "valid.txt",
              fs::path(dir) / "test.txt"};
    }
    if (train.empty() || valid.empty() || test.empty())
      throw UsageError("give --data-dir or all of --train, --valid and --test");
    return {train, valid, test};
  }

  Dataset load() const {
    const auto p = paths();
    return load_tsv(p[0], p[1], p[2]);
  }
};

// Resolution order: preset, then config file, then --<key> flags.
struct ConfigArgs {
  std::string preset;
  std::string file;
  std::map<std::string, std::string> overrides;

  void add_to(CLI::App& app) {
    app.add_option("--preset", preset, "Published settings: fb15k-237, wn18rr, yago3-10");
    app.add_option("--config", file, "key=value configuration file");
    for (auto key : config_keys()) {
      const std::string name(key);
      app.add_option("--" + name, overrides[name], "Overrides config key " + name);
    }
  }

  RunConfig resolve() const {
    RunConfig c = preset.empty() ? RunConfig{} : preset_config(preset);
    if (!file.empty()) c = load_config_file(file, c);
    for (auto key : config_keys()) {
      const auto& v = overrides.at(std::string(key));
      if (!v.empty()) apply_config_value(c, key, v);
    }
    c.validate();
    return c;
  }
};

std::string join_command(const std::vector<std::string>& args) {
  std::string out = "deepe";
  for (const auto& a : args) {
    out += ' ';
    const bool quote = a.empty() || a.find_first_of(" \t\"'") != std::string::npos;
    out += quote ? "'" + a + "'" : a;
  }
  return out;
}

class Manifest {
 public:
  Manifest(std::string command, std::string cmdline) {
    add("version", std::string(kVersion));
    add("checkpoint_format", std::to_string(kCheckpointVersion));
    add("command", std::move(command));
    add("command_line", std::move(cmdline));
  }
  void add(const std::string& key, const std::string& value) {
    lines_ += key + "=" + value + "\n";
  }
  void add_data(const std::array<fs::path, 3>& paths, const Dataset& ds) {
    const char* names[] = {"train", "valid", "test"};
    for (int i = 0; i < 3; ++i) {
      add(std::string("data.") + names[i] + ".path", paths[i].string());
      add(std::string("data.") + names[i] + ".fnv1a64", hex64(hash_file(paths[i])));
    }
    add("data.entity_vocab", hex64(ds.entities.fingerprint()));
    add("data.relation_vocab", hex64(ds.relations.fingerprint()));
  }
  void add_config(const RunConfig& c) {
    std::istringstream in(to_config_text(c));
    for (std::string line; std::getline(in, line);) lines_ += "config." + line + "\n";
  }
  void write(const fs::path& dir) const {
    fs::create_directories(dir);
    std::ofstream out(dir / "manifest.txt");
    if (!out) throw std::runtime_error("cannot write " + (dir / "manifest.txt").string());
    out << lines_;
  }

 private:
  std::string lines_;
};

std::string metrics_line(const Metrics& m) {
  return "MR " + format_metric(m.mr()) + "  MRR " + format_metric(m.mrr()) + "  Hit@1 " +
         format_metric(m.hit1()) + "  Hit@10 " + format_metric(m.hit10());
}

std::ofstream open_csv(const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

double mean_of(const std::vector<double>& xs) {
  double s = 0.0;
  for (double x : xs) s += x;
  return xs.empty() ? 0.0 : s / static_cast<double>(xs.size());
}

// Sample standard deviation; 0 for a single value.
double std_of(const std::vector<double>& xs) {
  if (xs.size() < 2) return 0.0;
  const double m = mean_of(xs);
  double s = 0.0;
  for (double x : xs) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(xs.size() - 1));
}

template <typename F>
decltype(auto) with_precision(int precision, F&& f) {
  if (precision == 64) return f(double{});
  return f(float{});
}

template <typename T>
TrainResult<T> train_quietly(const Dataset& ds, const RunConfig& c, std::ostream* log) {
  TrainHooks hooks;
  if (log) {
    hooks.on_epoch = [log](const EpochLog& e) {
      *log << "epoch " << e.epoch << "  loss " << format_metric(e.train_loss) << "  lr "
           << format_metric(e.lr);
      if (e.valid) *log << "  valid MRR " << format_metric(e.valid->mrr());
      *log << "\n";
      log->flush();
    };
  }
  return train_loop<T>(ds, c.model, c.train, hooks);
}

// ---------------------------------------------------------------- train

struct TrainArgs {
  DataArgs data;
  ConfigArgs config;
  std::string out;
  int runs = 1;
  bool quiet = false;
};

int cmd_train(const TrainArgs& a, const std::string& cmdline, std::ostream& out) {
  const RunConfig base = a.config.resolve();
  if (a.runs < 1) throw UsageError("--runs must be >= 1");
  const auto paths = a.data.paths();
  const Dataset ds = a.data.load();

  out << "deepe train " << kVersion << "\n";
  out << "entities=" << ds.num_entities() << " relations=" << ds.num_relations()
      << " train=" << ds.train.size() << " valid=" << ds.valid.size()
      << " test=" << ds.test.size() << "\n";
  out << to_config_text(base) << std::flush;

  const fs::path root(a.out);
  fs::create_directories(root);
  Manifest manifest("train", cmdline);
  manifest.add_config(base);
  manifest.add_data(paths, ds);
  manifest.add("runs", std::to_string(a.runs));

  auto summary = open_csv(root / "summary.csv");
  summary << "run,seed,best_epoch,epochs,stop_reason,valid_mrr,test_mr,test_mrr,test_hits1,"
             "test_hits10\n";
  std::vector<double> cols[5];
  for (int run = 0; run < a.runs; ++run) {
    RunConfig c = base;
    c.train.seed = base.train.seed + static_cast<std::uint64_t>(run);
    c.model.seed = c.train.seed;
    const fs::path dir = a.runs == 1 ? root : root / ("run_" + std::to_string(run));
    fs::create_directories(dir);
    manifest.add("run." + std::to_string(run) + ".seed", std::to_string(c.train.seed));
    out << "run " << run << " seed " << c.train.seed << "\n";

    const EvalReport test = with_precision(c.precision, [&](auto tag) {
      using T = decltype(tag);
      auto result = train_quietly<T>(ds, c, a.quiet ? nullptr : &out);
      write_training_log(result.log, dir / "train_log.csv");
      const auto eh = ds.entities.fingerprint();
      const auto rh = ds.relations.fingerprint();
      save_checkpoint(dir / "best.ckpt", result.best_model, c, eh, rh);
      save_checkpoint(dir / "final.ckpt", result.final_model, c, eh, rh);
      EvalReport report = evaluate(result.best_model, ds, Split::test, {c.train.ties});
      emit_report(report, dir / "test_report");
      summary << run << ',' << c.train.seed << ',' << result.best_epoch << ','
              << result.log.size() << ',' << result.stop_reason << ','
              << format_metric(result.best_valid_mrr) << ',';
      cols[0].push_back(result.best_valid_mrr);
      out << "stopped: " << result.stop_reason << "; best epoch " << result.best_epoch
          << ", valid MRR " << format_metric(result.best_valid_mrr) << "\n";
      return report;
    });
    const Metrics& m = test.overall;
    summary << format_metric(m.mr()) << ',' << format_metric(m.mrr()) << ','
            << format_metric(m.hit1()) << ',' << format_metric(m.hit10()) << '\n';
    cols[1].push_back(m.mr());
    cols[2].push_back(m.mrr());
    cols[3].push_back(m.hit1());
    cols[4].push_back(m.hit10());
    out << "test  " << metrics_line(m) << "\n";
  }

  auto stats = open_csv(root / "summary_stats.csv");
  stats << "metric,mean,std,runs\n";
  const char* names[] = {"valid_mrr", "test_mr", "test_mrr", "test_hits1", "test_hits10"};
  for (int i = 0; i < 5; ++i) {
    stats << names[i] << ',' << format_metric(mean_of(cols[i])) << ','
          << format_metric(std_of(cols[i])) << ',' << cols[i].size() << '\n';
  }
  if (a.runs > 1) {
    out << "mean test MRR " << format_metric(mean_of(cols[2])) << " +- "
        << format_metric(std_of(cols[2])) << " over " << a.runs << " runs\n";
  }
  manifest.write(root);
  return kExitOk;
}

// ---------------------------------------------------------------- eval

struct LoadedCheckpoint {
  CheckpointInfo info;
  std::variant<Model<float>, Model<double>> model;
};

LoadedCheckpoint load_any(const fs::path& path) {
  const CheckpointInfo info = read_checkpoint_info(path);
  if (info.scalar_bytes == 8) return {info, load_checkpoint<double>(path)};
  return {info, load_checkpoint<float>(path)};
}

void check_vocab(const CheckpointInfo& info, const Dataset& ds) {
  if (info.entity_hash != ds.entities.fingerprint() ||
      info.relation_hash != ds.relations.fingerprint() ||
      info.num_entities != ds.num_entities() || info.num_relations != ds.num_relations()) {
    throw UsageError("checkpoint vocabulary (" + std::to_string(info.num_entities) +
                     " entities, " + std::to_string(info.num_relations) +
                     " relations, hash " + hex64(info.entity_hash) +
                     ") does not match the data (" + std::to_string(ds.num_entities()) +
                     " entities, " + std::to_string(ds.num_relations()) + " relations, hash " +
                     hex64(ds.entities.fingerprint()) + ")");
  }
}

EvalReport evaluate_any(const LoadedCheckpoint& ckpt, const Dataset& ds, Split split,
                        TieMode ties) {
  return std::visit([&](const auto& m) { return evaluate(m, ds, split, {ties}); },
                    ckpt.model);
}

struct EvalArgs {
  DataArgs data;
  std::string checkpoint;
  std::string split = "test";
  std::string ties = "average";
  std::string out;
};

int cmd_eval(const EvalArgs& a, const std::string& cmdline, std::ostream& out) {
  const Split split = parse_split(a.split);
  const TieMode ties = parse_tie_mode(a.ties);
  const auto paths = a.data.paths();
  const Dataset ds = a.data.load();
  const LoadedCheckpoint ckpt = load_any(a.checkpoint);
  check_vocab(ckpt.info, ds);
  const EvalReport report = evaluate_any(ckpt, ds, split, ties);

  out << split_name(split) << " (" << report.overall.count << " queries, ties "
      << tie_mode_name(ties) << ")\n";
  out << "both  " << metrics_line(report.overall) << "\n";
  out << "head  " << metrics_line(report.by_direction[1]) << "\n";
  out << "tail  " << metrics_line(report.by_direction[0]) << "\n";
  if (!a.out.empty()) {
    emit_report(report, a.out);
    Manifest manifest("eval", cmdline);
    manifest.add("checkpoint", a.checkpoint);
    manifest.add("checkpoint.fnv1a64", hex64(hash_file(a.checkpoint)));
    manifest.add("split", std::string(split_name(split)));
    manifest.add("ties", std::string(tie_mode_name(ties)));
    manifest.add_config(ckpt.info.config);
    manifest.add_data(paths, ds);
    manifest.write(a.out);
  }
  return kExitOk;
}

// ---------------------------------------------------------------- analyze

struct AnalyzeArgs {
  DataArgs data;
  std::string checkpoint;
  std::string split = "test";
  std::string ties = "average";
  std::string out;
  std::string dataset_name;
  int blocks = -1;
  double alpha = -1.0;
};

void write_survival(const fs::path& path, int n, double alpha) {
  auto csv = open_csv(path);
  csv << "n,alpha,order,total_drop_prob,survival_prob\n";
  for (int order = 0; order <= n; ++order) {
    const double p = identity_dropout_total_drop_prob(n, alpha, order);
    csv << n << ',' << format_metric(alpha) << ',' << order << ',' << format_metric(p) << ','
        << format_metric(1.0 - p) << '\n';
  }
}

int cmd_analyze(const AnalyzeArgs& a, const std::string& cmdline, std::ostream& out) {
  const auto paths = a.data.paths();
  const Dataset ds = a.data.load();
  const fs::path dir(a.out);
  fs::create_directories(dir);
  Manifest manifest("analyze", cmdline);
  manifest.add_data(paths, ds);

  const DatasetStats s = dataset_stats(ds);
  const std::string name =
      a.dataset_name.empty() ? fs::path(paths[0]).parent_path().filename().string()
                             : a.dataset_name;
  {
    auto csv = open_csv(dir / "stats.csv");
    csv << "dataset,entities,relations,train,valid,test\n";
    csv << name << ',' << s.entities << ',' << s.relations << ',' << s.train << ','
        << s.valid << ',' << s.test << '\n';
  }
  const std::string report_text = stats_report(ds);
  {
    std::ofstream txt(dir / "stats.txt");
    txt << report_text;
  }
  out << report_text;

  int n = 1;
  double alpha = 0.0;
  if (!a.checkpoint.empty()) {
    const LoadedCheckpoint ckpt = load_any(a.checkpoint);
    check_vocab(ckpt.info, ds);
    n = static_cast<int>(ckpt.info.config.model.deepe_blocks);
    alpha = ckpt.info.config.model.drop_identity;
    const Split split = parse_split(a.split);
    const EvalReport report = evaluate_any(ckpt, ds, split, parse_tie_mode(a.ties));
    emit_report(report, dir);
    manifest.add("checkpoint", a.checkpoint);
    manifest.add("checkpoint.fnv1a64", hex64(hash_file(a.checkpoint)));
    manifest.add("split", std::string(split_name(split)));
    out << split_name(split) << "  " << metrics_line(report.overall) << "\n";
  }
  if (a.blocks >= 0) n = a.blocks;
  if (a.alpha >= 0.0) alpha = a.alpha;
  write_survival(dir / "survival.csv", n, alpha);
  manifest.add("survival.n", std::to_string(n));
  manifest.add("survival.alpha", format_metric(alpha));
  manifest.write(dir);
  return kExitOk;
}

// ---------------------------------------------------------------- gradcheck

struct GradcheckArgs {
  int precision = 64;
  bool perturb = false;
  std::uint64_t seed = 1;
};

int cmd_gradcheck(const GradcheckArgs& a, std::ostream& out, std::ostream& err) {
  if (a.precision != 32 && a.precision != 64) throw UsageError("--precision must be 32 or 64");
  if (a.precision == 32) {
    err << "warning: finite differences in float32 are too noisy for a meaningful "
           "check; using tolerance 1e-2\n";
  }
  GradcheckOptions o;
  o.precision = a.precision;
  o.perturb_backward = a.perturb;
  o.seed = a.seed;
  const GradcheckReport report = run_gradcheck(o);
  char line[160];
  for (const auto& g : report.groups) {
    std::snprintf(line, sizeof line, "%-40s %6zu  max rel err %.3e%s\n", g.name.c_str(),
                  g.entries, g.max_rel_error, g.max_rel_error < report.tolerance ? "" : "  FAIL");
    out << line;
  }
  std::snprintf(line, sizeof line, "worst %.3e, tolerance %.0e, step %.0e\n", report.worst(),
                report.tolerance, report.step);
  out << line;
  const auto failures = report.failures();
  if (failures.empty()) {
    out << "gradcheck passed\n";
    return kExitOk;
  }
  out << "gradcheck failed for:";
  for (const auto& f : failures) out << ' ' << f;
  out << '\n';
  return kExitCheckFailed;
}

// ---------------------------------------------------------------- ablate

struct AblateArgs {
  DataArgs data;
  ConfigArgs config;
  std::string out;
  std::string checkpoint;
  std::string split = "test";
  bool no_project = false;
  bool no_identity_dropout = false;
  std::string gate;
  std::vector<std::string> block_kinds;
  std::vector<int> depths = {1, 2, 3, 4, 5, 6, 7, 8};
  bool quiet = false;
};

struct Variant {
  std::string name;
  RunConfig config;
};

void write_metrics_cols(std::ostream& csv, const EvalReport& r) {
  const Metrics& m = r.overall;
  csv << m.count << ',' << format_metric(m.mr()) << ',' << format_metric(m.mrr()) << ','
      << format_metric(m.hit1()) << ',' << format_metric(m.hit10());
  for (auto c : kAllCategories) csv << ',' << format_metric(r.category(c).mrr());
}

constexpr const char* kAblationHeader =
    "count,mr,mrr,hits1,hits10,mrr_1-1,mrr_1-N,mrr_N-1,mrr_N-N\n";

int cmd_ablate(const AblateArgs& a, const std::string& cmdline, std::ostream& out) {
  const Split split = parse_split(a.split);
  std::optional<bool> gate_linear_only;
  if (!a.gate.empty()) {
    if (a.gate != "linear" && a.gate != "nonlinear")
      throw UsageError("--gate must be linear or nonlinear");
    gate_linear_only = a.gate == "linear";
  }
  for (const auto& k : a.block_kinds)
    if (k != "deepe" && k != "resnet")
      throw UsageError("--feature-block-kind must be deepe or resnet");
  if (!a.no_project && !a.no_identity_dropout && !gate_linear_only && a.block_kinds.empty())
    throw UsageError("nothing to ablate: give --no-project, --no-identity-dropout, --gate "
                     "or --feature-block-kind");

  const auto paths = a.data.paths();
  const Dataset ds = a.data.load();
  const fs::path dir(a.out);
  fs::create_directories(dir);
  Manifest manifest("ablate", cmdline);
  manifest.add_data(paths, ds);
  manifest.add("split", std::string(split_name(split)));

  if (!a.checkpoint.empty()) {
    if (a.no_identity_dropout || !a.block_kinds.empty())
      throw UsageError("--no-identity-dropout and --feature-block-kind need training; drop "
                       "--checkpoint");
    LoadedCheckpoint ckpt = load_any(a.checkpoint);
    check_vocab(ckpt.info, ds);
    if (gate_linear_only && ckpt.info.config.model.deepe_blocks != 1)
      throw UsageError("--gate applies to single-block models; checkpoint has " +
                       std::to_string(ckpt.info.config.model.deepe_blocks) + " DeepE blocks");
    manifest.add("checkpoint", a.checkpoint);
    manifest.add("checkpoint.fnv1a64", hex64(hash_file(a.checkpoint)));
    manifest.add_config(ckpt.info.config);
    auto csv = open_csv(dir / "ablation.csv");
    csv << "variant,split," << kAblationHeader;
    auto emit = [&](const std::string& name) {
      const EvalReport r = evaluate_any(ckpt, ds, split, ckpt.info.config.train.ties);
      csv << name << ',' << split_name(split) << ',';
      write_metrics_cols(csv, r);
      csv << '\n';
      out << name << "  " << metrics_line(r.overall) << "\n";
    };
    emit("full");
    if (gate_linear_only) {
      std::visit([&](auto& m) { m.set_gates(*gate_linear_only, !*gate_linear_only); },
                 ckpt.model);
      emit(*gate_linear_only ? "gate_linear" : "gate_nonlinear");
      std::visit([](auto& m) { m.set_gates(true, true); }, ckpt.model);
    }
    if (a.no_project) {
      std::visit([](auto& m) { m.project_blocks.clear(); }, ckpt.model);
      emit("no_project");
    }
    manifest.write(dir);
    return kExitOk;
  }

  const RunConfig base = a.config.resolve();
  manifest.add_config(base);
  if (gate_linear_only && base.model.deepe_blocks != 1)
    throw UsageError("--gate applies to single-block models; config has deepe_blocks=" +
                     std::to_string(base.model.deepe_blocks));

  auto train_eval = [&](const RunConfig& c, const fs::path& run_dir) {
    fs::create_directories(run_dir);
    return with_precision(c.precision, [&](auto tag) {
      using T = decltype(tag);
      auto result = train_quietly<T>(ds, c, a.quiet ? nullptr : &out);
      write_training_log(result.log, run_dir / "train_log.csv");
      return evaluate(result.best_model, ds, split, {c.train.ties});
    });
  };

  std::vector<Variant> variants;
  if (a.no_project || a.no_identity_dropout || gate_linear_only) {
    variants.push_back({"full", base});
    if (a.no_project) {
      Variant v{"no_project", base};
      v.config.model.resnet_blocks = 0;
      variants.push_back(v);
    }
    if (a.no_identity_dropout) {
      Variant v{"no_identity_dropout", base};
      v.config.model.drop_identity = 0.0;
      variants.push_back(v);
    }
    if (gate_linear_only) {
      Variant v{*gate_linear_only ? "gate_linear" : "gate_nonlinear", base};
      v.config.model.gate_linear = *gate_linear_only;
      v.config.model.gate_nonlinear = !*gate_linear_only;
      variants.push_back(v);
    }
    auto csv = open_csv(dir / "ablation.csv");
    csv << "variant,split," << kAblationHeader;
    for (const auto& v : variants) {
      out << "variant " << v.name << "\n";
      const EvalReport r = train_eval(v.config, dir / v.name);
      csv << v.name << ',' << split_name(split) << ',';
      write_metrics_cols(csv, r);
      csv << '\n';
      csv.flush();
      out << v.name << "  " << metrics_line(r.overall) << "\n";
    }
  }

  if (!a.block_kinds.empty()) {
    auto csv = open_csv(dir / "depth_sweep.csv");
    csv << "kind,depth,split," << kAblationHeader;
    for (const auto& kind : a.block_kinds) {
      for (int depth : a.depths) {
        if (depth < 1) throw UsageError("--depths entries must be >= 1");
        RunConfig c = base;
        c.model.feature_block_kind =
            kind == "resnet" ? FeatureBlockKind::resnet : FeatureBlockKind::deepe;
        c.model.deepe_blocks = static_cast<std::size_t>(depth);
        out << "sweep " << kind << " depth " << depth << "\n";
        const EvalReport r = train_eval(c, dir / (kind + "_depth_" + std::to_string(depth)));
        csv << kind << ',' << depth << ',' << split_name(split) << ',';
        write_metrics_cols(csv, r);
        csv << '\n';
        csv.flush();
        out << kind << " depth " << depth << "  " << metrics_line(r.overall) << "\n";
      }
    }
  }
  manifest.write(dir);
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"DeepE knowledge graph embedding: train, evaluate and analyze", "deepe"};
  app.require_subcommand(1, 1);
  app.set_version_flag("--version", std::string(kVersion));

  TrainArgs train;
  auto* train_cmd = app.add_subcommand("train", "Train a model, keep the best checkpoint");
  train.data.add_to(*train_cmd);
  train.config.add_to(*train_cmd);
  train_cmd->add_option("--out", train.out, "Run directory")->required();
  train_cmd->add_option("--runs", train.runs, "Repeat with seeds seed..seed+N-1");
  train_cmd->add_flag("--quiet", train.quiet, "No per-epoch lines");

  EvalArgs eval;
  auto* eval_cmd = app.add_subcommand("eval", "Filtered link prediction metrics");
  eval.data.add_to(*eval_cmd);
  eval_cmd->add_option("--checkpoint", eval.checkpoint)->required();
  eval_cmd->add_option("--split", eval.split, "valid or test");
  eval_cmd->add_option("--ties", eval.ties, "average, pessimistic or optimistic");
  eval_cmd->add_option("--out", eval.out, "Directory for report CSVs");

  AnalyzeArgs analyze;
  auto* analyze_cmd =
      app.add_subcommand("analyze", "Dataset stats, breakdowns and identity-dropout survival");
  analyze.data.add_to(*analyze_cmd);
  analyze_cmd->add_option("--checkpoint", analyze.checkpoint);
  analyze_cmd->add_option("--split", analyze.split, "valid or test");
  analyze_cmd->add_option("--ties", analyze.ties, "average, pessimistic or optimistic");
  analyze_cmd->add_option("--out", analyze.out, "Output directory")->required();
  analyze_cmd->add_option("--name", analyze.dataset_name, "Dataset name for stats.csv");
  analyze_cmd->add_option("--blocks", analyze.blocks, "n for the survival table");
  analyze_cmd->add_option("--alpha", analyze.alpha, "alpha for the survival table");

  GradcheckArgs grad;
  auto* grad_cmd = app.add_subcommand("gradcheck", "Finite-difference check of every backward");
  grad_cmd->add_option("--precision", grad.precision, "32 or 64");
  grad_cmd->add_flag("--perturb-backward", grad.perturb, "Skew analytic gradients (must fail)");
  grad_cmd->add_option("--seed", grad.seed);

  AblateArgs ablate;
  auto* ablate_cmd = app.add_subcommand("ablate", "Component ablations and depth sweeps");
  ablate.data.add_to(*ablate_cmd);
  ablate.config.add_to(*ablate_cmd);
  ablate_cmd->add_option("--out", ablate.out, "Output directory")->required();
  ablate_cmd->add_option("--checkpoint", ablate.checkpoint, "Evaluate-time ablation");
  ablate_cmd->add_option("--split", ablate.split, "valid or test");
  ablate_cmd->add_flag("--no-project", ablate.no_project);
  ablate_cmd->add_flag("--no-identity-dropout", ablate.no_identity_dropout);
  ablate_cmd->add_option("--gate", ablate.gate, "linear or nonlinear");
  ablate_cmd->add_option("--feature-block-kind", ablate.block_kinds, "deepe and/or resnet")
      ->delimiter(',');
  ablate_cmd->add_option("--depths", ablate.depths, "Depths to sweep")->delimiter(',');
  ablate_cmd->add_flag("--quiet", ablate.quiet);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForVersion&) {
    out << kVersion << "\n";
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "deepe: " << e.what() << "\n";
    return kExitInputError;
  }

  const std::string cmdline = join_command(args);
  try {
    if (*train_cmd) return cmd_train(train, cmdline, out);
    if (*eval_cmd) return cmd_eval(eval, cmdline, out);
    if (*analyze_cmd) return cmd_analyze(analyze, cmdline, out);
    if (*grad_cmd) return cmd_gradcheck(grad, out, err);
    if (*ablate_cmd) return cmd_ablate(ablate, cmdline, out);
  } catch (const CheckpointError& e) {
    err << "deepe: " << e.what() << "\n";
    return kExitCorrupt;
  } catch (const DataError& e) {
    err << "deepe: " << e.what() << "\n";
    return kExitInputError;
  } catch (const std::invalid_argument& e) {
    err << "deepe: " << e.what() << "\n";
    return kExitInputError;
  } catch (const TrainError& e) {
    err << "deepe: " << e.what() << "\n";
    return kExitCheckFailed;
  } catch (const std::exception& e) {
    err << "deepe: " << e.what() << "\n";
    return kExitCheckFailed;
  }
  return kExitInputError;
}

}  // namespace deepe
