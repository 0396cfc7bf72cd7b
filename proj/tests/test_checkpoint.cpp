#include <doctest.h>

#include <fstream>

#include "deepe/checkpoint.hpp"
#include "deepe/config.hpp"
#include "test_util.hpp"

using namespace deepe;
using deepe::test::random_dataset;
using deepe::test::scratch_dir;

namespace {

RunConfig small_run() {
  RunConfig c;
  c.model.dim = 6;
  c.model.deepe_blocks = 2;
  c.model.resnet_blocks = 2;
  c.model.drop_identity = 0.05;
  c.model.seed = 4;
  return c;
}

std::string read_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

void write_bytes(const std::filesystem::path& p, const std::string& bytes) {
  std::ofstream out(p, std::ios::binary);
  out << bytes;
}

// Moves BN running stats off their initial values so a dropped buffer shows.
template <typename T>
void train_a_little(Model<T>& m) {
  Rng rng(1);
  const std::vector<int> heads = {0, 1, 2, 3}, rels = {0, 1, 2, 0};
  for (int i = 0; i < 3; ++i) m.score_all(heads, rels, Mode::train, rng);
}

}  // namespace

TEST_CASE("checkpoint round trip reproduces the evaluation report exactly") {
  Rng rng(2);
  const Dataset ds = random_dataset(rng, 20, 3);
  const RunConfig cfg = small_run();
  Model<float> model(cfg.model, ds.num_entities(), ds.num_relations());
  train_a_little(model);
  const auto path = scratch_dir("ckpt") / "m.ckpt";
  save_checkpoint(path, model, cfg, ds.entities.fingerprint(), ds.relations.fingerprint());

  CheckpointInfo info;
  Model<float> loaded = load_checkpoint<float>(path, &info);
  CHECK(info.scalar_bytes == 4);
  CHECK(info.entity_hash == ds.entities.fingerprint());
  CHECK(info.num_entities == ds.num_entities());
  CHECK(info.num_relations == ds.num_relations());
  CHECK(to_config_text(info.config) == to_config_text(cfg));
  CHECK(evaluate(loaded, ds, Split::test) == evaluate(model, ds, Split::test));

  auto a = model.buffers();
  auto b = loaded.buffers();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(*a[i].value == *b[i].value);

  const auto header = read_checkpoint_info(path);
  CHECK(header.num_entities == ds.num_entities());

  // saving again gives the same bytes
  const auto path2 = path.parent_path() / "m2.ckpt";
  save_checkpoint(path2, loaded, cfg, ds.entities.fingerprint(), ds.relations.fingerprint());
  CHECK(read_bytes(path) == read_bytes(path2));
}

TEST_CASE("checkpoint precision conversion") {
  Rng rng(3);
  const Dataset ds = random_dataset(rng, 20, 3);
  RunConfig cfg = small_run();
  cfg.precision = 64;
  Model<double> model(cfg.model, ds.num_entities(), ds.num_relations());
  const auto path = scratch_dir("ckpt_prec") / "d.ckpt";
  save_checkpoint(path, model, cfg, 1, 2);
  CHECK(read_checkpoint_info(path).scalar_bytes == 8);
  const Model<float> as_float = load_checkpoint<float>(path);
  CHECK(as_float.entity_emb(3, 2) == static_cast<float>(model.entity_emb(3, 2)));
  const Model<double> as_double = load_checkpoint<double>(path);
  CHECK(as_double.entity_emb == model.entity_emb);
}

TEST_CASE("damaged checkpoints are rejected") {
  Rng rng(4);
  const Dataset ds = random_dataset(rng, 20, 3);
  const RunConfig cfg = small_run();
  Model<float> model(cfg.model, ds.num_entities(), ds.num_relations());
  const auto dir = scratch_dir("ckpt_bad");
  save_checkpoint(dir / "ok.ckpt", model, cfg, 1, 2);
  const std::string good = read_bytes(dir / "ok.ckpt");

  SUBCASE("flipped byte") {
    for (std::size_t pos : {std::size_t{0}, std::size_t{20}, good.size() / 2, good.size() - 1}) {
      std::string bad = good;
      bad[pos] = static_cast<char>(bad[pos] ^ 0x5a);
      write_bytes(dir / "bad.ckpt", bad);
      CHECK_THROWS_AS(load_checkpoint<float>(dir / "bad.ckpt"), CheckpointError);
    }
  }
  SUBCASE("truncated") {
    for (std::size_t len : {std::size_t{0}, std::size_t{7}, std::size_t{30}, good.size() - 1}) {
      write_bytes(dir / "short.ckpt", good.substr(0, len));
      CHECK_THROWS_AS(load_checkpoint<float>(dir / "short.ckpt"), CheckpointError);
      CHECK_THROWS_AS(read_checkpoint_info(dir / "short.ckpt"), CheckpointError);
    }
  }
  SUBCASE("trailing garbage") {
    write_bytes(dir / "long.ckpt", good + "xx");
    CHECK_THROWS_AS(load_checkpoint<float>(dir / "long.ckpt"), CheckpointError);
  }
  SUBCASE("missing file") {
    CHECK_THROWS_AS(load_checkpoint<float>(dir / "nope.ckpt"), CheckpointError);
  }
}

TEST_CASE("config text parsing") {
  const RunConfig c = parse_config_text("# comment\n\ndim = 32\nlr=0.01\nties=pessimistic\nseed=5\n");
  CHECK(c.model.dim == 32);
  CHECK(c.train.lr == 0.01);
  CHECK(c.train.ties == TieMode::pessimistic);
  CHECK(c.model.seed == 5);
  CHECK(c.train.seed == 5);
  CHECK_THROWS_AS(parse_config_text("dimm=3\n"), ConfigError);
  CHECK_THROWS_AS(parse_config_text("dim=abc\n"), ConfigError);
  CHECK_THROWS_AS(parse_config_text("dim\n"), ConfigError);
  CHECK_THROWS_AS(parse_config_text("gate_linear=maybe\n"), ConfigError);
}

TEST_CASE("config text round trips every key") {
  RunConfig c = preset_config("fb15k-237");
  c.train.lr = 0.1 + 0.2;  // not exactly representable in short decimal
  c.model.feature_block_kind = FeatureBlockKind::resnet;
  c.train.loss = LossKind::bce;
  c.precision = 64;
  const std::string text = to_config_text(c);
  const RunConfig back = parse_config_text(text);
  CHECK(to_config_text(back) == text);
  CHECK(back.train.lr == c.train.lr);
  for (auto key : config_keys()) CHECK(text.find(std::string(key) + "=") != std::string::npos);
  CHECK(config_value(c, "deepe_blocks") == "40");
}

TEST_CASE("presets carry the published per-dataset settings") {
  const RunConfig fb = preset_config("fb15k-237");
  CHECK(fb.model.dim == 300);
  CHECK(fb.train.l2 == 5e-8);
  CHECK(fb.model.deepe_blocks == 40);
  CHECK(fb.model.resnet_blocks == 1);
  CHECK(fb.model.resnet_inner == 2);
  CHECK(fb.model.drop_input_fc == 0.4);
  CHECK(fb.model.drop_identity == 0.01);
  CHECK(fb.model.drop_resnet_fc == 0.4);

  const RunConfig wn = preset_config("wn18rr");
  CHECK(wn.model.dim == 250);
  CHECK(wn.train.l2 == 5e-5);
  CHECK(wn.model.deepe_blocks == 1);
  CHECK(wn.model.resnet_blocks == 2);
  CHECK(wn.model.resnet_inner == 3);
  CHECK(wn.model.drop_input_fc == 0.4);
  CHECK(wn.model.drop_identity == 0.0);
  CHECK(wn.model.drop_resnet_fc == 0.0);

  const RunConfig yago = preset_config("yago3-10");
  CHECK(yago.model.dim == 500);
  CHECK(yago.model.deepe_blocks == 2);
  CHECK(yago.model.resnet_blocks == 1);

  for (const auto* c : {&fb, &wn, &yago}) {
    CHECK(c->train.lr == 0.003);
    CHECK(c->train.plateau_factor == 0.8);
    CHECK(c->train.plateau_patience == 5);
    CHECK(c->train.early_stop_patience == 10);
    CHECK(c->train.max_epochs == 1000);
    CHECK_NOTHROW(c->validate());
  }
  CHECK_THROWS_AS(preset_config("fb15k"), ConfigError);
}
