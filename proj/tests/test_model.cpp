#include <doctest.h>

#include <cmath>
#include <vector>

#include "deepe/model.hpp"
#include "test_util.hpp"

using namespace deepe;
using deepe::test::max_diff;
using deepe::test::random_matrix;

namespace {

ModelConfig tiny_config(std::size_t dim = 6, std::size_t blocks = 2, std::size_t project = 1) {
  ModelConfig c;
  c.dim = dim;
  c.deepe_blocks = blocks;
  c.resnet_blocks = project;
  c.resnet_inner = 2;
  c.drop_input_fc = 0.0;
  c.drop_identity = 0.0;
  c.drop_resnet_fc = 0.0;
  c.seed = 3;
  return c;
}

template <typename T>
void randomize_bn(BatchNorm<T>& bn, Rng& rng) {
  bn.gamma = random_matrix<T>(1, bn.features(), rng);
  bn.beta = random_matrix<T>(1, bn.features(), rng);
  bn.running_mean = random_matrix<T>(1, bn.features(), rng);
  for (auto& v : bn.running_var.values()) v = static_cast<T>(0.3 + rng.uniform());
}

// Random running statistics so eval mode is not a near-identity.
template <typename T>
void randomize_stats(Model<T>& m, Rng& rng) {
  randomize_bn(m.input_bn, rng);
  for (auto& fb : m.feature_blocks)
    std::visit(
        [&](auto& b) {
          if constexpr (requires { b.bn1; }) {
            randomize_bn(b.bn1, rng);
            randomize_bn(b.bn2, rng);
          } else {
            for (auto& bn : b.bns) randomize_bn(bn, rng);
          }
        },
        fb);
  for (auto& pb : m.project_blocks)
    for (auto& bn : pb.bns) randomize_bn(bn, rng);
}

}  // namespace

TEST_CASE("config validation") {
  ModelConfig c = tiny_config();
  c.deepe_blocks = 0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = tiny_config();
  c.resnet_blocks = 3;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = tiny_config();
  c.drop_input_fc = 1.0;
  CHECK_THROWS(c.validate());
  CHECK_NOTHROW(tiny_config().validate());
}

TEST_CASE("model shape invariants") {
  Model<double> m(tiny_config(6, 3, 2), 10, 4);
  CHECK(m.entity_emb.rows() == 10);
  CHECK(m.relation_emb.rows() == 8);
  CHECK(m.feature_blocks.size() == 3);
  CHECK(m.project_blocks.size() == 2);
  const auto& first = std::get<DeepEBlock<double>>(m.feature_blocks[0]);
  CHECK(first.ws.has_value());
  CHECK(first.in_dim() == 12);
  for (std::size_t i = 1; i < 3; ++i) {
    const auto& b = std::get<DeepEBlock<double>>(m.feature_blocks[i]);
    CHECK(!b.ws.has_value());
    CHECK(b.in_dim() == 6);
    CHECK(b.out_dim() == 6);
  }
  // reverse relations have their own rows
  bool distinct = false;
  for (std::size_t c = 0; c < 6; ++c) distinct |= m.relation_emb(0, c) != m.relation_emb(4, c);
  CHECK(distinct);
}

TEST_CASE("identical seeds build identical models") {
  Model<double> a(tiny_config(), 10, 3), b(tiny_config(), 10, 3);
  CHECK(a.entity_emb == b.entity_emb);
  CHECK(a.relation_emb == b.relation_emb);
  auto c = tiny_config();
  c.seed = 4;
  Model<double> d(c, 10, 3);
  CHECK(!(a.entity_emb == d.entity_emb));
}

TEST_CASE("feature network with a dead nonlinear branch is Ws applied to BN(h||r)") {
  Model<double> m(tiny_config(4, 1, 0), 5, 2);
  Rng rng(1);
  randomize_stats(m, rng);
  auto& block = std::get<DeepEBlock<double>>(m.feature_blocks[0]);
  block.fc1.weight.set_zero();
  block.fc1.bias.set_zero();
  block.fc2.weight.set_zero();
  block.fc2.bias.set_zero();
  block.bn2.beta.set_zero();
  block.bn2.running_mean.set_zero();
  const std::vector<int> heads = {0, 3, 4}, rels = {1, 2, 3};
  const auto input = concat_cols(gather_rows(m.entity_emb, heads), gather_rows(m.relation_emb, rels));
  const auto expected = block.ws->infer(m.input_bn.infer(input));
  CHECK(max_diff(m.feature_infer(heads, rels), expected) < 1e-12);
}

TEST_CASE("feature and project networks equal their layer compositions") {
  Model<double> m(tiny_config(5, 3, 2), 9, 3);
  Rng rng(2);
  randomize_stats(m, rng);
  const std::vector<int> heads = {0, 8, 2, 2}, rels = {0, 5, 3, 1};
  auto x = m.input_bn.infer(
      concat_cols(gather_rows(m.entity_emb, heads), gather_rows(m.relation_emb, rels)));
  for (const auto& fb : m.feature_blocks)
    x = std::visit([&](const auto& b) { return b.infer(x); }, fb);
  CHECK(max_diff(m.feature_infer(heads, rels), x) < 1e-12);
  Rng r(0);
  CHECK(max_diff(m.feature_forward(heads, rels, Mode::eval, r), x) < 1e-12);

  auto t = m.entity_emb;
  for (const auto& pb : m.project_blocks) t = pb.infer(t);
  CHECK(max_diff(m.project_infer(), t) < 1e-12);
  CHECK(max_diff(m.project_forward(Mode::eval, r), t) < 1e-12);
}

TEST_CASE("project network edge cases") {
  SUBCASE("no blocks returns the entity table") {
    Model<double> m(tiny_config(4, 1, 0), 6, 2);
    CHECK(m.project_infer() == m.entity_emb);
  }
  SUBCASE("one block with zero weights is relu of the table") {
    Model<double> m(tiny_config(4, 1, 1), 6, 2);
    for (auto& fc : m.project_blocks[0].fcs) {
      fc.weight.set_zero();
      fc.bias.set_zero();
    }
    CHECK(max_diff(m.project_infer(), relu_forward(m.entity_emb)) < 1e-15);
  }
}

TEST_CASE("score matrix equals per-entity dot products") {
  Model<double> m(tiny_config(6, 2, 1), 11, 3);
  Rng rng(3);
  randomize_stats(m, rng);
  const std::vector<int> heads = {1, 4, 10}, rels = {0, 4, 5};
  const auto v = m.feature_infer(heads, rels);
  const auto tp = m.project_infer();
  const auto scores = m.score_infer(heads, rels, tp);
  REQUIRE(scores.rows() == 3);
  REQUIRE(scores.cols() == 11);
  for (std::size_t b = 0; b < 3; ++b)
    for (std::size_t e = 0; e < 11; ++e) {
      double dot = 0;
      for (std::size_t k = 0; k < 6; ++k) dot += v(b, k) * tp(e, k);
      CHECK(std::abs(scores(b, e) - dot) < 1e-10);
    }
  Rng r(0);
  CHECK(max_diff(m.score_all(heads, rels, Mode::eval, r), scores) < 1e-12);

  Model<float> mf(tiny_config(6, 2, 1), 11, 3);
  const auto sf = mf.score_infer(heads, rels, mf.project_infer());
  const auto vf = mf.feature_infer(heads, rels);
  const auto tf = mf.project_infer();
  for (std::size_t b = 0; b < 3; ++b)
    for (std::size_t e = 0; e < 11; ++e) {
      double dot = 0;
      for (std::size_t k = 0; k < 6; ++k) dot += double(vf(b, k)) * double(tf(e, k));
      CHECK(std::abs(sf(b, e) - dot) < 1e-4);
    }
}

TEST_CASE("score of hand-set features") {
  const Matrix<double> v(1, 2, {1, 2});
  const Matrix<double> t(2, 2, {1, 0, 0, 1});
  CHECK(matmul_nt(v, t) == Matrix<double>(1, 2, {1, 2}));
  const Matrix<double> ortho(2, 2, {-2, 1, 2, -1});
  const auto zero = matmul_nt(v, ortho);
  for (double s : zero.values()) CHECK(s == 0.0);
}

TEST_CASE("bad ids are rejected") {
  Model<double> m(tiny_config(), 5, 2);
  const std::vector<int> heads = {5}, rels = {0};
  CHECK_THROWS_AS(m.feature_infer(heads, rels), std::out_of_range);
  const std::vector<int> h2 = {0}, r2 = {4};
  CHECK_THROWS_AS(m.feature_infer(h2, r2), std::out_of_range);
}

TEST_CASE("eval-mode scoring is bit-identical across calls") {
  Model<float> m(tiny_config(8, 2, 1), 20, 3);
  const std::vector<int> heads = {1, 2, 3}, rels = {0, 1, 5};
  const auto a = m.score_infer(heads, rels, m.project_infer());
  const auto b = m.score_infer(heads, rels, m.project_infer());
  CHECK(a == b);
}

TEST_CASE("backward: zero upstream gives zero gradients") {
  auto c = tiny_config();
  c.drop_input_fc = 0.3;
  Model<double> m(c, 8, 2);
  const std::vector<int> heads = {0, 1, 2}, rels = {0, 1, 3};
  Rng rng(5);
  m.zero_grad();
  m.score_all(heads, rels, Mode::train, rng);
  m.backward(Matrix<double>(3, 8));
  for (const auto& p : m.parameters())
    for (double v : p.grad->values()) CHECK(v == 0.0);
}

TEST_CASE("backward: only touched embedding rows of the relation table get gradients") {
  Model<double> m(tiny_config(4, 1, 0), 6, 3);
  Rng rng(6), r(0);
  const std::vector<int> heads = {0, 1}, rels = {2, 4};
  m.zero_grad();
  m.score_all(heads, rels, Mode::eval, r);
  m.backward(random_matrix<double>(2, 6, rng));
  for (std::size_t row = 0; row < 6; ++row) {
    double norm = 0;
    for (double v : m.grad_relation.row(row)) norm += v * v;
    CHECK((norm > 0) == (row == 2 || row == 4));
  }
}

TEST_CASE("backward: a duplicated query doubles every gradient") {
  Model<double> m(tiny_config(5, 2, 1), 7, 2);
  Rng rng(7);
  randomize_stats(m, rng);
  const auto up = random_matrix<double>(1, 7, rng);
  auto grads = [&](std::size_t copies) {
    std::vector<int> heads(copies, 3), rels(copies, 1);
    Matrix<double> upstream(copies, 7);
    for (std::size_t b = 0; b < copies; ++b)
      for (std::size_t e = 0; e < 7; ++e) upstream(b, e) = up(0, e);
    Rng r(0);
    m.zero_grad();
    m.score_all(heads, rels, Mode::eval, r);
    m.backward(upstream);
    std::vector<Matrix<double>> out;
    for (const auto& p : m.parameters()) out.push_back(*p.grad);
    return out;
  };
  const auto one = grads(1);
  const auto two = grads(2);
  REQUIRE(one.size() == two.size());
  for (std::size_t i = 0; i < one.size(); ++i) {
    auto doubled = one[i];
    scale_inplace(doubled, 2.0);
    CHECK(max_diff(doubled, two[i]) <= 1e-12 * (1.0 + max_diff(doubled, Matrix<double>(doubled.rows(), doubled.cols()))));
  }
}

TEST_CASE("parameter audit: enumeration equals closed form") {
  SUBCASE("hand count of a minimal model") {
    // |E|=10, |R|=2, d=4, one DeepE block 8->4, no project blocks.
    Model<double> m(tiny_config(4, 1, 0), 10, 2);
    const auto a = m.audit();
    const std::size_t embeddings = 10 * 4 + 2 * 2 * 4;
    const std::size_t input_bn = 2 * 8;
    const std::size_t block = (8 * 4 + 4)      // ws
                              + (8 * 4 + 4)    // fc1
                              + 2 * 4          // bn1
                              + (4 * 4 + 4)    // fc2
                              + 2 * 4;         // bn2
    CHECK(a.embedding_params == embeddings);
    CHECK(a.input_bn_params == input_bn);
    CHECK(a.feature_params == block);
    CHECK(a.project_params == 0);
    CHECK(a.total == embeddings + input_bn + block);
    CHECK(a.consistent());
  }
  SUBCASE("random configurations") {
    Rng rng(8);
    for (int i = 0; i < 20; ++i) {
      ModelConfig c = tiny_config(2 + rng.below(6), 1 + rng.below(4), rng.below(3));
      c.resnet_inner = 1 + rng.below(3);
      if (rng.bernoulli(0.3)) c.feature_block_kind = FeatureBlockKind::resnet;
      const std::size_t e = 3 + rng.below(10), r = 1 + rng.below(4);
      Model<double> m(c, e, r);
      const auto a = m.audit();
      std::size_t enumerated = 0;
      for (const auto& p : m.parameters()) enumerated += p.value->size();
      CHECK(a.total == enumerated);
      CHECK(a.closed_form == closed_form_parameter_count(c, e, r));
      CHECK(a.consistent());
    }
  }
  SUBCASE("block parameters grow quadratically in d") {
    auto c = tiny_config(100, 4, 1);
    const auto small = closed_form_parameter_count(c, 10, 2);
    Model<float> ms(c, 10, 2);
    c.dim = 200;
    Model<float> ml(c, 10, 2);
    const double ratio = static_cast<double>(ml.audit().feature_params) /
                         static_cast<double>(ms.audit().feature_params);
    CHECK(ratio == doctest::Approx(4.0).epsilon(0.02));
    CHECK(small == ms.audit().closed_form);
  }
  SUBCASE("FB15k-237 sized configuration") {
    ModelConfig c = tiny_config(300, 40, 1);
    const auto total = closed_form_parameter_count(c, 14541, 237);
    // embeddings: 14541*300 + 2*237*300
    const std::size_t emb = 14541 * 300 + 474 * 300;
    CHECK(emb == 4504500);
    CHECK(total > emb);
    // blocks: 40 * ~2 * 300^2 dominates the embedding term at this depth
    CHECK(total - emb > 7000000);
  }
}

TEST_CASE("with every nonlinear gate off the feature network is affine") {
  auto c = tiny_config(4, 3, 0);
  c.gate_nonlinear = false;
  Model<double> m(c, 5, 2);
  Rng rng(9);
  randomize_stats(m, rng);
  const auto x0 = random_matrix<double>(1, 8, rng);
  const auto d1 = random_matrix<double>(1, 8, rng);
  const auto d2 = random_matrix<double>(1, 8, rng);
  auto f = [&](const Matrix<double>& x) { return m.feature_network_infer(x); };
  auto plus = [](Matrix<double> a, const Matrix<double>& b) {
    add_inplace(a, b);
    return a;
  };
  auto minus = [](Matrix<double> a, const Matrix<double>& b) {
    scale_inplace(a, -1.0);
    add_inplace(a, b);
    return a;  // b - a
  };
  const auto base = f(x0);
  const auto lhs = minus(base, f(plus(plus(x0, d1), d2)));
  const auto rhs = plus(minus(base, f(plus(x0, d1))), minus(base, f(plus(x0, d2))));
  CHECK(max_diff(lhs, rhs) < 1e-8);
}

TEST_CASE("set_gates applies to every DeepE block") {
  Model<double> m(tiny_config(4, 3, 0), 5, 2);
  m.set_gates(true, false);
  for (const auto& fb : m.feature_blocks) {
    const auto& b = std::get<DeepEBlock<double>>(fb);
    CHECK(b.gate_linear);
    CHECK(!b.gate_nonlinear);
  }
}
