#include "deepe/model.hpp"

#include <stdexcept>
#include <string>

namespace deepe {

void ModelConfig::validate() const {
  auto fail = [](const std::string& msg) {
    throw std::invalid_argument("model config: " + msg);
  };
  auto check_prob = [&](double p, const char* key) {
    if (!(p >= 0.0 && p < 1.0)) fail(std::string(key) + " must be in [0, 1)");
  };
  if (dim < 1) fail("dim must be >= 1");
  if (deepe_blocks < 1) {
    fail("deepe_blocks must be >= 1 (the first block projects 2d -> d)");
  }
  if (resnet_blocks > 2) fail("resnet_blocks must be 0, 1 or 2");
  if (resnet_blocks > 0 && resnet_inner < 1) fail("resnet_inner must be >= 1");
  check_prob(drop_input_fc, "drop_input_fc");
  check_prob(drop_identity, "drop_identity");
  check_prob(drop_resnet_fc, "drop_resnet_fc");
  if (!(bn_momentum >= 0.0 && bn_momentum <= 1.0)) {
    fail("bn_momentum must be in [0, 1]");
  }
}

namespace {

std::size_t linear_params(std::size_t in, std::size_t out) { return in * out + out; }
std::size_t bn_params(std::size_t features) { return 2 * features; }

std::size_t deepe_block_params(std::size_t in, std::size_t out) {
  std::size_t n = linear_params(in, out) + bn_params(out) +
                  linear_params(out, out) + bn_params(out);
  if (in != out) n += linear_params(in, out);
  return n;
}

std::size_t resnet_block_params(std::size_t in, std::size_t out,
                                std::size_t inner) {
  std::size_t n = linear_params(in, out) + bn_params(out);
  n += (inner - 1) * (linear_params(out, out) + bn_params(out));
  if (in != out) n += linear_params(in, out);
  return n;
}

BlockOptions feature_options(const ModelConfig& c) {
  BlockOptions o;
  o.fc_dropout = c.drop_input_fc;
  o.identity_dropout = c.drop_identity;
  o.gate_linear = c.gate_linear;
  o.gate_nonlinear = c.gate_nonlinear;
  o.activation = c.activation;
  o.bn_momentum = c.bn_momentum;
  return o;
}

BlockOptions project_options(const ModelConfig& c) {
  BlockOptions o;
  o.fc_dropout = c.drop_resnet_fc;
  o.activation = c.activation;
  o.bn_momentum = c.bn_momentum;
  return o;
}

}  // namespace

std::size_t closed_form_parameter_count(const ModelConfig& c,
                                        std::size_t num_entities,
                                        std::size_t num_relations) {
  const std::size_t d = c.dim;
  std::size_t n = num_entities * d + 2 * num_relations * d;
  n += bn_params(2 * d);
  for (std::size_t i = 0; i < c.deepe_blocks; ++i) {
    const std::size_t in = i == 0 ? 2 * d : d;
    n += c.feature_block_kind == FeatureBlockKind::deepe
             ? deepe_block_params(in, d)
             : resnet_block_params(in, d, kFeatureResNetInner);
  }
  n += c.resnet_blocks * resnet_block_params(d, d, c.resnet_inner);
  return n;
}

template <typename T>
Model<T>::Model(const ModelConfig& config, std::size_t num_entities,
                std::size_t num_relations)
    : input_bn(2 * config.dim, config.bn_momentum),
      input_drop(config.drop_input_fc),
      config_(config) {
  config_.validate();
  if (num_entities == 0 || num_relations == 0) {
    throw std::invalid_argument("model needs at least one entity and relation");
  }
  const Rng root(config.seed);
  Rng entity_rng = root.split(1);
  Rng relation_rng = root.split(2);
  Rng block_rng = root.split(3);
  const std::size_t d = config.dim;

  entity_emb = xavier_normal_init<T>(num_entities, d, entity_rng);
  relation_emb = xavier_normal_init<T>(2 * num_relations, d, relation_rng);
  grad_entity = Matrix<T>(num_entities, d);
  grad_relation = Matrix<T>(2 * num_relations, d);

  const BlockOptions fopts = feature_options(config);
  for (std::size_t i = 0; i < config.deepe_blocks; ++i) {
    const std::size_t in = i == 0 ? 2 * d : d;
    if (config.feature_block_kind == FeatureBlockKind::deepe) {
      feature_blocks.emplace_back(std::in_place_type<DeepEBlock<T>>, in, d,
                                  fopts, block_rng);
    } else {
      feature_blocks.emplace_back(std::in_place_type<ResNetBlock<T>>, in, d,
                                  kFeatureResNetInner, fopts, block_rng);
    }
  }
  const BlockOptions popts = project_options(config);
  for (std::size_t i = 0; i < config.resnet_blocks; ++i)
    project_blocks.emplace_back(d, d, config.resnet_inner, popts, block_rng);
}

template <typename T>
void Model<T>::check_ids(std::span<const int> heads,
                         std::span<const int> relations) const {
  if (heads.size() != relations.size()) {
    throw std::invalid_argument("model: " + std::to_string(heads.size()) +
                                " heads but " + std::to_string(relations.size()) +
                                " relations");
  }
  for (int h : heads) {
    if (h < 0 || static_cast<std::size_t>(h) >= num_entities())
      throw std::out_of_range("model: entity id " + std::to_string(h) +
                              " out of range");
  }
  for (int r : relations) {
    if (r < 0 || static_cast<std::size_t>(r) >= relation_emb.rows())
      throw std::out_of_range("model: relation id " + std::to_string(r) +
                              " out of range");
  }
}

template <typename T>
Matrix<T> Model<T>::feature_forward(std::span<const int> heads,
                                    std::span<const int> relations, Mode mode,
                                    Rng& rng) {
  check_ids(heads, relations);
  heads_.assign(heads.begin(), heads.end());
  relations_.assign(relations.begin(), relations.end());
  Matrix<T> x = concat_cols(gather_rows(entity_emb, heads),
                            gather_rows(relation_emb, relations));
  x = input_drop.forward(input_bn.forward(x, mode), mode, rng);
  for (auto& block : feature_blocks) {
    x = std::visit([&](auto& b) { return b.forward(x, mode, rng); }, block);
  }
  features_ = x;
  feature_cached_ = true;
  return x;
}

template <typename T>
Matrix<T> Model<T>::project_forward(Mode mode, Rng& rng) {
  Matrix<T> t = entity_emb;
  for (auto& block : project_blocks) t = block.forward(t, mode, rng);
  projected_ = t;
  project_cached_ = true;
  return t;
}

template <typename T>
Matrix<T> Model<T>::score_all(std::span<const int> heads,
                              std::span<const int> relations, Mode mode,
                              Rng& rng) {
  const Matrix<T> v = feature_forward(heads, relations, mode, rng);
  const Matrix<T> t = project_forward(mode, rng);
  return matmul_nt(v, t);
}

template <typename T>
void Model<T>::backward(const Matrix<T>& score_grad) {
  if (!feature_cached_ || !project_cached_) {
    throw MissingCacheError("model: backward called before score_all");
  }
  if (score_grad.rows() != features_.rows() ||
      score_grad.cols() != num_entities()) {
    throw ShapeError("model backward: score gradient " +
                     score_grad.shape_string() + " does not match scores");
  }
  Matrix<T> g_features = matmul(score_grad, projected_);
  Matrix<T> g_projected = matmul_tn(score_grad, features_);

  for (std::size_t i = project_blocks.size(); i-- > 0;)
    g_projected = project_blocks[i].backward(g_projected);
  add_inplace(grad_entity, g_projected);

  for (std::size_t i = feature_blocks.size(); i-- > 0;) {
    g_features = std::visit([&](auto& b) { return b.backward(g_features); },
                            feature_blocks[i]);
  }
  const Matrix<T> g_input = input_bn.backward(input_drop.backward(g_features));
  const std::size_t d = dim();
  scatter_add_rows(grad_entity, std::span<const int>(heads_),
                   slice_cols(g_input, 0, d));
  scatter_add_rows(grad_relation, std::span<const int>(relations_),
                   slice_cols(g_input, d, d));
}

template <typename T>
void Model<T>::zero_grad() {
  grad_entity.set_zero();
  grad_relation.set_zero();
  input_bn.zero_grad();
  for (auto& block : feature_blocks)
    std::visit([](auto& b) { b.zero_grad(); }, block);
  for (auto& block : project_blocks) block.zero_grad();
}

template <typename T>
Matrix<T> Model<T>::feature_network_infer(const Matrix<T>& input) const {
  Matrix<T> x = input_bn.infer(input);
  for (const auto& block : feature_blocks) {
    x = std::visit([&](const auto& b) { return b.infer(x); }, block);
  }
  return x;
}

template <typename T>
Matrix<T> Model<T>::feature_infer(std::span<const int> heads,
                                  std::span<const int> relations) const {
  check_ids(heads, relations);
  return feature_network_infer(concat_cols(gather_rows(entity_emb, heads),
                                           gather_rows(relation_emb, relations)));
}

template <typename T>
Matrix<T> Model<T>::project_infer() const {
  Matrix<T> t = entity_emb;
  for (const auto& block : project_blocks) t = block.infer(t);
  return t;
}

template <typename T>
Matrix<T> Model<T>::score_infer(std::span<const int> heads,
                                std::span<const int> relations,
                                const Matrix<T>& projected) const {
  return matmul_nt(feature_infer(heads, relations), projected);
}

template <typename T>
std::vector<ParamRef<T>> Model<T>::parameters() {
  std::vector<ParamRef<T>> out;
  out.push_back({"entity_emb", &entity_emb, &grad_entity});
  out.push_back({"relation_emb", &relation_emb, &grad_relation});
  input_bn.collect_params("input_bn", out);
  for (std::size_t i = 0; i < feature_blocks.size(); ++i) {
    const std::string prefix = "feature." + std::to_string(i);
    std::visit([&](auto& b) { b.collect_params(prefix, out); }, feature_blocks[i]);
  }
  for (std::size_t i = 0; i < project_blocks.size(); ++i)
    project_blocks[i].collect_params("project." + std::to_string(i), out);
  return out;
}

template <typename T>
std::vector<BufferRef<T>> Model<T>::buffers() {
  std::vector<BufferRef<T>> out;
  input_bn.collect_buffers("input_bn", out);
  for (std::size_t i = 0; i < feature_blocks.size(); ++i) {
    const std::string prefix = "feature." + std::to_string(i);
    std::visit([&](auto& b) { b.collect_buffers(prefix, out); }, feature_blocks[i]);
  }
  for (std::size_t i = 0; i < project_blocks.size(); ++i)
    project_blocks[i].collect_buffers("project." + std::to_string(i), out);
  return out;
}

template <typename T>
ParameterAudit Model<T>::audit() {
  ParameterAudit a;
  for (const auto& p : parameters()) {
    const std::size_t n = p.value->size();
    if (p.name == "entity_emb" || p.name == "relation_emb") {
      a.embedding_params += n;
    } else if (p.name.starts_with("input_bn")) {
      a.input_bn_params += n;
    } else if (p.name.starts_with("feature.")) {
      a.feature_params += n;
    } else {
      a.project_params += n;
    }
    a.total += n;
  }
  a.closed_form =
      closed_form_parameter_count(config_, num_entities(), num_relations());
  const std::size_t d = dim();
  a.asymptotic_estimate = num_entities() * d + num_relations() * d +
                          2 * config_.deepe_blocks * d * d +
                          2 * config_.resnet_blocks * d * d;
  return a;
}

template <typename T>
void Model<T>::set_gates(bool linear, bool nonlinear) {
  config_.gate_linear = linear;
  config_.gate_nonlinear = nonlinear;
  for (auto& block : feature_blocks) {
    if (auto* b = std::get_if<DeepEBlock<T>>(&block)) {
      b->gate_linear = linear;
      b->gate_nonlinear = nonlinear;
    }
  }
}

template class Model<float>;
template class Model<double>;

}  // namespace deepe
