#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "deepe/layers.hpp"

namespace deepe {

enum class FeatureBlockKind { deepe, resnet };

// Network shape and regularization knobs. Defaults follow the FB15k-237
// column of the published settings except for the dimension.
struct ModelConfig {
  std::size_t dim = 200;
  std::size_t deepe_blocks = 1;   // feature-network depth
  std::size_t resnet_blocks = 1;  // project-network depth, 0..2
  std::size_t resnet_inner = 2;   // inner layers per project block
  double drop_input_fc = 0.4;     // input dropout and DeepE fc dropout
  double drop_identity = 0.0;     // identity-mapping dropout (alpha)
  double drop_resnet_fc = 0.0;    // project-block fc dropout
  FeatureBlockKind feature_block_kind = FeatureBlockKind::deepe;
  bool gate_linear = true;
  bool gate_nonlinear = true;
  Activation activation = Activation::relu;
  double bn_momentum = BatchNorm<double>::kDefaultMomentum;
  std::uint64_t seed = 0;

  // Throws std::invalid_argument on an unusable configuration.
  void validate() const;
};

// Inner layer count of a feature block when the feature network is built
// from ResNet blocks (two linear layers, like a DeepE block).
inline constexpr std::size_t kFeatureResNetInner = 2;

struct ParameterAudit {
  std::size_t embedding_params = 0;
  std::size_t feature_params = 0;
  std::size_t project_params = 0;
  std::size_t input_bn_params = 0;
  std::size_t total = 0;        // enumerated
  std::size_t closed_form = 0;  // from the configuration alone
  // Weight-matrix-only estimate |E|d + |R|d + 2kd^2 + 2td^2, no bias/BN and
  // no reverse relations.
  std::size_t asymptotic_estimate = 0;

  bool consistent() const noexcept { return total == closed_form; }
};

std::size_t closed_form_parameter_count(const ModelConfig& config,
                                        std::size_t num_entities,
                                        std::size_t num_relations);

// Scores (head, relation) queries against every entity:
//   v  = feature blocks applied to dropout(BN(h || r))
//   t' = project blocks applied to the entity table
//   score[b][e] = v_b · t'_e
// Relation ids run over 2|R| rows; id + |R| is the reverse of id.
template <typename T>
class Model {
 public:
  using FeatureBlock = std::variant<DeepEBlock<T>, ResNetBlock<T>>;

  Model(const ModelConfig& config, std::size_t num_entities,
        std::size_t num_relations);

  const ModelConfig& config() const noexcept { return config_; }
  std::size_t num_entities() const noexcept { return entity_emb.rows(); }
  std::size_t num_relations() const noexcept { return relation_emb.rows() / 2; }
  std::size_t dim() const noexcept { return config_.dim; }

  Matrix<T> feature_forward(std::span<const int> heads,
                            std::span<const int> relations, Mode mode, Rng& rng);
  Matrix<T> project_forward(Mode mode, Rng& rng);
  // batch × |E|; caches everything backward() needs.
  Matrix<T> score_all(std::span<const int> heads, std::span<const int> relations,
                      Mode mode, Rng& rng);
  // Accumulates gradients for every parameter from dLoss/dScores.
  void backward(const Matrix<T>& score_grad);
  void zero_grad();

  // Eval-mode paths. Pure and safe to call concurrently.
  Matrix<T> feature_infer(std::span<const int> heads,
                          std::span<const int> relations) const;
  // Feature network applied to an already concatenated (h || r) batch.
  Matrix<T> feature_network_infer(const Matrix<T>& input) const;
  Matrix<T> project_infer() const;
  Matrix<T> score_infer(std::span<const int> heads,
                        std::span<const int> relations,
                        const Matrix<T>& projected) const;

  // Stable names, used as checkpoint keys.
  std::vector<ParamRef<T>> parameters();
  std::vector<BufferRef<T>> buffers();
  ParameterAudit audit();

  // Applies the gate flags to every DeepE block of the feature network.
  void set_gates(bool linear, bool nonlinear);

  Matrix<T> entity_emb;
  Matrix<T> relation_emb;
  Matrix<T> grad_entity;
  Matrix<T> grad_relation;
  BatchNorm<T> input_bn;
  Dropout<T> input_drop;
  std::vector<FeatureBlock> feature_blocks;
  std::vector<ResNetBlock<T>> project_blocks;

 private:
  void check_ids(std::span<const int> heads, std::span<const int> relations) const;

  ModelConfig config_;
  std::vector<int> heads_;
  std::vector<int> relations_;
  Matrix<T> features_;
  Matrix<T> projected_;
  bool feature_cached_ = false;
  bool project_cached_ = false;
};

}  // namespace deepe
