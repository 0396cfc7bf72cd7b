#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "deepe/matrix.hpp"

namespace deepe {

enum class Mode { train, eval };

// identity exists so tests can collapse a network to an affine map.
enum class Activation { relu, identity };

class MissingCacheError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// A learnable tensor and its gradient accumulator.
template <typename T>
struct ParamRef {
  std::string name;
  Matrix<T>* value;
  Matrix<T>* grad;
};

// Non-learned state that must survive a checkpoint (BN running stats).
template <typename T>
struct BufferRef {
  std::string name;
  Matrix<T>* value;
};

template <typename T>
Matrix<T> activation_forward(const Matrix<T>& x, Activation act);
template <typename T>
Matrix<T> activation_backward(const Matrix<T>& pre, const Matrix<T>& upstream,
                              Activation act);

// y = x·Wᵀ + b with W stored out×in.
template <typename T>
class Linear {
 public:
  Linear() = default;
  Linear(std::size_t in_dim, std::size_t out_dim, Rng& rng);

  std::size_t in_dim() const noexcept { return weight.cols(); }
  std::size_t out_dim() const noexcept { return weight.rows(); }

  Matrix<T> forward(const Matrix<T>& x);
  Matrix<T> infer(const Matrix<T>& x) const;
  // Accumulates into grad_weight/grad_bias and returns the input gradient.
  Matrix<T> backward(const Matrix<T>& upstream);

  void zero_grad();
  void collect_params(const std::string& prefix, std::vector<ParamRef<T>>& out);

  Matrix<T> weight;
  Matrix<T> bias;
  Matrix<T> grad_weight;
  Matrix<T> grad_bias;

 private:
  Matrix<T> input_;
  bool cached_ = false;
};

template <typename T>
class BatchNorm {
 public:
  static constexpr double kDefaultMomentum = 0.1;
  static constexpr double kDefaultEps = 1e-5;

  BatchNorm() = default;
  explicit BatchNorm(std::size_t features, double momentum = kDefaultMomentum,
                     double eps = kDefaultEps);

  std::size_t features() const noexcept { return gamma.cols(); }

  // Train mode normalizes with batch statistics (batch >= 2) and updates the
  // running statistics; eval mode is the affine map given by running stats.
  Matrix<T> forward(const Matrix<T>& x, Mode mode);
  Matrix<T> infer(const Matrix<T>& x) const;
  Matrix<T> backward(const Matrix<T>& upstream);

  void zero_grad();
  void collect_params(const std::string& prefix, std::vector<ParamRef<T>>& out);
  void collect_buffers(const std::string& prefix,
                       std::vector<BufferRef<T>>& out);

  Matrix<T> gamma;
  Matrix<T> beta;
  Matrix<T> grad_gamma;
  Matrix<T> grad_beta;
  Matrix<T> running_mean;
  Matrix<T> running_var;
  double momentum = kDefaultMomentum;
  double eps = kDefaultEps;

 private:
  Matrix<T> normalized_;
  Matrix<T> inv_std_;
  Mode cached_mode_ = Mode::eval;
  bool cached_ = false;
};

// Inverted dropout: survivors are scaled by 1/(1-p) in train mode, eval mode
// is the identity.
template <typename T>
class Dropout {
 public:
  explicit Dropout(double p = 0.0);

  double probability() const noexcept { return p_; }
  void set_probability(double p);

  Matrix<T> forward(const Matrix<T>& x, Mode mode, Rng& rng);
  Matrix<T> backward(const Matrix<T>& upstream) const;

 private:
  double p_ = 0.0;
  Matrix<T> mask_;
  bool masked_ = false;
  bool cached_ = false;
};

struct BlockOptions {
  double fc_dropout = 0.0;
  double identity_dropout = 0.0;
  bool gate_linear = true;
  bool gate_nonlinear = true;
  Activation activation = Activation::relu;
  double bn_momentum = BatchNorm<double>::kDefaultMomentum;
};

// F(x) = identity(x) + nonlinear(x), no activation on the sum.
//   identity(x)  = drop_identity(x), or drop_identity(Ws·x) when in != out
//   nonlinear(x) = drop(bn2(fc2(drop(relu(bn1(fc1(x)))))))
// A disabled gate zeroes that branch but keeps its parameters.
template <typename T>
class DeepEBlock {
 public:
  DeepEBlock() = default;
  DeepEBlock(std::size_t in_dim, std::size_t out_dim, const BlockOptions& opts,
             Rng& rng);

  std::size_t in_dim() const noexcept { return fc1.in_dim(); }
  std::size_t out_dim() const noexcept { return fc2.out_dim(); }

  Matrix<T> forward(const Matrix<T>& x, Mode mode, Rng& rng);
  Matrix<T> infer(const Matrix<T>& x) const;
  Matrix<T> backward(const Matrix<T>& upstream);

  void zero_grad();
  void collect_params(const std::string& prefix, std::vector<ParamRef<T>>& out);
  void collect_buffers(const std::string& prefix,
                       std::vector<BufferRef<T>>& out);

  std::optional<Linear<T>> ws;
  Linear<T> fc1;
  Linear<T> fc2;
  BatchNorm<T> bn1;
  BatchNorm<T> bn2;
  Dropout<T> drop1;
  Dropout<T> drop2;
  Dropout<T> drop_identity;
  bool gate_linear = true;
  bool gate_nonlinear = true;
  Activation activation = Activation::relu;

 private:
  Matrix<T> pre_activation_;
  std::size_t cached_rows_ = 0;
  bool cached_ = false;
};

// out = relu(shortcut(x) + inner(x)), inner = k stacked fc->bn(->relu)->drop
// with no activation after the last fc. shortcut is Ws when in != out.
template <typename T>
class ResNetBlock {
 public:
  ResNetBlock() = default;
  ResNetBlock(std::size_t in_dim, std::size_t out_dim, std::size_t inner_layers,
              const BlockOptions& opts, Rng& rng);

  std::size_t in_dim() const noexcept { return fcs.front().in_dim(); }
  std::size_t out_dim() const noexcept { return fcs.back().out_dim(); }
  std::size_t inner_layers() const noexcept { return fcs.size(); }

  Matrix<T> forward(const Matrix<T>& x, Mode mode, Rng& rng);
  Matrix<T> infer(const Matrix<T>& x) const;
  Matrix<T> backward(const Matrix<T>& upstream);

  void zero_grad();
  void collect_params(const std::string& prefix, std::vector<ParamRef<T>>& out);
  void collect_buffers(const std::string& prefix,
                       std::vector<BufferRef<T>>& out);

  std::optional<Linear<T>> ws;
  std::vector<Linear<T>> fcs;
  std::vector<BatchNorm<T>> bns;
  std::vector<Dropout<T>> drops;
  Activation activation = Activation::relu;

 private:
  std::vector<Matrix<T>> pre_activations_;
  Matrix<T> sum_;
  bool cached_ = false;
};

// Probability that the order-`order` feature of an n-block stack is dropped
// by the identity-mapping dropout: it crosses n - order shortcuts, each kept
// with probability 1 - alpha, so the drop probability is
// 1 - (1 - alpha)^(n - order).
double identity_dropout_total_drop_prob(int n_blocks, double alpha, int order);

}  // namespace deepe
