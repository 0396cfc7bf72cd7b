#include "deepe/layers.hpp"

#include <cmath>
#include <string>

namespace deepe {

template <typename T>
Matrix<T> activation_forward(const Matrix<T>& x, Activation act) {
  return act == Activation::relu ? relu_forward(x) : x;
}

template <typename T>
Matrix<T> activation_backward(const Matrix<T>& pre, const Matrix<T>& upstream,
                              Activation act) {
  return act == Activation::relu ? relu_backward(pre, upstream) : upstream;
}

namespace {

void require_cache(bool cached, const char* layer) {
  if (!cached) {
    throw MissingCacheError(std::string(layer) +
                            ": backward called without a forward cache");
  }
}

template <typename T>
void require_cols(const Matrix<T>& x, std::size_t expected, const char* layer) {
  if (x.cols() != expected) {
    throw ShapeError(std::string(layer) + ": expected " +
                     std::to_string(expected) + " input columns, got " +
                     x.shape_string());
  }
}

}  // namespace

// ---------------------------------------------------------------- Linear

template <typename T>
Linear<T>::Linear(std::size_t in_dim, std::size_t out_dim, Rng& rng)
    : weight(xavier_normal_init<T>(out_dim, in_dim, rng)),
      bias(1, out_dim),
      grad_weight(out_dim, in_dim),
      grad_bias(1, out_dim) {}

template <typename T>
Matrix<T> Linear<T>::infer(const Matrix<T>& x) const {
  require_cols(x, in_dim(), "linear");
  Matrix<T> out = matmul_nt(x, weight);
  add_row_inplace(out, bias);
  return out;
}

template <typename T>
Matrix<T> Linear<T>::forward(const Matrix<T>& x) {
  Matrix<T> out = infer(x);
  input_ = x;
  cached_ = true;
  return out;
}

template <typename T>
Matrix<T> Linear<T>::backward(const Matrix<T>& upstream) {
  require_cache(cached_, "linear");
  if (upstream.rows() != input_.rows() || upstream.cols() != out_dim()) {
    throw ShapeError("linear backward: upstream " + upstream.shape_string() +
                     " does not match output (" +
                     std::to_string(input_.rows()) + "x" +
                     std::to_string(out_dim()) + ")");
  }
  add_inplace(grad_weight, matmul_tn(upstream, input_));
  add_inplace(grad_bias, column_sums(upstream));
  return matmul(upstream, weight);
}

template <typename T>
void Linear<T>::zero_grad() {
  grad_weight.set_zero();
  grad_bias.set_zero();
}

template <typename T>
void Linear<T>::collect_params(const std::string& prefix,
                               std::vector<ParamRef<T>>& out) {
  out.push_back({prefix + ".weight", &weight, &grad_weight});
  out.push_back({prefix + ".bias", &bias, &grad_bias});
}

// ---------------------------------------------------------------- BatchNorm

template <typename T>
BatchNorm<T>::BatchNorm(std::size_t features, double momentum, double eps)
    : gamma(1, features, T{1}),
      beta(1, features),
      grad_gamma(1, features),
      grad_beta(1, features),
      running_mean(1, features),
      running_var(1, features, T{1}),
      momentum(momentum),
      eps(eps) {}

template <typename T>
Matrix<T> BatchNorm<T>::infer(const Matrix<T>& x) const {
  require_cols(x, features(), "batch norm");
  Matrix<T> out(x.rows(), x.cols());
  const std::size_t f = features();
  std::vector<T> inv(f);
  for (std::size_t c = 0; c < f; ++c)
    inv[c] = T{1} / std::sqrt(running_var.values()[c] + static_cast<T>(eps));
  // Same operation order as forward(x, Mode::eval) so both are bit-identical.
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const auto in = x.row(r);
    auto o = out.row(r);
    for (std::size_t c = 0; c < f; ++c) {
      const T normalized = (in[c] - running_mean.values()[c]) * inv[c];
      o[c] = gamma.values()[c] * normalized + beta.values()[c];
    }
  }
  return out;
}

template <typename T>
Matrix<T> BatchNorm<T>::forward(const Matrix<T>& x, Mode mode) {
  require_cols(x, features(), "batch norm");
  const std::size_t f = features();
  const std::size_t n = x.rows();
  inv_std_ = Matrix<T>(1, f);
  cached_mode_ = mode;

  if (mode == Mode::eval) {
    for (std::size_t c = 0; c < f; ++c) {
      inv_std_.values()[c] =
          T{1} / std::sqrt(running_var.values()[c] + static_cast<T>(eps));
    }
    normalized_ = Matrix<T>(n, f);
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < f; ++c)
        normalized_(r, c) = (x(r, c) - running_mean.values()[c]) * inv_std_.values()[c];
  } else {
    if (n < 2) {
      throw std::invalid_argument(
          "batch norm: train mode needs a batch of at least 2 rows, got " +
          std::to_string(n));
    }
    Matrix<T> mean = column_sums(x);
    scale_inplace(mean, T{1} / static_cast<T>(n));
    Matrix<T> var(1, f);
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t c = 0; c < f; ++c) {
        const T centered = x(r, c) - mean.values()[c];
        var.values()[c] += centered * centered;
      }
    }
    scale_inplace(var, T{1} / static_cast<T>(n));
    normalized_ = Matrix<T>(n, f);
    for (std::size_t c = 0; c < f; ++c) {
      inv_std_.values()[c] = T{1} / std::sqrt(var.values()[c] + static_cast<T>(eps));
    }
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < f; ++c)
        normalized_(r, c) = (x(r, c) - mean.values()[c]) * inv_std_.values()[c];

    const T m = static_cast<T>(momentum);
    const T unbias = static_cast<T>(n) / static_cast<T>(n - 1);
    for (std::size_t c = 0; c < f; ++c) {
      auto& rm = running_mean.values()[c];
      auto& rv = running_var.values()[c];
      rm = (T{1} - m) * rm + m * mean.values()[c];
      rv = (T{1} - m) * rv + m * var.values()[c] * unbias;
    }
  }

  Matrix<T> out(n, f);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < f; ++c)
      out(r, c) = gamma.values()[c] * normalized_(r, c) + beta.values()[c];
  cached_ = true;
  return out;
}

template <typename T>
Matrix<T> BatchNorm<T>::backward(const Matrix<T>& upstream) {
  require_cache(cached_, "batch norm");
  require_same_shape(upstream, normalized_, "batch norm backward");
  const std::size_t f = features();
  const std::size_t n = upstream.rows();

  Matrix<T> sum_dy(1, f);
  Matrix<T> sum_dy_xhat(1, f);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < f; ++c) {
      sum_dy.values()[c] += upstream(r, c);
      sum_dy_xhat.values()[c] += upstream(r, c) * normalized_(r, c);
    }
  }
  add_inplace(grad_beta, sum_dy);
  add_inplace(grad_gamma, sum_dy_xhat);

  Matrix<T> dx(n, f);
  if (cached_mode_ == Mode::eval) {
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < f; ++c)
        dx(r, c) = upstream(r, c) * gamma.values()[c] * inv_std_.values()[c];
    return dx;
  }
  // dx = gamma * inv_std / n * (n*dy - sum(dy) - xhat * sum(dy*xhat))
  const T count = static_cast<T>(n);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < f; ++c) {
      const T k = gamma.values()[c] * inv_std_.values()[c] / count;
      dx(r, c) = k * (count * upstream(r, c) - sum_dy.values()[c] -
                      normalized_(r, c) * sum_dy_xhat.values()[c]);
    }
  }
  return dx;
}

template <typename T>
void BatchNorm<T>::zero_grad() {
  grad_gamma.set_zero();
  grad_beta.set_zero();
}

template <typename T>
void BatchNorm<T>::collect_params(const std::string& prefix,
                                  std::vector<ParamRef<T>>& out) {
  out.push_back({prefix + ".gamma", &gamma, &grad_gamma});
  out.push_back({prefix + ".beta", &beta, &grad_beta});
}

template <typename T>
void BatchNorm<T>::collect_buffers(const std::string& prefix,
                                   std::vector<BufferRef<T>>& out) {
  out.push_back({prefix + ".running_mean", &running_mean});
  out.push_back({prefix + ".running_var", &running_var});
}

// ---------------------------------------------------------------- Dropout

template <typename T>
Dropout<T>::Dropout(double p) {
  set_probability(p);
}

template <typename T>
void Dropout<T>::set_probability(double p) {
  if (!(p >= 0.0 && p < 1.0)) {
    throw std::invalid_argument("dropout probability must be in [0, 1), got " +
                                std::to_string(p));
  }
  p_ = p;
}

template <typename T>
Matrix<T> Dropout<T>::forward(const Matrix<T>& x, Mode mode, Rng& rng) {
  cached_ = true;
  masked_ = mode == Mode::train && p_ > 0.0;
  if (!masked_) return x;
  const T keep_scale = static_cast<T>(1.0 / (1.0 - p_));
  mask_ = Matrix<T>(x.rows(), x.cols());
  Matrix<T> out(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const T m = rng.bernoulli(p_) ? T{0} : keep_scale;
    mask_.values()[i] = m;
    out.values()[i] = x.values()[i] * m;
  }
  return out;
}

template <typename T>
Matrix<T> Dropout<T>::backward(const Matrix<T>& upstream) const {
  require_cache(cached_, "dropout");
  if (!masked_) return upstream;
  return hadamard(upstream, mask_);
}

// ---------------------------------------------------------------- DeepEBlock

template <typename T>
DeepEBlock<T>::DeepEBlock(std::size_t in_dim, std::size_t out_dim,
                          const BlockOptions& opts, Rng& rng)
    : fc1(in_dim, out_dim, rng),
      fc2(out_dim, out_dim, rng),
      bn1(out_dim, opts.bn_momentum),
      bn2(out_dim, opts.bn_momentum),
      drop1(opts.fc_dropout),
      drop2(opts.fc_dropout),
      drop_identity(opts.identity_dropout),
      gate_linear(opts.gate_linear),
      gate_nonlinear(opts.gate_nonlinear),
      activation(opts.activation) {
  if (in_dim != out_dim) ws.emplace(in_dim, out_dim, rng);
}

template <typename T>
Matrix<T> DeepEBlock<T>::infer(const Matrix<T>& x) const {
  require_cols(x, in_dim(), "deepe block");
  Matrix<T> out(x.rows(), out_dim());
  if (gate_linear) add_inplace(out, ws ? ws->infer(x) : x);
  if (gate_nonlinear) {
    const Matrix<T> hidden =
        activation_forward(bn1.infer(fc1.infer(x)), activation);
    add_inplace(out, bn2.infer(fc2.infer(hidden)));
  }
  return out;
}

template <typename T>
Matrix<T> DeepEBlock<T>::forward(const Matrix<T>& x, Mode mode, Rng& rng) {
  require_cols(x, in_dim(), "deepe block");
  Matrix<T> out(x.rows(), out_dim());
  if (gate_linear) {
    add_inplace(out, drop_identity.forward(ws ? ws->forward(x) : x, mode, rng));
  }
  if (gate_nonlinear) {
    pre_activation_ = bn1.forward(fc1.forward(x), mode);
    Matrix<T> hidden =
        drop1.forward(activation_forward(pre_activation_, activation), mode, rng);
    add_inplace(out, drop2.forward(bn2.forward(fc2.forward(hidden), mode), mode, rng));
  }
  cached_rows_ = x.rows();
  cached_ = true;
  return out;
}

template <typename T>
Matrix<T> DeepEBlock<T>::backward(const Matrix<T>& upstream) {
  require_cache(cached_, "deepe block");
  if (upstream.rows() != cached_rows_ || upstream.cols() != out_dim()) {
    throw ShapeError("deepe block backward: unexpected upstream " +
                     upstream.shape_string());
  }
  Matrix<T> dx(upstream.rows(), in_dim());
  if (gate_linear) {
    Matrix<T> g = drop_identity.backward(upstream);
    add_inplace(dx, ws ? ws->backward(g) : g);
  }
  if (gate_nonlinear) {
    Matrix<T> g = bn2.backward(drop2.backward(upstream));
    g = drop1.backward(fc2.backward(g));
    g = bn1.backward(activation_backward(pre_activation_, g, activation));
    add_inplace(dx, fc1.backward(g));
  }
  return dx;
}

template <typename T>
void DeepEBlock<T>::zero_grad() {
  if (ws) ws->zero_grad();
  fc1.zero_grad();
  fc2.zero_grad();
  bn1.zero_grad();
  bn2.zero_grad();
}

template <typename T>
void DeepEBlock<T>::collect_params(const std::string& prefix,
                                   std::vector<ParamRef<T>>& out) {
  if (ws) ws->collect_params(prefix + ".ws", out);
  fc1.collect_params(prefix + ".fc1", out);
  bn1.collect_params(prefix + ".bn1", out);
  fc2.collect_params(prefix + ".fc2", out);
  bn2.collect_params(prefix + ".bn2", out);
}

template <typename T>
void DeepEBlock<T>::collect_buffers(const std::string& prefix,
                                    std::vector<BufferRef<T>>& out) {
  bn1.collect_buffers(prefix + ".bn1", out);
  bn2.collect_buffers(prefix + ".bn2", out);
}

// ---------------------------------------------------------------- ResNetBlock

template <typename T>
ResNetBlock<T>::ResNetBlock(std::size_t in_dim, std::size_t out_dim,
                            std::size_t inner_layers, const BlockOptions& opts,
                            Rng& rng)
    : activation(opts.activation) {
  if (inner_layers == 0) {
    throw std::invalid_argument("resnet block needs at least one inner layer");
  }
  for (std::size_t i = 0; i < inner_layers; ++i) {
    fcs.emplace_back(i == 0 ? in_dim : out_dim, out_dim, rng);
    bns.emplace_back(out_dim, opts.bn_momentum);
    drops.emplace_back(opts.fc_dropout);
  }
  if (in_dim != out_dim) ws.emplace(in_dim, out_dim, rng);
}

template <typename T>
Matrix<T> ResNetBlock<T>::infer(const Matrix<T>& x) const {
  require_cols(x, in_dim(), "resnet block");
  Matrix<T> z = x;
  for (std::size_t i = 0; i < fcs.size(); ++i) {
    z = bns[i].infer(fcs[i].infer(z));
    if (i + 1 < fcs.size()) z = activation_forward(z, activation);
  }
  add_inplace(z, ws ? ws->infer(x) : x);
  return activation_forward(z, activation);
}

template <typename T>
Matrix<T> ResNetBlock<T>::forward(const Matrix<T>& x, Mode mode, Rng& rng) {
  require_cols(x, in_dim(), "resnet block");
  pre_activations_.clear();
  Matrix<T> z = x;
  for (std::size_t i = 0; i < fcs.size(); ++i) {
    z = bns[i].forward(fcs[i].forward(z), mode);
    if (i + 1 < fcs.size()) {
      pre_activations_.push_back(z);
      z = activation_forward(z, activation);
    }
    z = drops[i].forward(z, mode, rng);
  }
  add_inplace(z, ws ? ws->forward(x) : x);
  sum_ = std::move(z);
  cached_ = true;
  return activation_forward(sum_, activation);
}

template <typename T>
Matrix<T> ResNetBlock<T>::backward(const Matrix<T>& upstream) {
  require_cache(cached_, "resnet block");
  require_same_shape(upstream, sum_, "resnet block backward");
  const Matrix<T> g_sum = activation_backward(sum_, upstream, activation);
  Matrix<T> dx = ws ? ws->backward(g_sum) : g_sum;
  Matrix<T> g = g_sum;
  for (std::size_t i = fcs.size(); i-- > 0;) {
    g = drops[i].backward(g);
    if (i + 1 < fcs.size()) {
      g = activation_backward(pre_activations_[i], g, activation);
    }
    g = fcs[i].backward(bns[i].backward(g));
  }
  add_inplace(dx, g);
  return dx;
}

template <typename T>
void ResNetBlock<T>::zero_grad() {
  if (ws) ws->zero_grad();
  for (auto& fc : fcs) fc.zero_grad();
  for (auto& bn : bns) bn.zero_grad();
}

template <typename T>
void ResNetBlock<T>::collect_params(const std::string& prefix,
                                    std::vector<ParamRef<T>>& out) {
  if (ws) ws->collect_params(prefix + ".ws", out);
  for (std::size_t i = 0; i < fcs.size(); ++i) {
    fcs[i].collect_params(prefix + ".fc" + std::to_string(i + 1), out);
    bns[i].collect_params(prefix + ".bn" + std::to_string(i + 1), out);
  }
}

template <typename T>
void ResNetBlock<T>::collect_buffers(const std::string& prefix,
                                     std::vector<BufferRef<T>>& out) {
  for (std::size_t i = 0; i < bns.size(); ++i)
    bns[i].collect_buffers(prefix + ".bn" + std::to_string(i + 1), out);
}

double identity_dropout_total_drop_prob(int n_blocks, double alpha, int order) {
  if (n_blocks < 0 || order < 0 || order > n_blocks) {
    throw std::out_of_range("identity dropout: order " + std::to_string(order) +
                            " outside [0, " + std::to_string(n_blocks) + "]");
  }
  if (!(alpha >= 0.0 && alpha < 1.0)) {
    throw std::invalid_argument("identity dropout: alpha must be in [0, 1)");
  }
  return 1.0 - std::pow(1.0 - alpha, n_blocks - order);
}

#define DEEPE_INSTANTIATE_LAYERS(T)                                         \
  template Matrix<T> activation_forward(const Matrix<T>&, Activation);      \
  template Matrix<T> activation_backward(const Matrix<T>&, const Matrix<T>&, \
                                         Activation);                       \
  template class Linear<T>;                                                 \
  template class BatchNorm<T>;                                              \
  template class Dropout<T>;                                                \
  template class DeepEBlock<T>;                                             \
  template class ResNetBlock<T>;

DEEPE_INSTANTIATE_LAYERS(float)
DEEPE_INSTANTIATE_LAYERS(double)

#undef DEEPE_INSTANTIATE_LAYERS

}  // namespace deepe
