#include "deepe/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>

#include "deepe/layers.hpp"
#include "deepe/model.hpp"
#include "deepe/train.hpp"

namespace deepe {

bool GradcheckReport::passed() const { return failures().empty(); }

std::vector<std::string> GradcheckReport::failures() const {
  std::vector<std::string> out;
  for (const auto& g : groups)
    if (!(g.max_rel_error < tolerance)) out.push_back(g.name);
  return out;
}

double GradcheckReport::worst() const {
  double w = 0.0;
  for (const auto& g : groups) w = std::max(w, g.max_rel_error);
  return w;
}

double default_gradcheck_tolerance(int precision) {
  return precision == 32 ? 1e-2 : 1e-5;
}

namespace {

template <typename T>
struct Target {
  std::string name;
  Matrix<T>* value;
  const Matrix<T>* analytic;
};

template <typename T>
Matrix<T> random_matrix(std::size_t rows, std::size_t cols, Rng& rng, double scale = 1.0) {
  Matrix<T> m(rows, cols);
  for (auto& v : m.values()) v = static_cast<T>(scale * rng.normal());
  return m;
}

template <typename T>
double weighted_sum(const Matrix<T>& out, const Matrix<T>& weights) {
  double s = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i)
    s += static_cast<double>(out.values()[i]) * static_cast<double>(weights.values()[i]);
  return s;
}

template <typename T>
class Checker {
 public:
  Checker(double step, double floor, bool perturb, GradcheckReport& report)
      : step_(step), floor_(floor), perturb_(perturb), report_(report) {}

  // loss() must recompute the forward pass from scratch with identical
  // randomness every call.
  void check(const std::string& group, const std::vector<Target<T>>& targets,
             const std::function<double()>& loss) {
    for (const auto& t : targets) {
      Matrix<T> numeric(t.value->rows(), t.value->cols());
      auto values = t.value->values();
      for (std::size_t i = 0; i < values.size(); ++i) {
        const T saved = values[i];
        values[i] = static_cast<T>(static_cast<double>(saved) + step_);
        const double up = loss();
        values[i] = static_cast<T>(static_cast<double>(saved) - step_);
        const double down = loss();
        values[i] = saved;
        numeric.values()[i] = static_cast<T>((up - down) / (2.0 * step_));
      }
      double diff = 0.0, na = 0.0, nn = 0.0;
      for (std::size_t i = 0; i < numeric.size(); ++i) {
        double a = static_cast<double>(t.analytic->values()[i]);
        if (perturb_) a = a * (1.0 + 1e-3) + 1e-3;
        const double n = static_cast<double>(numeric.values()[i]);
        diff += (a - n) * (a - n);
        na += a * a;
        nn += n * n;
      }
      const double denom = std::max({std::sqrt(na), std::sqrt(nn), floor_});
      const double rel = std::sqrt(diff) / denom;
      report_.groups.push_back({group + "." + t.name, rel, numeric.size()});
    }
  }

 private:
  double step_;
  double floor_;
  bool perturb_;
  GradcheckReport& report_;
};

template <typename T>
void check_layers(Checker<T>& checker, Rng& rng) {
  const std::size_t batch = 5;
  BlockOptions opts;
  opts.fc_dropout = 0.2;
  opts.identity_dropout = 0.1;

  {
    Linear<T> layer(6, 4, rng);
    layer.bias = random_matrix<T>(1, 4, rng);
    Matrix<T> x = random_matrix<T>(batch, 6, rng);
    const Matrix<T> w = random_matrix<T>(batch, 4, rng);
    layer.zero_grad();
    layer.forward(x);
    const Matrix<T> dx = layer.backward(w);
    checker.check("linear",
                  {{"input", &x, &dx}, {"weight", &layer.weight, &layer.grad_weight},
                   {"bias", &layer.bias, &layer.grad_bias}},
                  [&] { return weighted_sum(layer.infer(x), w); });
  }
  for (Mode mode : {Mode::train, Mode::eval}) {
    BatchNorm<T> bn(4);
    bn.gamma = random_matrix<T>(1, 4, rng);
    bn.beta = random_matrix<T>(1, 4, rng);
    bn.running_mean = random_matrix<T>(1, 4, rng);
    for (auto& v : bn.running_var.values()) v = static_cast<T>(0.5 + rng.uniform());
    Matrix<T> x = random_matrix<T>(batch, 4, rng);
    const Matrix<T> w = random_matrix<T>(batch, 4, rng);
    bn.zero_grad();
    BatchNorm<T> probe = bn;
    bn.forward(x, mode);
    const Matrix<T> dx = bn.backward(w);
    const char* name = mode == Mode::train ? "batchnorm_train" : "batchnorm_eval";
    checker.check(name,
                  {{"input", &x, &dx}, {"gamma", &probe.gamma, &bn.grad_gamma},
                   {"beta", &probe.beta, &bn.grad_beta}},
                  [&] {
                    BatchNorm<T> fresh = probe;
                    fresh.running_mean = bn.running_mean;
                    fresh.running_var = bn.running_var;
                    if (mode == Mode::eval) return weighted_sum(fresh.infer(x), w);
                    BatchNorm<T> again = probe;
                    return weighted_sum(again.forward(x, Mode::train), w);
                  });
  }
  {
    Dropout<T> drop(0.3);
    Matrix<T> x = random_matrix<T>(batch, 4, rng);
    const Matrix<T> w = random_matrix<T>(batch, 4, rng);
    const Rng mask_rng = rng.split(21);
    Rng r = mask_rng;
    drop.forward(x, Mode::train, r);
    const Matrix<T> dx = drop.backward(w);
    checker.check("dropout", {{"input", &x, &dx}}, [&] {
      Rng again = mask_rng;
      Dropout<T> d(0.3);
      return weighted_sum(d.forward(x, Mode::train, again), w);
    });
  }
  {
    DeepEBlock<T> block(6, 4, opts, rng);
    Matrix<T> x = random_matrix<T>(batch, 6, rng);
    const Matrix<T> w = random_matrix<T>(batch, 4, rng);
    const Rng mask_rng = rng.split(22);
    Rng r = mask_rng;
    block.zero_grad();
    block.forward(x, Mode::train, r);
    const Matrix<T> dx = block.backward(w);
    std::vector<ParamRef<T>> params;
    block.collect_params("", params);
    std::vector<Target<T>> targets{{"input", &x, &dx}};
    for (const auto& p : params) targets.push_back({p.name.substr(1), p.value, p.grad});
    checker.check("deepe_block", targets, [&] {
      Rng again = mask_rng;
      return weighted_sum(block.forward(x, Mode::train, again), w);
    });
  }
  {
    ResNetBlock<T> block(6, 4, 2, opts, rng);
    Matrix<T> x = random_matrix<T>(batch, 6, rng);
    const Matrix<T> w = random_matrix<T>(batch, 4, rng);
    const Rng mask_rng = rng.split(23);
    Rng r = mask_rng;
    block.zero_grad();
    block.forward(x, Mode::train, r);
    const Matrix<T> dx = block.backward(w);
    std::vector<ParamRef<T>> params;
    block.collect_params("", params);
    std::vector<Target<T>> targets{{"input", &x, &dx}};
    for (const auto& p : params) targets.push_back({p.name.substr(1), p.value, p.grad});
    checker.check("resnet_block", targets, [&] {
      Rng again = mask_rng;
      return weighted_sum(block.forward(x, Mode::train, again), w);
    });
  }
}

template <typename T>
void check_model(Checker<T>& checker, const GradcheckOptions& o, Rng& rng) {
  constexpr std::size_t kEntities = 12;
  constexpr std::size_t kRelations = 3;
  ModelConfig config;
  config.dim = o.dim;
  config.deepe_blocks = o.deepe_blocks;
  config.resnet_blocks = o.resnet_blocks;
  config.resnet_inner = 2;
  config.drop_input_fc = 0.2;
  config.drop_identity = 0.05;
  config.drop_resnet_fc = 0.2;
  config.seed = o.seed;
  Model<T> model(config, kEntities, kRelations);

  std::vector<int> heads, relations, gold;
  for (int i = 0; i < 6; ++i) {
    heads.push_back(static_cast<int>(rng.below(kEntities)));
    relations.push_back(static_cast<int>(rng.below(2 * kRelations)));
    gold.push_back(static_cast<int>(rng.below(kEntities)));
  }
  const Rng mask_rng = rng.split(24);
  auto loss = [&] {
    Rng again = mask_rng;
    const Matrix<T> scores = model.score_all(heads, relations, Mode::train, again);
    return cross_entropy_loss(scores, gold).loss;
  };

  {
    Rng r = mask_rng;
    model.zero_grad();
    const Matrix<T> scores = model.score_all(heads, relations, Mode::train, r);
    model.backward(cross_entropy_loss(scores, gold).grad);
  }
  // Snapshot analytic grads: the loss closure reruns forward, which is fine,
  // but keep the gradients independent of later calls.
  auto params = model.parameters();
  std::vector<Matrix<T>> analytic;
  analytic.reserve(params.size());
  for (const auto& p : params) analytic.push_back(*p.grad);
  std::vector<Target<T>> targets;
  for (std::size_t i = 0; i < params.size(); ++i)
    targets.push_back({params[i].name, params[i].value, &analytic[i]});
  checker.check("model", targets, loss);
}

template <typename T>
GradcheckReport run_typed(const GradcheckOptions& o) {
  GradcheckReport report;
  report.tolerance = o.tolerance > 0 ? o.tolerance : default_gradcheck_tolerance(o.precision);
  report.step = sizeof(T) == 8 ? 1e-5 : 1e-3;
  report.norm_floor = sizeof(T) == 8 ? 1e-3 : 1e-1;
  Checker<T> checker(report.step, report.norm_floor, o.perturb_backward, report);
  Rng rng(o.seed);
  check_layers(checker, rng);
  check_model(checker, o, rng);
  return report;
}

}  // namespace

GradcheckReport run_gradcheck(const GradcheckOptions& options) {
  if (options.precision == 64) return run_typed<double>(options);
  if (options.precision == 32) return run_typed<float>(options);
  throw std::invalid_argument("gradcheck: precision must be 32 or 64");
}

}  // namespace deepe
