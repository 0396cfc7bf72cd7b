#include "deepe/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

namespace deepe {

LossKind parse_loss_kind(std::string_view name) {
  if (name == "softmax") return LossKind::softmax;
  if (name == "bce") return LossKind::bce;
  throw std::invalid_argument("unknown loss '" + std::string(name) +
                              "' (expected softmax or bce)");
}

std::string_view loss_kind_name(LossKind kind) {
  return kind == LossKind::softmax ? "softmax" : "bce";
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& msg) {
    throw std::invalid_argument("train config: " + msg);
  };
  if (!(lr >= 0.0)) fail("lr must be >= 0");
  if (!(plateau_factor > 0.0 && plateau_factor < 1.0)) fail("plateau_factor must be in (0, 1)");
  if (plateau_patience < 1) fail("plateau_patience must be >= 1");
  if (early_stop_patience < 1) fail("early_stop_patience must be >= 1");
  if (max_epochs < 1) fail("max_epochs must be >= 1");
  if (batch_size < 2) fail("batch_size must be >= 2");
  if (!(l2 >= 0.0)) fail("l2 must be >= 0");
  if (!(label_smoothing >= 0.0 && label_smoothing < 1.0)) fail("label_smoothing must be in [0, 1)");
  if (eval_every < 1) fail("eval_every must be >= 1");
}

template <typename T>
LossResult<T> cross_entropy_loss(const Matrix<T>& scores, std::span<const int> gold,
                                 double label_smoothing) {
  if (gold.size() != scores.rows()) {
    throw std::invalid_argument("cross_entropy_loss: " + std::to_string(gold.size()) +
                                " gold ids for " + std::to_string(scores.rows()) + " rows");
  }
  const std::size_t n = scores.rows();
  const std::size_t k = scores.cols();
  LossResult<T> out;
  out.grad = Matrix<T>(n, k);
  const double inv_n = 1.0 / static_cast<double>(n);
  const double smooth = label_smoothing / static_cast<double>(k);
  std::vector<double> prob(k);
  double total = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    const auto row = scores.row(r);
    const int g = gold[r];
    if (g < 0 || static_cast<std::size_t>(g) >= k) {
      throw std::out_of_range("cross_entropy_loss: gold id " + std::to_string(g) + " out of range");
    }
    double mx = -std::numeric_limits<double>::infinity();
    for (T s : row) mx = std::max(mx, static_cast<double>(s));
    double z = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
      prob[c] = std::exp(static_cast<double>(row[c]) - mx);
      z += prob[c];
    }
    const double log_z = std::log(z) + mx;
    double row_loss = 0.0;
    auto grad = out.grad.row(r);
    for (std::size_t c = 0; c < k; ++c) {
      const double target = smooth + (static_cast<int>(c) == g ? 1.0 - label_smoothing : 0.0);
      if (target > 0.0) row_loss -= target * (static_cast<double>(row[c]) - log_z);
      grad[c] = static_cast<T>((prob[c] / z - target) * inv_n);
    }
    total += row_loss;
  }
  out.loss = total * inv_n;
  return out;
}

template <typename T>
LossResult<T> binary_cross_entropy_loss(
    const Matrix<T>& scores, std::span<const std::span<const int>> positives,
    double label_smoothing) {
  if (positives.size() != scores.rows()) {
    throw std::invalid_argument("binary_cross_entropy_loss: positive sets do not match rows");
  }
  const std::size_t n = scores.rows();
  const std::size_t k = scores.cols();
  LossResult<T> out;
  out.grad = Matrix<T>(n, k);
  const double inv = 1.0 / static_cast<double>(n * k);
  const double smooth = label_smoothing / static_cast<double>(k);
  std::vector<double> target(k);
  double total = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    std::fill(target.begin(), target.end(), smooth);
    for (int p : positives[r]) target[static_cast<std::size_t>(p)] = 1.0 - label_smoothing + smooth;
    const auto row = scores.row(r);
    auto grad = out.grad.row(r);
    for (std::size_t c = 0; c < k; ++c) {
      const double x = static_cast<double>(row[c]);
      // log(1 + e^x) - t*x, stable for both signs of x
      const double softplus = std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
      total += softplus - target[c] * x;
      const double sig = 1.0 / (1.0 + std::exp(-x));
      grad[c] = static_cast<T>((sig - target[c]) * inv);
    }
  }
  out.loss = total * inv;
  return out;
}

template <typename T>
void Adam<T>::step(std::span<const ParamRef<T>> params, double lr, double l2) {
  if (m_.empty()) {
    for (const auto& p : params) {
      m_.emplace_back(p.value->rows(), p.value->cols());
      v_.emplace_back(p.value->rows(), p.value->cols());
    }
  }
  if (m_.size() != params.size()) {
    throw ShapeError("adam: parameter list changed size between steps");
  }
  ++steps_;
  const double bias1 = 1.0 - std::pow(kBeta1, static_cast<double>(steps_));
  const double bias2 = 1.0 - std::pow(kBeta2, static_cast<double>(steps_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Matrix<T>& w = *params[i].value;
    const Matrix<T>& g = *params[i].grad;
    require_same_shape(w, g, "adam");
    require_same_shape(w, m_[i], "adam moments");
    auto wv = w.values();
    const auto gv = g.values();
    auto mv = m_[i].values();
    auto vv = v_[i].values();
    for (std::size_t j = 0; j < wv.size(); ++j) {
      const double grad = static_cast<double>(gv[j]) + l2 * static_cast<double>(wv[j]);
      const double m = kBeta1 * static_cast<double>(mv[j]) + (1.0 - kBeta1) * grad;
      const double v = kBeta2 * static_cast<double>(vv[j]) + (1.0 - kBeta2) * grad * grad;
      mv[j] = static_cast<T>(m);
      vv[j] = static_cast<T>(v);
      const double m_hat = m / bias1;
      const double v_hat = v / bias2;
      wv[j] = static_cast<T>(static_cast<double>(wv[j]) - lr * m_hat / (std::sqrt(v_hat) + kEps));
    }
  }
}

PlateauScheduler::PlateauScheduler(double lr, double factor, int patience)
    : lr_(lr),
      factor_(factor),
      patience_(patience),
      best_(std::numeric_limits<double>::infinity()) {}

double PlateauScheduler::step(double loss) {
  if (loss < best_) {
    best_ = loss;
    bad_epochs_ = 0;
  } else if (++bad_epochs_ >= patience_) {
    lr_ *= factor_;
    bad_epochs_ = 0;
    ++decays_;
  }
  return lr_;
}

EarlyStopping::EarlyStopping(int patience)
    : patience_(patience), best_(-std::numeric_limits<double>::infinity()) {}

bool EarlyStopping::update(double metric) {
  ++evaluations_;
  if (metric > best_) {
    best_ = metric;
    stale_ = 0;
    return true;
  }
  ++stale_;
  return false;
}

std::vector<std::pair<std::size_t, std::size_t>> make_batches(std::size_t count,
                                                              std::size_t batch_size) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t begin = 0; begin < count; begin += batch_size)
    out.emplace_back(begin, std::min(count, begin + batch_size));
  if (out.size() > 1 && out.back().second - out.back().first == 1) {
    out[out.size() - 2].second = out.back().second;
    out.pop_back();
  }
  return out;
}

template <typename T>
TrainResult<T> train_loop(const Dataset& ds, const ModelConfig& model_config,
                          const TrainConfig& config, const TrainHooks& hooks) {
  config.validate();
  if (ds.train_augmented.size() < 2) {
    throw TrainError("training needs at least one train triple");
  }
  Model<T> model(model_config, ds.num_entities(), ds.num_relations());
  const Rng root(config.seed);
  Rng order_rng = root.split(11);
  Rng dropout_rng = root.split(12);

  FilterIndex train_tails(ds.augmented_relation_count());
  if (config.loss == LossKind::bce) {
    for (const auto& t : ds.train_augmented) train_tails.add(t.head, t.relation, t.tail);
    train_tails.finalize();
  }

  Adam<T> adam;
  PlateauScheduler scheduler(config.lr, config.plateau_factor, config.plateau_patience);
  EarlyStopping stopper(config.early_stop_patience);
  std::vector<std::size_t> order(ds.train_augmented.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const auto batches = make_batches(order.size(), config.batch_size);
  const bool has_valid = !ds.valid.empty();

  std::optional<Model<T>> best;
  TrainResult<T> result{model, model, {}, 0, 0.0, 0, "max_epochs"};
  std::vector<int> heads, relations, gold;
  std::vector<std::span<const int>> positives;

  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    shuffle(std::span<std::size_t>(order), order_rng);
    const double lr = scheduler.lr();
    double loss_sum = 0.0;
    for (std::size_t b = 0; b < batches.size(); ++b) {
      const auto [begin, end] = batches[b];
      heads.clear();
      relations.clear();
      gold.clear();
      for (std::size_t i = begin; i < end; ++i) {
        const Triple& t = ds.train_augmented[order[i]];
        heads.push_back(t.head);
        relations.push_back(t.relation);
        gold.push_back(t.tail);
      }
      model.zero_grad();
      const Matrix<T> scores = model.score_all(heads, relations, Mode::train, dropout_rng);
      LossResult<T> loss;
      if (config.loss == LossKind::softmax) {
        loss = cross_entropy_loss(scores, gold, config.label_smoothing);
      } else {
        positives.clear();
        for (std::size_t i = 0; i < heads.size(); ++i)
          positives.push_back(train_tails.tails(heads[i], relations[i]));
        loss = binary_cross_entropy_loss<T>(scores, positives, config.label_smoothing);
      }
      if (!std::isfinite(loss.loss)) {
        throw TrainError("non-finite training loss at epoch " + std::to_string(epoch) +
                         ", batch " + std::to_string(b) + " (lr " + std::to_string(lr) +
                         "); try a lower lr");
      }
      loss_sum += loss.loss * static_cast<double>(end - begin);
      model.backward(loss.grad);
      adam.step(model.parameters(), lr, config.l2);
    }

    EpochLog entry;
    entry.epoch = epoch;
    entry.train_loss = loss_sum / static_cast<double>(order.size());
    entry.lr = lr;
    scheduler.step(entry.train_loss);

    bool stop = false;
    if (has_valid && epoch % config.eval_every == 0) {
      EvalOptions opts;
      opts.ties = config.ties;
      const EvalReport report = evaluate(model, ds, Split::valid, opts);
      entry.valid = report.overall;
      if (stopper.update(report.overall.mrr())) {
        best = model;
        result.best_epoch = epoch;
        result.best_valid_mrr = report.overall.mrr();
      }
      stop = stopper.should_stop();
    }
    result.log.push_back(entry);
    if (hooks.on_epoch) hooks.on_epoch(entry);
    if (stop) {
      result.stop_reason = "early_stop";
      break;
    }
  }
  result.evaluations = stopper.evaluations();
  result.final_model = model;
  if (best) {
    result.best_model = std::move(*best);
  } else {
    result.best_model = model;
    result.best_epoch = result.log.back().epoch;
  }
  return result;
}

void write_training_log(const std::vector<EpochLog>& log,
                        const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "epoch,train_loss,lr,valid_mrr,valid_mr,valid_hits1,valid_hits10\n";
  for (const auto& e : log) {
    out << e.epoch << ',' << format_metric(e.train_loss) << ',' << format_metric(e.lr);
    if (e.valid) {
      out << ',' << format_metric(e.valid->mrr()) << ',' << format_metric(e.valid->mr())
          << ',' << format_metric(e.valid->hit1()) << ',' << format_metric(e.valid->hit10());
    } else {
      out << ",,,,";
    }
    out << '\n';
  }
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

template LossResult<float> cross_entropy_loss(const Matrix<float>&, std::span<const int>, double);
template LossResult<double> cross_entropy_loss(const Matrix<double>&, std::span<const int>, double);
template LossResult<float> binary_cross_entropy_loss(const Matrix<float>&,
                                                     std::span<const std::span<const int>>, double);
template LossResult<double> binary_cross_entropy_loss(const Matrix<double>&,
                                                      std::span<const std::span<const int>>, double);
template class Adam<float>;
template class Adam<double>;
template TrainResult<float> train_loop(const Dataset&, const ModelConfig&, const TrainConfig&,
                                       const TrainHooks&);
template TrainResult<double> train_loop(const Dataset&, const ModelConfig&, const TrainConfig&,
                                        const TrainHooks&);

}  // namespace deepe
