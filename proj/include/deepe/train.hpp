#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "deepe/data.hpp"
#include "deepe/eval.hpp"
#include "deepe/model.hpp"

namespace deepe {

class TrainError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// softmax: one softmax over all entities per query, gold tail is the target.
// bce: ConvE-style 1-N scoring, independent sigmoids with every known train
// tail of (h, r) as a positive.
enum class LossKind { softmax, bce };
LossKind parse_loss_kind(std::string_view name);
std::string_view loss_kind_name(LossKind kind);

struct TrainConfig {
  double lr = 0.003;
  double plateau_factor = 0.8;
  int plateau_patience = 5;     // epochs, on training loss
  int early_stop_patience = 10; // evaluations, on valid MRR
  int max_epochs = 1000;
  std::size_t batch_size = 512;
  double l2 = 0.0;
  double label_smoothing = 0.0;
  LossKind loss = LossKind::softmax;
  std::uint64_t seed = 0;
  int eval_every = 1;
  TieMode ties = TieMode::average;

  void validate() const;
};

template <typename T>
struct LossResult {
  double loss = 0.0;   // mean over the batch
  Matrix<T> grad;      // dLoss/dScores
};

template <typename T>
LossResult<T> cross_entropy_loss(const Matrix<T>& scores, std::span<const int> gold,
                                 double label_smoothing = 0.0);

// positives[b] lists the target entities of row b.
template <typename T>
LossResult<T> binary_cross_entropy_loss(
    const Matrix<T>& scores, std::span<const std::span<const int>> positives,
    double label_smoothing = 0.0);

// Adam with L2 folded into the gradient (g + l2 * w) before the moment update.
template <typename T>
class Adam {
 public:
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEps = 1e-8;

  Adam() = default;

  void step(std::span<const ParamRef<T>> params, double lr, double l2);
  std::size_t step_count() const noexcept { return steps_; }
  const std::vector<Matrix<T>>& first_moments() const noexcept { return m_; }
  const std::vector<Matrix<T>>& second_moments() const noexcept { return v_; }

 private:
  std::vector<Matrix<T>> m_;
  std::vector<Matrix<T>> v_;
  std::size_t steps_ = 0;
};

// Multiplies the rate by `factor` once the best training loss has gone
// `patience` consecutive epochs without a strict improvement. The counter
// resets on improvement and after each decay.
class PlateauScheduler {
 public:
  PlateauScheduler(double lr, double factor, int patience);
  // Feeds one epoch's loss; returns the rate for the next epoch.
  double step(double loss);
  double lr() const noexcept { return lr_; }
  int bad_epochs() const noexcept { return bad_epochs_; }
  int decays() const noexcept { return decays_; }

 private:
  double lr_;
  double factor_;
  int patience_;
  double best_;
  int bad_epochs_ = 0;
  int decays_ = 0;
};

// Tracks the best validation metric; stops after `patience` consecutive
// evaluations without a strict improvement.
class EarlyStopping {
 public:
  explicit EarlyStopping(int patience);
  // Returns true when `metric` is a new best.
  bool update(double metric);
  bool should_stop() const noexcept { return stale_ >= patience_; }
  double best() const noexcept { return best_; }
  int evaluations() const noexcept { return evaluations_; }

 private:
  int patience_;
  double best_;
  int stale_ = 0;
  int evaluations_ = 0;
};

struct EpochLog {
  int epoch = 0;
  double train_loss = 0.0;
  double lr = 0.0;
  std::optional<Metrics> valid;
};

template <typename T>
struct TrainResult {
  Model<T> best_model;
  Model<T> final_model;
  std::vector<EpochLog> log;
  int best_epoch = 0;
  double best_valid_mrr = 0.0;
  int evaluations = 0;
  std::string stop_reason;
};

struct TrainHooks {
  std::function<void(const EpochLog&)> on_epoch;
};

template <typename T>
TrainResult<T> train_loop(const Dataset& ds, const ModelConfig& model_config,
                          const TrainConfig& config, const TrainHooks& hooks = {});

// Columns: epoch,train_loss,lr,valid_mrr,valid_mr,valid_hits1,valid_hits10.
// Valid columns are empty on epochs without an evaluation.
void write_training_log(const std::vector<EpochLog>& log,
                        const std::filesystem::path& path);

// Splits `count` items into consecutive batches of `batch_size`; a trailing
// batch of one row is merged into its predecessor (train-mode BN needs >= 2).
std::vector<std::pair<std::size_t, std::size_t>> make_batches(std::size_t count,
                                                              std::size_t batch_size);

}  // namespace deepe
