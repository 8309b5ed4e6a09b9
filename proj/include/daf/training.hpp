#pragma once

#include <cstdint>
#include <iosfwd>
#include <limits>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "daf/data.hpp"
#include "daf/model.hpp"

namespace daf {

struct TrainConfig {
  double learning_rate = 5e-5;
  std::size_t batch_size = 32;
  std::size_t max_epochs = 200;
  std::size_t patience = 10;
  double clip_max_norm = 4.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  // Validation MSE must drop by at least this much to count as improvement.
  double min_improvement = 1e-6;
  std::uint64_t seed = 0;
  CollateOptions collate;

  std::vector<std::string> validate() const;
};

nlohmann::ordered_json to_json(const TrainConfig& cfg);

/// (1/B) sum (pred_i - target_i)^2.
Tensor mse_loss(const Tensor& pred, const Tensor& target);

/// Rescales all gradients jointly so their global L2 norm is at most
/// `max_norm`. Returns the norm observed before scaling.
double clip_global_norm(std::vector<NamedTensor>& params, double max_norm);

struct OptimState {
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  std::uint64_t step = 0;
};

/// One bias-corrected Adam update using each parameter's current gradient.
void adam_step(std::vector<NamedTensor>& params, OptimState& state, const TrainConfig& cfg);

/// Patience-based early stopping on a loss that should decrease. Keeps a
/// snapshot of the parameters from the best epoch.
class EarlyStopping {
 public:
  EarlyStopping(std::size_t patience, double min_improvement);

  /// Records one epoch's validation loss; returns true when training should stop.
  bool update(std::size_t epoch, double value, const ModelParams& params);

  std::size_t best_epoch() const { return best_epoch_; }
  double best_value() const { return best_; }
  const ModelParams& best_params() const { return best_params_; }
  std::size_t epochs_without_improvement() const { return bad_epochs_; }

 private:
  std::size_t patience_;
  double min_improvement_;
  double best_ = std::numeric_limits<double>::infinity();
  std::size_t best_epoch_ = 0;
  std::size_t bad_epochs_ = 0;
  ModelParams best_params_;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_mse = 0.0;
  double val_mse = 0.0;
  double val_mae = 0.0;
  double grad_norm_mean = 0.0;
};

struct FitResult {
  ModelParams best_params;
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;
  double best_val_mse = 0.0;
  bool stopped_early = false;
};

/// Trains `model` in place; on return the model holds the best-epoch
/// parameters, which are also returned.
FitResult fit(Model& model, const Split& train, const Split& val, const Dims& dims, const TrainConfig& cfg);

struct Prediction {
  std::string id;
  double predicted = 0.0;
  double label = 0.0;
};

/// Eval-mode predictions in split order.
std::vector<Prediction> evaluate(const Model& model, const Split& split, const Dims& dims,
                                 const CollateOptions& options = {}, std::size_t batch_size = 64);

/// CSV with columns epoch,train_mse,val_mse,val_mae,grad_norm_mean,stopped_early.
/// Lines starting with '#' before the header carry `preamble`.
void write_history_csv(std::ostream& os, const FitResult& result, const std::vector<std::string>& preamble = {});

}  // namespace daf
