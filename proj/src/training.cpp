#include "daf/training.hpp"

#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>

#include "daf/error.hpp"
#include "daf/rng.hpp"

namespace daf {

std::vector<std::string> TrainConfig::validate() const {
  std::vector<std::string> errs;
  if (!(learning_rate > 0.0)) errs.push_back("train.lr must be positive");
  if (batch_size == 0) errs.push_back("train.batch_size must be positive");
  if (max_epochs == 0) errs.push_back("train.epochs must be positive");
  if (patience == 0) errs.push_back("train.patience must be positive");
  if (patience > max_epochs) errs.push_back("train.patience must not exceed train.epochs");
  if (!(clip_max_norm > 0.0)) errs.push_back("train.clip must be positive");
  if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0)) errs.push_back("adam betas must be in (0, 1)");
  if (!(epsilon > 0.0)) errs.push_back("adam epsilon must be positive");
  return errs;
}

nlohmann::ordered_json to_json(const TrainConfig& cfg) {
  nlohmann::ordered_json j;
  j["lr"] = cfg.learning_rate;
  j["batch_size"] = cfg.batch_size;
  j["epochs"] = cfg.max_epochs;
  j["patience"] = cfg.patience;
  j["clip"] = cfg.clip_max_norm;
  j["beta1"] = cfg.beta1;
  j["beta2"] = cfg.beta2;
  j["epsilon"] = cfg.epsilon;
  j["min_improvement"] = cfg.min_improvement;
  j["seed"] = cfg.seed;
  j["l2_norm"] = cfg.collate.l2_normalize;
  j["missing_policy"] = missing_policy_name(cfg.collate.missing);
  return j;
}

Tensor mse_loss(const Tensor& pred, const Tensor& target) {
  if (pred.size() == 0) throw DataError("mse_loss: empty batch");
  if (pred.size() != target.size()) {
    throw DimensionError("mse_loss: " + shape_str(pred.shape()) + " predictions for " + shape_str(target.shape()) +
                         " targets");
  }
  const Tensor diff = sub(pred, reshape(target, pred.shape()));
  return mean(mul(diff, diff));
}

double clip_global_norm(std::vector<NamedTensor>& params, double max_norm) {
  double sq = 0.0;
  for (auto& p : params) {
    for (double g : p.value.grad()) {
      if (!std::isfinite(g)) throw NumericError("non-finite gradient in parameter " + p.name);
      sq += g * g;
    }
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm) {
    const double factor = max_norm / norm;
    for (auto& p : params) {
      for (double& g : p.value.mutable_grad()) g *= factor;
    }
  }
  return norm;
}

void adam_step(std::vector<NamedTensor>& params, OptimState& state, const TrainConfig& cfg) {
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.emplace_back(p.value.size(), 0.0);
      state.v.emplace_back(p.value.size(), 0.0);
    }
  }
  if (state.m.size() != params.size()) throw DimensionError("adam_step: optimizer state does not match parameters");
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(cfg.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto theta = params[i].value.data();
    const auto g = params[i].value.grad();
    auto& m = state.m[i];
    auto& v = state.v[i];
    if (m.size() != theta.size()) throw DimensionError("adam_step: state shape mismatch for " + params[i].name);
    for (std::size_t k = 0; k < theta.size(); ++k) {
      m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * g[k];
      v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * g[k] * g[k];
      const double m_hat = m[k] / bc1;
      const double v_hat = v[k] / bc2;
      const double next = theta[k] - cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
      if (!std::isfinite(next)) throw NumericError("adam_step: non-finite update for " + params[i].name);
      theta[k] = next;
    }
  }
}

// ---------------------------------------------------------------------------

EarlyStopping::EarlyStopping(std::size_t patience, double min_improvement)
    : patience_(patience), min_improvement_(min_improvement) {}

bool EarlyStopping::update(std::size_t epoch, double value, const ModelParams& params) {
  if (value < best_ - min_improvement_) {
    best_ = value;
    best_epoch_ = epoch;
    bad_epochs_ = 0;
    best_params_ = params.clone();
  } else {
    ++bad_epochs_;
  }
  return bad_epochs_ >= patience_;
}

// ---------------------------------------------------------------------------

std::vector<Prediction> evaluate(const Model& model, const Split& split, const Dims& dims,
                                 const CollateOptions& options, std::size_t batch_size) {
  std::vector<Prediction> out;
  out.reserve(split.samples.size());
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < split.samples.size(); start += batch_size) {
    const std::size_t end = std::min(split.samples.size(), start + batch_size);
    idx.resize(end - start);
    std::iota(idx.begin(), idx.end(), start);
    const Batch batch = collate(split, idx, dims, options);
    const ForwardTrace tr = model.forward(batch, Mode::kEval);
    for (std::size_t b = 0; b < batch.size(); ++b) {
      out.push_back({batch.ids[b], tr.prediction[b], batch.labels[b]});
    }
  }
  return out;
}

namespace {

struct SplitErrors {
  double mse = 0.0;
  double mae = 0.0;
};

SplitErrors split_errors(const std::vector<Prediction>& preds) {
  SplitErrors e;
  for (const auto& p : preds) {
    const double d = p.predicted - p.label;
    e.mse += d * d;
    e.mae += std::abs(d);
  }
  const auto n = static_cast<double>(preds.size());
  e.mse /= n;
  e.mae /= n;
  return e;
}

}  // namespace

FitResult fit(Model& model, const Split& train, const Split& val, const Dims& dims, const TrainConfig& cfg) {
  if (auto errs = cfg.validate(); !errs.empty()) throw ConfigError(errs.front());
  if (train.samples.empty() || val.samples.empty()) throw DataError("fit: train and validation splits must be nonempty");

  Rng shuffle_rng(derive_seed(cfg.seed, 1));
  Rng dropout_rng(derive_seed(cfg.seed, 2));
  OptimState state;
  EarlyStopping stopper(cfg.patience, cfg.min_improvement);
  FitResult result;
  auto& params = model.params().named();

  std::vector<std::size_t> order(train.samples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    double loss_sum = 0.0;
    double norm_sum = 0.0;
    std::size_t n_batches = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      const Batch batch = collate(train, std::span(order).subspan(start, end - start), dims, cfg.collate);

      Tape tape;
      Tape::Scope scope(tape);
      const ForwardTrace tr = model.forward(batch, Mode::kTrain, &dropout_rng);
      const Tensor loss = mse_loss(tr.prediction, batch.labels);
      const double value = loss.item();
      if (!std::isfinite(value)) {
        throw NumericError("training diverged: non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(n_batches + 1));
      }
      model.params().zero_grad();
      tape.backward(loss);
      norm_sum += clip_global_norm(params, cfg.clip_max_norm);
      adam_step(params, state, cfg);
      loss_sum += value * static_cast<double>(batch.size());
      ++n_batches;
    }

    const SplitErrors ve = split_errors(evaluate(model, val, dims, cfg.collate));
    if (!std::isfinite(ve.mse)) {
      throw NumericError("training diverged: non-finite validation loss at epoch " + std::to_string(epoch));
    }
    result.history.push_back({epoch, loss_sum / static_cast<double>(order.size()), ve.mse, ve.mae,
                              norm_sum / static_cast<double>(n_batches)});
    if (stopper.update(epoch, ve.mse, model.params())) {
      result.stopped_early = epoch < cfg.max_epochs;
      break;
    }
  }

  result.best_epoch = stopper.best_epoch();
  result.best_val_mse = stopper.best_value();
  result.best_params = stopper.best_params().clone();
  model.params() = stopper.best_params().clone();
  return result;
}

void write_history_csv(std::ostream& os, const FitResult& result, const std::vector<std::string>& preamble) {
  for (const auto& line : preamble) os << "# " << line << '\n';
  os << "epoch,train_mse,val_mse,val_mae,grad_norm_mean,stopped_early\n";
  char buf[256];
  for (std::size_t i = 0; i < result.history.size(); ++i) {
    const auto& r = result.history[i];
    const bool last = i + 1 == result.history.size();
    std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g,%.17g,%.17g,%d\n", r.epoch, r.train_mse, r.val_mse, r.val_mae,
                  r.grad_norm_mean, (last && result.stopped_early) ? 1 : 0);
    os << buf;
  }
}

}  // namespace daf
